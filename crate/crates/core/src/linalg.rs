//! Dense symmetric-matrix helpers that stay accurate when the diagonal spans
//! many orders of magnitude (seconds next to hertz next to metres).
//!
//! Every routine here works on the diagonally equilibrated matrix
//! `D^-1/2 A D^-1/2` and scales back afterwards, so eigenvalue clipping,
//! factorisation and conditioning checks are relative to each variable's own
//! scale rather than to the largest entry of the matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Pivots of the equilibrated matrix at or below this are treated as zero by
/// [`psd_lower_factor`].
const PIVOT_TOL: f64 = 1e-13;

/// Condition number above which [`spd_inverse`] adds diagonal jitter.
pub const COND_LIMIT: f64 = 1e12;

/// Returns `(A + A^T) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Diagonal scaling `s_i = sqrt(A_ii)` (1 for non-positive diagonal entries)
/// and the equilibrated matrix `A_ij / (s_i s_j)`.
pub fn equilibrate(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let s = DVector::from_fn(n, |i, _| {
        let d = a[(i, i)];
        if d > 0.0 && d.is_finite() {
            d.sqrt()
        } else {
            1.0
        }
    });
    let c = DMatrix::from_fn(n, n, |i, j| a[(i, j)] / (s[i] * s[j]));
    (s, c)
}

fn unscale(c: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    let n = c.nrows();
    DMatrix::from_fn(n, n, |i, j| c[(i, j)] * s[i] * s[j])
}

/// Symmetrises `a` and clips negative eigenvalues of its equilibrated form to
/// zero. Rows with a non-positive diagonal come out exactly zero, since a
/// PSD matrix with a zero diagonal entry has a zero row.
pub fn psd_project(a: &DMatrix<f64>) -> DMatrix<f64> {
    let a = symmetrize(a);
    let n = a.nrows();
    let live: Vec<usize> = (0..n).filter(|&i| a[(i, i)] > 0.0).collect();
    if live.len() < n {
        let sub = project_positive_diagonal(a.select_rows(&live).select_columns(&live));
        let mut out = DMatrix::zeros(n, n);
        for (p, &i) in live.iter().enumerate() {
            for (q, &j) in live.iter().enumerate() {
                out[(i, j)] = sub[(p, q)];
            }
        }
        return out;
    }
    project_positive_diagonal(a)
}

fn project_positive_diagonal(a: DMatrix<f64>) -> DMatrix<f64> {
    if a.is_empty() {
        return a;
    }
    let (s, c) = equilibrate(&a);
    let eig = SymmetricEigen::new(c.clone());
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return a;
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let c = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    symmetrize(&unscale(&c, &s))
}

/// True when `a` is symmetric to `tol` (relative) and its equilibrated form
/// has no eigenvalue below `-tol`.
pub fn is_symmetric_psd(a: &DMatrix<f64>, tol: f64) -> bool {
    let n = a.nrows();
    if a.ncols() != n || a.iter().any(|x| !x.is_finite()) {
        return false;
    }
    for i in 0..n {
        for j in 0..i {
            let scale = (a[(i, i)].abs() * a[(j, j)].abs()).sqrt().max(f64::MIN_POSITIVE);
            if (a[(i, j)] - a[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    let (_, c) = equilibrate(&symmetrize(a));
    SymmetricEigen::new(c).eigenvalues.iter().all(|&l| l >= -tol)
}

/// Lower-triangular `L` with `L L^T` equal to the PSD projection of `a`.
///
/// Rank-deficient directions produce zero columns instead of a failure, so a
/// zero covariance yields a zero factor.
pub fn psd_lower_factor(a: &DMatrix<f64>) -> DMatrix<f64> {
    let a = psd_project(a);
    let (s, c) = equilibrate(&a);
    let n = c.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = c[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= PIVOT_TOL {
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut v = c[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    for i in 0..n {
        for j in 0..n {
            l[(i, j)] *= s[i];
        }
    }
    l
}

/// Result of a guarded symmetric positive-definite inversion.
#[derive(Debug, Clone)]
pub struct GuardedInverse {
    pub inverse: DMatrix<f64>,
    /// Jitter added to the equilibrated diagonal, 0 if none was needed.
    pub jitter: f64,
    /// Condition number of the equilibrated matrix before jitter.
    pub condition: f64,
}

/// Inverts a symmetric positive (semi)definite matrix.
///
/// If the equilibrated condition number exceeds [`COND_LIMIT`], adds
/// `1e-10 * trace / dim` to the equilibrated diagonal before inverting.
/// Returns `None` when the matrix has a non-positive or non-finite diagonal
/// entry, or is indefinite beyond what the jitter can repair.
pub fn spd_inverse(a: &DMatrix<f64>) -> Option<GuardedInverse> {
    let n = a.nrows();
    if n == 0 {
        return Some(GuardedInverse { inverse: DMatrix::zeros(0, 0), jitter: 0.0, condition: 1.0 });
    }
    if (0..n).any(|i| !(a[(i, i)] > 0.0) || !a[(i, i)].is_finite()) {
        return None;
    }
    let (s, mut c) = equilibrate(&symmetrize(a));
    let eig = SymmetricEigen::new(c.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    let mut jitter = 0.0;
    if condition > COND_LIMIT {
        jitter = 1e-10 * c.trace() / n as f64;
        if min + jitter <= 0.0 {
            return None;
        }
        for i in 0..n {
            c[(i, i)] += jitter;
        }
    }
    let inv_c = c.cholesky()?.inverse();
    let inverse = DMatrix::from_fn(n, n, |i, j| inv_c[(i, j)] / (s[i] * s[j]));
    Some(GuardedInverse { inverse: symmetrize(&inverse), jitter, condition })
}

/// Solves `A X = B` for symmetric positive-definite `A` using an equilibrated
/// Cholesky factorisation.
pub fn spd_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let inv = spd_inverse(a)?;
    Some(inv.inverse * b)
}

/// Moore-Penrose pseudo-inverse of a symmetric matrix on its equilibrated
/// scale; eigenvalues below `1e-12` of the largest are dropped.
pub fn sym_pseudo_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (s, c) = equilibrate(&symmetrize(a));
    let eig = SymmetricEigen::new(c);
    let max = eig.eigenvalues.iter().fold(0.0_f64, |m, &l| m.max(l.abs()));
    let inv = eig.eigenvalues.map(|l| if l.abs() > 1e-12 * max { 1.0 / l } else { 0.0 });
    let c_inv = &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose();
    let n = a.nrows();
    DMatrix::from_fn(n, n, |i, j| c_inv[(i, j)] / (s[i] * s[j]))
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    use std::f64::consts::PI;
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn wide_range() -> DMatrix<f64> {
        // covariance of (seconds, metres, hertz) scale variables with correlation
        let s = DVector::from_vec(vec![1e-9, 1.0, 1e5]);
        let c = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.1, 0.5, 1.0, -0.3, 0.1, -0.3, 1.0]);
        DMatrix::from_fn(3, 3, |i, j| c[(i, j)] * s[i] * s[j])
    }

    #[test]
    fn factor_reconstructs_wide_range_matrix() {
        let a = wide_range();
        let l = psd_lower_factor(&a);
        let back = &l * l.transpose();
        for i in 0..3 {
            for j in 0..3 {
                let scale = (a[(i, i)] * a[(j, j)]).sqrt();
                assert!((back[(i, j)] - a[(i, j)]).abs() < 1e-12 * scale);
            }
            for j in (i + 1)..3 {
                assert_eq!(l[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn factor_of_zero_is_zero() {
        let l = psd_lower_factor(&DMatrix::zeros(4, 4));
        assert!(l.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn factor_of_rank_one() {
        let v = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let a = &v * v.transpose();
        let l = psd_lower_factor(&a);
        assert_relative_eq!(&l * l.transpose(), a, epsilon = 1e-9);
    }

    #[test]
    fn inverse_of_wide_range_matrix() {
        let a = wide_range();
        let inv = spd_inverse(&a).unwrap();
        assert_eq!(inv.jitter, 0.0);
        let prod = &a * &inv.inverse;
        // A A^-1 is not well scaled, check the equilibrated identity instead
        let (s, _) = equilibrate(&a);
        for i in 0..3 {
            for j in 0..3 {
                let e = prod[(i, j)] * s[j] / s[i];
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((e - want).abs() < 1e-10, "{i}{j}: {e}");
            }
        }
    }

    #[test]
    fn jitter_applied_to_singular_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let inv = spd_inverse(&a).unwrap();
        assert_relative_eq!(inv.jitter, 1e-10);
        assert!(inv.inverse.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn projection_clips_negative_eigenvalue() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let p = psd_project(&a);
        assert!(is_symmetric_psd(&p, 1e-12));
        assert!(!is_symmetric_psd(&a, 1e-12));
    }

    #[test]
    fn projection_keeps_zero_rows_exact() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 1.0]);
        let p = psd_project(&a);
        assert!(p.row(1).iter().all(|&x| x == 0.0));
        assert!(p.column(1).iter().all(|&x| x == 0.0));
        assert!(is_symmetric_psd(&p, 1e-12));
    }

    #[test]
    fn pseudo_inverse_of_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let p = sym_pseudo_inverse(&a);
        assert_relative_eq!(p[(0, 0)], 0.5);
        assert_eq!(p[(1, 1)], 0.0);
    }

    #[test]
    fn wrap() {
        use std::f64::consts::PI;
        assert_relative_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(-PI), PI, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(0.5), 0.5);
        assert_relative_eq!(wrap_angle(-2.0 * PI + 0.1), 0.1, epsilon = 1e-12);
    }
}
