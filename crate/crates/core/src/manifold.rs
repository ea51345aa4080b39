//! The user-state manifold `R^3 x R^3 x R^S x SO(3)` and its boxplus/boxminus
//! operators.
//!
//! Tangent vectors are ordered `[dp (3), dv (3), db (S), domega (3)]`. The
//! rotation block uses right multiplication: `R [+] e = R * exp([e]x)`.

use nalgebra::{DVector, Matrix3, Vector3};
use thiserror::Error;

/// Below this rotation angle, boxplus returns its input unchanged.
pub const SMALL_ANGLE: f64 = 1e-10;
/// Below this angle the trigonometric ratios are replaced by their series.
pub const SERIES_ANGLE: f64 = 1e-5;
/// Boxminus falls back to the symmetric-part axis when `sin(phi)` drops
/// below this value and `phi` is near pi.
pub const NEAR_PI_SIN: f64 = 1e-6;

/// Convergence threshold of the weighted manifold mean.
pub const MEAN_TOL: f64 = 1e-10;
/// Iteration cap of the weighted manifold mean.
pub const MEAN_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ManifoldError {
    /// The log map was evaluated within `sin(phi) < 1e-6` of a half turn.
    /// `fallback` is the tangent recovered from the symmetric part.
    #[error("rotation difference is too close to pi for the closed-form log map")]
    AngleNearPi { fallback: Vector3<f64> },
    #[error("matrix is not a rotation: |R^T R - I|_F = {orthonormality:e}, det = {det}")]
    NotARotation { orthonormality: f64, det: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("weighted mean did not converge within {iterations} iterations (residual {residual:e})")]
    MeanNotConverged { iterations: usize, residual: f64 },
    #[error("point set is empty or its weights do not sum to one")]
    BadWeights,
}

/// Skew-symmetric cross-product matrix of `v`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`] applied to the antisymmetric part of `m`, times two:
/// returns `(m32 - m23, m13 - m31, m21 - m12)`.
fn vee_antisym(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)])
}

/// A 3x3 orthonormal matrix with determinant +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    /// Tolerance used by [`RotationMatrix::try_from_matrix`].
    pub const CHECK_TOL: f64 = 1e-9;

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn try_from_matrix(m: Matrix3<f64>) -> Result<Self, ManifoldError> {
        let orthonormality = orthonormality_error(&m);
        let det = m.determinant();
        if orthonormality > Self::CHECK_TOL || (det - 1.0).abs() > Self::CHECK_TOL {
            return Err(ManifoldError::NotARotation { orthonormality, det });
        }
        Ok(Self(m))
    }

    /// Rotation about the global z, y, x axes in that order (yaw, pitch, roll).
    pub fn from_euler_zyx(yaw: f64, pitch: f64, roll: f64) -> Self {
        let rz = Self::identity().boxplus(&Vector3::new(0.0, 0.0, yaw));
        let ry = Self::identity().boxplus(&Vector3::new(0.0, pitch, 0.0));
        let rx = Self::identity().boxplus(&Vector3::new(roll, 0.0, 0.0));
        Self(rz.0 * ry.0 * rx.0)
    }

    /// Builds a rotation whose columns are the given body axes, re-orthonormalised.
    pub fn from_axes(x: Vector3<f64>, z_hint: Vector3<f64>) -> Self {
        let x = x.normalize();
        let y = z_hint.cross(&x).normalize();
        let z = x.cross(&y);
        Self(Matrix3::from_columns(&[x, y, z]))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self(self.0 * other.0)
    }

    /// `R [+] e`.
    pub fn boxplus(&self, e: &Vector3<f64>) -> Self {
        so3_boxplus(self, e)
    }

    /// `self [-] other`.
    pub fn boxminus(&self, other: &Self) -> Result<Vector3<f64>, ManifoldError> {
        so3_boxminus(self, other)
    }

    /// Geodesic distance in radians.
    pub fn angle_to(&self, other: &Self) -> f64 {
        let d = other.0.transpose() * self.0;
        let s = vee_antisym(&d).norm() / 2.0;
        let c = (d.trace() - 1.0) / 2.0;
        s.atan2(c)
    }
}

/// `|R^T R - I|_F`.
pub fn orthonormality_error(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).norm()
}

/// `exp([e]x)` via Rodrigues, with series ratios for small angles.
pub fn so3_exp(e: &Vector3<f64>) -> Matrix3<f64> {
    let theta = e.norm();
    if theta < SMALL_ANGLE {
        return Matrix3::identity();
    }
    let k = skew(e);
    let (a, b) = if theta < SERIES_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    };
    Matrix3::identity() + k * a + k * k * b
}

/// `R [+] e = R * exp([e]x)`; returns `R` unchanged when `|e| < 1e-10`.
pub fn so3_boxplus(r: &RotationMatrix, e: &Vector3<f64>) -> RotationMatrix {
    if e.norm() < SMALL_ANGLE {
        return *r;
    }
    RotationMatrix(r.0 * so3_exp(e))
}

/// `Ra [-] Rb`, the tangent `e` with `Rb [+] e = Ra`.
///
/// Near a half turn the axis comes from the symmetric part of `Rb^T Ra` and
/// the result is returned inside [`ManifoldError::AngleNearPi`].
pub fn so3_boxminus(ra: &RotationMatrix, rb: &RotationMatrix) -> Result<Vector3<f64>, ManifoldError> {
    let d = rb.0.transpose() * ra.0;
    let v = vee_antisym(&d);
    let s = v.norm() / 2.0;
    let c = ((d.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let phi = s.atan2(c);
    if s < NEAR_PI_SIN && c < 0.0 {
        return Err(ManifoldError::AngleNearPi { fallback: near_pi_log(&d, phi, &v) });
    }
    if phi < SERIES_ANGLE {
        return Ok(v * (0.5 + phi * phi / 12.0));
    }
    Ok(v * (phi / (2.0 * s)))
}

fn near_pi_log(d: &Matrix3<f64>, phi: f64, v: &Vector3<f64>) -> Vector3<f64> {
    let c = phi.cos();
    // (D + D^T)/2 = c I + (1 - c) a a^T
    let b = ((d + d.transpose()) * 0.5 - Matrix3::identity() * c) / (1.0 - c);
    let mut k = 0;
    for i in 1..3 {
        if b[(i, i)] > b[(k, k)] {
            k = i;
        }
    }
    let ak = b[(k, k)].max(0.0).sqrt();
    let mut a = Vector3::from_fn(|i, _| if i == k { ak } else { b[(i, k)] / ak });
    a.normalize_mut();
    if a.dot(v) < 0.0 {
        a = -a;
    }
    a * phi
}

/// A point of the user-state manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct UeState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Per-satellite clock biases in seconds.
    pub bias: DVector<f64>,
    pub orientation: RotationMatrix,
}

/// Tangent vector `[dp, dv, db, domega]` of length `S + 9`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector(pub DVector<f64>);

impl TangentVector {
    pub fn zeros(num_sats: usize) -> Self {
        Self(DVector::zeros(num_sats + 9))
    }

    pub fn num_sats(&self) -> usize {
        self.0.len() - 9
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn velocity(&self) -> Vector3<f64> {
        Vector3::new(self.0[3], self.0[4], self.0[5])
    }

    pub fn bias(&self) -> DVector<f64> {
        self.0.rows(6, self.num_sats()).into_owned()
    }

    pub fn rotation(&self) -> Vector3<f64> {
        let o = 6 + self.num_sats();
        Vector3::new(self.0[o], self.0[o + 1], self.0[o + 2])
    }

    pub fn from_parts(dp: &Vector3<f64>, dv: &Vector3<f64>, db: &DVector<f64>, dw: &Vector3<f64>) -> Self {
        let s = db.len();
        let mut v = DVector::zeros(s + 9);
        v.fixed_rows_mut::<3>(0).copy_from(dp);
        v.fixed_rows_mut::<3>(3).copy_from(dv);
        v.rows_mut(6, s).copy_from(db);
        v.fixed_rows_mut::<3>(6 + s).copy_from(dw);
        Self(v)
    }
}

impl UeState {
    pub fn num_sats(&self) -> usize {
        self.bias.len()
    }

    /// Tangent dimension `S + 9`.
    pub fn dim(&self) -> usize {
        self.bias.len() + 9
    }

    pub fn boxplus(&self, d: &TangentVector) -> Result<UeState, ManifoldError> {
        state_boxplus(self, d)
    }

    pub fn boxminus(&self, other: &UeState) -> Result<TangentVector, ManifoldError> {
        state_boxminus(self, other)
    }
}

/// Componentwise boxplus: additive on the Euclidean blocks, [`so3_boxplus`] on
/// the rotation.
pub fn state_boxplus(z: &UeState, d: &TangentVector) -> Result<UeState, ManifoldError> {
    if d.0.len() != z.dim() {
        return Err(ManifoldError::DimensionMismatch { expected: z.dim(), got: d.0.len() });
    }
    Ok(UeState {
        position: z.position + d.position(),
        velocity: z.velocity + d.velocity(),
        bias: &z.bias + d.bias(),
        orientation: z.orientation.boxplus(&d.rotation()),
    })
}

/// Componentwise boxminus `a [-] b`.
pub fn state_boxminus(a: &UeState, b: &UeState) -> Result<TangentVector, ManifoldError> {
    if a.dim() != b.dim() {
        return Err(ManifoldError::DimensionMismatch { expected: b.dim(), got: a.dim() });
    }
    let dw = a.orientation.boxminus(&b.orientation)?;
    Ok(TangentVector::from_parts(&(a.position - b.position), &(a.velocity - b.velocity), &(&a.bias - &b.bias), &dw))
}

/// A weighted point set such as a sigma-point set.
#[derive(Debug, Clone)]
pub struct WeightedPointSet {
    pub points: Vec<UeState>,
    /// Mean weights, summing to one.
    pub mean_weights: Vec<f64>,
    /// Covariance weights.
    pub cov_weights: Vec<f64>,
}

/// Weighted mean on the manifold.
///
/// Euclidean blocks use the weighted arithmetic mean; the rotation block is
/// the fixed point of `R <- R [+] sum_i w_i (R_i [-] R)` started at the point
/// with the largest weight. Weights may be negative. The stopping threshold
/// is `max(1e-10, 8 eps sum_i |w_i|)`, which is the floating-point noise
/// floor of the weighted residual.
pub fn manifold_mean(points: &[UeState], weights: &[f64]) -> Result<UeState, ManifoldError> {
    if points.is_empty() || points.len() != weights.len() {
        return Err(ManifoldError::BadWeights);
    }
    let wsum: f64 = weights.iter().sum();
    if (wsum - 1.0).abs() > 1e-9 {
        return Err(ManifoldError::BadWeights);
    }
    let dim = points[0].dim();
    if let Some(p) = points.iter().find(|p| p.dim() != dim) {
        return Err(ManifoldError::DimensionMismatch { expected: dim, got: p.dim() });
    }
    let start = weights.iter().enumerate().fold(0, |best, (i, &w)| if w > weights[best] { i } else { best });
    let reference = &points[start];

    // accumulate Euclidean blocks relative to the start point so large
    // opposite-sign weights do not cancel the leading digits
    let mut dp = Vector3::zeros();
    let mut dv = Vector3::zeros();
    let mut db = DVector::zeros(reference.num_sats());
    for (p, &w) in points.iter().zip(weights) {
        dp += (p.position - reference.position) * w;
        dv += (p.velocity - reference.velocity) * w;
        db += (&p.bias - &reference.bias) * w;
    }

    let abs_sum: f64 = weights.iter().map(|w| w.abs()).sum();
    let tol = MEAN_TOL.max(8.0 * f64::EPSILON * abs_sum);
    let mut r = reference.orientation;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    for _ in 0..MEAN_MAX_ITER {
        let mut step = Vector3::zeros();
        for (p, &w) in points.iter().zip(weights) {
            step += so3_boxminus(&p.orientation, &r)? * w;
        }
        residual = step.norm();
        r = r.boxplus(&step);
        if residual < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(ManifoldError::MeanNotConverged { iterations: MEAN_MAX_ITER, residual });
    }
    Ok(UeState {
        position: reference.position + dp,
        velocity: reference.velocity + dv,
        bias: &reference.bias + db,
        orientation: r,
    })
}
