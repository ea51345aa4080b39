//! Fisher information of the channel parameters and the observation
//! covariance derived from it.
//!
//! For satellite `s` the unknowns are the shared RIS block, its own block and
//! its nuisance gains `xi_s = [Re a_s, Im a_s, Re g_s1.., Im g_s1..]`. The
//! channel FIM is the Slepian-Bangs form `2 Re(D^H C^-1 D)` summed over
//! satellites, and the gains are removed with a Schur complement.
//!
//! Each Jacobian column is a central difference of the signal model. Every
//! column of path `p` has the form `pref x_k a(g) A(g) B(k) e_p(g) e'_p(k)`:
//! a per-transmission beam term `a(g)`, an optional Doppler factor
//! `A(g) = sin(2 pi t_g h) / h`, an optional delay factor
//! `B(k) = sin(2 pi k df h) / h` and the path phasors. Those are exactly the
//! central differences of the phasors with step `h`. [`channel_fim`] uses
//! that separable form to build the Gram matrix from `O(K)` sums per pair of
//! paths and `O(G)` sums per pair of columns; [`jacobian`] builds the
//! explicit `GK`-row matrix.

use nalgebra::{DMatrix, DVector, Vector3};
use std::f64::consts::PI;
use std::ops::Range;
use thiserror::Error;

use crate::channel::{steering_vector, ChannelSnapshot, PathGains, SatChannel, C64};
use crate::geometry::{AsinPolicy, GeometryError, LinkParams, ObsLayout, UserView};
use crate::linalg::{spd_inverse, sym_pseudo_inverse, symmetrize, COND_LIMIT};

/// Variance assigned to parameters that carry no information.
pub const FLOOR_VARIANCE: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FimError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("Fisher information is not invertible on its informative block")]
    NotInvertible,
}

/// Central-difference steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSteps {
    /// Radians.
    pub angle: f64,
    /// Seconds.
    pub delay: f64,
    /// Hz.
    pub doppler: f64,
    /// Gain step. The signal is linear in the gains, so the difference is
    /// exact for any step.
    pub gain: f64,
}

impl Default for FdSteps {
    fn default() -> Self {
        Self { angle: 1e-6, delay: 1e-12, doppler: 1e-3, gain: 1e-6 }
    }
}

impl FdSteps {
    pub fn halved(&self) -> Self {
        Self { angle: self.angle / 2.0, delay: self.delay / 2.0, doppler: self.doppler / 2.0, gain: self.gain / 2.0 }
    }
}

/// One Jacobian column of a satellite's signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSpec {
    /// Global column index in `[rho; xi_0; xi_1; ...]`.
    pub index: usize,
    /// 0 for the direct path, `1 + r` for RIS `r`.
    pub path: usize,
    /// Beam term per transmission.
    pub scale: Vec<C64>,
    pub doppler_factor: bool,
    pub delay_factor: bool,
}

/// Signal model of one satellite with its Jacobian columns.
#[derive(Debug, Clone)]
pub struct SatTerms {
    pub sat: usize,
    pub channel: SatChannel,
    pub columns: Vec<ColumnSpec>,
}

/// Number of nuisance entries per satellite, `2 (R + 1)`.
pub fn nuisance_dim(layout: &ObsLayout) -> usize {
    2 * (layout.riss + 1)
}

/// Global index of nuisance entry `j` of satellite `s`.
pub fn nuisance_index(layout: &ObsLayout, s: usize, j: usize) -> usize {
    layout.dim() + s * nuisance_dim(layout) + j
}

/// RIS departure steering vectors at the nominal angle and at +-h in azimuth
/// and elevation; they are shared by all satellites.
struct DepartureSet {
    base: DVector<C64>,
    az: [DVector<C64>; 2],
    el: [DVector<C64>; 2],
}

fn departure_sets(snap: &ChannelSnapshot, params: &LinkParams, h: f64) -> Vec<DepartureSet> {
    let lambda = snap.wavelength();
    let arr = &snap.arrays.ris;
    params
        .riss
        .iter()
        .map(|rp| {
            let a = rp.aod;
            let sv = |daz: f64, del: f64| {
                steering_vector(arr, crate::geometry::Angles::new(a.azimuth + daz, a.elevation + del), lambda)
            };
            DepartureSet { base: sv(0.0, 0.0), az: [sv(h, 0.0), sv(-h, 0.0)], el: [sv(0.0, h), sv(0.0, -h)] }
        })
        .collect()
}

fn sat_terms_with(
    snap: &ChannelSnapshot,
    s: usize,
    params: &LinkParams,
    gains: &PathGains,
    p: &Vector3<f64>,
    steps: &FdSteps,
    departures: &[DepartureSet],
) -> SatTerms {
    use crate::geometry::Angles;
    let layout = params.layout();
    let channel = snap.sat_channel(s, params, gains, p);
    let h = steps.angle;
    let j = C64::new(0.0, 1.0);
    let mut cols = Vec::new();
    let mut push = |index, path, scale, doppler_factor, delay_factor| {
        cols.push(ColumnSpec { index, path, scale, doppler_factor, delay_factor })
    };
    let scaled = |a: &[C64], c: C64| -> Vec<C64> { a.iter().map(|x| x * c).collect() };
    let diff = |plus: Vec<C64>, minus: Vec<C64>, c: C64| -> Vec<C64> {
        plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h) * c).collect()
    };

    // shared RIS block
    for (r, rp) in params.riss.iter().enumerate() {
        let path = 1 + r;
        let gain = gains.ris[r];
        let base = &channel.paths[path].coefs;
        let dep = &departures[r];
        push(layout.ris_doppler(r), path, scaled(base, gain * j), true, false);
        let via = |d: &DVector<C64>| snap.ris_coefs_with(s, r, d, rp.aoa);
        push(layout.ris_aod(r), path, diff(via(&dep.az[0]), via(&dep.az[1]), gain), false, false);
        push(layout.ris_aod(r) + 1, path, diff(via(&dep.el[0]), via(&dep.el[1]), gain), false, false);
        let at = |daz: f64, del: f64| {
            snap.ris_coefs_with(s, r, &dep.base, Angles::new(rp.aoa.azimuth + daz, rp.aoa.elevation + del))
        };
        push(layout.ris_aoa(r), path, diff(at(h, 0.0), at(-h, 0.0), gain), false, false);
        push(layout.ris_aoa(r) + 1, path, diff(at(0.0, h), at(0.0, -h), gain), false, false);
    }

    // own block
    let sp = &params.sats[s];
    let gain = gains.direct;
    let base = &channel.paths[0].coefs;
    push(layout.sat_doppler(s), 0, scaled(base, gain * j), true, false);
    let coef = |aod: Angles, aoa: Angles| snap.direct_coefs(s, aod, aoa);
    let shift = |a: Angles, daz: f64, del: f64| Angles::new(a.azimuth + daz, a.elevation + del);
    let aod = sp.aod;
    let aoa = sp.aoa;
    push(layout.sat_aod(s), 0, diff(coef(shift(aod, h, 0.0), aoa), coef(shift(aod, -h, 0.0), aoa), gain), false, false);
    push(
        layout.sat_aod(s) + 1,
        0,
        diff(coef(shift(aod, 0.0, h), aoa), coef(shift(aod, 0.0, -h), aoa), gain),
        false,
        false,
    );
    push(layout.sat_aoa(s), 0, diff(coef(aod, shift(aoa, h, 0.0)), coef(aod, shift(aoa, -h, 0.0)), gain), false, false);
    push(
        layout.sat_aoa(s) + 1,
        0,
        diff(coef(aod, shift(aoa, 0.0, h)), coef(aod, shift(aoa, 0.0, -h)), gain),
        false,
        false,
    );
    push(layout.sat_delay(s), 0, scaled(base, -gain * j), false, true);
    for r in 0..layout.riss {
        let path = 1 + r;
        push(layout.ris_delay(s, r), path, scaled(&channel.paths[path].coefs, -gains.ris[r] * j), false, true);
    }

    // nuisance gains
    let nr = layout.riss;
    push(nuisance_index(&layout, s, 0), 0, base.clone(), false, false);
    push(nuisance_index(&layout, s, 1), 0, scaled(base, j), false, false);
    for r in 0..nr {
        let c = &channel.paths[1 + r].coefs;
        push(nuisance_index(&layout, s, 2 + r), 1 + r, c.clone(), false, false);
        push(nuisance_index(&layout, s, 2 + nr + r), 1 + r, scaled(c, j), false, false);
    }
    SatTerms { sat: s, channel, columns: cols }
}

/// Signal model and Jacobian columns of satellite `s`.
pub fn sat_terms(
    snap: &ChannelSnapshot,
    s: usize,
    params: &LinkParams,
    gains: &PathGains,
    p: &Vector3<f64>,
    steps: &FdSteps,
) -> SatTerms {
    let dep = departure_sets(snap, params, steps.angle);
    sat_terms_with(snap, s, params, gains, p, steps, &dep)
}

fn doppler_factor(t: f64, h: f64) -> f64 {
    (2.0 * PI * t * h).sin() / h
}

/// Explicit Jacobian of satellite `terms.sat`'s `G K` samples with respect
/// to `[rho; xi_s]` (columns of other satellites' blocks are zero).
pub fn jacobian(terms: &SatTerms, layout: &ObsLayout, steps: &FdSteps) -> DMatrix<C64> {
    let ch = &terms.channel;
    let k_len = ch.subcarriers();
    let n_rho = layout.dim();
    let mut d = DMatrix::<C64>::zeros(ch.transmissions * k_len, n_rho + nuisance_dim(layout));
    let xi0 = nuisance_index(layout, terms.sat, 0);
    for c in &terms.columns {
        let col = if c.index >= n_rho { n_rho + (c.index - xi0) } else { c.index };
        let path = &ch.paths[c.path];
        for g in 0..ch.transmissions {
            let t = g as f64 * ch.symbol_period;
            let a = if c.doppler_factor { doppler_factor(t, steps.doppler) } else { 1.0 };
            for k in 0..k_len {
                let fk = (k + 1) as f64 * ch.spacing;
                let b = if c.delay_factor { doppler_factor(fk, steps.delay) } else { 1.0 };
                let phase = C64::from_polar(1.0, 2.0 * PI * (t * path.doppler - fk * path.delay));
                d[(g * k_len + k, col)] = ch.prefactor * ch.pilots[k] * c.scale[g] * (a * b) * phase;
            }
        }
    }
    d
}

/// `2 Re(D^H diag(noise)^-1 D)`.
pub fn slepian_bangs(d: &DMatrix<C64>, noise: &DVector<f64>) -> DMatrix<f64> {
    let weighted = DMatrix::from_fn(d.nrows(), d.ncols(), |i, j| d[(i, j)] / noise[i]);
    let g = d.adjoint() * weighted;
    symmetrize(&g.map(|x| 2.0 * x.re))
}

/// Local Gram matrix of the columns of one satellite over transmissions `tx`.
fn separable_gram(terms: &SatTerms, steps: &FdSteps, tx: Range<usize>) -> DMatrix<f64> {
    let ch = &terms.channel;
    let np = ch.paths.len();
    let k_len = ch.subcarriers();
    // k-sums: |x_k|^2 conj(e'_p) e'_q B^m for m = 0, 1, 2
    let mut ks = vec![[C64::new(0.0, 0.0); 3]; np * np];
    let e_k: Vec<Vec<C64>> = ch
        .paths
        .iter()
        .map(|p| (0..k_len).map(|k| C64::from_polar(1.0, -2.0 * PI * (k + 1) as f64 * ch.spacing * p.delay)).collect())
        .collect();
    let w_k: Vec<f64> = (0..k_len).map(|k| ch.pilots[k].norm_sqr()).collect();
    let b_k: Vec<f64> = (0..k_len).map(|k| doppler_factor((k + 1) as f64 * ch.spacing, steps.delay)).collect();
    for p in 0..np {
        for q in p..np {
            let mut acc = [C64::new(0.0, 0.0); 3];
            for k in 0..k_len {
                let base = e_k[p][k].conj() * e_k[q][k] * w_k[k];
                acc[0] += base;
                acc[1] += base * b_k[k];
                acc[2] += base * (b_k[k] * b_k[k]);
            }
            ks[p * np + q] = acc;
            ks[q * np + p] = acc.map(|x| x.conj());
        }
    }
    // per-column transmission profiles u(g) = a(g) A(g) e_p(g) / sqrt(C_g)
    let profiles: Vec<Vec<C64>> = terms
        .columns
        .iter()
        .map(|c| {
            let doppler = ch.paths[c.path].doppler;
            tx.clone()
                .map(|g| {
                    let t = g as f64 * ch.symbol_period;
                    let a = if c.doppler_factor { doppler_factor(t, steps.doppler) } else { 1.0 };
                    c.scale[g] * C64::from_polar(a / ch.noise_var[g].sqrt(), 2.0 * PI * t * doppler)
                })
                .collect()
        })
        .collect();
    let pref2 = ch.prefactor * ch.prefactor;
    let n = terms.columns.len();
    let mut out = DMatrix::zeros(n, n);
    for (i, ci) in terms.columns.iter().enumerate() {
        for (jj, cj) in terms.columns.iter().enumerate().skip(i) {
            let g_sum: C64 = profiles[i].iter().zip(&profiles[jj]).map(|(a, b)| a.conj() * b).sum();
            let mb = ci.delay_factor as usize + cj.delay_factor as usize;
            let v = 2.0 * (g_sum * ks[ci.path * np + cj.path][mb]).re * pref2;
            out[(i, jj)] = v;
            out[(jj, i)] = v;
        }
    }
    out
}

/// Channel FIM over `[rho; xi_0; ...; xi_{S-1}]`.
#[derive(Debug, Clone)]
pub struct ChannelFim {
    pub matrix: DMatrix<f64>,
    pub layout: ObsLayout,
    /// Per global nuisance entry: whether its path has nonzero gain.
    pub nuisance_active: Vec<bool>,
}

/// Builds the channel FIM for a user at `p` with parameters `params`.
/// `transmissions` restricts the sum to a sub-range of pilot transmissions.
pub fn channel_fim(
    snap: &ChannelSnapshot,
    params: &LinkParams,
    p: &Vector3<f64>,
    steps: &FdSteps,
    transmissions: Option<Range<usize>>,
) -> ChannelFim {
    let layout = params.layout();
    let n_rho = layout.dim();
    let n_xi = nuisance_dim(&layout);
    let n = n_rho + layout.sats * n_xi;
    let tx = transmissions.unwrap_or(0..snap.frame.transmissions);
    let dep = departure_sets(snap, params, steps.angle);
    let mut matrix = DMatrix::zeros(n, n);
    let mut active = vec![false; layout.sats * n_xi];
    for s in 0..layout.sats {
        let gains = snap.path_gains(s, p);
        let terms = sat_terms_with(snap, s, params, &gains, p, steps, &dep);
        let local = separable_gram(&terms, steps, tx.clone());
        for (i, ci) in terms.columns.iter().enumerate() {
            for (jj, cj) in terms.columns.iter().enumerate() {
                matrix[(ci.index, cj.index)] += local[(i, jj)];
            }
        }
        for (j, flag) in active[s * n_xi..(s + 1) * n_xi].iter_mut().enumerate() {
            let path = if j < 2 { 0 } else { 1 + (j - 2) % layout.riss.max(1) };
            let g = if path == 0 { gains.direct } else { gains.ris[path - 1] };
            *flag = g.norm() > 0.0;
        }
    }
    ChannelFim { matrix, layout, nuisance_active: active }
}

/// Outcome of [`remove_nuisance`].
#[derive(Debug, Clone)]
pub struct EquivalentFim {
    pub matrix: DMatrix<f64>,
    /// The nuisance block was singular and its pseudo-inverse was used.
    pub pseudo_inverse: bool,
}

/// Fraction of a parameter's own information below which the Schur
/// complement is treated as having removed all of it.
pub const CANCELLATION_TOLERANCE: f64 = 1e-10;

/// Schur complement `X - Y Z^-1 Y^T` removing the trailing entries beyond
/// `n_rho`. A singular `Z` falls back to its pseudo-inverse. Rows whose
/// remaining diagonal is at most [`CANCELLATION_TOLERANCE`] times the
/// diagonal of `X` are rounding residue and are set to zero.
pub fn remove_nuisance(j_ch: &DMatrix<f64>, n_rho: usize) -> EquivalentFim {
    let n = j_ch.nrows();
    let x = j_ch.view((0, 0), (n_rho, n_rho)).into_owned();
    if n == n_rho {
        return EquivalentFim { matrix: symmetrize(&x), pseudo_inverse: false };
    }
    let y = j_ch.view((0, n_rho), (n_rho, n - n_rho)).into_owned();
    let z = j_ch.view((n_rho, n_rho), (n - n_rho, n - n_rho)).into_owned();
    let (z_inv, pseudo) = match spd_inverse(&z) {
        Some(inv) if inv.condition <= COND_LIMIT => (inv.inverse, false),
        _ => (sym_pseudo_inverse(&z), true),
    };
    let mut m = symmetrize(&(&x - &y * z_inv * y.transpose()));
    for i in 0..n_rho {
        if m[(i, i)] <= CANCELLATION_TOLERANCE * x[(i, i)] {
            m.row_mut(i).fill(0.0);
            m.column_mut(i).fill(0.0);
        }
    }
    EquivalentFim { matrix: m, pseudo_inverse: pseudo }
}

/// Equivalent FIM of the observation vector with inactive nuisance entries
/// dropped before the Schur complement.
pub fn equivalent_fim(ch: &ChannelFim) -> EquivalentFim {
    let n_rho = ch.layout.dim();
    let keep: Vec<usize> =
        (0..n_rho).chain(ch.nuisance_active.iter().enumerate().filter(|(_, &a)| a).map(|(j, _)| n_rho + j)).collect();
    let reduced = ch.matrix.select_rows(&keep).select_columns(&keep);
    remove_nuisance(&reduced, n_rho)
}

/// Observation covariance from an equivalent FIM.
#[derive(Debug, Clone)]
pub struct ObservationCovariance {
    pub sigma: DMatrix<f64>,
    /// Entries without information, given [`FLOOR_VARIANCE`].
    pub floored: Vec<usize>,
    /// Jitter added to the equilibrated diagonal before inversion.
    pub jitter: f64,
}

/// Inverts `j` on its informative entries; entries with a zero row get
/// [`FLOOR_VARIANCE`] and no correlation.
pub fn observation_covariance(j: &DMatrix<f64>) -> Result<ObservationCovariance, FimError> {
    let n = j.nrows();
    let (live, floored): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| j[(i, i)] > 0.0);
    let sub = j.select_rows(&live).select_columns(&live);
    let inv = spd_inverse(&sub).ok_or(FimError::NotInvertible)?;
    let mut sigma = DMatrix::zeros(n, n);
    for (a, &i) in live.iter().enumerate() {
        for (b, &k) in live.iter().enumerate() {
            sigma[(i, k)] = inv.inverse[(a, b)];
        }
    }
    for &i in &floored {
        sigma[(i, i)] = FLOOR_VARIANCE;
    }
    Ok(ObservationCovariance { sigma, floored, jitter: inv.jitter })
}

/// Square root of the summed bound on the RIS departure angles.
pub fn crb_phi_d(j: &DMatrix<f64>, layout: &ObsLayout) -> Result<f64, FimError> {
    let cov = observation_covariance(j)?;
    Ok(layout.ris_aod_range().map(|i| cov.sigma[(i, i)]).sum::<f64>().sqrt())
}

/// Everything computed for one user state.
#[derive(Debug, Clone)]
pub struct FimReport {
    pub params: LinkParams,
    pub fim: EquivalentFim,
    pub covariance: ObservationCovariance,
}

/// Evaluates FIMs and observation covariances against a fixed snapshot.
#[derive(Debug, Clone, Copy)]
pub struct FimEvaluator<'a> {
    pub snapshot: &'a ChannelSnapshot,
    pub steps: FdSteps,
    pub policy: AsinPolicy,
}

impl<'a> FimEvaluator<'a> {
    pub fn new(snapshot: &'a ChannelSnapshot) -> Self {
        Self { snapshot, steps: FdSteps::default(), policy: AsinPolicy::Strict }
    }

    pub fn params(&self, user: UserView) -> Result<LinkParams, GeometryError> {
        let riss: Vec<_> = self.snapshot.riss.iter().map(|r| r.state.clone()).collect();
        LinkParams::compute(&self.snapshot.satellites, &riss, user, self.snapshot.wavelength(), self.policy)
    }

    pub fn evaluate(&self, user: UserView) -> Result<FimReport, FimError> {
        let params = self.params(user)?;
        let ch = channel_fim(self.snapshot, &params, user.position, &self.steps, None);
        let fim = equivalent_fim(&ch);
        let covariance = observation_covariance(&fim.matrix)?;
        Ok(FimReport { params, fim, covariance })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn schur_of_block_diagonal_is_x() {
        let mut j = DMatrix::<f64>::identity(4, 4) * 2.0;
        j[(0, 1)] = 0.5;
        j[(1, 0)] = 0.5;
        let e = remove_nuisance(&j, 2);
        assert!(!e.pseudo_inverse);
        assert_relative_eq!(e.matrix, j.view((0, 0), (2, 2)).into_owned());
    }

    #[test]
    fn schur_matches_inverse_block() {
        // (J^-1)_rho,rho = (X - Y Z^-1 Y^T)^-1
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[4.0, 1.0, 0.5, 0.2, 1.0, 3.0, 0.3, 0.1, 0.5, 0.3, 2.0, 0.4, 0.2, 0.1, 0.4, 1.5],
        );
        let inv = a.clone().try_inverse().unwrap();
        let e = remove_nuisance(&a, 2);
        let back = e.matrix.try_inverse().unwrap();
        assert_relative_eq!(back, inv.view((0, 0), (2, 2)).into_owned(), epsilon = 1e-12);
    }

    #[test]
    fn singular_nuisance_uses_pseudo_inverse() {
        let mut j = DMatrix::<f64>::identity(3, 3);
        j[(2, 2)] = 0.0;
        let e = remove_nuisance(&j, 2);
        assert!(e.pseudo_inverse);
        assert_relative_eq!(e.matrix, DMatrix::identity(2, 2));
    }

    #[test]
    fn crb_of_identity_fim() {
        let layout = ObsLayout::new(1, 1);
        let j = DMatrix::identity(layout.dim(), layout.dim());
        assert_relative_eq!(crb_phi_d(&j, &layout).unwrap(), 2f64.sqrt());
    }

    #[test]
    fn zero_rows_get_floor_variance() {
        let mut j = DMatrix::<f64>::identity(3, 3) * 4.0;
        j[(1, 1)] = 0.0;
        let c = observation_covariance(&j).unwrap();
        assert_eq!(c.floored, vec![1]);
        assert_eq!(c.sigma[(1, 1)], FLOOR_VARIANCE);
        assert_relative_eq!(c.sigma[(0, 0)], 0.25);
        assert_eq!(c.sigma[(0, 1)], 0.0);
    }

    #[test]
    fn slepian_bangs_of_single_column() {
        let d = DMatrix::from_column_slice(2, 1, &[C64::new(1.0, 1.0), C64::new(0.0, 2.0)]);
        let noise = DVector::from_vec(vec![2.0, 4.0]);
        let j = slepian_bangs(&d, &noise);
        assert_relative_eq!(j[(0, 0)], 2.0 * (2.0 / 2.0 + 4.0 / 4.0));
    }
}
