//! Uniform planar array responses.

use nalgebra::{Complex, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::geometry::Angles;

pub type C64 = Complex<f64>;

/// A uniform planar array lying in the local y-z plane with boresight along
/// body +x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    /// Elements along body y.
    pub rows: usize,
    /// Elements along body z.
    pub cols: usize,
    /// Element spacing in metres.
    pub spacing: f64,
}

impl ArrayConfig {
    pub fn new(rows: usize, cols: usize, spacing: f64) -> Self {
        Self { rows, cols, spacing }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Response of `array` towards `angles`.
///
/// Element `(m, n)` (index `m * cols + n`) has phase
/// `2 pi d / lambda * (m cos(el) sin(az) + n sin(el))`, the path difference of
/// element position `(0, m d, n d)` along the unit direction
/// `(cos el cos az, cos el sin az, sin el)`. Entries have unit modulus.
pub fn steering_vector(array: &ArrayConfig, angles: Angles, wavelength: f64) -> DVector<C64> {
    let k = 2.0 * PI * array.spacing / wavelength;
    let (se, ce) = angles.elevation.sin_cos();
    let uy = ce * angles.azimuth.sin();
    let uz = se;
    DVector::from_fn(array.len(), |i, _| {
        let m = (i / array.cols) as f64;
        let n = (i % array.cols) as f64;
        C64::from_polar(1.0, k * (m * uy + n * uz))
    })
}

/// `sum_i a_i b_i` without conjugation.
pub fn dot_plain(a: &DVector<C64>, b: &DVector<C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// `a^H b`.
pub fn dot_conj(a: &DVector<C64>, b: &DVector<C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// `a^T diag(g) b`.
pub fn bilinear_diag(a: &DVector<C64>, g: &DVector<C64>, b: &DVector<C64>) -> C64 {
    a.iter().zip(g.iter()).zip(b.iter()).map(|((x, y), z)| x * y * z).sum()
}
