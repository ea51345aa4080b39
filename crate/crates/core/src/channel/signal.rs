//! Per-satellite received pilot model.
//!
//! For satellite `s`, subcarrier `k` (1-based) and transmission `g` (0-based,
//! at time `t = g T`) the noise-free combined sample is
//!
//! ```text
//! l(g, k) = sqrt(K_f P / (K_f + 1)) x_k * sum_p gamma_p c_p exp(j 2 pi (t f_p - k df d_p))
//! ```
//!
//! where path 0 is the direct link and path `1 + r` the cascade through RIS
//! `r`. `gamma_p` is the complex large-scale gain, `c_p` the product of beam
//! and array factors, and `f_p`, `d_p` the total Doppler and delay of the
//! path (the RIS paths include the known satellite-RIS leg).
//!
//! Precoders, combiners and RIS phases are redrawn for every transmission,
//! so `c_p` depends on `g`. With a single beam per frame the angles would
//! only scale each path by a constant that the unknown gain absorbs.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::array::{dot_conj, dot_plain, steering_vector, ArrayConfig, C64};
use super::propagation::{
    expected_gain_amplitude, los_probability, ris_amplification, ris_link_loss, total_path_loss, AtmosphereTable,
    EnvironmentParams,
};
use crate::geometry::{
    elevation_angle, sat_ris_params, Angles, GeometryError, LinkParams, RisState, SatRisParams, SatelliteState,
};

fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// OFDM pilot frame and link-budget settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrameConfig {
    /// Number of subcarriers `K`.
    pub subcarriers: usize,
    /// Number of pilot transmissions `G`.
    pub transmissions: usize,
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    /// Spacing between transmissions; `K / B` when absent.
    pub symbol_period_s: Option<f64>,
    /// Total satellite transmit power, split evenly over subcarriers.
    pub tx_power_dbm: f64,
    /// Output power budget of each active RIS.
    pub ris_power_dbm: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
    /// Upper bound on the RIS amplitude gain, in power dB.
    pub ris_max_gain_db: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            subcarriers: 128,
            transmissions: 8,
            bandwidth_hz: 240e6,
            carrier_hz: 12.7e9,
            symbol_period_s: None,
            tx_power_dbm: 50.0,
            ris_power_dbm: 0.0,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 0.0,
            ris_max_gain_db: 100.0,
        }
    }
}

impl FrameConfig {
    pub fn wavelength(&self) -> f64 {
        crate::geometry::SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn carrier_ghz(&self) -> f64 {
        self.carrier_hz / 1e9
    }

    pub fn subcarrier_spacing(&self) -> f64 {
        self.bandwidth_hz / self.subcarriers as f64
    }

    pub fn symbol_period(&self) -> f64 {
        self.symbol_period_s.unwrap_or(self.subcarriers as f64 / self.bandwidth_hz)
    }

    /// Transmit power per subcarrier in watts.
    pub fn subcarrier_power(&self) -> f64 {
        dbm_to_w(self.tx_power_dbm) / self.subcarriers as f64
    }

    pub fn ris_power(&self) -> f64 {
        dbm_to_w(self.ris_power_dbm)
    }

    /// Thermal noise variance per subcarrier sample.
    pub fn noise_variance(&self) -> f64 {
        dbm_to_w(self.noise_psd_dbm_hz) * self.subcarrier_spacing() * 10f64.powf(self.noise_figure_db / 10.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArraySet {
    pub satellite: ArrayConfig,
    pub ris: ArrayConfig,
    pub ue: ArrayConfig,
}

impl Default for ArraySet {
    fn default() -> Self {
        Self {
            satellite: ArrayConfig::new(4, 4, 0.005),
            ris: ArrayConfig::new(20, 20, 0.005),
            ue: ArrayConfig::new(4, 4, 0.005),
        }
    }
}

/// Spatial correlation matrices of the NLOS components; `None` is identity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NoiseModel {
    pub ue_correlation: Option<DMatrix<C64>>,
    pub sat_correlation: Option<DMatrix<C64>>,
    pub ris_correlation: Option<DMatrix<C64>>,
}

fn quad_form(theta: &Option<DMatrix<C64>>, v: &DVector<C64>) -> f64 {
    match theta {
        None => v.norm_squared(),
        Some(t) => dot_conj(v, &(t * v)).re,
    }
}

/// One RIS contribution to the NLOS interference: the reflected vector
/// `Gamma_r H_sr f_s` and the large-scale power of the RIS-user link.
#[derive(Debug, Clone)]
pub struct RisNoiseTerm {
    pub reflected: DVector<C64>,
    pub link_power: f64,
}

/// Inputs of [`NoiseModel::effective_variance`] for one satellite and subcarrier.
#[derive(Debug, Clone)]
pub struct NoiseTerms<'a> {
    pub tx_power: f64,
    pub pilot: C64,
    pub combiner: &'a DVector<C64>,
    pub precoder: &'a DVector<C64>,
    /// Large-scale power of the direct link.
    pub direct_power: f64,
    pub ris: &'a [RisNoiseTerm],
    pub k_factor: f64,
    pub thermal: f64,
}

impl NoiseModel {
    /// Effective noise variance: the NLOS parts of the direct and RIS paths
    /// after combining, plus thermal noise.
    pub fn effective_variance(&self, t: &NoiseTerms) -> f64 {
        let mut nlos = t.direct_power * quad_form(&self.sat_correlation, t.precoder);
        for r in t.ris {
            nlos += r.link_power * quad_form(&self.ris_correlation, &r.reflected);
        }
        t.tx_power * t.pilot.norm_sqr() * quad_form(&self.ue_correlation, t.combiner) * nlos / (t.k_factor + 1.0)
            + t.thermal
    }
}

/// Analog beams and pilots used by one satellite during a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SatBeams {
    /// One precoder per transmission.
    pub precoders: Vec<DVector<C64>>,
    /// One combiner per transmission.
    pub combiners: Vec<DVector<C64>>,
    /// Unit-modulus pilot per subcarrier, shared by all transmissions.
    pub pilots: DVector<C64>,
}

/// Random phase-only beam of unit norm.
pub fn random_beam<R: Rng + ?Sized>(len: usize, rng: &mut R) -> DVector<C64> {
    let scale = 1.0 / (len as f64).sqrt();
    DVector::from_fn(len, |_, _| C64::from_polar(scale, rng.gen_range(0.0..2.0 * PI)))
}

/// Random unit-modulus sequence.
pub fn random_phases<R: Rng + ?Sized>(len: usize, rng: &mut R) -> DVector<C64> {
    DVector::from_fn(len, |_, _| C64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI)))
}

/// Random small-scale quantities of one link: gain phase and shadow draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkDraw {
    pub phase: f64,
    /// Standard normal draw scaling the shadow-fading std.
    pub shadow: f64,
}

/// How shadow fading is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shadowing {
    Random,
    /// All draws at the median (zero dB of shadow fading).
    Median,
}

impl LinkDraw {
    fn draw<R: Rng + ?Sized>(rng: &mut R, shadowing: Shadowing) -> Self {
        let phase = rng.gen_range(0.0..2.0 * PI);
        let x: f64 = StandardNormal.sample(rng);
        Self { phase, shadow: if shadowing == Shadowing::Median { 0.0 } else { x } }
    }
}

/// State of one RIS during a frame.
#[derive(Debug, Clone)]
pub struct RisSnapshot {
    pub state: RisState,
    /// Unit-modulus reflection phases, one profile per transmission.
    pub phases: Vec<DVector<C64>>,
    /// Common amplitude gain of the active surface.
    pub amplification: f64,
    /// Whether the user is inside the RIS service zone.
    pub visible: bool,
}

/// Everything about a frame that does not depend on the user state: node
/// states, beams, random phases and shadow draws.
#[derive(Debug, Clone)]
pub struct ChannelSnapshot {
    pub frame: FrameConfig,
    pub arrays: ArraySet,
    pub satellites: Vec<SatelliteState>,
    pub riss: Vec<RisSnapshot>,
    /// Satellite-RIS leg parameters, `[s][r]`.
    pub sat_ris: Vec<Vec<SatRisParams>>,
    /// Complex gains of the satellite-RIS legs, `[s][r]`.
    pub sat_ris_gain: Vec<Vec<C64>>,
    pub beams: Vec<SatBeams>,
    pub direct: Vec<LinkDraw>,
    pub ris_user: Vec<LinkDraw>,
    /// Propagation environment at the user.
    pub environment: EnvironmentParams,
    /// Environment used for the satellite-RIS legs.
    pub ris_environment: EnvironmentParams,
    pub atmosphere: AtmosphereTable,
    pub noise: NoiseModel,
    cache: SnapshotCache,
}

/// User-independent products reused by every evaluation of a snapshot.
#[derive(Debug, Clone, Default)]
struct SnapshotCache {
    /// `[s][r][g]`: amplified reflection of the incoming RIS wave, and the
    /// satellite beam factor of the leg.
    ris_fixed: Vec<Vec<Vec<(DVector<C64>, C64)>>>,
    /// `[s][r][g]`: power of `Gamma_r H_sr f_s` under the RIS correlation.
    reflected_power: Vec<Vec<Vec<f64>>>,
}

/// Inputs for [`ChannelSnapshot::draw`].
#[derive(Debug, Clone)]
pub struct SnapshotSpec<'a> {
    pub frame: &'a FrameConfig,
    pub arrays: &'a ArraySet,
    pub satellites: &'a [SatelliteState],
    pub riss: &'a [RisState],
    pub ris_visible: &'a [bool],
    pub environment: &'a EnvironmentParams,
    pub ris_environment: &'a EnvironmentParams,
    pub atmosphere: &'a AtmosphereTable,
    pub shadowing: Shadowing,
}

/// Complex gains of the paths of one satellite.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGains {
    pub direct: C64,
    pub ris: Vec<C64>,
}

/// One propagation path of [`SatChannel`].
#[derive(Debug, Clone, PartialEq)]
pub struct PathTerm {
    pub gain: C64,
    /// Beam and array factor per transmission.
    pub coefs: Vec<C64>,
    /// Total Doppler in Hz.
    pub doppler: f64,
    pub delay: f64,
}

/// Noise-free received-sample model of one satellite.
#[derive(Debug, Clone)]
pub struct SatChannel {
    pub prefactor: f64,
    pub pilots: DVector<C64>,
    /// Path 0 is direct, path `1 + r` goes through RIS `r`.
    pub paths: Vec<PathTerm>,
    /// Effective noise variance per transmission; the pilots have unit
    /// modulus, so it is the same on every subcarrier.
    pub noise_var: DVector<f64>,
    pub symbol_period: f64,
    pub spacing: f64,
    pub transmissions: usize,
}

impl SatChannel {
    pub fn subcarriers(&self) -> usize {
        self.pilots.len()
    }

    /// Noise-free sample at transmission `g` (0-based) and subcarrier index
    /// `k` (0-based, carrier number `k + 1`).
    pub fn sample(&self, g: usize, k: usize) -> C64 {
        let t = g as f64 * self.symbol_period;
        let fk = (k + 1) as f64 * self.spacing;
        let sum: C64 = self
            .paths
            .iter()
            .map(|p| p.gain * p.coefs[g] * C64::from_polar(1.0, 2.0 * PI * (t * p.doppler - fk * p.delay)))
            .sum();
        sum * self.pilots[k] * self.prefactor
    }

    /// All `G K` samples, transmission-major.
    pub fn block(&self) -> DVector<C64> {
        let k = self.subcarriers();
        DVector::from_fn(self.transmissions * k, |i, _| self.sample(i / k, i % k))
    }

    /// Noise variance of every sample of [`SatChannel::block`].
    pub fn block_noise(&self) -> DVector<f64> {
        let k = self.subcarriers();
        DVector::from_fn(self.transmissions * k, |i, _| self.noise_var[i / k])
    }
}

impl ChannelSnapshot {
    /// Draws beams, pilots, RIS phases, gain phases and shadowing, and sets
    /// the RIS amplification from the incident power.
    pub fn draw<R: Rng + ?Sized>(spec: SnapshotSpec, rng: &mut R) -> Result<Self, GeometryError> {
        let frame = spec.frame.clone();
        let lambda = frame.wavelength();
        let f_ghz = frame.carrier_ghz();
        let g_len = frame.transmissions;
        let beams = spec
            .satellites
            .iter()
            .map(|_| SatBeams {
                precoders: (0..g_len).map(|_| random_beam(spec.arrays.satellite.len(), rng)).collect(),
                combiners: (0..g_len).map(|_| random_beam(spec.arrays.ue.len(), rng)).collect(),
                pilots: random_phases(frame.subcarriers, rng),
            })
            .collect::<Vec<_>>();
        let direct = spec.satellites.iter().map(|_| LinkDraw::draw(rng, spec.shadowing)).collect();
        let ris_user = spec.riss.iter().map(|_| LinkDraw::draw(rng, spec.shadowing)).collect();

        let mut sat_ris = Vec::with_capacity(spec.satellites.len());
        let mut sat_ris_gain = Vec::with_capacity(spec.satellites.len());
        let mut incident = vec![0.0; spec.riss.len()];
        for (s, sat) in spec.satellites.iter().enumerate() {
            let mut params = Vec::with_capacity(spec.riss.len());
            let mut gains = Vec::with_capacity(spec.riss.len());
            for (r, ris) in spec.riss.iter().enumerate() {
                let p = sat_ris_params(sat, ris, lambda)?;
                let draw = LinkDraw::draw(rng, spec.shadowing);
                let theta = elevation_angle(&sat.position, &ris.position);
                let d = (sat.position - ris.position).norm();
                // elevated surfaces see the satellite in line of sight
                let loss = total_path_loss(d, f_ghz, theta, spec.ris_environment, spec.atmosphere, draw.shadow);
                let amp = expected_gain_amplitude(loss, 1.0);
                let a_sat = steering_vector(&spec.arrays.satellite, p.aod, lambda);
                // average over the frame's beams
                let beam_power = beams[s].precoders.iter().map(|f| dot_plain(&a_sat, f).norm_sqr()).sum::<f64>()
                    / g_len.max(1) as f64;
                incident[r] += frame.subcarrier_power()
                    * frame.subcarriers as f64
                    * amp
                    * amp
                    * beam_power
                    * spec.arrays.ris.len() as f64;
                params.push(p);
                gains.push(C64::from_polar(amp, draw.phase));
            }
            sat_ris.push(params);
            sat_ris_gain.push(gains);
        }
        let riss = spec
            .riss
            .iter()
            .enumerate()
            .map(|(r, ris)| RisSnapshot {
                state: ris.clone(),
                phases: (0..g_len).map(|_| random_phases(spec.arrays.ris.len(), rng)).collect(),
                amplification: ris_amplification(frame.ris_power(), incident[r], frame.ris_max_gain_db),
                visible: spec.ris_visible.get(r).copied().unwrap_or(false),
            })
            .collect();
        let mut snap = Self {
            frame,
            arrays: *spec.arrays,
            satellites: spec.satellites.to_vec(),
            riss,
            sat_ris,
            sat_ris_gain,
            beams,
            direct,
            ris_user,
            environment: spec.environment.clone(),
            ris_environment: spec.ris_environment.clone(),
            atmosphere: spec.atmosphere.clone(),
            noise: NoiseModel::default(),
            cache: SnapshotCache::default(),
        };
        snap.rebuild_cache();
        Ok(snap)
    }

    /// Recomputes cached products; call after editing public fields.
    pub fn rebuild_cache(&mut self) {
        let lambda = self.wavelength();
        let mut fixed = Vec::with_capacity(self.num_sats());
        let mut power = Vec::with_capacity(self.num_sats());
        for s in 0..self.num_sats() {
            let mut f_row = Vec::with_capacity(self.num_riss());
            let mut p_row = Vec::with_capacity(self.num_riss());
            for r in 0..self.num_riss() {
                let leg = &self.sat_ris[s][r];
                let ris = &self.riss[r];
                let a_in = steering_vector(&self.arrays.ris, leg.aoa, lambda);
                let a_sat = steering_vector(&self.arrays.satellite, leg.aod, lambda);
                let mut f_g = Vec::with_capacity(ris.phases.len());
                let mut p_g = Vec::with_capacity(ris.phases.len());
                for (phases, precoder) in ris.phases.iter().zip(&self.beams[s].precoders) {
                    let reflected_in = a_in.component_mul(phases) * C64::from(ris.amplification);
                    let sat_beam = dot_plain(&a_sat, precoder);
                    let h_f = &reflected_in * (self.sat_ris_gain[s][r] * sat_beam);
                    p_g.push(quad_form(&self.noise.ris_correlation, &h_f));
                    f_g.push((reflected_in, sat_beam));
                }
                f_row.push(f_g);
                p_row.push(p_g);
            }
            fixed.push(f_row);
            power.push(p_row);
        }
        self.cache = SnapshotCache { ris_fixed: fixed, reflected_power: power };
    }

    /// Keeps the first `sats` satellites and the first `transmissions` pilot
    /// transmissions. RIS amplification is left as drawn.
    ///
    /// # Panics
    /// If `transmissions` exceeds the drawn count.
    pub fn restrict(&self, sats: usize, transmissions: usize) -> Self {
        assert!(transmissions <= self.frame.transmissions, "only {} transmissions drawn", self.frame.transmissions);
        let mut out = self.clone();
        out.satellites.truncate(sats);
        out.sat_ris.truncate(sats);
        out.sat_ris_gain.truncate(sats);
        out.beams.truncate(sats);
        out.direct.truncate(sats);
        out.cache.ris_fixed.truncate(sats);
        out.cache.reflected_power.truncate(sats);
        for b in &mut out.beams {
            b.precoders.truncate(transmissions);
            b.combiners.truncate(transmissions);
        }
        for r in &mut out.riss {
            r.phases.truncate(transmissions);
        }
        for row in out.cache.ris_fixed.iter_mut() {
            row.iter_mut().for_each(|v| v.truncate(transmissions));
        }
        for row in out.cache.reflected_power.iter_mut() {
            row.iter_mut().for_each(|v| v.truncate(transmissions));
        }
        out.frame.transmissions = transmissions;
        out
    }

    /// Keeps the first `riss` surfaces; everything else is unchanged.
    pub fn with_riss(&self, riss: usize) -> Self {
        let mut out = self.clone();
        out.riss.truncate(riss);
        out.ris_user.truncate(riss);
        for s in 0..out.num_sats() {
            out.sat_ris[s].truncate(riss);
            out.sat_ris_gain[s].truncate(riss);
            out.cache.ris_fixed[s].truncate(riss);
            out.cache.reflected_power[s].truncate(riss);
        }
        out
    }

    pub fn num_sats(&self) -> usize {
        self.satellites.len()
    }

    pub fn num_riss(&self) -> usize {
        self.riss.len()
    }

    pub fn wavelength(&self) -> f64 {
        self.frame.wavelength()
    }

    /// Direct-link large-scale loss in dB and LOS probability for a user at
    /// `p`; `None` when the satellite is below the horizon.
    fn direct_budget(&self, s: usize, p: &Vector3<f64>) -> Option<(f64, f64)> {
        let sat = &self.satellites[s];
        let theta = elevation_angle(&sat.position, p);
        if theta <= 0.0 {
            return None;
        }
        let d = (sat.position - p).norm();
        let loss = total_path_loss(
            d,
            self.frame.carrier_ghz(),
            theta,
            &self.environment,
            &self.atmosphere,
            self.direct[s].shadow,
        );
        Some((loss, los_probability(theta, &self.environment)))
    }

    fn ris_user_loss(&self, r: usize, p: &Vector3<f64>) -> f64 {
        let ris = &self.riss[r].state;
        let theta = elevation_angle(&ris.position, p).abs();
        let d = (ris.position - p).norm();
        ris_link_loss(d, self.frame.carrier_ghz(), theta, &self.environment, self.ris_user[r].shadow)
    }

    /// Complex path gains of satellite `s` for a user at `p`. Paths through
    /// RISs whose zone excludes the user have zero gain.
    pub fn path_gains(&self, s: usize, p: &Vector3<f64>) -> PathGains {
        let direct = match self.direct_budget(s, p) {
            Some((loss, p_los)) => C64::from_polar(expected_gain_amplitude(loss, p_los), self.direct[s].phase),
            None => C64::new(0.0, 0.0),
        };
        let ris = (0..self.num_riss())
            .map(|r| {
                if !self.riss[r].visible {
                    return C64::new(0.0, 0.0);
                }
                let amp = expected_gain_amplitude(self.ris_user_loss(r, p), 1.0);
                self.sat_ris_gain[s][r] * C64::from_polar(amp, self.ris_user[r].phase)
            })
            .collect();
        PathGains { direct, ris }
    }

    /// Beam and array factor of the direct path at every transmission.
    pub fn direct_coefs(&self, s: usize, aod: Angles, aoa: Angles) -> Vec<C64> {
        let lambda = self.wavelength();
        let b = &self.beams[s];
        let a_ue = steering_vector(&self.arrays.ue, aoa, lambda);
        let a_sat = steering_vector(&self.arrays.satellite, aod, lambda);
        b.combiners.iter().zip(&b.precoders).map(|(w, f)| dot_conj(w, &a_ue) * dot_plain(&a_sat, f)).collect()
    }

    /// Cascade factor through RIS `r` at transmission `g` that does not
    /// depend on the user: the amplified reflection of the incoming wave and
    /// the satellite beam factor.
    pub fn ris_fixed_factor(&self, s: usize, r: usize, g: usize) -> &(DVector<C64>, C64) {
        &self.cache.ris_fixed[s][r][g]
    }

    /// Beam and array factor of the path from satellite `s` through RIS `r`
    /// at every transmission, given the RIS departure steering vector.
    pub fn ris_coefs_with(&self, s: usize, r: usize, ris_departure: &DVector<C64>, aoa: Angles) -> Vec<C64> {
        let a_ue = steering_vector(&self.arrays.ue, aoa, self.wavelength());
        self.beams[s]
            .combiners
            .iter()
            .zip(&self.cache.ris_fixed[s][r])
            .map(|(w, fixed)| dot_conj(w, &a_ue) * dot_plain(ris_departure, &fixed.0) * fixed.1)
            .collect()
    }

    /// Beam and array factor of the path from satellite `s` through RIS `r`.
    pub fn ris_coefs(&self, s: usize, r: usize, aod: Angles, aoa: Angles) -> Vec<C64> {
        self.ris_coefs_with(s, r, &steering_vector(&self.arrays.ris, aod, self.wavelength()), aoa)
    }

    /// Effective noise variance per transmission for satellite `s` and user
    /// at `p`, for unit-modulus pilots.
    pub fn noise_variance(&self, s: usize, p: &Vector3<f64>) -> DVector<f64> {
        let direct_power = self.direct_budget(s, p).map(|(l, _)| 10f64.powf(-l / 10.0)).unwrap_or(0.0);
        let visible: Vec<(usize, f64)> = (0..self.num_riss())
            .filter(|&r| self.riss[r].visible)
            .map(|r| (r, 10f64.powf(-self.ris_user_loss(r, p) / 10.0)))
            .collect();
        let b = &self.beams[s];
        let k_factor = self.environment.k_factor();
        let power = self.frame.subcarrier_power();
        let thermal = self.frame.noise_variance();
        DVector::from_fn(self.frame.transmissions, |g, _| {
            // the reflected vector enters only through its power, which is cached
            let ris_power: f64 = visible.iter().map(|&(r, link)| link * self.cache.reflected_power[s][r][g]).sum();
            let combiner = quad_form(&self.noise.ue_correlation, &b.combiners[g]);
            let precoder = quad_form(&self.noise.sat_correlation, &b.precoders[g]);
            power * combiner * (direct_power * precoder + ris_power) / (k_factor + 1.0) + thermal
        })
    }

    /// Noise variance of every (transmission, subcarrier) sample routed
    /// through [`NoiseModel::effective_variance`] term by term.
    pub fn noise_variance_explicit(&self, s: usize, p: &Vector3<f64>) -> DMatrix<f64> {
        let lambda = self.wavelength();
        let direct_power = self.direct_budget(s, p).map(|(l, _)| 10f64.powf(-l / 10.0)).unwrap_or(0.0);
        let b = &self.beams[s];
        let mut out = DMatrix::zeros(self.frame.transmissions, self.frame.subcarriers);
        for g in 0..self.frame.transmissions {
            let ris_terms: Vec<RisNoiseTerm> = (0..self.num_riss())
                .filter(|&r| self.riss[r].visible)
                .map(|r| {
                    let leg = &self.sat_ris[s][r];
                    let ris = &self.riss[r];
                    let h_f = steering_vector(&self.arrays.ris, leg.aoa, lambda)
                        * (self.sat_ris_gain[s][r]
                            * dot_plain(&steering_vector(&self.arrays.satellite, leg.aod, lambda), &b.precoders[g]));
                    RisNoiseTerm {
                        reflected: h_f.component_mul(&ris.phases[g]) * C64::from(ris.amplification),
                        link_power: 10f64.powf(-self.ris_user_loss(r, p) / 10.0),
                    }
                })
                .collect();
            for k in 0..self.frame.subcarriers {
                out[(g, k)] = self.noise.effective_variance(&NoiseTerms {
                    tx_power: self.frame.subcarrier_power(),
                    pilot: b.pilots[k],
                    combiner: &b.combiners[g],
                    precoder: &b.precoders[g],
                    direct_power,
                    ris: &ris_terms,
                    k_factor: self.environment.k_factor(),
                    thermal: self.frame.noise_variance(),
                });
            }
        }
        out
    }

    /// Signal model of satellite `s` for the given parameters and gains.
    pub fn sat_channel(&self, s: usize, params: &LinkParams, gains: &PathGains, p: &Vector3<f64>) -> SatChannel {
        let k_f = self.environment.k_factor();
        let sp = &params.sats[s];
        let mut paths = vec![PathTerm {
            gain: gains.direct,
            coefs: self.direct_coefs(s, sp.aod, sp.aoa),
            doppler: sp.doppler,
            delay: sp.delay,
        }];
        for (r, rp) in params.riss.iter().enumerate() {
            let leg = &self.sat_ris[s][r];
            paths.push(PathTerm {
                gain: gains.ris[r],
                coefs: self.ris_coefs(s, r, rp.aod, rp.aoa),
                doppler: rp.doppler + leg.doppler,
                delay: rp.delays[s] + leg.delay,
            });
        }
        SatChannel {
            prefactor: (k_f * self.frame.subcarrier_power() / (k_f + 1.0)).sqrt(),
            pilots: self.beams[s].pilots.clone(),
            paths,
            noise_var: self.noise_variance(s, p),
            symbol_period: self.frame.symbol_period(),
            spacing: self.frame.subcarrier_spacing(),
            transmissions: self.frame.transmissions,
        }
    }

    /// Convenience: channel of satellite `s` with gains evaluated at `p`.
    pub fn sat_channel_at(&self, s: usize, params: &LinkParams, p: &Vector3<f64>) -> SatChannel {
        self.sat_channel(s, params, &self.path_gains(s, p), p)
    }
}
