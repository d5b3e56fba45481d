//! Two-hop free-space optical channel: ground station to a fixed relay, then
//! relay to one of the loitering slaves.
//!
//! Each hop's gain factors into path loss, lognormal scintillation, geometric
//! coupling and pointing loss. The end-to-end gain is the product of both hops
//! scaled by the relay mirror reflectivity. Hop 2 has a hard field-of-view
//! gate: if the radial pointing error at the receiver exceeds `Z * fov`, the
//! hop gain is zero.

pub mod coherence;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

/// Optical and jitter parameters of one hop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopParams {
    /// Link distance `Z` in meters.
    pub distance: f64,
    /// Receive aperture radius `a` in meters.
    pub aperture_radius: f64,
    /// Gaussian beam radius at the receiver plane `w_z` in meters.
    pub beam_radius: f64,
    /// Extinction coefficient `xi` in 1/m.
    pub extinction: f64,
    /// Log-amplitude variance `V` of the scintillation.
    pub log_amp_var: f64,
    /// Per-axis lateral jitter variance in m^2.
    pub lateral_jitter_var: f64,
    /// Per-axis angular jitter variance in rad^2. Zero for a static hop.
    pub angular_jitter_var: f64,
    /// Receiver field-of-view half angle; `None` disables the gate.
    pub fov_half_angle: Option<f64>,
}

impl HopParams {
    pub fn with_distance(mut self, distance: f64) -> Self {
        self.distance = distance;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive =
            [("distance", self.distance), ("aperture_radius", self.aperture_radius), ("beam_radius", self.beam_radius)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be > 0 (got {v})"));
            }
        }
        let nonneg = [
            ("extinction", self.extinction),
            ("log_amp_var", self.log_amp_var),
            ("lateral_jitter_var", self.lateral_jitter_var),
            ("angular_jitter_var", self.angular_jitter_var),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name} must be >= 0 (got {v})"));
            }
        }
        if let Some(fov) = self.fov_half_angle {
            if fov.is_nan() || fov <= 0.0 {
                return Err(format!("fov_half_angle must be > 0 (got {fov})"));
            }
        }
        Ok(())
    }

    /// Constants of the hop that do not change from slot to slot.
    pub fn optics(&self) -> HopOptics {
        let (nu, a0) = geometric_coupling(self.aperture_radius, self.beam_radius);
        HopOptics { nu, a0, w_eq_sq: equivalent_beam_width_sq(self.beam_radius, nu) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopOptics {
    pub nu: f64,
    /// Geometric coupling under perfect alignment.
    pub a0: f64,
    /// Squared equivalent beam width at the receiver.
    pub w_eq_sq: f64,
}

/// Receiver and modulation constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    /// Detector responsivity in A/W.
    pub responsivity: f64,
    /// Transmit power in W.
    pub tx_power: f64,
    /// Receiver noise standard deviation in A.
    pub noise_std: f64,
    pub efficiency: f64,
    /// Electrical bandwidth in Hz.
    pub bandwidth: f64,
    /// SNR gap to capacity, linear, at least 1.
    pub snr_gap: f64,
    /// Minimum decodable SNR, linear.
    pub min_snr: f64,
    /// System throughput cap in bits/s.
    pub throughput_cap: f64,
}

impl RadioParams {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("responsivity", self.responsivity),
            ("tx_power", self.tx_power),
            ("noise_std", self.noise_std),
            ("efficiency", self.efficiency),
            ("bandwidth", self.bandwidth),
            ("snr_gap", self.snr_gap),
            ("min_snr", self.min_snr),
            ("throughput_cap", self.throughput_cap),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be > 0 (got {v})"));
            }
        }
        if self.snr_gap < 1.0 {
            return Err(format!("snr_gap must be >= 1 (got {})", self.snr_gap));
        }
        Ok(())
    }

    /// Gain below which the link cannot be decoded.
    pub fn gain_threshold(&self) -> f64 {
        gain_threshold(self.min_snr, self.noise_std, self.responsivity, self.tx_power)
    }
}

/// Gain factors drawn for one hop in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct HopDraw {
    pub h_path: f64,
    pub h_turb: f64,
    pub h_geom: f64,
    pub h_point: f64,
    /// Radial pointing error in meters.
    pub radial_error: f64,
    pub fov_miss: bool,
}

impl HopDraw {
    pub fn gain(&self) -> f64 {
        if self.fov_miss {
            0.0
        } else {
            self.h_path * self.h_turb * self.h_geom * self.h_point
        }
    }
}

/// One slot's channel towards one slave.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ChannelDraw {
    pub hop1: HopDraw,
    pub hop2: HopDraw,
    pub e2e_gain: f64,
    /// Instantaneous rate in bits/s before the throughput cap.
    pub rate: f64,
}

/// Large-scale attenuation `exp(-xi Z)`.
pub fn path_loss(extinction: f64, distance: f64) -> f64 {
    (-extinction * distance).exp()
}

/// Lognormal scintillation with unit mean: `exp(X)`, `X ~ N(-2V, 4V)`.
pub fn turbulence_sample<R: Rng + ?Sized>(log_amp_var: f64, rng: &mut R) -> f64 {
    if log_amp_var == 0.0 {
        return 1.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    (-2.0 * log_amp_var + 2.0 * log_amp_var.sqrt() * z).exp()
}

/// Returns `(nu, A0)` with `nu = sqrt(pi) a / (sqrt(2) w_z)` and
/// `A0 = erf(nu)^2`.
pub fn geometric_coupling(aperture_radius: f64, beam_radius: f64) -> (f64, f64) {
    let nu = std::f64::consts::PI.sqrt() * aperture_radius / (std::f64::consts::SQRT_2 * beam_radius);
    let e = erf(nu);
    (nu, e * e)
}

/// `w_eq^2 = w_z^2 sqrt(pi erf(nu) / (2 nu exp(-nu^2)))`.
pub fn equivalent_beam_width_sq(beam_radius: f64, nu: f64) -> f64 {
    let ratio = std::f64::consts::PI * erf(nu) / (2.0 * nu * (-nu * nu).exp());
    beam_radius * beam_radius * ratio.sqrt()
}

/// Pointing loss `exp(-2 r^2 / w_eq^2)` for radial error `r`.
pub fn pointing_loss(radial_error: f64, beam_radius: f64, nu: f64) -> f64 {
    pointing_loss_weq(radial_error, equivalent_beam_width_sq(beam_radius, nu))
}

fn pointing_loss_weq(radial_error: f64, w_eq_sq: f64) -> f64 {
    (-2.0 * radial_error * radial_error / w_eq_sq).exp()
}

/// Radial error of a two-axis isotropic Gaussian with the given per-axis
/// variance.
fn rayleigh_radius<R: Rng + ?Sized>(axis_var: f64, rng: &mut R) -> f64 {
    if axis_var == 0.0 {
        return 0.0;
    }
    let n = Normal::new(0.0, axis_var.sqrt()).expect("finite variance");
    let x: f64 = n.sample(rng);
    let y: f64 = n.sample(rng);
    x.hypot(y)
}

/// Hop-2 pointing error: lateral displacement plus range-scaled angular
/// deviation, each a two-axis isotropic Gaussian. Returns `(r, fov_miss)`.
pub fn hop2_error<R: Rng + ?Sized>(
    lateral_var: f64,
    angular_var: f64,
    distance: f64,
    fov_half_angle: Option<f64>,
    rng: &mut R,
) -> (f64, bool) {
    let mut axis = [0.0f64; 2];
    let lat_sd = lateral_var.sqrt();
    let ang_sd = angular_var.sqrt();
    for a in axis.iter_mut() {
        let dl: f64 = StandardNormal.sample(rng);
        let da: f64 = StandardNormal.sample(rng);
        *a = lat_sd * dl + distance * ang_sd * da;
    }
    let r = axis[0].hypot(axis[1]);
    let miss = fov_half_angle.is_some_and(|fov| r > distance * fov);
    (r, miss)
}

/// Draws the static ground-to-relay hop.
pub fn sample_hop1<R: Rng + ?Sized>(hop: &HopParams, optics: &HopOptics, rng: &mut R) -> HopDraw {
    let r = rayleigh_radius(hop.lateral_jitter_var, rng);
    HopDraw {
        h_path: path_loss(hop.extinction, hop.distance),
        h_turb: turbulence_sample(hop.log_amp_var, rng),
        h_geom: optics.a0,
        h_point: pointing_loss_weq(r, optics.w_eq_sq),
        radial_error: r,
        fov_miss: false,
    }
}

/// Draws the relay-to-slave hop at the hop's current distance.
pub fn sample_hop2<R: Rng + ?Sized>(hop: &HopParams, optics: &HopOptics, rng: &mut R) -> HopDraw {
    let (r, miss) = hop2_error(hop.lateral_jitter_var, hop.angular_jitter_var, hop.distance, hop.fov_half_angle, rng);
    HopDraw {
        h_path: path_loss(hop.extinction, hop.distance),
        h_turb: turbulence_sample(hop.log_amp_var, rng),
        h_geom: optics.a0,
        h_point: pointing_loss_weq(r, optics.w_eq_sq),
        radial_error: r,
        fov_miss: miss,
    }
}

/// `H = rho * H1 * H2`; zero when hop 2 misses the field of view.
pub fn combine(hop1: HopDraw, hop2: HopDraw, rho: f64, radio: &RadioParams) -> ChannelDraw {
    let e2e_gain = rho * hop1.gain() * hop2.gain();
    ChannelDraw { hop1, hop2, e2e_gain, rate: snr_and_rate(e2e_gain, radio) }
}

/// Draws both hops from one generator.
pub fn e2e_gain_sample<R: Rng + ?Sized>(
    hop1: &HopParams,
    hop2: &HopParams,
    rho: f64,
    radio: &RadioParams,
    rng: &mut R,
) -> ChannelDraw {
    let d1 = sample_hop1(hop1, &hop1.optics(), rng);
    let d2 = sample_hop2(hop2, &hop2.optics(), rng);
    combine(d1, d2, rho, radio)
}

/// `h_th = sqrt(SNR_min) sigma_n / (R P_t)`.
pub fn gain_threshold(min_snr: f64, noise_std: f64, responsivity: f64, tx_power: f64) -> f64 {
    min_snr.sqrt() * noise_std / (responsivity * tx_power)
}

/// Electrical SNR for gain `H`: `(R P_t H / sigma_n)^2`.
pub fn snr(gain: f64, radio: &RadioParams) -> f64 {
    let amp = radio.responsivity * radio.tx_power * gain / radio.noise_std;
    amp * amp
}

/// Instantaneous rate `eta B log2(1 + SNR/Gamma)`, zero below the decoding
/// threshold. The throughput cap is applied by [`capped_rate`].
pub fn snr_and_rate(gain: f64, radio: &RadioParams) -> f64 {
    rate_from_snr(snr(gain, radio), radio)
}

pub fn rate_from_snr(snr: f64, radio: &RadioParams) -> f64 {
    if snr < radio.min_snr {
        0.0
    } else {
        radio.efficiency * radio.bandwidth * (1.0 + snr / radio.snr_gap).log2()
    }
}

/// Per-slot service rate `min(cap, R)`.
pub fn capped_rate(rate: f64, radio: &RadioParams) -> f64 {
    rate.min(radio.throughput_cap)
}

/// Monte Carlo estimate of `Pr[H < h_th]` with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutageEstimate {
    pub h_th: f64,
    pub p_out: f64,
    pub std_err: f64,
}

impl OutageEstimate {
    pub fn ci_halfwidth(&self) -> f64 {
        3.0 * self.std_err
    }
}

fn outage_from_sorted(sorted: &[f64], h_th: f64) -> OutageEstimate {
    let n = sorted.len() as f64;
    let below = sorted.partition_point(|&h| h < h_th) as f64;
    let p = below / n;
    OutageEstimate { h_th, p_out: p, std_err: (p * (1.0 - p) / n).sqrt() }
}

/// Draws `n` end-to-end gains at the hop-2 distance in `hop2`.
pub fn sample_gains<R: Rng + ?Sized>(hop1: &HopParams, hop2: &HopParams, rho: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let (o1, o2) = (hop1.optics(), hop2.optics());
    (0..n)
        .map(|_| {
            let d1 = sample_hop1(hop1, &o1, rng);
            let d2 = sample_hop2(hop2, &o2, rng);
            rho * d1.gain() * d2.gain()
        })
        .collect()
}

/// Outage probability at one threshold.
pub fn outage_probability<R: Rng + ?Sized>(
    hop1: &HopParams,
    hop2: &HopParams,
    rho: f64,
    h_th: f64,
    n_samples: usize,
    rng: &mut R,
) -> OutageEstimate {
    assert!(n_samples >= 1, "need at least one sample");
    let mut gains = sample_gains(hop1, hop2, rho, n_samples, rng);
    gains.sort_by(f64::total_cmp);
    outage_from_sorted(&gains, h_th)
}

/// Outage at many thresholds from one common set of draws, so the curve is
/// exactly monotone in the threshold.
pub fn outage_curve<R: Rng + ?Sized>(
    hop1: &HopParams,
    hop2: &HopParams,
    rho: f64,
    thresholds: &[f64],
    n_samples: usize,
    rng: &mut R,
) -> Vec<OutageEstimate> {
    assert!(n_samples >= 1, "need at least one sample");
    let mut gains = sample_gains(hop1, hop2, rho, n_samples, rng);
    gains.sort_by(f64::total_cmp);
    thresholds.iter().map(|&t| outage_from_sorted(&gains, t)).collect()
}

/// Histogram density estimate on `bins` equal-width bins over
/// `[0, upper)`. Returns `(left, right, density)` rows; samples at or above
/// `upper` are counted in the normalization but not binned.
pub fn gain_histogram(gains: &[f64], upper: f64, bins: usize) -> Vec<(f64, f64, f64)> {
    assert!(bins > 0 && upper > 0.0);
    let width = upper / bins as f64;
    let mut counts = vec![0u64; bins];
    for &g in gains {
        if g >= 0.0 && g < upper {
            let k = ((g / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
    }
    let n = gains.len().max(1) as f64;
    counts
        .iter()
        .enumerate()
        .map(|(k, &c)| (k as f64 * width, (k + 1) as f64 * width, c as f64 / (n * width)))
        .collect()
}
