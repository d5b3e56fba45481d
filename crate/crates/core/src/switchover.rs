//! Switchover delay models.
//!
//! Three interchangeable models share one interface: the physics-driven FSO
//! model (gimbal slew plus geometric acquisition retries), an AR(1) model with
//! global and per-target drift, and an IID model. The latter two scale
//! ring-distance means (near, mid, far) that are calibrated from the FSO model.

use rand::Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Formation;

#[derive(Debug, Error, PartialEq)]
pub enum SwitchError {
    /// Acquisition success probability is zero; the target cannot be reached
    /// at this epoch.
    #[error("target unavailable: acquisition success probability is zero")]
    Unavailable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GimbalLimits {
    /// deg/s
    pub v_max: f64,
    /// deg/s^2
    pub a_max: f64,
    /// deg/s^3
    pub j_max: f64,
}

impl Default for GimbalLimits {
    fn default() -> Self {
        Self { v_max: 120.0, a_max: 600.0, j_max: 4000.0 }
    }
}

/// S-curve slew time in seconds for a rotation of `theta_deg` degrees.
pub fn slew_time(theta_deg: f64, limits: &GimbalLimits) -> f64 {
    theta_deg / limits.v_max + limits.v_max / limits.a_max + 4.0 * limits.a_max / limits.j_max
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionParams {
    pub t_fsm: f64,
    pub t_pilot: f64,
    pub p_base: f64,
    pub p_floor: f64,
    /// Attempts after which the switch is declared failed.
    pub k_cap: u64,
}

impl Default for AcquisitionParams {
    fn default() -> Self {
        Self { t_fsm: 3e-3, t_pilot: 1e-3, p_base: 0.9, p_floor: 0.05, k_cap: 50 }
    }
}

impl AcquisitionParams {
    pub fn t_acq(&self) -> f64 {
        self.t_fsm + self.t_pilot
    }

    /// `max(p_floor, p_base * Pr[no FOV miss])` for a two-axis isotropic
    /// Gaussian error with per-axis variance `lat_var + Z^2 ang_var`.
    pub fn success_prob(&self, range: f64, lat_var: f64, ang_var: f64, fov: f64) -> f64 {
        let var = lat_var + range * range * ang_var;
        let gate = range * fov;
        let inside = if var == 0.0 { 1.0 } else { 1.0 - (-(gate * gate) / (2.0 * var)).exp() };
        (self.p_base * inside).max(self.p_floor).min(1.0)
    }
}

/// Attempts until first success, `K ~ Geometric(p)` on `{1, 2, ...}`.
pub fn acquisition_rounds<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Result<u64, SwitchError> {
    if p.is_nan() || p <= 0.0 {
        return Err(SwitchError::Unavailable);
    }
    if p >= 1.0 {
        return Ok(1);
    }
    let g = Geometric::new(p).map_err(|_| SwitchError::Unavailable)?;
    Ok(g.sample(rng).saturating_add(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwitchModelKind {
    Iid,
    Dependent,
    Fso,
}

impl SwitchModelKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Iid => "iid",
            Self::Dependent => "dependent",
            Self::Fso => "fso",
        }
    }
}

impl std::fmt::Display for SwitchModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SwitchModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "iid" => Ok(Self::Iid),
            "dependent" => Ok(Self::Dependent),
            "fso" => Ok(Self::Fso),
            _ => Err(format!("unknown switch model '{s}' (expected iid, dependent or fso)")),
        }
    }
}

/// Mean switch time in slots per hexagon ring distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingMeans {
    pub near: f64,
    pub mid: f64,
    pub far: f64,
}

impl RingMeans {
    pub fn get(&self, ring: usize) -> f64 {
        match ring {
            0 | 1 => self.near,
            2 => self.mid,
            _ => self.far,
        }
    }
}

/// Hexagon vertex distance between slaves `i` and `j` (0 for `i == j`).
pub fn ring_distance(i: usize, j: usize) -> usize {
    let d = i.abs_diff(j) % 6;
    d.min(6 - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArParams {
    pub phi_global: f64,
    pub phi_target: f64,
    /// Innovation standard deviation in the log domain.
    pub innov_std: f64,
}

impl Default for ArParams {
    fn default() -> Self {
        Self { phi_global: 0.95, phi_target: 0.9, innov_std: 0.1 }
    }
}

impl ArParams {
    fn stationary_var(phi: f64, sd: f64) -> f64 {
        sd * sd / (1.0 - phi * phi)
    }

    pub fn global_var(&self) -> f64 {
        Self::stationary_var(self.phi_global, self.innov_std)
    }

    pub fn target_var(&self) -> f64 {
        Self::stationary_var(self.phi_target, self.innov_std)
    }
}

/// What the switch model needs to know about a candidate transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchContext {
    pub from: usize,
    pub to: usize,
    pub theta_deg: f64,
    /// Acquisition success probability towards `to` at this instant.
    pub p_success: f64,
}

/// One realized switchover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwitchSample {
    pub tau_slots: u64,
    /// Acquisition attempts; `None` for the IID and dependent models.
    pub attempts: Option<u64>,
    pub slew_s: f64,
    /// The attempt cap was reached without lock.
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchModel {
    pub kind: SwitchModelKind,
    pub limits: GimbalLimits,
    pub acq: AcquisitionParams,
    pub slot_len: f64,
    /// Multiplies every switch time; 1 is nominal.
    pub time_scale: f64,
    pub ring_means: RingMeans,
    pub ar: ArParams,
    x_global: f64,
    x_target: Vec<f64>,
}

impl SwitchModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: SwitchModelKind,
        n: usize,
        limits: GimbalLimits,
        acq: AcquisitionParams,
        slot_len: f64,
        time_scale: f64,
        ring_means: RingMeans,
        ar: ArParams,
    ) -> Self {
        Self { kind, limits, acq, slot_len, time_scale, ring_means, ar, x_global: 0.0, x_target: vec![0.0; n] }
    }

    /// Largest blackout any switch can produce, in slots.
    pub fn tau_max(&self) -> u64 {
        tau_max(&self.limits, &self.acq, self.slot_len, self.time_scale)
    }

    fn to_slots(&self, seconds: f64) -> u64 {
        ((self.time_scale * seconds / self.slot_len).ceil() as u64).max(1)
    }

    fn clamp(&self, tau: f64) -> u64 {
        (tau.ceil() as u64).clamp(1, self.tau_max())
    }

    /// Time for acquisition only, used when the gimbal already points at the
    /// target but the link is not locked.
    fn reacquire_mean_slots(&self) -> f64 {
        self.time_scale * self.acq.t_acq() / (self.acq.p_base * self.slot_len)
    }

    fn multiplier_var(&self) -> f64 {
        self.ar.global_var() + self.ar.target_var()
    }

    /// Expected switch time in slots for scoring, given the current geometry;
    /// not rounded.
    pub fn forecast(&self, ctx: &SwitchContext) -> Option<f64> {
        if ctx.p_success <= 0.0 && self.kind == SwitchModelKind::Fso {
            return None;
        }
        let cap = self.tau_max() as f64;
        let tau = match self.kind {
            SwitchModelKind::Fso => {
                let slew = if ctx.from == ctx.to { 0.0 } else { slew_time(ctx.theta_deg, &self.limits) };
                self.time_scale * (slew + self.acq.t_acq() / ctx.p_success) / self.slot_len
            }
            _ if ctx.from == ctx.to => self.reacquire_mean_slots(),
            // the drift levels are internal to the switch process; the
            // scheduler only sees which ring the target is on
            SwitchModelKind::Iid | SwitchModelKind::Dependent => self.ring_means.get(ring_distance(ctx.from, ctx.to)),
        };
        Some(tau.min(cap))
    }

    /// Draws a realized switch and advances any model memory.
    pub fn sample<R: Rng + ?Sized>(&mut self, ctx: &SwitchContext, rng: &mut R) -> Result<SwitchSample, SwitchError> {
        match self.kind {
            SwitchModelKind::Fso => {
                let slew = if ctx.from == ctx.to { 0.0 } else { slew_time(ctx.theta_deg, &self.limits) };
                let k = acquisition_rounds(ctx.p_success, rng)?;
                let failed = k > self.acq.k_cap;
                let k = k.min(self.acq.k_cap);
                Ok(SwitchSample {
                    tau_slots: self.to_slots(slew + k as f64 * self.acq.t_acq()),
                    attempts: Some(k),
                    slew_s: slew,
                    failed,
                })
            }
            SwitchModelKind::Iid => {
                let mean = if ctx.from == ctx.to {
                    self.reacquire_mean_slots()
                } else {
                    self.ring_means.get(ring_distance(ctx.from, ctx.to))
                };
                let v = self.multiplier_var();
                let z: f64 = StandardNormal.sample(rng);
                let m = (v.sqrt() * z - 0.5 * v).exp();
                Ok(SwitchSample { tau_slots: self.clamp(mean * m), attempts: None, slew_s: 0.0, failed: false })
            }
            SwitchModelKind::Dependent => {
                self.step_ar(rng);
                let mean = if ctx.from == ctx.to {
                    self.reacquire_mean_slots()
                } else {
                    self.ring_means.get(ring_distance(ctx.from, ctx.to))
                };
                let m = (self.x_global + self.x_target[ctx.to] - 0.5 * self.multiplier_var()).exp();
                Ok(SwitchSample { tau_slots: self.clamp(mean * m), attempts: None, slew_s: 0.0, failed: false })
            }
        }
    }

    fn step_ar<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let sd = self.ar.innov_std;
        let e: f64 = StandardNormal.sample(rng);
        self.x_global = self.ar.phi_global * self.x_global + sd * e;
        for x in self.x_target.iter_mut() {
            let e: f64 = StandardNormal.sample(rng);
            *x = self.ar.phi_target * *x + sd * e;
        }
    }

    /// Current log-domain levels `(global, per-target)`.
    pub fn ar_levels(&self) -> (f64, &[f64]) {
        (self.x_global, &self.x_target)
    }
}

/// `ceil(scale * (T_slew(180 deg) + K_cap T_acq) / dt)`.
pub fn tau_max(limits: &GimbalLimits, acq: &AcquisitionParams, slot_len: f64, scale: f64) -> u64 {
    let t = slew_time(180.0, limits) + acq.k_cap as f64 * acq.t_acq();
    ((scale * t / slot_len).ceil() as u64).max(1)
}

/// Pointing statistics the acquisition model reads from the channel setup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointingStats {
    pub lat_var: f64,
    pub ang_var: f64,
    pub fov: f64,
}

/// Ring means from the FSO model: mean realized blackout over adjacent,
/// two-apart and opposite pairs, sampled over one loiter period.
pub fn calibrate_ring_means<R: Rng + ?Sized>(
    formation: &Formation,
    model: &SwitchModel,
    pointing: &PointingStats,
    time_points: usize,
    rng: &mut R,
) -> RingMeans {
    let mut fso = SwitchModel { kind: SwitchModelKind::Fso, ..model.clone() };
    let n = formation.n_slaves;
    let period = if formation.loiter_period().is_finite() { formation.loiter_period() } else { 1.0 };
    let mut sum = [0.0f64; 4];
    let mut cnt = [0u64; 4];
    for k in 0..time_points.max(1) {
        let t = period * k as f64 / time_points.max(1) as f64;
        let snap = formation.snapshot(t);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let p = model.acq.success_prob(snap.ranges[j], pointing.lat_var, pointing.ang_var, pointing.fov);
                let ctx = SwitchContext { from: i, to: j, theta_deg: snap.angle(i, j).to_degrees(), p_success: p };
                if let Ok(s) = fso.sample(&ctx, rng) {
                    let r = ring_distance(i, j);
                    sum[r] += s.tau_slots as f64;
                    cnt[r] += 1;
                }
            }
        }
    }
    let mean = |r: usize| if cnt[r] > 0 { sum[r] / cnt[r] as f64 } else { f64::NAN };
    let near = mean(1);
    let mid = if cnt[2] > 0 { mean(2) } else { near };
    let far = if cnt[3] > 0 { mean(3) } else { mid };
    RingMeans { near, mid, far }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const DT: f64 = 0.01041;

    fn model(kind: SwitchModelKind) -> SwitchModel {
        SwitchModel::new(
            kind,
            6,
            GimbalLimits::default(),
            AcquisitionParams::default(),
            DT,
            1.0,
            RingMeans { near: 130.0, mid: 160.0, far: 225.0 },
            ArParams::default(),
        )
    }

    fn ctx(from: usize, to: usize, theta: f64, p: f64) -> SwitchContext {
        SwitchContext { from, to, theta_deg: theta, p_success: p }
    }

    #[test]
    fn slew_time_values() {
        let l = GimbalLimits::default();
        assert_relative_eq!(slew_time(120.0, &l), 1.0 + 0.2 + 0.6, max_relative = 1e-14);
        assert_relative_eq!(slew_time(0.0, &l), 0.8, max_relative = 1e-14);
        assert!(slew_time(10.0, &l) < slew_time(11.0, &l));
    }

    #[test]
    fn acquisition_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(acquisition_rounds(1.0, &mut rng), Ok(1));
        }
        assert_eq!(acquisition_rounds(0.0, &mut rng), Err(SwitchError::Unavailable));
        let n = 100_000;
        let mean = (0..n).map(|_| acquisition_rounds(0.5, &mut rng).unwrap()).sum::<u64>() as f64 / n as f64;
        // Var K = (1-p)/p^2 = 2
        assert!((mean - 2.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn fso_switch_slots() {
        let mut m = model(SwitchModelKind::Fso);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = m.sample(&ctx(0, 2, 120.0, 1.0), &mut rng).unwrap();
        assert_eq!(s.attempts, Some(1));
        assert_eq!(s.tau_slots, (1.804f64 / DT).ceil() as u64);
        assert_eq!(s.tau_slots, 174);
        assert!(!s.failed);
    }

    #[test]
    fn fso_unavailable_propagates() {
        let mut m = model(SwitchModelKind::Fso);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(m.sample(&ctx(0, 1, 60.0, 0.0), &mut rng), Err(SwitchError::Unavailable));
        assert_eq!(m.forecast(&ctx(0, 1, 60.0, 0.0)), None);
    }

    #[test]
    fn fso_cap_marks_failure_and_bounds_tau() {
        let mut m = model(SwitchModelKind::Fso);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tmax = m.tau_max();
        let mut failures = 0;
        for _ in 0..2000 {
            let s = m.sample(&ctx(0, 3, 180.0, 0.02), &mut rng).unwrap();
            assert!(s.tau_slots <= tmax && s.tau_slots >= 1);
            failures += s.failed as u32;
        }
        // Pr[K > 50] = 0.98^50 ~ 0.364
        assert!((600..900).contains(&failures), "{failures}");
        assert_eq!(tmax, ((2.3 + 50.0 * 0.004) / DT).ceil() as u64);
    }

    #[test]
    fn reacquire_skips_slew() {
        let mut m = model(SwitchModelKind::Fso);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = m.sample(&ctx(2, 2, 0.0, 1.0), &mut rng).unwrap();
        assert_eq!(s.tau_slots, 1);
        assert_eq!(s.slew_s, 0.0);
    }

    #[test]
    fn ring_distances() {
        assert_eq!(ring_distance(0, 0), 0);
        assert_eq!(ring_distance(0, 1), 1);
        assert_eq!(ring_distance(0, 5), 1);
        assert_eq!(ring_distance(1, 3), 2);
        assert_eq!(ring_distance(0, 3), 3);
        assert_eq!(ring_distance(2, 5), 3);
    }

    fn lag1(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let c0: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
        let c1: f64 = xs.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        c1 / c0
    }

    #[test]
    fn dependent_log_multiplier_autocorrelation() {
        let mut m = model(SwitchModelKind::Dependent);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut target = Vec::new();
        let mut global = Vec::new();
        for _ in 0..100_000 {
            m.sample(&ctx(0, 1, 60.0, 0.9), &mut rng).unwrap();
            let (g, t) = m.ar_levels();
            global.push(g);
            target.push(t[1]);
        }
        assert!((lag1(&target) - 0.9).abs() < 0.01, "{}", lag1(&target));
        assert!((lag1(&global) - 0.95).abs() < 0.01, "{}", lag1(&global));
    }

    #[test]
    fn stationary_multiplier_mean_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let big = RingMeans { near: 1e6, mid: 1e6, far: 1e6 };
        for kind in [SwitchModelKind::Dependent, SwitchModelKind::Iid] {
            let mut m = SwitchModel { ring_means: big, ..model(kind) };
            m.time_scale = 1e6; // lift tau_max out of the way
            let n = 200_000;
            let mean = (0..n).map(|_| m.sample(&ctx(0, 1, 60.0, 0.9), &mut rng).unwrap().tau_slots as f64).sum::<f64>()
                / n as f64
                / 1e6;
            assert!((mean - 1.0).abs() < 0.02, "{kind}: {mean}");
        }
    }

    #[test]
    fn iid_has_no_memory() {
        let mut m = model(SwitchModelKind::Iid);
        m.ring_means = RingMeans { near: 1e4, mid: 1e4, far: 1e4 };
        m.time_scale = 1e3;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> =
            (0..50_000).map(|_| (m.sample(&ctx(0, 1, 60.0, 0.9), &mut rng).unwrap().tau_slots as f64).ln()).collect();
        assert!(lag1(&xs).abs() < 0.02);
    }

    #[test]
    fn stay_is_never_sampled_but_forecast_is_capped() {
        let m = model(SwitchModelKind::Fso);
        let f = m.forecast(&ctx(0, 3, 180.0, 0.05)).unwrap();
        assert!(f <= m.tau_max() as f64);
        assert_relative_eq!(f, (2.3 + 0.004 / 0.05) / DT, max_relative = 1e-12);
    }

    #[test]
    fn fso_tau_correlated_under_drifting_p() {
        let mut m = model(SwitchModelKind::Fso);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xs: Vec<f64> = (0..20_000)
            .map(|k| {
                let p = 0.05 + 0.9 * (0.5 + 0.5 * (k as f64 / 500.0).sin());
                m.sample(&ctx(0, 1, 60.0, p), &mut rng).unwrap().tau_slots as f64
            })
            .collect();
        assert!(lag1(&xs) > 0.05, "{}", lag1(&xs));
    }

    #[test]
    fn success_prob_bounds() {
        let a = AcquisitionParams::default();
        assert_relative_eq!(a.success_prob(250.0, 0.0, 0.0, 9e-3), 0.9);
        assert_eq!(a.success_prob(250.0, 1e6, 0.0, 9e-3), 0.05);
        let p = a.success_prob(250.0, 0.005, 5.25e-6, 9e-3);
        assert!(p > 0.89 && p <= 0.9);
    }

    #[test]
    fn calibration_orders_rings() {
        let f = Formation::hexagonal(6, 500.0, 250.0, 0.0, 0.1);
        let m = model(SwitchModelKind::Dependent);
        let ps = PointingStats { lat_var: 0.005, ang_var: 5.25e-6, fov: 9e-3 };
        let r = calibrate_ring_means(&f, &m, &ps, 40, &mut ChaCha8Rng::seed_from_u64(9));
        assert!(r.near < r.mid && r.mid < r.far, "{r:?}");
        // 60 deg: 1.3 s slew + mean 1/0.9 attempts of 4 ms
        assert!((r.near - (1.3 + 0.004 / 0.9) / DT).abs() < 1.5, "{r:?}");
    }
}
