//! Post-processing of a run: time budget, switching overhead, feasibility,
//! delay quantiles and the stability probe.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::metrics::SlotClass;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeBudget {
    pub serving: f64,
    pub switching: f64,
    pub idle: f64,
}

/// Fractions of slots in each class. An empty log counts as all idle.
pub fn time_budget(classes: &[SlotClass]) -> TimeBudget {
    let mut c = [0u64; 3];
    for k in classes {
        c[*k as usize] += 1;
    }
    time_budget_from_counts(c)
}

pub fn time_budget_from_counts(counts: [u64; 3]) -> TimeBudget {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return TimeBudget { serving: 0.0, switching: 0.0, idle: 1.0 };
    }
    let t = total as f64;
    let serving = counts[SlotClass::Serving as usize] as f64 / t;
    let switching = counts[SlotClass::Switching as usize] as f64 / t;
    // idle takes the remainder so the three sum to exactly one
    TimeBudget { serving, switching, idle: 1.0 - serving - switching }
}

/// `sum p_ij tau_ij / (sum v_k + sum p_ij tau_ij)` with per-cycle transition
/// frequencies `p`, mean switch times `tau_bar` and mean visit lengths `v`.
pub fn phi_sw(visits: &[f64], p: &[Vec<f64>], tau_bar: &[Vec<f64>]) -> f64 {
    let sw: f64 = p.iter().zip(tau_bar).flat_map(|(pr, tr)| pr.iter().zip(tr).map(|(a, b)| a * b)).sum();
    let v: f64 = visits.iter().sum();
    if sw + v == 0.0 {
        0.0
    } else {
        sw / (v + sw)
    }
}

/// Empirical form: switching slots over switching plus dwell slots.
pub fn phi_sw_from_slots(switching_slots: u64, dwell_slots: u64) -> f64 {
    let d = switching_slots + dwell_slots;
    if d == 0 {
        0.0
    } else {
        switching_slots as f64 / d as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub inside: bool,
    /// `sum lambda_i / r_i`.
    pub load: f64,
    /// `1 - phi_sw - load`; positive inside the bound.
    pub margin: f64,
}

/// Inner-bound test `sum lambda_i / r_i < 1 - phi_sw`.
pub fn feasibility_check(lambdas: &[f64], r: &[f64], phi: f64) -> Feasibility {
    let load: f64 = lambdas
        .iter()
        .zip(r)
        .map(|(&l, &ri)| {
            if l == 0.0 {
                0.0
            } else if ri > 0.0 {
                l / ri
            } else {
                f64::INFINITY
            }
        })
        .sum();
    let margin = 1.0 - phi - load;
    Feasibility { inside: margin > 0.0, load, margin }
}

/// Largest factor `s` such that `s * lambdas` sits on the inner bound.
pub fn inner_bound_scale(lambdas: &[f64], r: &[f64], phi: f64) -> f64 {
    let f = feasibility_check(lambdas, r, phi);
    if f.load == 0.0 {
        f64::INFINITY
    } else {
        (1.0 - phi) / f.load
    }
}

/// Counts of packet delays in whole slots.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DelayHistogram {
    counts: Vec<u64>,
    total: u64,
    sum: u128,
}

impl DelayHistogram {
    pub fn record(&mut self, delay: u64, count: u64) {
        if count == 0 {
            return;
        }
        let d = delay as usize;
        if d >= self.counts.len() {
            self.counts.resize(d + 1, 0);
        }
        self.counts[d] += count;
        self.total += count;
        self.sum += delay as u128 * count as u128;
    }

    pub fn merge(&mut self, other: &DelayHistogram) {
        if other.counts.len() > self.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        self.sum += other.sum;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn mean(&self) -> Option<f64> {
        (self.total > 0).then(|| self.sum as f64 / self.total as f64)
    }

    /// Non-empty bins as `(delay, count)`.
    pub fn bins(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().enumerate().filter(|(_, c)| **c > 0).map(|(d, c)| (d as u64, *c))
    }

    /// `k`-th smallest sample, 0-based.
    fn at_rank(&self, k: u64) -> u64 {
        let mut seen = 0;
        for (d, &c) in self.counts.iter().enumerate() {
            seen += c;
            if seen > k {
                return d as u64;
            }
        }
        unreachable!("rank {k} beyond {} samples", self.total)
    }

    /// Linear interpolation between order statistics (`h = (n - 1) q`).
    pub fn quantile(&self, q: f64) -> Result<f64, EmptySample> {
        if self.total == 0 {
            return Err(EmptySample);
        }
        let h = (self.total - 1) as f64 * q.clamp(0.0, 1.0);
        let lo = h.floor() as u64;
        let a = self.at_rank(lo) as f64;
        let b = self.at_rank((lo + 1).min(self.total - 1)) as f64;
        Ok(a + (h - lo as f64) * (b - a))
    }

    /// Empirical CDF at each occupied delay.
    pub fn cdf(&self) -> Vec<(u64, f64)> {
        let mut acc = 0u64;
        self.bins()
            .map(|(d, c)| {
                acc += c;
                (d, acc as f64 / self.total as f64)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no delay samples")]
pub struct EmptySample;

/// Requested quantiles of a delay sample.
pub fn delay_cdf(h: &DelayHistogram, quantiles: &[f64]) -> Result<Vec<(f64, f64)>, EmptySample> {
    quantiles.iter().map(|&q| h.quantile(q).map(|v| (q, v))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StabilityVerdict {
    Stable,
    Growing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub verdict: StabilityVerdict,
    pub window: u64,
    pub last_window_max: f64,
    pub middle_window_max: f64,
    /// Slope of batch means over the last half, per batch.
    pub slope: f64,
    pub slope_t: f64,
    pub slope_significant: bool,
}

pub const STABILITY_BATCHES: usize = 10;

/// STABLE when the last window's peak stays within `c` times the middle
/// window's and the 95% confidence interval of the backlog trend over the
/// last half (batch means) reaches down to zero or below.
pub fn stability_probe(trace: &[u64], window: u64, c: f64) -> Result<StabilityReport, String> {
    let h = trace.len() as u64;
    if window == 0 || h < 3 * window {
        return Err(format!("stability probe needs a horizon of at least 3 windows ({h} < 3 x {window})"));
    }
    let max_of = |s: &[u64]| s.iter().copied().max().unwrap_or(0) as f64;
    let last = max_of(&trace[(h - window) as usize..]);
    let mid_start = (h / 2).saturating_sub(window / 2);
    let middle = max_of(&trace[mid_start as usize..(mid_start + window) as usize]);

    let half = &trace[(h / 2) as usize..];
    let b = STABILITY_BATCHES.min(half.len());
    let means: Vec<f64> = (0..b)
        .map(|k| {
            let lo = k * half.len() / b;
            let hi = (k + 1) * half.len() / b;
            half[lo..hi].iter().map(|&x| x as f64).sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let (slope, se) = ols_slope(&means);
    let t_crit = StudentsT::new(0.0, 1.0, (b - 2) as f64).expect("df > 0").inverse_cdf(0.975);
    let (slope_t, significant) = if se > 0.0 {
        let t = slope / se;
        (t, t > t_crit)
    } else {
        (if slope > 0.0 { f64::INFINITY } else { 0.0 }, slope > 0.0)
    };
    let bounded = last <= c * middle;
    Ok(StabilityReport {
        verdict: if bounded && !significant { StabilityVerdict::Stable } else { StabilityVerdict::Growing },
        window,
        last_window_max: last,
        middle_window_max: middle,
        slope,
        slope_t,
        slope_significant: significant,
    })
}

/// Least-squares slope against `0..n` and its standard error.
fn ols_slope(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let xm = (n - 1.0) / 2.0;
    let ym = y.iter().sum::<f64>() / n;
    let sxx: f64 = (0..y.len()).map(|i| (i as f64 - xm).powi(2)).sum();
    let sxy: f64 = y.iter().enumerate().map(|(i, v)| (i as f64 - xm) * (v - ym)).sum();
    let b = sxy / sxx;
    let a = ym - b * xm;
    let sse: f64 = y.iter().enumerate().map(|(i, v)| (v - a - b * i as f64).powi(2)).sum();
    let s2 = sse / (n - 2.0);
    // residuals below float noise mean a perfectly linear trace
    let se = if sse <= 1e-24 * y.iter().map(|v| v * v).sum::<f64>().max(1.0) { 0.0 } else { (s2 / sxx).sqrt() };
    (b, se)
}

/// Sample mean and 95% t-interval halfwidth. One sample gives halfwidth 0.
pub fn t_interval(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("df > 0").inverse_cdf(0.975);
    (mean, t * (var / n as f64).sqrt())
}
