//! What a run records, and the summary written to `metrics.json`.

use serde::{Deserialize, Serialize};

use super::analysis::{
    feasibility_check, phi_sw_from_slots, stability_probe, time_budget_from_counts, DelayHistogram, Feasibility,
    StabilityReport, TimeBudget,
};
use crate::policy::HaltReason;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotClass {
    Serving = 0,
    Switching = 1,
    Idle = 2,
}

impl SlotClass {
    pub fn from_index(i: usize) -> Self {
        match i {
            0 => Self::Serving,
            1 => Self::Switching,
            _ => Self::Idle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchEvent {
    pub slot: u64,
    pub from: usize,
    pub to: usize,
    pub theta_deg: f64,
    /// Acquisition rounds; only the FSO model draws them.
    pub attempts: Option<u64>,
    pub tau_slots: u64,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRow {
    pub slot: u64,
    pub current: usize,
    pub objective: Vec<f64>,
    pub scores: Vec<f64>,
    pub chosen: Option<usize>,
    pub zeta: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MobilityRow {
    pub slot: u64,
    pub slave: usize,
    pub range_m: f64,
    pub theta_to_current_deg: f64,
}

/// Per-queue counters.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct QueueLog {
    pub arrived_bits: u64,
    pub departed_bits: u64,
    pub final_backlog_bits: u64,
    pub served_slots: u64,
    pub visits: u64,
    pub dwell_slots: u64,
    /// Sum over all slots of the per-slot capacity in bits.
    pub capacity_bits: u128,
    pub max_service_gap: u64,
    pub last_service: Option<u64>,
    pub delays: DelayHistogram,
}

/// Raw record of one run.
#[derive(Debug, Clone)]
pub struct RunLog {
    pub n: usize,
    pub horizon: u64,
    pub warmup: u64,
    pub slot_len: f64,
    pub seed: u64,
    pub label: String,
    pub lambdas: Vec<f64>,
    pub tau_max: u64,
    /// Class of every slot, including warm-up.
    pub classes: Vec<SlotClass>,
    pub total_backlog: Vec<u64>,
    pub queue_backlog: Option<Vec<Vec<u64>>>,
    pub queues: Vec<QueueLog>,
    pub switches: Vec<SwitchEvent>,
    pub halts: [u64; 4],
    pub frames: u64,
    pub decisions: u64,
    pub unavailable: u64,
    pub audit: Vec<AuditRow>,
    pub audit_violations: u64,
    pub mobility: Vec<MobilityRow>,
    pub arrival_hash: u64,
    pub channel_hash: u64,
}

impl RunLog {
    /// Class counts from the warm-up slot on.
    pub fn class_counts(&self) -> [u64; 3] {
        let mut c = [0u64; 3];
        for k in &self.classes[self.warmup as usize..] {
            c[*k as usize] += 1;
        }
        c
    }

    pub fn budget(&self) -> TimeBudget {
        time_budget_from_counts(self.class_counts())
    }

    /// Measured switching overhead after warm-up.
    pub fn phi_sw(&self) -> f64 {
        let c = self.class_counts();
        phi_sw_from_slots(c[1], c[0] + c[2])
    }

    /// Mean per-slot capacity of each queue in bits/s.
    pub fn mean_rates(&self) -> Vec<f64> {
        self.queues.iter().map(|q| q.capacity_bits as f64 / (self.horizon as f64 * self.slot_len)).collect()
    }

    pub fn pooled_delays(&self) -> DelayHistogram {
        let mut h = DelayHistogram::default();
        for q in &self.queues {
            h.merge(&q.delays);
        }
        h
    }

    pub fn feasibility(&self) -> Feasibility {
        feasibility_check(&self.lambdas, &self.mean_rates(), self.phi_sw())
    }

    /// Mean delay in slots by Little's law: time-average backlog after
    /// warm-up over the offered bits per slot. Counts packets still waiting
    /// at the horizon, unlike the served-packet delays.
    pub fn little_delay(&self) -> Option<f64> {
        let per_slot: f64 = self.lambdas.iter().sum::<f64>() * self.slot_len;
        let tail = self.total_backlog.get(self.warmup as usize..).filter(|t| !t.is_empty())?;
        (per_slot > 0.0).then(|| tail.iter().map(|&b| b as f64).sum::<f64>() / tail.len() as f64 / per_slot)
    }

    pub fn stability(&self) -> Result<StabilityReport, String> {
        stability_probe(&self.total_backlog, (self.horizon / 10).max(1), 1.5)
    }

    /// Transition counts `from -> to` over every switch.
    pub fn transition_matrix(&self) -> Vec<Vec<u64>> {
        let mut m = vec![vec![0u64; self.n]; self.n];
        for s in &self.switches {
            m[s.from][s.to] += 1;
        }
        m
    }

    pub fn summary(&self) -> RunSummary {
        let pooled = self.pooled_delays();
        let q = |p: f64| pooled.quantile(p).ok();
        let rates = self.mean_rates();
        let c = self.class_counts();
        let taus: Vec<f64> = self.switches.iter().map(|s| s.tau_slots as f64).collect();
        let min_margin = self.audit.iter().map(|a| a.margin).fold(f64::INFINITY, f64::min);
        RunSummary {
            schema_version: SCHEMA_VERSION,
            label: self.label.clone(),
            seed: self.seed,
            horizon: self.horizon,
            warmup: self.warmup,
            tau_max: self.tau_max,
            class_counts: c,
            budget: self.budget(),
            phi_sw: self.phi_sw(),
            delay: DelaySummary {
                samples: pooled.total(),
                mean: pooled.mean(),
                p50: q(0.5),
                p90: q(0.9),
                p99: q(0.99),
                p999: q(0.999),
                little: self.little_delay(),
            },
            stability: self.stability().ok(),
            feasibility: self.feasibility(),
            switches: self.switches.len() as u64,
            failed_switches: self.switches.iter().filter(|s| s.failed).count() as u64,
            mean_tau: (!taus.is_empty()).then(|| taus.iter().sum::<f64>() / taus.len() as f64),
            frames: self.frames,
            decisions: self.decisions,
            unavailable: self.unavailable,
            halts: HaltReason::ALL.iter().map(|h| (h.name().to_string(), self.halts[h.index()])).collect(),
            audit_epochs: self.audit.len() as u64,
            audit_violations: self.audit_violations,
            audit_min_margin: (!self.audit.is_empty()).then_some(min_margin),
            queues: self
                .queues
                .iter()
                .zip(&rates)
                .zip(&self.lambdas)
                .map(|((ql, &r), &l)| QueueSummary {
                    lambda: l,
                    mean_rate: r,
                    alpha: ql.served_slots as f64 / self.horizon as f64,
                    arrived_bits: ql.arrived_bits,
                    departed_bits: ql.departed_bits,
                    final_backlog_bits: ql.final_backlog_bits,
                    visits: ql.visits,
                    mean_visit_slots: (ql.visits > 0).then(|| ql.dwell_slots as f64 / ql.visits as f64),
                    max_service_gap: ql.max_service_gap,
                    delay_samples: ql.delays.total(),
                    mean_delay: ql.delays.mean(),
                    p99_delay: ql.delays.quantile(0.99).ok(),
                })
                .collect(),
            arrival_hash: format!("{:016x}", self.arrival_hash),
            channel_hash: format!("{:016x}", self.channel_hash),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySummary {
    pub samples: u64,
    pub mean: Option<f64>,
    pub p50: Option<f64>,
    pub p90: Option<f64>,
    pub p99: Option<f64>,
    pub p999: Option<f64>,
    /// Little's-law mean delay, see [`RunLog::little_delay`].
    pub little: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueSummary {
    pub lambda: f64,
    /// Mean capacity in bits/s over the whole horizon.
    pub mean_rate: f64,
    /// Fraction of slots with service.
    pub alpha: f64,
    pub arrived_bits: u64,
    pub departed_bits: u64,
    pub final_backlog_bits: u64,
    pub visits: u64,
    pub mean_visit_slots: Option<f64>,
    pub max_service_gap: u64,
    pub delay_samples: u64,
    pub mean_delay: Option<f64>,
    pub p99_delay: Option<f64>,
}

/// Contents of `metrics.json`. Byte-identical for identical config and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub label: String,
    pub seed: u64,
    pub horizon: u64,
    pub warmup: u64,
    pub tau_max: u64,
    /// Serving, switching, idle after warm-up.
    pub class_counts: [u64; 3],
    pub budget: TimeBudget,
    pub phi_sw: f64,
    pub delay: DelaySummary,
    pub stability: Option<StabilityReport>,
    pub feasibility: Feasibility,
    pub switches: u64,
    pub failed_switches: u64,
    pub mean_tau: Option<f64>,
    pub frames: u64,
    pub decisions: u64,
    pub unavailable: u64,
    pub halts: Vec<(String, u64)>,
    pub audit_epochs: u64,
    pub audit_violations: u64,
    pub audit_min_margin: Option<f64>,
    pub queues: Vec<QueueSummary>,
    pub arrival_hash: String,
    pub channel_hash: String,
}
