//! Scheduling policies.
//!
//! All policies are pure functions of a [`Snapshot`]. Frame commitment and
//! blackout bookkeeping belong to the engine.

pub mod theory;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "mw")]
    MaxWeight,
    #[serde(rename = "aci")]
    Aci,
    #[serde(rename = "aci-a")]
    AciAge,
    #[serde(rename = "aci-pa")]
    AciPureAge,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::MaxWeight => "mw",
            Self::Aci => "aci",
            Self::AciAge => "aci-a",
            Self::AciPureAge => "aci-pa",
        }
    }

    /// Framed policies commit `L` slots per decision and support early halt.
    pub fn is_framed(self) -> bool {
        !matches!(self, Self::MaxWeight)
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mw" | "max-weight" => Ok(Self::MaxWeight),
            "aci" => Ok(Self::Aci),
            "aci-a" => Ok(Self::AciAge),
            "aci-pa" => Ok(Self::AciPureAge),
            _ => Err(format!("unknown policy '{s}' (expected mw, aci, aci-a or aci-pa)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HaltConfig {
    pub enabled: bool,
    pub outage_slots: u32,
    pub shortfall_factor: f64,
    pub dominance_margin: f64,
}

impl Default for HaltConfig {
    fn default() -> Self {
        Self { enabled: true, outage_slots: 2, shortfall_factor: 0.5, dominance_margin: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub beta: f64,
    pub gamma: f64,
    /// Committed dwell `L` in slots.
    pub frame_len: u32,
    /// Per-slot processing overhead `t_p` in seconds.
    pub proc_overhead: f64,
    pub halt: HaltConfig,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { beta: 1.0, gamma: 1.0, frame_len: 3, proc_overhead: 0.41e-3, halt: HaltConfig::default() }
    }
}

/// System state visible to a policy at a decision epoch.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot<'a> {
    /// Queue the gimbal points at.
    pub current: usize,
    /// Whether the link to `current` is established.
    pub locked: bool,
    pub backlog: &'a [u64],
    pub hol_age: &'a [u64],
    /// Capped instantaneous rate per queue in bits/s.
    pub rate: &'a [f64],
    /// Forecast switch time from `current` to each queue in slots; `None`
    /// marks an unreachable target. Ignored for `current` while locked.
    pub tau: &'a [Option<f64>],
    /// Transition affinity from `current` to each queue, in `[0, 1]`.
    pub affinity: &'a [f64],
    pub slot_len: f64,
}

impl Snapshot<'_> {
    pub fn n(&self) -> usize {
        self.backlog.len()
    }

    /// `(tau, chi)` for moving to `i`; staying on a locked link costs nothing
    /// and has full affinity.
    pub fn transition(&self, i: usize) -> Option<(f64, f64)> {
        if i == self.current && self.locked {
            Some((0.0, 1.0))
        } else if i == self.current {
            self.tau[i].map(|t| (t, 1.0))
        } else {
            self.tau[i].map(|t| (t, self.affinity[i]))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Action {
    Stay,
    /// Retarget to a queue. Equals `current` only when re-acquiring an
    /// unlocked link.
    Switch(usize),
    /// Nothing worth serving; re-decide next slot.
    Idle,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decision {
    pub action: Action,
    pub scores: Vec<f64>,
}

impl Decision {
    /// Queue served after this decision takes effect.
    pub fn target(&self, current: usize) -> usize {
        match self.action {
            Action::Switch(t) => t,
            _ => current,
        }
    }
}

/// Lowest index among the maxima of `scores`; `None` if all are zero or
/// non-finite.
fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s > 0.0 && s.is_finite() && best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

fn action_for(best: Option<usize>, snap: &Snapshot) -> Action {
    match best {
        None => Action::Idle,
        Some(i) if i == snap.current && snap.locked => Action::Stay,
        Some(i) => Action::Switch(i),
    }
}

/// Max-Weight: argmax `Q_i mu_i dt` with `mu_slot` in bits per slot.
/// All-zero weights keep the current queue.
pub fn mw_select(backlog: &[u64], mu_slot: &[u64], slot_len: f64, current: usize) -> Decision {
    let scores: Vec<f64> = backlog.iter().zip(mu_slot).map(|(&q, &m)| q as f64 * m as f64 * slot_len).collect();
    let action = match argmax(&scores) {
        Some(i) if i != current => Action::Switch(i),
        _ => Action::Stay,
    };
    Decision { action, scores }
}

/// Forecast frame bits `L R (dt - t_p)^+`.
pub fn estimated_frame_bits(rate: f64, frame_len: u32, slot_len: f64, proc_overhead: f64) -> f64 {
    frame_len as f64 * rate * (slot_len - proc_overhead).max(0.0)
}

/// Forecast bits over switch plus dwell time, `B / (tau dt + L dt)`.
pub fn amortized_goodput(bits: f64, tau: f64, frame_len: u32, slot_len: f64) -> f64 {
    bits / ((tau + frame_len as f64) * slot_len)
}

/// `(1 + gamma chi) / (1 + beta tau)`.
pub fn switching_modulator(tau: f64, chi: f64, beta: f64, gamma: f64) -> f64 {
    (1.0 + gamma * chi) / (1.0 + beta * tau)
}

/// Transition affinity from angular separation: 1 at 0 deg, 0 at 180 deg.
pub fn affinity_from_angle(theta_rad: f64) -> f64 {
    (1.0 - theta_rad / std::f64::consts::PI).clamp(0.0, 1.0)
}

/// Which per-queue weight multiplies the amortized goodput.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    Backlog,
    Age,
}

/// `mu_bar_{i|j}` for queue `i`; zero for unreachable targets.
pub fn candidate_goodput(snap: &Snapshot, cfg: &PolicyConfig, i: usize) -> Option<f64> {
    let (tau, _) = snap.transition(i)?;
    let bits = estimated_frame_bits(snap.rate[i], cfg.frame_len, snap.slot_len, cfg.proc_overhead);
    Some(amortized_goodput(bits, tau, cfg.frame_len, snap.slot_len))
}

pub fn candidate_modulator(snap: &Snapshot, cfg: &PolicyConfig, i: usize) -> Option<f64> {
    let (tau, chi) = snap.transition(i)?;
    Some(switching_modulator(tau, chi, cfg.beta, cfg.gamma))
}

fn weight_of(snap: &Snapshot, w: Weight, i: usize) -> f64 {
    match w {
        Weight::Backlog => snap.backlog[i] as f64,
        Weight::Age => snap.hol_age[i] as f64,
    }
}

/// Score of one candidate: `w_i mu_bar_{i|j} f_ij`.
pub fn score(snap: &Snapshot, cfg: &PolicyConfig, w: Weight, i: usize) -> f64 {
    match (candidate_goodput(snap, cfg, i), candidate_modulator(snap, cfg, i)) {
        (Some(g), Some(f)) => weight_of(snap, w, i) * g * f,
        _ => 0.0,
    }
}

pub fn scores(snap: &Snapshot, cfg: &PolicyConfig, w: Weight) -> Vec<f64> {
    (0..snap.n()).map(|i| score(snap, cfg, w, i)).collect()
}

fn select(snap: &Snapshot, cfg: &PolicyConfig, w: Weight) -> Decision {
    let scores = scores(snap, cfg, w);
    Decision { action: action_for(argmax(&scores), snap), scores }
}

/// Backlog-weighted ACI.
pub fn aci_select(snap: &Snapshot, cfg: &PolicyConfig) -> Decision {
    select(snap, cfg, Weight::Backlog)
}

/// Age-weighted ACI.
pub fn aci_a_select(snap: &Snapshot, cfg: &PolicyConfig) -> Decision {
    select(snap, cfg, Weight::Age)
}

/// Oldest head-of-line packet wins, regardless of rate or switch cost.
pub fn aci_pa_select(snap: &Snapshot) -> Decision {
    let scores: Vec<f64> =
        (0..snap.n()).map(|i| if snap.transition(i).is_some() { snap.hol_age[i] as f64 } else { 0.0 }).collect();
    Decision { action: action_for(argmax(&scores), snap), scores }
}

pub fn decide(kind: PolicyKind, snap: &Snapshot, cfg: &PolicyConfig) -> Decision {
    match kind {
        PolicyKind::Aci => aci_select(snap, cfg),
        PolicyKind::AciAge => aci_a_select(snap, cfg),
        PolicyKind::AciPureAge => aci_pa_select(snap),
        PolicyKind::MaxWeight => {
            let mu: Vec<u64> =
                snap.rate.iter().map(|&r| (r * (snap.slot_len - cfg.proc_overhead).max(0.0)) as u64).collect();
            mw_select(snap.backlog, &mu, snap.slot_len, snap.current)
        }
    }
}

/// Score of `i` under `kind`, used for the dominance halt test.
pub fn policy_score(kind: PolicyKind, snap: &Snapshot, cfg: &PolicyConfig, i: usize) -> f64 {
    match kind {
        PolicyKind::Aci => score(snap, cfg, Weight::Backlog, i),
        PolicyKind::AciAge => score(snap, cfg, Weight::Age, i),
        PolicyKind::AciPureAge => {
            if snap.transition(i).is_some() {
                snap.hol_age[i] as f64
            } else {
                0.0
            }
        }
        PolicyKind::MaxWeight => snap.backlog[i] as f64 * snap.rate[i],
    }
}

/// Progress through the current committed frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameProgress {
    /// Backlog of the served queue at this slot.
    pub backlog: u64,
    /// Frame slots already elapsed.
    pub slots_elapsed: u32,
    pub consecutive_zero_rate: u32,
    /// Sum of realized rates over elapsed frame slots, bits/s.
    pub realized_rate_sum: f64,
    /// Rate forecast used when the frame was committed.
    pub forecast_rate: f64,
    /// Stay score under the commit-time forecast.
    pub current_score: f64,
    /// Best score among the other queues now.
    pub best_other_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HaltReason {
    Drained,
    Outage,
    Shortfall,
    Dominated,
}

impl HaltReason {
    pub const ALL: [HaltReason; 4] = [Self::Drained, Self::Outage, Self::Shortfall, Self::Dominated];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Drained => "drained",
            Self::Outage => "outage",
            Self::Shortfall => "shortfall",
            Self::Dominated => "dominated",
        }
    }
}

/// First early-halt condition that holds, if any.
pub fn early_halt_check(p: &FrameProgress, cfg: &HaltConfig) -> Option<HaltReason> {
    if p.backlog == 0 {
        return Some(HaltReason::Drained);
    }
    if !cfg.enabled {
        return None;
    }
    if p.consecutive_zero_rate >= cfg.outage_slots {
        return Some(HaltReason::Outage);
    }
    if p.slots_elapsed >= 2 && p.realized_rate_sum / (p.slots_elapsed as f64) < cfg.shortfall_factor * p.forecast_rate {
        return Some(HaltReason::Shortfall);
    }
    if p.best_other_score > cfg.dominance_margin * p.current_score {
        return Some(HaltReason::Dominated);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg() -> PolicyConfig {
        PolicyConfig { proc_overhead: 0.0, ..PolicyConfig::default() }
    }

    struct Owned {
        backlog: Vec<u64>,
        age: Vec<u64>,
        rate: Vec<f64>,
        tau: Vec<Option<f64>>,
        chi: Vec<f64>,
    }

    impl Owned {
        fn uniform(backlog: Vec<u64>, tau: f64) -> Self {
            let n = backlog.len();
            Self { age: backlog.clone(), backlog, rate: vec![1e9; n], tau: vec![Some(tau); n], chi: vec![0.5; n] }
        }

        fn snap(&self, current: usize) -> Snapshot<'_> {
            Snapshot {
                current,
                locked: true,
                backlog: &self.backlog,
                hol_age: &self.age,
                rate: &self.rate,
                tau: &self.tau,
                affinity: &self.chi,
                slot_len: 0.01,
            }
        }
    }

    #[test]
    fn mw_examples() {
        assert_eq!(mw_select(&[10, 5], &[1, 3], 0.01, 0).action, Action::Switch(1));
        assert_eq!(mw_select(&[0; 6], &[5; 6], 0.01, 2).action, Action::Stay);
        assert_eq!(mw_select(&[7, 7], &[2, 2], 0.01, 1).action, Action::Switch(0));
        assert_eq!(mw_select(&[7, 7], &[2, 2], 0.01, 0).action, Action::Stay);
    }

    #[test]
    fn frame_bits_and_goodput() {
        assert_eq!(estimated_frame_bits(0.0, 3, 0.01, 0.0), 0.0);
        assert_eq!(estimated_frame_bits(1e9, 3, 0.01, 0.01), 0.0);
        assert_eq!(estimated_frame_bits(1e9, 3, 0.01, 0.02), 0.0);
        assert_relative_eq!(estimated_frame_bits(1e9, 3, 0.01, 0.0), 3e7, max_relative = 1e-12);
        assert_relative_eq!(amortized_goodput(3e7, 2.0, 3, 0.01), 6e8, max_relative = 1e-12);
        let b = estimated_frame_bits(1e9, 3, 0.01, 0.002);
        assert_relative_eq!(amortized_goodput(b, 0.0, 3, 0.01), 1e9 * 0.008 / 0.01, max_relative = 1e-12);
        assert!(amortized_goodput(3e7, 1e15, 3, 0.01) < 1e-2);
    }

    #[test]
    fn modulator_examples() {
        assert_eq!(switching_modulator(0.0, 0.0, 1.0, 1.0), 1.0);
        assert_eq!(switching_modulator(1.0, 1.0, 1.0, 1.0), 1.0);
        assert_eq!(switching_modulator(3.0, 0.0, 1.0, 0.0), 0.25);
    }

    #[test]
    fn affinity_map() {
        assert_eq!(affinity_from_angle(0.0), 1.0);
        assert_relative_eq!(affinity_from_angle(std::f64::consts::FRAC_PI_3), 2.0 / 3.0, max_relative = 1e-12);
        assert_eq!(affinity_from_angle(std::f64::consts::PI), 0.0);
    }

    #[test]
    fn single_queue_always_served() {
        let o = Owned::uniform(vec![5], 10.0);
        assert_eq!(aci_select(&o.snap(0), &cfg()).action, Action::Stay);
    }

    #[test]
    fn identical_queues_stay() {
        let o = Owned::uniform(vec![100, 100], 1.0);
        assert_eq!(aci_select(&o.snap(0), &cfg()).action, Action::Stay);
        assert_eq!(aci_select(&o.snap(1), &cfg()).action, Action::Stay);
    }

    #[test]
    fn threshold_crossing_switches() {
        let c = cfg();
        let mut o = Owned::uniform(vec![100, 0], 4.0);
        let snap = o.snap(0);
        let f_ii = candidate_modulator(&snap, &c, 0).unwrap();
        let f_ij = candidate_modulator(&snap, &c, 1).unwrap();
        let th = theory::starvation_threshold(100.0, 1e9, 1e9, f_ii, f_ij, 4.0, 3, 0.01);
        o.backlog[1] = th.floor() as u64;
        assert_eq!(aci_select(&o.snap(0), &c).action, Action::Stay);
        o.backlog[1] = th.floor() as u64 + 2;
        assert_eq!(aci_select(&o.snap(0), &c).action, Action::Switch(1));
    }

    #[test]
    fn unavailable_targets_excluded() {
        let mut o = Owned::uniform(vec![1, 1_000_000], 1.0);
        o.tau[1] = None;
        assert_eq!(aci_select(&o.snap(0), &cfg()).action, Action::Stay);
        o.backlog[0] = 0;
        assert_eq!(aci_select(&o.snap(0), &cfg()).action, Action::Idle);
    }

    #[test]
    fn unlocked_current_needs_reacquire() {
        let o = Owned::uniform(vec![10, 0], 2.0);
        let mut s = o.snap(0);
        s.locked = false;
        assert_eq!(aci_select(&s, &cfg()).action, Action::Switch(0));
    }

    #[test]
    fn age_variants() {
        let mut o = Owned::uniform(vec![0, 0], 1.0);
        o.age = vec![0, 0];
        assert_eq!(aci_a_select(&o.snap(0), &cfg()).action, Action::Idle);
        assert_eq!(aci_pa_select(&o.snap(0)).action, Action::Idle);

        o.backlog = vec![1, 1];
        o.age = vec![100, 10];
        assert_eq!(
            aci_a_select(&o.snap(1), &PolicyConfig { beta: 0.0, gamma: 0.0, ..cfg() }).action,
            Action::Switch(0)
        );

        // equal ages reduce to the goodput argmax
        o.age = vec![50, 50];
        o.rate = vec![1e8, 9e8];
        o.tau = vec![Some(0.5), Some(0.5)];
        let c = PolicyConfig { beta: 0.0, gamma: 0.0, ..cfg() };
        assert_eq!(aci_a_select(&o.snap(0), &c).action, Action::Switch(1));

        let o = Owned { age: vec![5, 9, 1], ..Owned::uniform(vec![1, 1, 1], 1.0) };
        assert_eq!(aci_pa_select(&o.snap(0)).action, Action::Switch(1));
        let o = Owned { age: vec![9, 9, 1], ..Owned::uniform(vec![1, 1, 1], 1.0) };
        assert_eq!(aci_pa_select(&o.snap(2)).action, Action::Switch(0));
        let o = Owned { age: vec![3, 90], rate: vec![1e9, 0.0], ..Owned::uniform(vec![1, 1], 1.0) };
        assert_eq!(aci_pa_select(&o.snap(0)).action, Action::Switch(1));
    }

    #[test]
    fn halt_examples() {
        let h = HaltConfig::default();
        let base = FrameProgress {
            backlog: 1000,
            slots_elapsed: 1,
            forecast_rate: 1e9,
            realized_rate_sum: 1e9,
            current_score: 1.0,
            best_other_score: 0.5,
            ..Default::default()
        };
        assert_eq!(early_halt_check(&base, &h), None);
        assert_eq!(early_halt_check(&FrameProgress { backlog: 0, ..base }, &h), Some(HaltReason::Drained));
        let outage = FrameProgress { slots_elapsed: 2, consecutive_zero_rate: 2, realized_rate_sum: 0.0, ..base };
        assert_eq!(early_halt_check(&outage, &h), Some(HaltReason::Outage));
        let short = FrameProgress { slots_elapsed: 2, realized_rate_sum: 8e8, ..base };
        assert_eq!(early_halt_check(&short, &h), Some(HaltReason::Shortfall));
        let one = FrameProgress { slots_elapsed: 1, realized_rate_sum: 4e8, ..base };
        assert_eq!(early_halt_check(&one, &h), None);
        let dom = FrameProgress { best_other_score: 2.5, ..base };
        assert_eq!(early_halt_check(&dom, &h), Some(HaltReason::Dominated));
    }

    #[test]
    fn parse_kinds() {
        for k in [PolicyKind::MaxWeight, PolicyKind::Aci, PolicyKind::AciAge, PolicyKind::AciPureAge] {
            assert_eq!(k.name().parse::<PolicyKind>().unwrap(), k);
        }
        assert!("acii".parse::<PolicyKind>().is_err());
    }

    proptest! {
        #[test]
        fn backlog_scaling_invariance(
            q in prop::collection::vec(0u64..1_000_000, 2..7),
            c in 1u64..50,
            cur in 0usize..6,
            seed_tau in prop::collection::vec(0.5f64..200.0, 6),
        ) {
            let n = q.len();
            let cur = cur % n;
            let mut o = Owned::uniform(q.clone(), 1.0);
            o.tau = seed_tau[..n].iter().map(|&t| Some(t)).collect();
            o.rate = (0..n).map(|i| 1e8 * (1 + i) as f64).collect();
            let a = aci_select(&o.snap(cur), &cfg()).action;
            let mu: Vec<u64> = o.rate.iter().map(|r| (r * 0.01) as u64).collect();
            let m = mw_select(&q, &mu, 0.01, cur).action;
            o.backlog = q.iter().map(|x| x * c).collect();
            prop_assert_eq!(aci_select(&o.snap(cur), &cfg()).action, a);
            prop_assert_eq!(mw_select(&o.backlog, &mu, 0.01, cur).action, m);
        }

        #[test]
        fn scores_finite_nonnegative(
            q in prop::collection::vec(0u64..u32::MAX as u64, 1..7),
            t in 0.0f64..500.0,
            beta in 0.0f64..5.0,
            gamma in 0.0f64..5.0,
        ) {
            let o = Owned::uniform(q, t);
            let c = PolicyConfig { beta, gamma, ..cfg() };
            let d = aci_select(&o.snap(0), &c);
            prop_assert!(d.scores.iter().all(|s| s.is_finite() && *s >= 0.0));
            if let Action::Switch(j) = d.action { prop_assert_ne!(j, 0); }
        }

        #[test]
        fn modulator_bounded(tau in 0.0f64..240.0, chi in 0.0f64..=1.0, beta in 0.0f64..3.0, gamma in 0.0f64..3.0) {
            let f = switching_modulator(tau, chi, beta, gamma);
            prop_assert!(f <= 1.0 + gamma + 1e-12);
            prop_assert!(f >= 1.0 / (1.0 + beta * 240.0) - 1e-12);
        }
    }
}
