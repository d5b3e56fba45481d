//! Slot-level simulation of one server over `N` queues.
//!
//! Slot order: geometry, channel, arrivals, control decision, service, queue
//! update. Service in slot `t` acts on the backlog present at the start of
//! the slot, so a packet arriving in slot `t` leaves no earlier than `t + 1`.

pub mod analysis;
pub mod metrics;

use std::hash::{DefaultHasher, Hasher};

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channel::{capped_rate, combine, sample_hop1, sample_hop2, HopOptics, HopParams, RadioParams};
use crate::config::{ConfigError, ExperimentConfig};
use crate::geometry::{Formation, GeometrySnapshot};
use crate::policy::theory::audit_decision;
use crate::policy::{
    affinity_from_angle, decide, early_halt_check, policy_score, Action, FrameProgress, HaltReason, PolicyConfig,
    PolicyKind, Snapshot,
};
use crate::queueing::{sample_arrivals, service_amount, PacketBatch, QueueError, QueueState};
use crate::rng::{Purpose, StreamFactory};
use crate::switchover::{calibrate_ring_means, PointingStats, RingMeans, SwitchContext, SwitchModel, SwitchModelKind};

pub use metrics::{RunLog, RunSummary, SlotClass, SwitchEvent};

/// Channel lane of the shared ground-to-master hop.
pub const HOP1_LANE: u64 = 1 << 20;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("queue {queue} at slot {slot}: {source}")]
    Queue {
        queue: usize,
        slot: u64,
        #[source]
        source: QueueError,
    },
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    remaining: u32,
    elapsed: u32,
    zero_run: u32,
    rate_sum: f64,
    forecast_rate: f64,
}

impl Frame {
    fn new(len: u32, forecast_rate: f64) -> Self {
        Self { remaining: len, elapsed: 0, zero_run: 0, rate_sum: 0.0, forecast_rate }
    }
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    to: usize,
    failed: bool,
    forecast_rate: f64,
}

/// A run in progress. [`Simulation::run`] drives it to the horizon.
pub struct Simulation {
    horizon: u64,
    warmup: u64,
    slot_len: f64,
    usable: f64,
    packet_bits: u64,
    lambdas: Vec<f64>,
    streams: StreamFactory,
    formation: Formation,
    hop1: HopParams,
    hop2: HopParams,
    optics1: HopOptics,
    optics2: HopOptics,
    rho: f64,
    radio: RadioParams,
    pointing: PointingStats,
    model: SwitchModel,
    switch_rng: ChaCha8Rng,
    kind: PolicyKind,
    pcfg: PolicyConfig,
    audit: bool,
    trace_slave: Option<usize>,

    t: u64,
    queues: Vec<QueueState>,
    position: usize,
    locked: bool,
    blackout: u64,
    pending: Option<Pending>,
    frame: Option<Frame>,
    log: RunLog,
    arrival_hasher: DefaultHasher,
    channel_hasher: DefaultHasher,
}

/// Per-slot inputs the control step reads.
struct SlotView {
    geo: GeometrySnapshot,
    rate: Vec<f64>,
    mu: Vec<u64>,
    p_success: Vec<f64>,
}

impl Simulation {
    pub fn new(cfg: &ExperimentConfig, seed: u64) -> Result<Self, SimError> {
        cfg.validate()?;
        let n = cfg.sim.n_queues;
        let horizon = cfg.sim.horizon;
        let slot_len = cfg.sim.slot_len;
        let streams = StreamFactory::new(seed);
        let formation = cfg.formation();
        let hop1 = cfg.hop1();
        let hop2 = cfg.hop2();
        let pointing = cfg.pointing();
        let mut model = SwitchModel::new(
            cfg.sim.switch_model,
            n,
            cfg.gimbal(),
            cfg.acquisition(),
            slot_len,
            cfg.switching.switch_time_scale,
            RingMeans { near: 1.0, mid: 1.0, far: 1.0 },
            cfg.ar(),
        );
        if model.kind != SwitchModelKind::Fso {
            let mut rng = streams.sequential(Purpose::Calibration);
            model.ring_means =
                calibrate_ring_means(&formation, &model, &pointing, cfg.switching.calibration_points, &mut rng);
        }
        let lambdas = cfg.arrival_rates();
        let pcfg = cfg.policy_config();
        let kind = cfg.sim.policy;
        let tau_max = model.tau_max();
        let trace_slave = usize::try_from(cfg.sim.trace_slave).ok().filter(|&s| s < n);
        let mut log = RunLog {
            n,
            horizon,
            warmup: (cfg.sim.warmup_frac * horizon as f64).floor() as u64,
            slot_len,
            seed,
            label: cfg.label(),
            lambdas: lambdas.clone(),
            tau_max,
            classes: Vec::with_capacity(horizon as usize),
            total_backlog: Vec::with_capacity(horizon as usize),
            queue_backlog: cfg.sim.queue_trace.then(|| vec![Vec::with_capacity(horizon as usize); n]),
            queues: vec![Default::default(); n],
            switches: Vec::new(),
            halts: [0; 4],
            frames: 0,
            decisions: 0,
            unavailable: 0,
            audit: Vec::new(),
            audit_violations: 0,
            mobility: Vec::new(),
            arrival_hash: 0,
            channel_hash: 0,
        };
        // the run starts locked on queue 0
        log.queues[0].visits = 1;
        Ok(Self {
            horizon,
            warmup: log.warmup,
            slot_len,
            usable: (slot_len - pcfg.proc_overhead).max(0.0),
            packet_bits: cfg.queueing.packet_bits,
            queues: lambdas.iter().map(|&l| QueueState::new(l)).collect(),
            lambdas,
            switch_rng: streams.sequential(Purpose::Switching),
            streams,
            optics1: hop1.optics(),
            optics2: hop2.optics(),
            formation,
            hop1,
            hop2,
            rho: cfg.channel.rho,
            radio: cfg.radio(),
            pointing,
            model,
            kind,
            audit: cfg.sim.audit && matches!(kind, PolicyKind::Aci | PolicyKind::AciAge),
            pcfg,
            trace_slave,
            t: 0,
            position: 0,
            locked: true,
            blackout: 0,
            pending: None,
            frame: None,
            log,
            arrival_hasher: DefaultHasher::new(),
            channel_hasher: DefaultHasher::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.queues.len()
    }

    pub fn slot(&self) -> u64 {
        self.t
    }

    pub fn position(&self) -> usize {
        self.position
    }

    pub fn is_locked(&self) -> bool {
        self.locked
    }

    pub fn backlogs(&self) -> Vec<u64> {
        self.queues.iter().map(QueueState::backlog_bits).collect()
    }

    pub fn switch_model(&self) -> &SwitchModel {
        &self.model
    }

    pub fn log(&self) -> &RunLog {
        &self.log
    }

    fn observe(&mut self) -> SlotView {
        let n = self.n();
        let t = self.t;
        let geo = self.formation.snapshot(t as f64 * self.slot_len);
        let d1 = sample_hop1(&self.hop1, &self.optics1, &mut self.streams.stream(Purpose::Channel, HOP1_LANE, t));
        let mut rate = Vec::with_capacity(n);
        let mut p_success = Vec::with_capacity(n);
        for i in 0..n {
            let hop = self.hop2.with_distance(geo.ranges[i]);
            let d2 = sample_hop2(&hop, &self.optics2, &mut self.streams.stream(Purpose::Channel, i as u64, t));
            let r = capped_rate(combine(d1, d2, self.rho, &self.radio).rate, &self.radio);
            self.channel_hasher.write_u64(r.to_bits());
            rate.push(r);
            p_success.push(self.model.acq.success_prob(
                geo.ranges[i],
                self.pointing.lat_var,
                self.pointing.ang_var,
                self.pointing.fov,
            ));
        }
        let mu = rate.iter().map(|&r| (r * self.usable) as u64).collect();
        SlotView { geo, rate, mu, p_success }
    }

    fn context(&self, view: &SlotView, to: usize) -> SwitchContext {
        SwitchContext {
            from: self.position,
            to,
            theta_deg: view.geo.angle(self.position, to).to_degrees(),
            p_success: view.p_success[to],
        }
    }

    fn tau_forecasts(&self, view: &SlotView) -> (Vec<Option<f64>>, Vec<f64>) {
        let n = self.n();
        let mut tau = Vec::with_capacity(n);
        let mut chi = Vec::with_capacity(n);
        for i in 0..n {
            if i == self.position && self.locked {
                tau.push(Some(0.0));
            } else {
                tau.push(self.model.forecast(&self.context(view, i)));
            }
            chi.push(affinity_from_angle(view.geo.angle(self.position, i)));
        }
        (tau, chi)
    }

    /// Starts a switch in the current slot, which becomes the first blackout
    /// slot. Returns false when no switch could be drawn.
    fn start_switch(&mut self, view: &SlotView, to: usize) -> bool {
        let ctx = self.context(view, to);
        match self.model.sample(&ctx, &mut self.switch_rng) {
            Ok(s) => {
                self.log.switches.push(SwitchEvent {
                    slot: self.t,
                    from: self.position,
                    to,
                    theta_deg: ctx.theta_deg,
                    attempts: s.attempts,
                    tau_slots: s.tau_slots,
                    failed: s.failed,
                });
                self.locked = false;
                self.frame = None;
                self.pending = Some(Pending { to, failed: s.failed, forecast_rate: view.rate[to] });
                self.blackout = s.tau_slots.max(1) - 1;
                if self.blackout == 0 {
                    self.complete_switch();
                }
                true
            }
            Err(_) => {
                self.log.unavailable += 1;
                false
            }
        }
    }

    fn complete_switch(&mut self) {
        let p = self.pending.take().expect("switch completes without a pending target");
        self.position = p.to;
        self.locked = !p.failed;
        self.log.queues[p.to].visits += 1;
        if self.locked && self.kind.is_framed() {
            self.frame = Some(Frame::new(self.pcfg.frame_len, p.forecast_rate));
            self.log.frames += 1;
        }
    }

    /// Decision epoch. Returns the queue to serve this slot, if any, and
    /// whether a switch began.
    fn decide_now(&mut self, view: &SlotView, backlog: &[u64], age: &[u64]) -> (Option<usize>, bool) {
        let (tau, chi) = self.tau_forecasts(view);
        let snap = Snapshot {
            current: self.position,
            locked: self.locked,
            backlog,
            hol_age: age,
            rate: &view.rate,
            tau: &tau,
            affinity: &chi,
            slot_len: self.slot_len,
        };
        let d = decide(self.kind, &snap, &self.pcfg);
        self.log.decisions += 1;
        if self.audit {
            let w: Vec<f64> = match self.kind {
                PolicyKind::AciAge => age.iter().map(|&a| a as f64).collect(),
                _ => backlog.iter().map(|&q| q as f64).collect(),
            };
            let rec = audit_decision(&snap, &self.pcfg, &w, &d, self.model.tau_max() as f64);
            if !rec.ok() {
                self.log.audit_violations += 1;
            }
            self.log.audit.push(metrics::AuditRow {
                slot: self.t,
                current: self.position,
                objective: rec.objective,
                scores: d.scores.clone(),
                chosen: rec.chosen,
                zeta: rec.zeta,
                margin: rec.margin,
            });
        }
        let action = match d.action {
            // Max-Weight keeps its slot-by-slot view; an unlocked link with
            // work waiting is reacquired.
            Action::Stay if !self.locked => {
                if d.scores[self.position] > 0.0 {
                    Action::Switch(self.position)
                } else {
                    Action::Idle
                }
            }
            a => a,
        };
        match action {
            Action::Stay => {
                if self.kind.is_framed() {
                    self.frame = Some(Frame::new(self.pcfg.frame_len, view.rate[self.position]));
                    self.log.frames += 1;
                }
                (Some(self.position), false)
            }
            Action::Switch(k) => (None, self.start_switch(view, k)),
            Action::Idle => (None, false),
        }
    }

    /// Early-halt check for an active frame at the start of this slot.
    fn halt_reason(&self, view: &SlotView, frame: &Frame, backlog: &[u64], age: &[u64]) -> Option<HaltReason> {
        let pos = self.position;
        let (tau, chi) = self.tau_forecasts(view);
        let snap = Snapshot {
            current: pos,
            locked: self.locked,
            backlog,
            hol_age: age,
            rate: &view.rate,
            tau: &tau,
            affinity: &chi,
            slot_len: self.slot_len,
        };
        let best_other = (0..self.n())
            .filter(|&i| i != pos)
            .map(|i| policy_score(self.kind, &snap, &self.pcfg, i))
            .fold(0.0, f64::max);
        // the stay score keeps the rate the frame was committed on
        let mut committed = view.rate.clone();
        committed[pos] = frame.forecast_rate;
        let stay = Snapshot { rate: &committed, ..snap };
        let progress = FrameProgress {
            backlog: backlog[pos],
            slots_elapsed: frame.elapsed,
            consecutive_zero_rate: frame.zero_run,
            realized_rate_sum: frame.rate_sum,
            forecast_rate: frame.forecast_rate,
            current_score: policy_score(self.kind, &stay, &self.pcfg, pos),
            best_other_score: best_other,
        };
        early_halt_check(&progress, &self.pcfg.halt)
    }

    /// Advances one slot.
    pub fn step(&mut self) -> Result<(), SimError> {
        let t = self.t;
        let n = self.n();
        let view = self.observe();
        let arrivals: Vec<PacketBatch> = (0..n)
            .map(|i| {
                let mut rng = self.streams.stream(Purpose::Arrivals, i as u64, t);
                let b = sample_arrivals(self.lambdas[i], self.slot_len, self.packet_bits, t, &mut rng);
                self.arrival_hasher.write_u64(b.count);
                b
            })
            .collect();
        let backlog = self.backlogs();
        let age: Vec<u64> = self.queues.iter().map(|q| q.hol_age(t)).collect();

        let mut serve: Option<usize> = None;
        let mut switching = false;
        if self.blackout > 0 {
            switching = true;
            self.blackout -= 1;
            if self.blackout == 0 {
                self.complete_switch();
            }
        } else {
            let mut must_decide = true;
            if let Some(frame) = self.frame {
                match self.halt_reason(&view, &frame, &backlog, &age) {
                    None => {
                        serve = Some(self.position);
                        must_decide = false;
                    }
                    Some(r) => {
                        self.log.halts[r.index()] += 1;
                        self.frame = None;
                    }
                }
            }
            if must_decide {
                let (s, began) = self.decide_now(&view, &backlog, &age);
                serve = s;
                switching = began;
            }
        }

        let mut departed = vec![0u64; n];
        if let Some(q) = serve {
            departed[q] = service_amount(backlog[q], view.mu[q], self.locked);
            if let Some(f) = self.frame.as_mut() {
                f.elapsed += 1;
                f.rate_sum += view.rate[q];
                f.zero_run = if view.rate[q] == 0.0 { f.zero_run + 1 } else { 0 };
                f.remaining -= 1;
                if f.remaining == 0 {
                    self.frame = None;
                }
            }
        }
        let class = if switching {
            SlotClass::Switching
        } else if departed.iter().any(|&d| d > 0) {
            SlotClass::Serving
        } else {
            SlotClass::Idle
        };

        let warm = self.warmup;
        let mut total = 0u64;
        for i in 0..n {
            let ql = &mut self.log.queues[i];
            ql.capacity_bits += view.mu[i] as u128;
            let delays = &mut ql.delays;
            self.queues[i]
                .advance_slot(departed[i], arrivals[i], t, |d| {
                    if d.arrival_slot >= warm {
                        delays.record(d.delay_slots, d.count);
                    }
                })
                .map_err(|source| SimError::Queue { queue: i, slot: t, source })?;
            if departed[i] > 0 {
                ql.served_slots += 1;
                let gap = ql.last_service.map_or(t, |l| t - l - 1);
                ql.max_service_gap = ql.max_service_gap.max(gap);
                ql.last_service = Some(t);
            }
            let b = self.queues[i].backlog_bits();
            total += b;
            if let Some(tr) = self.log.queue_backlog.as_mut() {
                tr[i].push(b);
            }
        }
        if class != SlotClass::Switching && t >= warm {
            self.log.queues[self.position].dwell_slots += 1;
        }
        if let Some(s) = self.trace_slave {
            self.log.mobility.push(metrics::MobilityRow {
                slot: t,
                slave: s,
                range_m: view.geo.ranges[s],
                theta_to_current_deg: view.geo.angle(self.position, s).to_degrees(),
            });
        }
        self.log.classes.push(class);
        self.log.total_backlog.push(total);
        self.t += 1;
        Ok(())
    }

    /// Runs to the horizon and returns the log.
    pub fn run(mut self) -> Result<RunLog, SimError> {
        while self.t < self.horizon {
            self.step()?;
        }
        Ok(self.finish())
    }

    pub fn finish(mut self) -> RunLog {
        let h = self.t;
        for (ql, q) in self.log.queues.iter_mut().zip(&self.queues) {
            ql.arrived_bits = q.arrived_total();
            ql.departed_bits = q.departed_total();
            ql.final_backlog_bits = q.backlog_bits();
            let tail = ql.last_service.map_or(h, |l| h - 1 - l);
            ql.max_service_gap = ql.max_service_gap.max(tail);
        }
        self.log.arrival_hash = self.arrival_hasher.finish();
        self.log.channel_hash = self.channel_hasher.finish();
        self.log
    }
}

/// One full run of `cfg` under `seed`.
pub fn run(cfg: &ExperimentConfig, seed: u64) -> Result<RunLog, SimError> {
    Simulation::new(cfg, seed)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::analysis::StabilityVerdict;

    fn small(over: &[&str]) -> ExperimentConfig {
        let mut o = vec!["horizon=4000"];
        o.extend_from_slice(over);
        ExperimentConfig::default().with_overrides(&o).unwrap()
    }

    #[test]
    fn zero_arrivals_all_idle() {
        for p in ["aci", "mw", "aci-a", "aci-pa"] {
            let log = run(&small(&["total_arrival_rate=0", &format!("policy={p}")]), 3).unwrap();
            assert!(log.classes.iter().all(|&c| c == SlotClass::Idle), "{p}");
            assert_eq!(log.pooled_delays().total(), 0);
            assert!(log.switches.is_empty());
            assert_eq!(log.budget().idle, 1.0);
            assert_eq!(log.summary().stability.unwrap().verdict, StabilityVerdict::Stable);
        }
    }

    #[test]
    fn single_queue_never_switches() {
        for p in ["aci", "mw"] {
            let log = run(&small(&["n_queues=1", &format!("policy={p}")]), 5).unwrap();
            assert!(log.switches.is_empty());
            assert_eq!(log.phi_sw(), 0.0);
            assert!(log.budget().serving > 0.9);
        }
    }

    #[test]
    fn frames_commit_three_slots() {
        // one queue, halting off: slot 0 idles on an empty queue, then a
        // decision every L slots
        for (h, l) in [(3000u64, 3u32), (3001, 3), (3002, 3), (300, 1), (1000, 7)] {
            let cfg = small(&["n_queues=1", "early_halt=false", &format!("horizon={h}"), &format!("frame_len={l}")]);
            let log = run(&cfg, 1).unwrap();
            let frames = (h - 1).div_ceil(l as u64);
            assert_eq!(log.frames, frames, "{h} {l}");
            assert_eq!(log.decisions, frames + 1, "{h} {l}");
            assert_eq!(log.classes[0], SlotClass::Idle);
        }
    }

    #[test]
    fn first_delay_is_at_least_one_slot() {
        let cfg = small(&["n_queues=1", "warmup_frac=0"]);
        let log = run(&cfg, 2).unwrap();
        let h = log.pooled_delays();
        assert!(h.bins().next().unwrap().0 >= 1);
        assert_eq!(h.quantile(0.0).unwrap(), 1.0);
    }

    #[test]
    fn little_delay_tracks_served_delay() {
        // nothing left waiting: the two measures agree
        let log = run(&small(&["n_queues=1"]), 2).unwrap();
        let served = log.pooled_delays().mean().unwrap();
        assert!((log.little_delay().unwrap() - served).abs() < 0.05 * served, "{served}");
        // MW stalls: waiting packets dominate
        let log = run(&small(&["policy=mw"]), 2).unwrap();
        assert!(log.little_delay().unwrap() > 100.0);
    }

    #[test]
    fn blackout_slots_match_realized_tau() {
        for (p, m) in [("aci", "fso"), ("mw", "fso"), ("aci", "dependent"), ("aci-pa", "iid")] {
            let cfg = small(&[&format!("policy={p}"), &format!("switch_model={m}"), "total_arrival_rate=2e9"]);
            let log = run(&cfg, 7).unwrap();
            assert!(!log.switches.is_empty(), "{p}/{m}");
            let want: u64 = log.switches.iter().map(|s| s.tau_slots.min(log.horizon - s.slot)).sum();
            let got = log.classes.iter().filter(|&&c| c == SlotClass::Switching).count() as u64;
            assert_eq!(got, want, "{p}/{m}");
            assert!(log.switches.iter().all(|s| s.tau_slots >= 1 && s.tau_slots <= log.tau_max));
        }
    }

    #[test]
    fn conservation_and_partition() {
        for p in ["aci", "mw", "aci-a", "aci-pa"] {
            let log = run(&small(&[&format!("policy={p}"), "total_arrival_rate=1e9"]), 11).unwrap();
            assert_eq!(log.classes.len() as u64, log.horizon);
            for q in &log.queues {
                assert_eq!(q.arrived_bits, q.departed_bits + q.final_backlog_bits);
            }
            let b = log.budget();
            assert!((b.serving + b.switching + b.idle - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn common_random_numbers_across_policies() {
        let a = run(&small(&["policy=aci"]), 4).unwrap();
        let b = run(&small(&["policy=mw", "switch_model=dependent"]), 4).unwrap();
        assert_eq!(a.arrival_hash, b.arrival_hash);
        assert_eq!(a.channel_hash, b.channel_hash);
        let c = run(&small(&["policy=aci"]), 5).unwrap();
        assert_ne!(a.arrival_hash, c.arrival_hash);
        for (qa, qb) in a.queues.iter().zip(&b.queues) {
            assert_eq!(qa.arrived_bits, qb.arrived_bits);
            assert_eq!(qa.capacity_bits, qb.capacity_bits);
        }
    }

    #[test]
    fn same_seed_same_summary() {
        let cfg = small(&["audit=true"]);
        let a = serde_json::to_string(&run(&cfg, 9).unwrap().summary()).unwrap();
        let b = serde_json::to_string(&run(&cfg, 9).unwrap().summary()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn audit_holds_for_aci_variants() {
        for p in ["aci", "aci-a"] {
            let log = run(&small(&[&format!("policy={p}"), "audit=true"]), 2).unwrap();
            assert_eq!(log.audit.len() as u64, log.decisions);
            assert_eq!(log.audit_violations, 0);
        }
        let log = run(&small(&["policy=mw", "audit=true"]), 2).unwrap();
        assert!(log.audit.is_empty());
    }

    #[test]
    fn mobility_trace_rows() {
        let log = run(&small(&["trace_slave=2", "horizon=100"]), 1).unwrap();
        assert_eq!(log.mobility.len(), 100);
        assert!(log.mobility.iter().all(|r| r.slave == 2 && (100.0..=400.0).contains(&r.range_m)));
        assert!(log.mobility.iter().all(|r| (0.0..=180.0).contains(&r.theta_to_current_deg)));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = small(&[]);
        cfg.policy.beta = -1.0;
        assert!(matches!(Simulation::new(&cfg, 1), Err(SimError::Config(_))));
    }

    #[test]
    fn max_weight_collapses_under_switch_costs() {
        let log = run(&small(&["policy=mw", "horizon=20000"]), 1).unwrap();
        assert!(log.budget().serving < 0.05, "{:?}", log.budget());
        assert!(log.budget().switching > 0.9);
    }
}
