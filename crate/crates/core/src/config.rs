//! Experiment configuration.
//!
//! TOML with one table per module. Keys may also be written bare at the top
//! level when the name belongs to exactly one section, so `beta = 0.5` and
//! `[policy] beta = 0.5` are equivalent. Unknown keys are rejected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{HopParams, RadioParams};
use crate::geometry::Formation;
use crate::policy::{HaltConfig, PolicyConfig, PolicyKind};
use crate::switchover::{AcquisitionParams, ArParams, GimbalLimits, PointingStats, SwitchModelKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub scenario: String,
    pub n_queues: usize,
    /// Slot length in seconds.
    pub slot_len: f64,
    pub horizon: u64,
    pub warmup_frac: f64,
    pub seed: u64,
    pub replications: u32,
    pub policy: PolicyKind,
    pub switch_model: SwitchModelKind,
    /// Record every decision epoch against the constant-fraction bound.
    pub audit: bool,
    /// Keep a per-queue backlog trace in addition to the total.
    pub queue_trace: bool,
    /// Slave whose range and angle are traced; negative disables.
    pub trace_slave: i64,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            scenario: "default".into(),
            n_queues: 6,
            slot_len: 10.41e-3,
            horizon: 100_000,
            warmup_frac: 0.05,
            seed: 1,
            replications: 10,
            policy: PolicyKind::Aci,
            switch_model: SwitchModelKind::Fso,
            audit: false,
            queue_trace: false,
            trace_slave: -1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QueueingSection {
    /// Aggregate arrival rate in bits/s.
    pub total_arrival_rate: f64,
    pub packet_bits: u64,
    /// Relative split of the aggregate rate; empty means uniform.
    pub arrival_weights: Vec<f64>,
}

impl Default for QueueingSection {
    fn default() -> Self {
        Self { total_arrival_rate: 350e6, packet_bits: 12_000, arrival_weights: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub wavelength: f64,
    /// Relay mirror reflectivity.
    pub rho: f64,
    pub responsivity: f64,
    pub tx_power_dbm: f64,
    pub noise_std: f64,
    pub efficiency: f64,
    pub bandwidth: f64,
    pub snr_gap: f64,
    pub min_snr_db: f64,
    pub throughput_cap: f64,
    pub extinction: f64,
    /// Platform position jitter, m per axis.
    pub sigma_p: f64,
    /// Platform angular jitter, rad per axis.
    pub sigma_theta: f64,
    /// Turbulence-induced angular jitter, rad per axis.
    pub sigma_turb: f64,
    pub fov: f64,
    pub aperture_master: f64,
    pub aperture_slave: f64,
    pub beam_radius_hop1: f64,
    pub beam_radius_hop2: f64,
    pub log_amp_var_hop1: f64,
    pub log_amp_var_hop2: f64,
    /// Ground-level refractive-index structure constant, m^(-2/3).
    pub cn2_ground: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            wavelength: 1.55e-6,
            rho: 0.95,
            responsivity: 0.5,
            tx_power_dbm: 22.0,
            noise_std: 1e-7,
            efficiency: 0.8,
            bandwidth: 1e9,
            snr_gap: 2.0,
            min_snr_db: 20.0,
            throughput_cap: 2.5e9,
            extinction: 1e-4,
            sigma_p: 0.05,
            sigma_theta: 1e-3,
            sigma_turb: 0.5e-3,
            fov: 9e-3,
            aperture_master: 0.05,
            aperture_slave: 0.1,
            beam_radius_hop1: 0.25,
            beam_radius_hop2: 3.0,
            log_amp_var_hop1: 0.01,
            log_amp_var_hop2: 0.005,
            cn2_ground: 1.7e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub ground_to_master: f64,
    pub master_to_slave: f64,
    pub loiter_radius: f64,
    /// rad/s
    pub loiter_rate: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self { ground_to_master: 500.0, master_to_slave: 250.0, loiter_radius: 150.0, loiter_rate: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwitchingSection {
    pub v_max: f64,
    pub a_max: f64,
    pub j_max: f64,
    pub t_fsm: f64,
    pub t_pilot: f64,
    pub p_base: f64,
    pub p_floor: f64,
    pub k_cap: u64,
    /// Multiplies every switch time.
    pub switch_time_scale: f64,
    pub ar_phi_global: f64,
    pub ar_phi_target: f64,
    pub ar_innov_std: f64,
    /// Time points per loiter period in the ring-mean calibration.
    pub calibration_points: usize,
}

impl Default for SwitchingSection {
    fn default() -> Self {
        let g = GimbalLimits::default();
        let a = AcquisitionParams::default();
        let ar = ArParams::default();
        Self {
            v_max: g.v_max,
            a_max: g.a_max,
            j_max: g.j_max,
            t_fsm: a.t_fsm,
            t_pilot: a.t_pilot,
            p_base: a.p_base,
            p_floor: a.p_floor,
            k_cap: a.k_cap,
            switch_time_scale: 1.0,
            ar_phi_global: ar.phi_global,
            ar_phi_target: ar.phi_target,
            ar_innov_std: ar.innov_std,
            calibration_points: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySection {
    pub beta: f64,
    pub gamma: f64,
    pub frame_len: u32,
    pub proc_overhead: f64,
    pub early_halt: bool,
    pub halt_outage_slots: u32,
    pub halt_shortfall_factor: f64,
    pub halt_dominance_margin: f64,
}

impl Default for PolicySection {
    fn default() -> Self {
        let p = PolicyConfig::default();
        Self {
            beta: p.beta,
            gamma: p.gamma,
            frame_len: p.frame_len,
            proc_overhead: p.proc_overhead,
            early_halt: p.halt.enabled,
            halt_outage_slots: p.halt.outage_slots,
            halt_shortfall_factor: p.halt.shortfall_factor,
            halt_dominance_margin: p.halt.dominance_margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub sim: SimSection,
    pub queueing: QueueingSection,
    pub channel: ChannelSection,
    pub geometry: GeometrySection,
    pub switching: SwitchingSection,
    pub policy: PolicySection,
}

const SECTIONS: [&str; 6] = ["sim", "queueing", "channel", "geometry", "switching", "policy"];

fn default_table() -> toml::Table {
    toml::Table::try_from(ExperimentConfig::default()).expect("defaults serialize")
}

/// Section owning a bare key, if exactly one does.
fn section_of(key: &str, defaults: &toml::Table) -> Option<&'static str> {
    let owners: Vec<&'static str> = SECTIONS
        .iter()
        .copied()
        .filter(|s| defaults.get(*s).and_then(|t| t.as_table()).is_some_and(|t| t.contains_key(key)))
        .collect();
    match owners.as_slice() {
        [one] => Some(one),
        _ => None,
    }
}

/// Moves bare top-level keys into their sections.
fn normalize(mut raw: toml::Table) -> Result<toml::Table, ConfigError> {
    let defaults = default_table();
    // `policy` names both a section and the policy selector in [sim]
    let bare: Vec<String> = raw
        .iter()
        .filter(|(k, v)| !SECTIONS.contains(&k.as_str()) || (k.as_str() == "policy" && !v.is_table()))
        .map(|(k, _)| k.clone())
        .collect();
    let moved: Vec<(String, toml::Value)> =
        bare.into_iter().map(|k| (k.clone(), raw.remove(&k).expect("key listed"))).collect();
    for (key, value) in moved {
        let section = if key == "policy" {
            "sim"
        } else {
            section_of(&key, &defaults).ok_or_else(|| ConfigError::UnknownKey(key.clone()))?
        };
        let table = raw
            .entry(section)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| ConfigError::Parse(format!("'{section}' must be a table")))?;
        if table.contains_key(&key) {
            return Err(ConfigError::Parse(format!("key '{key}' given both bare and in [{section}]")));
        }
        table.insert(key, value);
    }
    for s in SECTIONS {
        if raw.get(s).is_some_and(|v| !v.is_table()) {
            return Err(ConfigError::Parse(format!("'{s}' must be a table")));
        }
    }
    Ok(raw)
}

/// Integers written where the field is a float, including float arrays.
fn coerce(default: &toml::Value, given: toml::Value) -> toml::Value {
    match (default, given) {
        (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (toml::Value::Array(_), toml::Value::Array(items)) => toml::Value::Array(
            items
                .into_iter()
                .map(|v| match v {
                    toml::Value::Integer(i) => toml::Value::Float(i as f64),
                    v => v,
                })
                .collect(),
        ),
        (_, v) => v,
    }
}

fn from_table(raw: toml::Table) -> Result<ExperimentConfig, ConfigError> {
    let mut table = normalize(raw)?;
    let defaults = default_table();
    for (section, value) in table.iter_mut() {
        if let Some(t) = value.as_table_mut() {
            let known = defaults[section.as_str()].as_table().expect("section table");
            if let Some(k) = t.keys().find(|k| !known.contains_key(*k)) {
                return Err(ConfigError::UnknownKey(format!("{section}.{k}")));
            }
            for (k, v) in t.iter_mut() {
                *v = coerce(&known[k.as_str()], std::mem::replace(v, toml::Value::Boolean(false)));
            }
        }
    }
    toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_string()))
}

impl ExperimentConfig {
    /// Parses and validates a configuration document.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let cfg = from_table(raw)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    /// Fully resolved TOML, including defaults.
    pub fn emit(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `key=value` overrides. Keys are `section.key` or a bare key
    /// owned by one section; values use TOML syntax, falling back to a
    /// string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self, ConfigError> {
        let mut table = toml::Table::try_from(self).expect("config serializes");
        let defaults = default_table();
        for o in overrides {
            let o = o.as_ref();
            let (key, value) =
                o.split_once('=').ok_or_else(|| ConfigError::Parse(format!("override '{o}' is not key=value")))?;
            let (key, value) = (key.trim(), value.trim());
            let (section, field) = match key.split_once('.') {
                Some((s, f)) if SECTIONS.contains(&s) => (s, f),
                Some(_) => return Err(ConfigError::UnknownKey(key.into())),
                None if key == "policy" => ("sim", key),
                None => (section_of(key, &defaults).ok_or_else(|| ConfigError::UnknownKey(key.into()))?, key),
            };
            let known = defaults[section].as_table().expect("section table");
            if !known.contains_key(field) {
                return Err(ConfigError::UnknownKey(format!("{section}.{field}")));
            }
            let parsed = format!("v = {value}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(value.to_string()));
            table[section].as_table_mut().expect("section table").insert(field.to_string(), parsed);
        }
        let cfg = from_table(table)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks physical bounds; every problem is reported with its field path.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut positive = |path: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{path} must be > 0 (got {v})"));
            }
        };
        let s = &self.sim;
        positive("sim.slot_len", s.slot_len);
        let c = &self.channel;
        for (p, v) in [
            ("channel.wavelength", c.wavelength),
            ("channel.rho", c.rho),
            ("channel.responsivity", c.responsivity),
            ("channel.noise_std", c.noise_std),
            ("channel.efficiency", c.efficiency),
            ("channel.bandwidth", c.bandwidth),
            ("channel.snr_gap", c.snr_gap),
            ("channel.throughput_cap", c.throughput_cap),
            ("channel.fov", c.fov),
            ("channel.aperture_master", c.aperture_master),
            ("channel.aperture_slave", c.aperture_slave),
            ("channel.beam_radius_hop1", c.beam_radius_hop1),
            ("channel.beam_radius_hop2", c.beam_radius_hop2),
            ("channel.cn2_ground", c.cn2_ground),
        ] {
            positive(p, v);
        }
        let g = &self.geometry;
        for (p, v) in
            [("geometry.ground_to_master", g.ground_to_master), ("geometry.master_to_slave", g.master_to_slave)]
        {
            positive(p, v);
        }
        let w = &self.switching;
        for (p, v) in [
            ("switching.v_max", w.v_max),
            ("switching.a_max", w.a_max),
            ("switching.j_max", w.j_max),
            ("switching.switch_time_scale", w.switch_time_scale),
        ] {
            positive(p, v);
        }
        let mut nonneg = |path: &str, v: f64| {
            if !(v >= 0.0 && v.is_finite()) {
                errs.push(format!("{path} must be >= 0 (got {v})"));
            }
        };
        let q = &self.queueing;
        nonneg("queueing.total_arrival_rate", q.total_arrival_rate);
        for (p, v) in [
            ("channel.extinction", c.extinction),
            ("channel.sigma_p", c.sigma_p),
            ("channel.sigma_theta", c.sigma_theta),
            ("channel.sigma_turb", c.sigma_turb),
            ("channel.log_amp_var_hop1", c.log_amp_var_hop1),
            ("channel.log_amp_var_hop2", c.log_amp_var_hop2),
            ("geometry.loiter_radius", g.loiter_radius),
            ("switching.t_fsm", w.t_fsm),
            ("switching.t_pilot", w.t_pilot),
            ("switching.ar_innov_std", w.ar_innov_std),
        ] {
            nonneg(p, v);
        }
        let p = &self.policy;
        nonneg("policy.beta", p.beta);
        nonneg("policy.gamma", p.gamma);
        nonneg("policy.halt_shortfall_factor", p.halt_shortfall_factor);
        nonneg("policy.halt_dominance_margin", p.halt_dominance_margin);
        nonneg("policy.proc_overhead", p.proc_overhead);

        if !(1..=6).contains(&s.n_queues) {
            errs.push(format!("sim.n_queues must be in 1..=6 (got {})", s.n_queues));
        }
        if s.horizon == 0 {
            errs.push("sim.horizon must be >= 1".into());
        }
        if !(0.0..1.0).contains(&s.warmup_frac) {
            errs.push(format!("sim.warmup_frac must be in [0, 1) (got {})", s.warmup_frac));
        }
        if s.replications == 0 {
            errs.push("sim.replications must be >= 1".into());
        }
        if s.seed > i64::MAX as u64 {
            errs.push("sim.seed must fit in a signed 64-bit integer".into());
        }
        if s.trace_slave >= s.n_queues as i64 {
            errs.push(format!("sim.trace_slave must be < n_queues (got {})", s.trace_slave));
        }
        if q.packet_bits == 0 {
            errs.push("queueing.packet_bits must be >= 1".into());
        }
        if !q.arrival_weights.is_empty() {
            if q.arrival_weights.len() != s.n_queues {
                errs.push(format!(
                    "queueing.arrival_weights must have n_queues = {} entries (got {})",
                    s.n_queues,
                    q.arrival_weights.len()
                ));
            }
            if q.arrival_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
                errs.push("queueing.arrival_weights must be >= 0".into());
            }
            if q.arrival_weights.iter().sum::<f64>() <= 0.0 {
                errs.push("queueing.arrival_weights must not all be zero".into());
            }
        }
        if c.rho > 1.0 {
            errs.push(format!("channel.rho must be <= 1 (got {})", c.rho));
        }
        if c.snr_gap < 1.0 {
            errs.push(format!("channel.snr_gap must be >= 1 (got {})", c.snr_gap));
        }
        if !c.tx_power_dbm.is_finite() || !c.min_snr_db.is_finite() {
            errs.push("channel.tx_power_dbm and channel.min_snr_db must be finite".into());
        }
        if g.loiter_radius >= g.master_to_slave {
            errs.push(format!(
                "geometry.loiter_radius must be < geometry.master_to_slave (got {} >= {})",
                g.loiter_radius, g.master_to_slave
            ));
        }
        if !g.loiter_rate.is_finite() {
            errs.push("geometry.loiter_rate must be finite".into());
        }
        if w.t_fsm + w.t_pilot <= 0.0 {
            errs.push("switching.t_fsm + switching.t_pilot must be > 0".into());
        }
        if !(0.0..=1.0).contains(&w.p_base) {
            errs.push(format!("switching.p_base must be in [0, 1] (got {})", w.p_base));
        }
        if !(w.p_floor > 0.0 && w.p_floor <= 1.0) {
            errs.push(format!("switching.p_floor must be in (0, 1] (got {})", w.p_floor));
        }
        if w.k_cap == 0 {
            errs.push("switching.k_cap must be >= 1".into());
        }
        for (path, v) in [("switching.ar_phi_global", w.ar_phi_global), ("switching.ar_phi_target", w.ar_phi_target)] {
            if !(0.0..1.0).contains(&v) {
                errs.push(format!("{path} must be in [0, 1) (got {v})"));
            }
        }
        if w.calibration_points == 0 {
            errs.push("switching.calibration_points must be >= 1".into());
        }
        if p.frame_len == 0 {
            errs.push("policy.frame_len must be >= 1".into());
        }
        if p.proc_overhead >= s.slot_len {
            errs.push(format!(
                "policy.proc_overhead must be < sim.slot_len (got {} >= {})",
                p.proc_overhead, s.slot_len
            ));
        }
        if p.halt_outage_slots == 0 {
            errs.push("policy.halt_outage_slots must be >= 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    pub fn arrival_rates(&self) -> Vec<f64> {
        let n = self.sim.n_queues;
        let w = &self.queueing.arrival_weights;
        let total = self.queueing.total_arrival_rate;
        if w.is_empty() {
            vec![total / n as f64; n]
        } else {
            let s: f64 = w.iter().sum();
            w.iter().map(|x| total * x / s).collect()
        }
    }

    pub fn tx_power_w(&self) -> f64 {
        1e-3 * 10f64.powf(self.channel.tx_power_dbm / 10.0)
    }

    pub fn radio(&self) -> RadioParams {
        let c = &self.channel;
        RadioParams {
            responsivity: c.responsivity,
            tx_power: self.tx_power_w(),
            noise_std: c.noise_std,
            efficiency: c.efficiency,
            bandwidth: c.bandwidth,
            snr_gap: c.snr_gap,
            min_snr: 10f64.powf(c.min_snr_db / 10.0),
            throughput_cap: c.throughput_cap,
        }
    }

    /// Ground to master. Per-axis jitter combines the ground transmitter and
    /// the master platform.
    pub fn hop1(&self) -> HopParams {
        let c = &self.channel;
        HopParams {
            distance: self.geometry.ground_to_master,
            aperture_radius: c.aperture_master,
            beam_radius: c.beam_radius_hop1,
            extinction: c.extinction,
            log_amp_var: c.log_amp_var_hop1,
            lateral_jitter_var: 2.0 * c.sigma_p * c.sigma_p,
            angular_jitter_var: 0.0,
            fov_half_angle: None,
        }
    }

    /// Master to slave at the nominal distance; the engine substitutes the
    /// instantaneous range.
    pub fn hop2(&self) -> HopParams {
        let c = &self.channel;
        HopParams {
            distance: self.geometry.master_to_slave,
            aperture_radius: c.aperture_slave,
            beam_radius: c.beam_radius_hop2,
            extinction: c.extinction,
            log_amp_var: c.log_amp_var_hop2,
            lateral_jitter_var: 2.0 * c.sigma_p * c.sigma_p,
            // master mirror jitter is doubled in angle
            angular_jitter_var: 5.0 * c.sigma_theta * c.sigma_theta + c.sigma_turb * c.sigma_turb,
            fov_half_angle: Some(c.fov),
        }
    }

    pub fn pointing(&self) -> PointingStats {
        let h = self.hop2();
        PointingStats { lat_var: h.lateral_jitter_var, ang_var: h.angular_jitter_var, fov: self.channel.fov }
    }

    pub fn formation(&self) -> Formation {
        let g = &self.geometry;
        Formation::hexagonal(self.sim.n_queues, g.ground_to_master, g.master_to_slave, g.loiter_radius, g.loiter_rate)
    }

    pub fn gimbal(&self) -> GimbalLimits {
        let w = &self.switching;
        GimbalLimits { v_max: w.v_max, a_max: w.a_max, j_max: w.j_max }
    }

    pub fn acquisition(&self) -> AcquisitionParams {
        let w = &self.switching;
        AcquisitionParams { t_fsm: w.t_fsm, t_pilot: w.t_pilot, p_base: w.p_base, p_floor: w.p_floor, k_cap: w.k_cap }
    }

    pub fn ar(&self) -> ArParams {
        let w = &self.switching;
        ArParams { phi_global: w.ar_phi_global, phi_target: w.ar_phi_target, innov_std: w.ar_innov_std }
    }

    pub fn policy_config(&self) -> PolicyConfig {
        let p = &self.policy;
        PolicyConfig {
            beta: p.beta,
            gamma: p.gamma,
            frame_len: p.frame_len,
            proc_overhead: p.proc_overhead,
            halt: HaltConfig {
                enabled: p.early_halt,
                outage_slots: p.halt_outage_slots,
                shortfall_factor: p.halt_shortfall_factor,
                dominance_margin: p.halt_dominance_margin,
            },
        }
    }

    /// Seeds `seed, seed + 1, ...` for every replication.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.sim.replications as u64).map(|k| self.sim.seed + k).collect()
    }

    /// Short label used in report tables.
    pub fn label(&self) -> String {
        format!("{}/{}/{}", self.sim.scenario, self.sim.policy, self.sim.switch_model)
    }
}
