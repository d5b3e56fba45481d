//! Named experiment presets, the seeded batch runner, and cross-run reports.
//!
//! A preset run lays out
//! `<out>/<preset>/<series>/seed-<S>/` for every series and seed, a
//! `summary.json` per series, a table at the preset root and
//! `manifest.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{coherence::default_coherence_time, gain_histogram, outage_curve, sample_gains};
use crate::config::{ConfigError, ExperimentConfig};
use crate::engine::analysis::{inner_bound_scale, t_interval, DelayHistogram};
use crate::engine::metrics::{RunSummary, SCHEMA_VERSION};
use crate::engine::{self, SimError};
use crate::io::{self, IoError};
use crate::rng::{Purpose, StreamFactory};

pub const GIT_DESCRIBE: &str = env!("ACI_GIT_DESCRIBE");

/// Monte Carlo draws for the channel PDF.
pub const PDF_SAMPLES: usize = 1_000_000;
pub const PDF_BINS: usize = 200;
/// Fraction of the measured inner bound used by the stability preset.
pub const STABILITY_LOAD: f64 = 0.5;
/// Switch-time inflation for the slow-switch series of the stability preset.
pub const SLOW_SWITCH_FACTOR: f64 = 5.0;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown preset '{name}'; available: {available}")]
    UnknownPreset { name: String, available: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("seed {seed}, series {series}: {source}")]
    Sim { series: String, seed: u64, source: SimError },
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("no metrics.json found under {0}")]
    NoRuns(String),
    #[error("{0}")]
    Other(String),
}

impl ExperimentError {
    /// Bad input rather than a failure while running.
    pub fn is_config(&self) -> bool {
        matches!(self, Self::UnknownPreset { .. } | Self::Config(_))
            || matches!(self, Self::Sim { source: SimError::Config(_), .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PresetKind {
    ChannelPdf,
    SwitchingTrace,
    DelayCdf,
    TimeBudget,
    Ablation,
    Stability,
}

impl PresetKind {
    pub const ALL: [PresetKind; 6] =
        [Self::ChannelPdf, Self::SwitchingTrace, Self::DelayCdf, Self::TimeBudget, Self::Ablation, Self::Stability];

    pub fn name(self) -> &'static str {
        match self {
            Self::ChannelPdf => "channel-pdf",
            Self::SwitchingTrace => "switching-trace",
            Self::DelayCdf => "delay-cdf",
            Self::TimeBudget => "time-budget",
            Self::Ablation => "ablation",
            Self::Stability => "stability",
        }
    }

    /// Overrides applied before the user's.
    fn base(self) -> &'static [&'static str] {
        match self {
            Self::SwitchingTrace => {
                &["replications=1", "horizon=20000", "trace_slave=1", "audit=true", "queue_trace=true"]
            }
            Self::Stability => &["horizon=1000000"],
            _ => &[],
        }
    }
}

impl FromStr for PresetKind {
    type Err = ExperimentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| ExperimentError::UnknownPreset {
            name: s.to_string(),
            available: Self::ALL.map(|p| p.name()).join(", "),
        })
    }
}

impl std::fmt::Display for PresetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One curve or bar of a preset: a name and the overrides that define it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub name: String,
    pub overrides: Vec<String>,
}

impl Series {
    fn new(name: &str, overrides: &[&str]) -> Self {
        let mut o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        o.push(format!("scenario=\"{name}\""));
        Self { name: name.to_string(), overrides: o }
    }
}

/// Series of a simulation preset. `base` is the config after user
/// overrides; the stability preset derives its load from a pilot run.
pub fn series_for(
    kind: PresetKind,
    base: &ExperimentConfig,
) -> Result<(Vec<Series>, BTreeMap<String, f64>), ExperimentError> {
    let mut derived = BTreeMap::new();
    let series = match kind {
        PresetKind::ChannelPdf => vec![],
        PresetKind::SwitchingTrace => vec![Series::new("aci-fso", &["policy=\"aci\"", "switch_model=\"fso\""])],
        PresetKind::DelayCdf => vec![
            Series::new("aci-iid", &["policy=\"aci\"", "switch_model=\"iid\""]),
            Series::new("aci-dependent", &["policy=\"aci\"", "switch_model=\"dependent\""]),
            Series::new("aci-fso", &["policy=\"aci\"", "switch_model=\"fso\""]),
            Series::new("aci-a", &["policy=\"aci-a\"", "switch_model=\"fso\""]),
            Series::new("aci-pa", &["policy=\"aci-pa\"", "switch_model=\"fso\""]),
        ],
        PresetKind::TimeBudget => vec![
            Series::new("mw", &["policy=\"mw\"", "switch_model=\"fso\""]),
            Series::new("aci-iid", &["policy=\"aci\"", "switch_model=\"iid\""]),
            Series::new("aci-dependent", &["policy=\"aci\"", "switch_model=\"dependent\""]),
            Series::new("aci-fso", &["policy=\"aci\"", "switch_model=\"fso\""]),
            Series::new("aci-a", &["policy=\"aci-a\"", "switch_model=\"fso\""]),
            Series::new("aci-pa", &["policy=\"aci-pa\"", "switch_model=\"fso\""]),
        ],
        PresetKind::Ablation => vec![
            Series::new("aci", &["policy=\"aci\""]),
            Series::new("aci-no-affinity", &["policy=\"aci\"", "gamma=0"]),
            Series::new("aci-no-penalty", &["policy=\"aci\"", "beta=0"]),
            Series::new("mw", &["policy=\"mw\""]),
        ],
        PresetKind::Stability => {
            let (scale, rate) = stability_load(base)?;
            derived.insert("inner_bound_scale".into(), scale);
            derived.insert("load_factor".into(), STABILITY_LOAD);
            derived.insert("total_arrival_rate".into(), rate);
            let load = format!("total_arrival_rate={rate:?}");
            let slow = format!("switch_time_scale={:?}", base.switching.switch_time_scale * SLOW_SWITCH_FACTOR);
            vec![
                Series::new("aci", &["policy=\"aci\"", &load]),
                Series::new("mw-slow-switch", &["policy=\"mw\"", &load, &slow]),
            ]
        }
    };
    Ok((series, derived))
}

/// Measures the inner bound with one ACI pilot run at the configured load
/// and returns the bound's scale factor and the resulting arrival rate.
pub fn stability_load(base: &ExperimentConfig) -> Result<(f64, f64), ExperimentError> {
    let pilot =
        base.with_overrides(&["policy=\"aci\"".to_string(), format!("horizon={}", base.sim.horizon.min(100_000))])?;
    let log = engine::run(&pilot, pilot.sim.seed).map_err(|source| ExperimentError::Sim {
        series: "pilot".into(),
        seed: pilot.sim.seed,
        source,
    })?;
    let scale = inner_bound_scale(&log.lambdas, &log.mean_rates(), log.phi_sw());
    if !scale.is_finite() {
        return Err(ExperimentError::Other("pilot run measured no load".into()));
    }
    Ok((scale, base.queueing.total_arrival_rate * STABILITY_LOAD * scale))
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub preset: String,
    pub git_describe: String,
    pub seeds: Vec<u64>,
    pub user_overrides: Vec<String>,
    pub series: Vec<Series>,
    pub derived: BTreeMap<String, f64>,
    pub threads: usize,
    pub wall_time_s: f64,
    /// Resolved configuration before series overrides.
    pub config: String,
}

/// One finished series.
#[derive(Debug, Clone)]
pub struct SeriesResult {
    pub name: String,
    pub summaries: Vec<RunSummary>,
    /// Delays of all seeds pooled.
    pub delays: DelayHistogram,
}

#[derive(Debug, Clone)]
pub struct PresetOutput {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub series: Vec<SeriesResult>,
    pub channel: Option<ChannelReport>,
}

impl PresetOutput {
    pub fn series(&self, name: &str) -> Option<&SeriesResult> {
        self.series.iter().find(|s| s.name == name)
    }
}

/// Resolves a preset's configuration: preset base, then user overrides,
/// then an explicit seed.
pub fn preset_config(
    kind: PresetKind,
    base: &ExperimentConfig,
    overrides: &[String],
    seed: Option<u64>,
) -> Result<ExperimentConfig, ExperimentError> {
    let mut cfg = base.with_overrides(kind.base())?.with_overrides(overrides)?;
    if let Some(s) = seed {
        cfg = cfg.with_overrides(&[format!("seed={s}")])?;
    }
    Ok(cfg)
}

/// Runs a preset from the default configuration.
pub fn run_preset(
    name: &str,
    overrides: &[String],
    seed: Option<u64>,
    out: &Path,
) -> Result<PresetOutput, ExperimentError> {
    let kind: PresetKind = name.parse()?;
    run_preset_from(kind, &ExperimentConfig::default(), overrides, seed, out)
}

pub fn run_preset_from(
    kind: PresetKind,
    base: &ExperimentConfig,
    overrides: &[String],
    seed: Option<u64>,
    out: &Path,
) -> Result<PresetOutput, ExperimentError> {
    let start = Instant::now();
    let cfg = preset_config(kind, base, overrides, seed)?;
    let dir = out.join(kind.name());
    io::create_dir(&dir)?;
    let (series, derived) = series_for(kind, &cfg)?;

    let (results, channel, seeds) = if kind == PresetKind::ChannelPdf {
        let report = channel_pdf(&cfg, cfg.sim.seed, PDF_SAMPLES, &dir)?;
        (vec![], Some(report), vec![cfg.sim.seed])
    } else {
        let results = run_series(&cfg, &series, &dir)?;
        write_preset_tables(kind, &dir, &results)?;
        (results, None, cfg.seeds())
    };

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        preset: kind.name().into(),
        git_describe: GIT_DESCRIBE.into(),
        seeds,
        user_overrides: overrides.to_vec(),
        series,
        derived,
        threads: rayon::current_num_threads(),
        wall_time_s: start.elapsed().as_secs_f64(),
        config: cfg.emit(),
    };
    io::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(PresetOutput { dir, manifest, series: results, channel })
}

/// Runs a configuration file's own experiment: every seed of its scenario
/// under `<out>/<scenario>/`.
pub fn run_config(cfg: &ExperimentConfig, source: Option<&Path>, out: &Path) -> Result<PresetOutput, ExperimentError> {
    let start = Instant::now();
    cfg.validate()?;
    let dir = out.join(&cfg.sim.scenario);
    io::create_dir(&dir)?;
    // series directory is the scenario directory itself
    let series = vec![Series { name: ".".into(), overrides: vec![] }];
    let mut results = run_series(cfg, &series, &dir)?;
    results[0].name = cfg.sim.scenario.clone();
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        preset: source.map_or("run".into(), |p| format!("run {}", p.display())),
        git_describe: GIT_DESCRIBE.into(),
        seeds: cfg.seeds(),
        user_overrides: vec![],
        series: vec![],
        derived: BTreeMap::new(),
        threads: rayon::current_num_threads(),
        wall_time_s: start.elapsed().as_secs_f64(),
        config: cfg.emit(),
    };
    io::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(PresetOutput { dir, manifest, series: results, channel: None })
}

/// Runs every (series, seed) pair in parallel, each writing its own
/// directory.
pub fn run_series(cfg: &ExperimentConfig, series: &[Series], dir: &Path) -> Result<Vec<SeriesResult>, ExperimentError> {
    let configs: Vec<ExperimentConfig> =
        series.iter().map(|s| cfg.with_overrides(&s.overrides)).collect::<Result<_, _>>()?;
    let seeds = cfg.seeds();
    let jobs: Vec<(usize, u64)> = (0..series.len()).flat_map(|k| seeds.iter().map(move |&s| (k, s))).collect();
    let done: Vec<(usize, RunSummary, DelayHistogram)> = jobs
        .par_iter()
        .map(|&(k, seed)| {
            let c = &configs[k];
            let log = engine::run(c, seed).map_err(|source| ExperimentError::Sim {
                series: series[k].name.clone(),
                seed,
                source,
            })?;
            let run_dir = dir.join(&series[k].name).join(format!("seed-{seed}"));
            let summary = io::write_run(&run_dir, &log, c)?;
            Ok((k, summary, log.pooled_delays()))
        })
        .collect::<Result<_, ExperimentError>>()?;

    let mut results: Vec<SeriesResult> = series
        .iter()
        .map(|s| SeriesResult { name: s.name.clone(), summaries: vec![], delays: DelayHistogram::default() })
        .collect();
    for (k, summary, delays) in done {
        results[k].summaries.push(summary);
        results[k].delays.merge(&delays);
    }
    for r in &results {
        let report = merge_summaries(&r.summaries);
        io::write_json(&dir.join(&r.name).join("summary.json"), &report)?;
    }
    Ok(results)
}

#[derive(Serialize)]
struct CdfRow {
    delay_slots: u64,
    cdf: f64,
}

fn write_preset_tables(kind: PresetKind, dir: &Path, results: &[SeriesResult]) -> Result<(), ExperimentError> {
    let all: Vec<RunSummary> = results.iter().flat_map(|r| r.summaries.iter().cloned()).collect();
    let report = merge_summaries(&all);
    io::write_text(&dir.join("summary.txt"), &render_report(&report))?;
    write_report_csv(&dir.join("summary.csv"), &report)?;
    if kind == PresetKind::DelayCdf {
        for r in results {
            io::write_csv(
                &dir.join(&r.name).join("cdf.csv"),
                &["delay_slots", "cdf"],
                r.delays.cdf().into_iter().map(|(d, c)| CdfRow { delay_slots: d, cdf: c }),
            )?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ChannelReport {
    pub samples: usize,
    pub seed: u64,
    pub hop2_distance_m: f64,
    pub gain_threshold: f64,
    pub mean_gain: f64,
    pub outage_at_threshold: f64,
    pub coherence_time_s: f64,
}

/// Channel PDF and outage curve at the nominal hop-2 distance.
pub fn channel_pdf(
    cfg: &ExperimentConfig,
    seed: u64,
    samples: usize,
    dir: &Path,
) -> Result<ChannelReport, ExperimentError> {
    let (hop1, hop2) = (cfg.hop1(), cfg.hop2());
    let rho = cfg.channel.rho;
    let h_th = cfg.radio().gain_threshold();
    let streams = StreamFactory::new(seed);

    let mut rng = streams.sequential(Purpose::MonteCarlo);
    let mut gains = sample_gains(&hop1, &hop2, rho, samples, &mut rng);
    let mean_gain = gains.iter().sum::<f64>() / gains.len() as f64;
    gains.sort_by(f64::total_cmp);
    let upper = gains[((gains.len() as f64 * 0.999) as usize).min(gains.len() - 1)].max(f64::MIN_POSITIVE);
    io::write_pdf(&dir.join("pdf.csv"), &gain_histogram(&gains, upper, PDF_BINS))?;

    // same draws for every threshold
    let thresholds: Vec<f64> = (-20..=20).map(|k| h_th * 10f64.powf(k as f64 / 10.0)).collect();
    let mut rng = streams.sequential(Purpose::MonteCarlo);
    let curve = outage_curve(&hop1, &hop2, rho, &thresholds, samples, &mut rng);
    io::write_outage(&dir.join("outage.csv"), &curve)?;

    let t0 = default_coherence_time(cfg.channel.cn2_ground, cfg.channel.wavelength, hop1.distance)
        .map_err(|e| ExperimentError::Other(format!("coherence time: {e}")))?;
    let report = ChannelReport {
        samples,
        seed,
        hop2_distance_m: hop2.distance,
        gain_threshold: h_th,
        mean_gain,
        outage_at_threshold: curve[20].p_out,
        coherence_time_s: t0,
    };
    io::write_json(&dir.join("channel.json"), &report)?;
    Ok(report)
}

/// Mean and 95% t-interval over replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub mean: f64,
    pub ci_halfwidth: f64,
    pub n: usize,
}

impl MetricStat {
    pub fn from_samples(x: &[f64]) -> Option<Self> {
        if x.is_empty() {
            return None;
        }
        let (mean, hw) = t_interval(x);
        Some(Self { mean, ci_halfwidth: hw, n: x.len() })
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.ci_halfwidth
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.ci_halfwidth
    }

    /// Whether this interval lies entirely below `other`.
    pub fn below(&self, other: &MetricStat) -> bool {
        self.upper() < other.lower()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub label: String,
    pub seeds: Vec<u64>,
    pub metrics: BTreeMap<String, MetricStat>,
    pub stable_runs: usize,
}

/// `a - b` for one metric. Paired over common seeds when there are at
/// least two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub a: String,
    pub b: String,
    pub metric: String,
    pub mean: f64,
    pub ci_halfwidth: f64,
    pub paired: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub groups: Vec<GroupReport>,
    pub deltas: Vec<Delta>,
}

impl Report {
    pub fn group(&self, label: &str) -> Option<&GroupReport> {
        self.groups.iter().find(|g| g.label == label)
    }
}

pub const METRICS: [&str; 11] = [
    "serving",
    "switching",
    "idle",
    "phi_sw",
    "mean_delay",
    "little_delay",
    "p50_delay",
    "p90_delay",
    "p99_delay",
    "switches",
    "mean_tau",
];
const DELTA_METRICS: [&str; 4] = ["serving", "mean_delay", "little_delay", "p99_delay"];

fn metric(s: &RunSummary, name: &str) -> Option<f64> {
    match name {
        "serving" => Some(s.budget.serving),
        "switching" => Some(s.budget.switching),
        "idle" => Some(s.budget.idle),
        "phi_sw" => Some(s.phi_sw),
        "mean_delay" => s.delay.mean,
        "little_delay" => s.delay.little,
        "p50_delay" => s.delay.p50,
        "p90_delay" => s.delay.p90,
        "p99_delay" => s.delay.p99,
        "switches" => Some(s.switches as f64),
        "mean_tau" => s.mean_tau,
        _ => None,
    }
}

/// Groups runs by label and summarizes each metric across seeds.
pub fn merge_summaries(summaries: &[RunSummary]) -> Report {
    let mut by_label: BTreeMap<&str, Vec<&RunSummary>> = BTreeMap::new();
    for s in summaries {
        by_label.entry(s.label.as_str()).or_default().push(s);
    }
    let groups: Vec<(GroupReport, Vec<&RunSummary>)> = by_label
        .into_iter()
        .map(|(label, mut runs)| {
            runs.sort_by_key(|s| s.seed);
            let metrics = METRICS
                .iter()
                .filter_map(|m| {
                    let x: Vec<f64> = runs.iter().filter_map(|s| metric(s, m)).collect();
                    MetricStat::from_samples(&x).map(|st| (m.to_string(), st))
                })
                .collect();
            let stable_runs = runs
                .iter()
                .filter(|s| s.stability.is_some_and(|r| r.verdict == crate::engine::analysis::StabilityVerdict::Stable))
                .count();
            let g = GroupReport {
                label: label.to_string(),
                seeds: runs.iter().map(|s| s.seed).collect(),
                metrics,
                stable_runs,
            };
            (g, runs)
        })
        .collect();

    let mut deltas = vec![];
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            for m in DELTA_METRICS {
                if let Some(d) = delta(&groups[i], &groups[j], m) {
                    deltas.push(d);
                }
            }
        }
    }
    Report { schema_version: SCHEMA_VERSION, groups: groups.into_iter().map(|(g, _)| g).collect(), deltas }
}

fn delta(a: &(GroupReport, Vec<&RunSummary>), b: &(GroupReport, Vec<&RunSummary>), m: &str) -> Option<Delta> {
    let by_seed = |runs: &Vec<&RunSummary>| -> BTreeMap<u64, f64> {
        runs.iter().filter_map(|s| metric(s, m).map(|v| (s.seed, v))).collect()
    };
    let (xa, xb) = (by_seed(&a.1), by_seed(&b.1));
    let common: BTreeSet<u64> = xa.keys().filter(|k| xb.contains_key(k)).copied().collect();
    let (mean, ci_halfwidth, paired) = if common.len() >= 2 {
        let d: Vec<f64> = common.iter().map(|k| xa[k] - xb[k]).collect();
        let (mean, hw) = t_interval(&d);
        (mean, hw, true)
    } else {
        let (sa, sb) = (a.0.metrics.get(m)?, b.0.metrics.get(m)?);
        (sa.mean - sb.mean, sa.ci_halfwidth.hypot(sb.ci_halfwidth), false)
    };
    Some(Delta { a: a.0.label.clone(), b: b.0.label.clone(), metric: m.to_string(), mean, ci_halfwidth, paired })
}

/// Every `metrics.json` at or below `dir`, sorted.
pub fn find_runs(dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut found = vec![];
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        if d.join("metrics.json").is_file() {
            found.push(d.clone());
        }
        let entries = std::fs::read_dir(&d).map_err(|source| IoError::Io { path: d.clone(), source })?;
        for e in entries {
            let p = e.map_err(|source| IoError::Io { path: d.clone(), source })?.path();
            if p.is_dir() {
                stack.push(p);
            }
        }
    }
    found.sort();
    Ok(found)
}

/// Merges the runs found under each directory. Any schema mismatch is an
/// error.
pub fn merge_reports(dirs: &[PathBuf]) -> Result<Report, ExperimentError> {
    let mut summaries = vec![];
    for d in dirs {
        let runs = find_runs(d)?;
        if runs.is_empty() {
            return Err(ExperimentError::NoRuns(d.display().to_string()));
        }
        for r in runs {
            summaries.push(io::read_summary(&r)?);
        }
    }
    Ok(merge_summaries(&summaries))
}

/// Plain-text table of a report.
pub fn render_report(r: &Report) -> String {
    let mut s = String::new();
    let cols = ["serving", "switching", "mean_delay", "little_delay", "p50_delay", "p99_delay"];
    let _ = write!(s, "{:<28} {:>3}", "label", "n");
    for c in cols {
        let _ = write!(s, " {:>22}", c);
    }
    let _ = writeln!(s, " {:>7}", "stable");
    for g in &r.groups {
        let _ = write!(s, "{:<28} {:>3}", g.label, g.seeds.len());
        for c in cols {
            let cell = g.metrics.get(c).map_or("-".to_string(), |m| format!("{:.4} ± {:.4}", m.mean, m.ci_halfwidth));
            let cell = if c.ends_with("delay") {
                g.metrics.get(c).map_or("-".to_string(), |m| format!("{:.1} ± {:.1}", m.mean, m.ci_halfwidth))
            } else {
                cell
            };
            let _ = write!(s, " {:>22}", cell);
        }
        let _ = writeln!(s, " {:>3}/{:<3}", g.stable_runs, g.seeds.len());
    }
    if !r.deltas.is_empty() {
        let _ = writeln!(s, "\npairwise deltas (a - b):");
        for d in &r.deltas {
            let _ = writeln!(
                s,
                "  {} - {} [{}]: {:.4} ± {:.4}{}",
                d.a,
                d.b,
                d.metric,
                d.mean,
                d.ci_halfwidth,
                if d.paired { " (paired)" } else { "" }
            );
        }
    }
    s
}

#[derive(Serialize)]
struct ReportRow<'a> {
    label: &'a str,
    metric: &'a str,
    mean: f64,
    ci_halfwidth: f64,
    n: usize,
}

pub fn write_report_csv(path: &Path, r: &Report) -> Result<(), IoError> {
    io::write_csv(
        path,
        &["label", "metric", "mean", "ci_halfwidth", "n"],
        r.groups.iter().flat_map(|g| {
            g.metrics.iter().map(move |(m, st)| ReportRow {
                label: &g.label,
                metric: m,
                mean: st.mean,
                ci_halfwidth: st.ci_halfwidth,
                n: st.n,
            })
        }),
    )
}
