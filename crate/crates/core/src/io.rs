//! Result files. Every file carries the schema version: JSON files as a
//! field, CSV files as a leading `# schema_version=N` line.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::channel::OutageEstimate;
use crate::config::ExperimentConfig;
use crate::engine::metrics::{RunLog, RunSummary, SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: schema_version {found}, expected {expected}")]
    Schema { path: PathBuf, found: String, expected: u32 },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv { path: path.to_path_buf(), source }
}

pub fn create_dir(dir: &Path) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// CSV writer positioned after the schema line. The caller writes the header.
pub fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, IoError> {
    let mut f = BufWriter::new(File::create(path).map_err(io_err(path))?);
    writeln!(f, "# schema_version={SCHEMA_VERSION}").map_err(io_err(path))?;
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(f))
}

/// Header is written even when `rows` is empty.
pub fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a CSV written by [`write_csv`], checking its schema line.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let first = text.lines().next().unwrap_or_default();
    let found = first.strip_prefix("# schema_version=").unwrap_or("missing");
    if found != SCHEMA_VERSION.to_string() {
        return Err(IoError::Schema { path: path.to_path_buf(), found: found.to_string(), expected: SCHEMA_VERSION });
    }
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(csv_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut s =
        serde_json::to_string_pretty(value).map_err(|source| IoError::Json { path: path.to_path_buf(), source })?;
    s.push('\n');
    fs::write(path, s).map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(io_err(path))
}

#[derive(Serialize)]
struct DelayRow {
    queue: usize,
    delay_slots: u64,
    count: u64,
}

#[derive(Serialize)]
struct BudgetRow {
    class: &'static str,
    slots: u64,
    fraction: f64,
}

#[derive(Serialize)]
struct SwitchRow<'a> {
    slot: u64,
    from: usize,
    to: usize,
    theta_deg: f64,
    #[serde(rename = "K")]
    k: Option<u64>,
    tau_slots: u64,
    model: &'a str,
    failed: bool,
}

/// Rows kept in `backlog_trace.csv`; longer runs are thinned evenly.
pub const TRACE_ROWS: u64 = 100_000;

/// Writes every per-run file into `dir` and returns the summary.
pub fn write_run(dir: &Path, log: &RunLog, cfg: &ExperimentConfig) -> Result<RunSummary, IoError> {
    create_dir(dir)?;
    let summary = log.summary();
    write_json(&dir.join("metrics.json"), &summary)?;
    write_text(&dir.join("config.toml"), &cfg.emit())?;

    write_csv(
        &dir.join("delays.csv"),
        &["queue", "delay_slots", "count"],
        log.queues
            .iter()
            .enumerate()
            .flat_map(|(i, q)| q.delays.bins().map(move |(d, c)| DelayRow { queue: i, delay_slots: d, count: c })),
    )?;

    let c = log.class_counts();
    let b = log.budget();
    write_csv(
        &dir.join("budget.csv"),
        &["class", "slots", "fraction"],
        [
            BudgetRow { class: "serving", slots: c[0], fraction: b.serving },
            BudgetRow { class: "switching", slots: c[1], fraction: b.switching },
            BudgetRow { class: "idle", slots: c[2], fraction: b.idle },
        ],
    )?;

    let model = cfg.sim.switch_model.name();
    write_csv(
        &dir.join("switches.csv"),
        &["slot", "from", "to", "theta_deg", "K", "tau_slots", "model", "failed"],
        log.switches.iter().map(|s| SwitchRow {
            slot: s.slot,
            from: s.from,
            to: s.to,
            theta_deg: s.theta_deg,
            k: s.attempts,
            tau_slots: s.tau_slots,
            model,
            failed: s.failed,
        }),
    )?;

    write_backlog_trace(&dir.join("backlog_trace.csv"), log)?;
    if !log.audit.is_empty() {
        write_audit(&dir.join("audit.csv"), log)?;
    }
    if !log.mobility.is_empty() {
        write_csv(&dir.join("mobility.csv"), &["slot", "slave", "range_m", "theta_to_current_deg"], &log.mobility)?;
    }
    Ok(summary)
}

fn write_backlog_trace(path: &Path, log: &RunLog) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["slot".to_string(), "total_bits".to_string()];
    if log.queue_backlog.is_some() {
        header.extend((0..log.n).map(|i| format!("q{i}_bits")));
    }
    w.write_record(&header).map_err(csv_err(path))?;
    let stride = log.total_backlog.len().div_ceil(TRACE_ROWS as usize).max(1);
    for t in (0..log.total_backlog.len()).step_by(stride) {
        let mut rec = vec![t.to_string(), log.total_backlog[t].to_string()];
        if let Some(q) = &log.queue_backlog {
            rec.extend(q.iter().map(|tr| tr[t].to_string()));
        }
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn write_audit(path: &Path, log: &RunLog) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    let mut header =
        vec!["slot", "current", "chosen", "zeta", "margin"].into_iter().map(String::from).collect::<Vec<_>>();
    header.extend((0..log.n).map(|i| format!("score_{i}")));
    w.write_record(&header).map_err(csv_err(path))?;
    for a in &log.audit {
        let mut rec = vec![
            a.slot.to_string(),
            a.current.to_string(),
            a.chosen.map_or("idle".to_string(), |c| c.to_string()),
            a.zeta.to_string(),
            a.margin.to_string(),
        ];
        rec.extend(a.scores.iter().map(|s| s.to_string()));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Loads `metrics.json` from a run directory.
pub fn read_summary(dir: &Path) -> Result<RunSummary, IoError> {
    let path = dir.join("metrics.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.clone(), source })?;
    let found = value.get("schema_version").and_then(|v| v.as_u64());
    if found != Some(SCHEMA_VERSION as u64) {
        return Err(IoError::Schema {
            path,
            found: found.map_or("missing".into(), |v| v.to_string()),
            expected: SCHEMA_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|source| IoError::Json { path, source })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct PdfRow {
    pub bin_left: f64,
    pub bin_right: f64,
    pub density: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct OutageRow {
    pub h_th: f64,
    pub p_out: f64,
    pub ci_halfwidth: f64,
}

pub fn write_pdf(path: &Path, rows: &[(f64, f64, f64)]) -> Result<(), IoError> {
    write_csv(
        path,
        &["bin_left", "bin_right", "density"],
        rows.iter().map(|&(l, r, d)| PdfRow { bin_left: l, bin_right: r, density: d }),
    )
}

pub fn write_outage(path: &Path, rows: &[OutageEstimate]) -> Result<(), IoError> {
    write_csv(
        path,
        &["h_th", "p_out", "ci_halfwidth"],
        rows.iter().map(|o| OutageRow { h_th: o.h_th, p_out: o.p_out, ci_halfwidth: o.ci_halfwidth() }),
    )
}
