use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aci_core::config::ExperimentConfig;
use aci_core::experiments::{self, ExperimentError, PresetOutput};
use clap::{Parser, Subcommand};

/// Environment variable that overrides the output root.
const OUT_ENV: &str = "ACI_OUT_DIR";

#[derive(Parser)]
#[command(name = "aci", version, about = "Switch-aware scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Extra `key=value` overrides on top of the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named preset.
    Preset {
        name: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge results under one or more directories into a table.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Also write the merged report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn out_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn print_output(out: &PresetOutput) {
    if let Some(c) = &out.channel {
        println!(
            "mean gain {:.4e}, outage at threshold {:.4}, coherence time {:.2} ms",
            c.mean_gain,
            c.outage_at_threshold,
            c.coherence_time_s * 1e3
        );
    }
    if !out.series.is_empty() {
        let all: Vec<_> = out.series.iter().flat_map(|s| s.summaries.iter().cloned()).collect();
        print!("{}", experiments::render_report(&experiments::merge_summaries(&all)));
    }
    println!("wrote {} ({:.1} s)", out.dir.display(), out.manifest.wall_time_s);
}

fn run_file(config: &Path, set: &[String], out: &Path) -> Result<PresetOutput, ExperimentError> {
    let cfg = ExperimentConfig::load(config)?.with_overrides(set)?;
    experiments::run_config(&cfg, Some(config), out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, set, out } => run_file(&config, &set, &out_root(out)).map(|o| print_output(&o)),
        Command::Preset { name, set, seed, out } => {
            experiments::run_preset(&name, &set, seed, &out_root(out)).map(|o| print_output(&o))
        }
        Command::Report { dirs, json } => experiments::merge_reports(&dirs).and_then(|r| {
            print!("{}", experiments::render_report(&r));
            if let Some(p) = json {
                aci_core::io::write_json(&p, &r)?;
            }
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
