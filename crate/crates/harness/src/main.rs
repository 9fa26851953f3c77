use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qkdvss::protocols::ProtocolKind;
use qkdvss_harness::run::write_json;
use qkdvss_harness::{audit_files, demo, run_config, sweep, RunStatus, ScenarioConfig};

/// Exit codes: 0 success, 2 protocol abort or failed audit, 1 error.
#[derive(Parser)]
#[command(name = "qkdvss", version, about = "Run, audit and sweep distributed QKD post-processing scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config protocol.
    #[arg(long)]
    protocol: Option<ProtocolKind>,
    #[arg(long, env = "QKDVSS_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario; writes metrics.json, timings.json and transcript.jsonl.
    Run(Common),
    /// Check a transcript against its config.
    Audit {
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Metrics to take the reported leak from; defaults to metrics.json beside the transcript.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Run a grid of scenarios; writes sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// For example `n=2..5,t=0..4` or `qber=0.02..0.2:0.02`.
        #[arg(long)]
        grid: String,
    },
    /// Baseline memory attack and the extraction countermeasure; writes demo.json.
    DemoMemoryAttack(Common),
}

fn load(c: &Common) -> Result<ScenarioConfig, String> {
    let mut cfg = ScenarioConfig::load(&c.config).map_err(|e| e.to_string())?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(p) = c.protocol {
        cfg.protocol = p;
        cfg.check().map_err(|e| e.to_string())?;
    }
    Ok(cfg)
}

fn create(dir: &Path) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))
}

fn execute(cli: Cli) -> Result<u8, String> {
    match cli.command {
        Command::Run(c) => {
            let cfg = load(&c)?;
            let art = run_config(&cfg).map_err(|e| e.to_string())?;
            art.write(&c.out_dir).map_err(|e| e.to_string())?;
            let m = &art.metrics;
            match m.abort_reason {
                None => println!("success: {} bits, leak_ec {}", m.final_len, m.leak_ec),
                Some(r) => println!("abort: {r:?}"),
            }
            Ok(if m.status == RunStatus::Success { 0 } else { 2 })
        }
        Command::Audit { transcript, config, metrics } => {
            let report = audit_files(&transcript, &config, metrics.as_deref()).map_err(|e| e.to_string())?;
            for (name, check) in report.checks() {
                println!("{name}: {:?}: {}", check.status, check.detail);
            }
            Ok(if report.passed() { 0 } else { 2 })
        }
        Command::Sweep { common, grid } => {
            let cfg = load(&common)?;
            let axes = sweep::parse_grid(&grid).map_err(|e| e.to_string())?;
            let rows = sweep::sweep(&cfg, &axes);
            create(&common.out_dir)?;
            let path = common.out_dir.join("sweep.csv");
            let file = std::fs::File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            sweep::write_csv(&rows, file).map_err(|e| e.to_string())?;
            let errors = rows.iter().filter(|r| r.status == "error").count();
            println!("{} cells, {errors} errors, written to {}", rows.len(), path.display());
            Ok(if errors > 0 { 1 } else { 0 })
        }
        Command::DemoMemoryAttack(c) => {
            let cfg = load(&c)?;
            let report = demo::demo_memory_attack(&cfg).map_err(|e| e.to_string())?;
            create(&c.out_dir)?;
            write_json(&c.out_dir.join("demo.json"), &report).map_err(|e| e.to_string())?;
            println!(
                "baseline: {}/{} bits recovered; countermeasure uniform: {}",
                report.baseline.bits_recovered,
                report.baseline.planted.len(),
                report.countermeasure_uniform
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
