//! Single runs, their artifacts, and audits of artifacts on disk.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use qkdvss::audit::{audit, AuditReport};
use qkdvss::distproc::AbortReason;
use qkdvss::gf2::BitString;
use qkdvss::protocols::{self, PairReport, ProtocolKind, ProtocolOutcome};
use qkdvss::simnet::{ChannelKind, Transcript};
use qkdvss::{Error, Result};

use crate::config::ScenarioConfig;

pub const METRICS_FILE: &str = "metrics.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Success,
    Abort,
}

/// Everything about a run that is a function of its config. Wall time is
/// kept apart in [`Timings`] so this stays byte-for-byte reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub protocol: ProtocolKind,
    pub seed: u64,
    pub status: RunStatus,
    pub abort_reason: Option<AbortReason>,
    pub final_len: usize,
    pub leak_ec: usize,
    pub surviving_pairs: usize,
    pub pair_key_len: usize,
    pub penalty: usize,
    pub keys_agree: bool,
    pub honest_consistent: bool,
    pub key_a: Option<BitString>,
    pub key_b: Option<BitString>,
    pub repeat_ratio: Option<f64>,
    pub pairs: Vec<PairReport>,
    pub rounds: u64,
    pub messages: BTreeMap<ChannelKind, usize>,
    pub audit: AuditReport,
    /// The effective config, seed override applied.
    pub config: ScenarioConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Timings {
    pub protocol_ms: f64,
    pub audit_ms: f64,
}

pub struct RunArtifacts {
    pub metrics: RunMetrics,
    pub timings: Timings,
    pub transcript: Transcript,
}

impl RunArtifacts {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        write_json(&dir.join(METRICS_FILE), &self.metrics)?;
        write_json(&dir.join(TIMINGS_FILE), &self.timings)?;
        let path = dir.join(TRANSCRIPT_FILE);
        let file = fs::File::create(&path).map_err(|e| io_error(&path, e))?;
        self.transcript.write_jsonl(std::io::BufWriter::new(file))
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::InvalidParameter(format!("{}: {e}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn metrics_from(cfg: &ScenarioConfig, o: ProtocolOutcome, audit: AuditReport) -> RunMetrics {
    RunMetrics {
        protocol: o.protocol,
        seed: cfg.seed,
        status: if o.success() { RunStatus::Success } else { RunStatus::Abort },
        abort_reason: o.abort,
        final_len: o.final_len,
        leak_ec: o.leak_ec,
        surviving_pairs: o.m,
        pair_key_len: o.n_len,
        penalty: o.t_used,
        keys_agree: o.keys_agree(),
        honest_consistent: o.honest_consistent,
        key_a: o.key_a,
        key_b: o.key_b,
        repeat_ratio: o.repeat_ratio,
        pairs: o.pairs,
        rounds: o.rounds,
        messages: o.transcript.count_by_channel(),
        audit,
        config: cfg.clone(),
    }
}

/// Runs the configured protocol and audits its transcript.
pub fn run_config(cfg: &ScenarioConfig) -> Result<RunArtifacts> {
    let sc = cfg.scenario()?;
    let start = Instant::now();
    let mut outcome = protocols::run(&sc, cfg.protocol)?;
    let protocol_ms = start.elapsed().as_secs_f64() * 1e3;
    let start = Instant::now();
    let report = audit(&outcome.transcript, &sc, Some(outcome.leak_ec))?;
    let audit_ms = start.elapsed().as_secs_f64() * 1e3;
    let transcript = std::mem::take(&mut outcome.transcript);
    Ok(RunArtifacts { metrics: metrics_from(cfg, outcome, report), timings: Timings { protocol_ms, audit_ms }, transcript })
}

/// Audits a transcript file. The leak claim comes from `metrics`, or from a
/// `metrics.json` next to the transcript when present.
pub fn audit_files(transcript: &Path, config: &Path, metrics: Option<&Path>) -> Result<AuditReport> {
    let cfg = ScenarioConfig::load(config)?;
    let sc = cfg.scenario()?;
    let file = fs::File::open(transcript).map_err(|e| io_error(transcript, e))?;
    let t = Transcript::read_jsonl(std::io::BufReader::new(file))?;
    let sibling = transcript.with_file_name(METRICS_FILE);
    let metrics = metrics.map(Path::to_path_buf).or_else(|| sibling.exists().then_some(sibling));
    let claimed = match metrics {
        Some(p) => {
            let text = fs::read_to_string(&p).map_err(|e| io_error(&p, e))?;
            let v: serde_json::Value = serde_json::from_str(&text)?;
            v.get("leak_ec").and_then(serde_json::Value::as_u64).map(|x| x as usize)
        }
        None => None,
    };
    audit(&t, &sc, claimed)
}
