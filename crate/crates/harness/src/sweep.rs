//! Parameter sweeps.
//!
//! A grid is a comma-separated list of axes, each `name=lo..hi` (integers,
//! inclusive), `name=lo..hi:step` (decimals) or `name=a|b|c`. Axes: `n`, `t`,
//! `s` (sets both lab sizes, and `n` for the alternative protocol), `t_a`
//! (sets both lab thresholds) and `qber`. Cells with `t >= n` are skipped.
//!
//! CSV columns:
//!
//! | column | meaning |
//! |---|---|
//! | protocol, n, s, t, t_a, qber, seed | the cell |
//! | status | `success`, `abort`, or `error` |
//! | abort_reason | why the run aborted, empty otherwise |
//! | pe_abort | parameter estimation rejected at least one pair |
//! | m, pair_key_len | surviving pairs and their common key length |
//! | final_len | measured output length |
//! | predicted_len | length formula for the protocol from `m` and `pair_key_len` |
//! | leak_ec | disclosed reconciliation parities |
//! | repeat_len | alternative protocol: output of running Protocol 2 per session, `s·N` |
//! | ratio | alternative protocol: `repeat_len / final_len` |
//! | error | diagnostic for `error` rows |

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use qkdvss::distproc::AbortReason;
use qkdvss::protocols::{self, ProtocolKind};
use qkdvss::{Error, Result};

use crate::config::ScenarioConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

const AXES: [&str; 5] = ["n", "t", "s", "t_a", "qber"];

pub fn parse_grid(spec: &str) -> Result<Vec<Axis>> {
    let bad = |msg: String| Error::InvalidParameter(format!("grid: {msg}"));
    let mut axes: Vec<Axis> = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, range) = part.split_once('=').ok_or_else(|| bad(format!("{part:?} lacks '='")))?;
        let name = name.trim();
        if !AXES.contains(&name) {
            return Err(bad(format!("unknown axis {name:?}")));
        }
        if axes.iter().any(|a| a.name == name) {
            return Err(bad(format!("axis {name} given twice")));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(format!("{s:?} is not a number")));
        let values = if let Some((lo, rest)) = range.split_once("..") {
            let (hi, step) = match rest.split_once(':') {
                Some((hi, step)) => (num(hi)?, num(step)?),
                None => (num(rest)?, 1.0),
            };
            let lo = num(lo)?;
            if step <= 0.0 || hi < lo {
                return Err(bad(format!("empty range {range:?}")));
            }
            let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
            (0..count).map(|k| lo + k as f64 * step).collect()
        } else {
            range.split('|').map(num).collect::<Result<Vec<_>>>()?
        };
        if name != "qber" && values.iter().any(|v| v.fract() != 0.0 || *v < 0.0) {
            return Err(bad(format!("axis {name} takes non-negative integers")));
        }
        axes.push(Axis { name: name.to_string(), values });
    }
    if axes.is_empty() {
        return Err(bad("no axes".into()));
    }
    Ok(axes)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub protocol: ProtocolKind,
    pub n: usize,
    pub s: usize,
    pub t: usize,
    pub t_a: usize,
    pub qber: f64,
    pub seed: u64,
    pub status: &'static str,
    pub abort_reason: Option<AbortReason>,
    pub pe_abort: bool,
    pub m: usize,
    pub pair_key_len: usize,
    pub final_len: usize,
    pub predicted_len: usize,
    pub leak_ec: usize,
    pub repeat_len: Option<usize>,
    pub ratio: Option<f64>,
    pub error: String,
}

fn cells(base: &ScenarioConfig, axes: &[Axis]) -> Vec<ScenarioConfig> {
    let mut out = vec![base.clone()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|c| {
                axis.values.iter().map(move |&v| {
                    let mut c = c.clone();
                    let k = v as usize;
                    match axis.name.as_str() {
                        "n" => c.n = k,
                        "t" => c.t = k,
                        "s" => {
                            c.s = k;
                            c.r = k;
                            if c.protocol == ProtocolKind::Alt {
                                c.n = k;
                            }
                        }
                        "t_a" => {
                            c.t_a = k;
                            c.t_b = k;
                        }
                        _ => c.qber = v,
                    }
                    c
                })
            })
            .collect();
    }
    out.into_iter().filter(|c| c.t < c.n || c.protocol == ProtocolKind::Protocol2 || c.protocol == ProtocolKind::Alt).collect()
}

fn run_cell(cfg: &ScenarioConfig) -> SweepRow {
    let mut row = SweepRow {
        protocol: cfg.protocol,
        n: cfg.n,
        s: cfg.s,
        t: cfg.t,
        t_a: cfg.t_a,
        qber: cfg.qber,
        seed: cfg.seed,
        status: "error",
        abort_reason: None,
        pe_abort: false,
        m: 0,
        pair_key_len: 0,
        final_len: 0,
        predicted_len: 0,
        leak_ec: 0,
        repeat_len: None,
        ratio: None,
        error: String::new(),
    };
    let outcome = cfg.check().and_then(|_| cfg.scenario()).and_then(|sc| protocols::run(&sc, cfg.protocol).map(|o| (sc, o)));
    let (sc, o) = match outcome {
        Ok(x) => x,
        Err(e) => {
            row.error = e.to_string();
            return row;
        }
    };
    row.status = if o.success() { "success" } else { "abort" };
    row.abort_reason = o.abort;
    row.pe_abort = o.pairs.iter().any(|p| matches!(p.abort, Some(AbortReason::EstimateTooNoisy | AbortReason::EmptyEstimate)));
    row.m = o.m;
    row.pair_key_len = o.n_len;
    row.final_len = o.final_len;
    row.leak_ec = o.leak_ec;
    row.predicted_len = match cfg.protocol {
        ProtocolKind::Protocol1 | ProtocolKind::Protocol3 => o.m.saturating_sub(o.t_used) * o.n_len,
        ProtocolKind::Alt => (o.m.saturating_sub(2 * cfg.t_a) * o.n_len).saturating_sub(sc.params.hash_len()),
        ProtocolKind::Protocol2 | ProtocolKind::Naive => o.n_len,
    };
    if cfg.protocol == ProtocolKind::Alt {
        row.repeat_len = Some(sc.units_a * o.n_len);
        row.ratio = o.repeat_ratio;
    }
    row
}

/// Runs every cell (in parallel) and returns rows in grid order.
pub fn sweep(base: &ScenarioConfig, axes: &[Axis]) -> Vec<SweepRow> {
    cells(base, axes).par_iter().map(run_cell).collect()
}

pub fn write_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
    }
    out.flush().map_err(|e| Error::InvalidParameter(format!("csv: {e}")))
}
