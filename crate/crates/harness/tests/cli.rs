use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_qkdvss"));
    c.env_remove("QKDVSS_OUT_DIR");
    c
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p
}

fn run(dir: &Path, config: &Path, out: &str, extra: &[&str]) -> Output {
    bin().arg("run").arg("--config").arg(config).arg("--out-dir").arg(dir.join(out)).args(extra).output().unwrap()
}

fn metrics(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("metrics.json")).unwrap()).unwrap()
}

fn audit(transcript: &Path, config: &Path) -> Output {
    bin().arg("audit").arg("--transcript").arg(transcript).arg("--config").arg(config).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_csv(path: &Path) -> Vec<std::collections::HashMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    r.records().map(|rec| headers.iter().zip(rec.unwrap().iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect()).collect()
}

#[test]
fn honest_protocol1_run_succeeds() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "p1.json", r#"{"version": 1, "protocol": "protocol1", "n": 3, "t": 1}"#);
    let o = run(tmp.path(), &cfg, "out", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = metrics(&tmp.path().join("out"));
    assert_eq!(m["status"], "success");
    assert!(m["final_len"].as_u64().unwrap() > 0);
    assert_eq!(m["keys_agree"], true);
    for f in ["metrics.json", "timings.json", "transcript.jsonl"] {
        assert!(tmp.path().join("out").join(f).exists(), "{f}");
    }
}

#[test]
fn infeasible_adversary_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", r#"{"version": 1, "protocol": "protocol2", "t_b": 2}"#);
    let o = run(tmp.path(), &cfg, "out", &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("infeasible adversary"), "{err}");
    assert!(!tmp.path().join("out").join("metrics.json").exists());
}

#[test]
fn runs_are_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "p3.json",
        r#"{"version": 1, "protocol": "protocol3", "n": 3, "t": 1, "seed": 5,
            "corruption": [{"party": "CP_B2", "strategy": "flip_all"}]}"#,
    );
    assert_eq!(run(tmp.path(), &cfg, "a", &[]).status.code(), Some(0));
    assert_eq!(run(tmp.path(), &cfg, "b", &[]).status.code(), Some(0));
    for f in ["metrics.json", "transcript.jsonl"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs between identical runs");
    }
    assert_eq!(run(tmp.path(), &cfg, "c", &["--seed", "6"]).status.code(), Some(0));
    assert_ne!(fs::read(tmp.path().join("a/metrics.json")).unwrap(), fs::read(tmp.path().join("c/metrics.json")).unwrap());
}

#[test]
fn honest_protocol2_transcript_passes_audit() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "p2.json", r#"{"version": 1, "protocol": "protocol2"}"#);
    assert_eq!(run(tmp.path(), &cfg, "out", &[]).status.code(), Some(0));
    let o = audit(&tmp.path().join("out/transcript.jsonl"), &cfg);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    for check in ["correctness", "structural_secrecy", "channel_secrecy", "leak_recount"] {
        assert!(text.contains(&format!("{check}: Pass")), "{text}");
    }
    assert!(text.contains("extractor_rank: NotApplicable"), "{text}");
}

#[test]
fn over_corruption_fails_structural_secrecy() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "over.json",
        r#"{"version": 1, "protocol": "protocol2", "allow_illegal_corruption": true,
            "corruption": [{"party": "CP_A1", "strategy": "passive"},
                           {"party": "CP_A2", "strategy": "passive"}]}"#,
    );
    run(tmp.path(), &cfg, "out", &[]);
    let o = audit(&tmp.path().join("out/transcript.jsonl"), &cfg);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(stdout(&o).contains("structural_secrecy: Fail"), "{}", stdout(&o));
}

#[test]
fn naive_transcript_fails_correctness() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "naive.json",
        r#"{"version": 1, "protocol": "naive", "n": 3, "s": 3, "r": 3,
            "corruption": [{"party": "CP_B1", "strategy": "flip_all"}]}"#,
    );
    assert_eq!(run(tmp.path(), &cfg, "out", &[]).status.code(), Some(0));
    let o = audit(&tmp.path().join("out/transcript.jsonl"), &cfg);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(stdout(&o).contains("correctness: Fail"), "{}", stdout(&o));
}

#[test]
fn malformed_transcript_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "p2.json", r#"{"version": 1, "protocol": "protocol2"}"#);
    let t = tmp.path().join("transcript.jsonl");
    fs::write(&t, "{\"round\": 1}\n").unwrap();
    let o = audit(&t, &cfg);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn protocol1_sweep_matches_length_formula() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "p1.json", r#"{"version": 1, "protocol": "protocol1"}"#);
    let o = bin()
        .args(["sweep", "--grid", "n=2..5,t=0..4", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(tmp.path().join("s"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&tmp.path().join("s/sweep.csv"));
    assert_eq!(rows.len(), 14);
    for r in &rows {
        assert_eq!(r["status"], "success", "{r:?}");
        assert_eq!(r["final_len"], r["predicted_len"], "{r:?}");
    }
}

#[test]
fn alt_sweep_ratio_approaches_two() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "alt.json",
        r#"{"version": 1, "protocol": "alt", "eps_cor": 1e-6, "eps_sec": 1e-6, "epsilon": 1e-5}"#,
    );
    let o = bin()
        .args(["sweep", "--grid", "s=4,t_a=1", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(tmp.path().join("s"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&tmp.path().join("s/sweep.csv"));
    let r = &rows[0];
    let final_len: f64 = r["final_len"].parse().unwrap();
    let pair: f64 = r["pair_key_len"].parse().unwrap();
    let ratio: f64 = r["ratio"].parse().unwrap();
    assert_eq!(r["final_len"], r["predicted_len"]);
    // s = 4, t' = 1: target s / (s - 2t') = 2, inflated only by the hash term.
    let hash = 2.0 * pair - final_len;
    assert!(hash > 0.0);
    assert!(ratio >= 2.0 - 1e-12 && ratio <= 2.0 + 2.0 * hash / final_len + 1e-12, "{ratio}");
}

#[test]
fn qber_sweep_crosses_the_abort_threshold() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "q.json", r#"{"version": 1, "protocol": "protocol1", "pulses": 20000}"#);
    let o = bin()
        .args(["sweep", "--grid", "qber=0.02|0.06|0.09|0.13|0.16|0.2", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(tmp.path().join("s"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let rows = read_csv(&tmp.path().join("s/sweep.csv"));
    let flags: Vec<&str> = rows.iter().map(|r| r["pe_abort"].as_str()).collect();
    assert_eq!(flags, ["false", "false", "false", "true", "true", "true"]);
    assert!(rows[..3].iter().all(|r| r["status"] == "success"));
    assert!(rows[3..].iter().all(|r| r["final_len"] == "0"));
}

#[test]
fn memory_attack_demo() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "demo.json",
        r#"{"version": 1, "protocol": "protocol1", "pulses": 3000, "memory": "0110",
            "modules": [{"memory_attack": {"permutation": []}}]}"#,
    );
    let o = bin().arg("demo-memory-attack").arg("--config").arg(&cfg).arg("--out-dir").arg(tmp.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let d: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("demo.json")).unwrap()).unwrap();
    assert_eq!(d["baseline"]["bits_recovered"], 4);
    assert_eq!(d["baseline_recovered_all"], true);
    assert_eq!(d["countermeasure_uniform"], true);
    assert_eq!(d["all_corrupted_final_len"], 0);
}
