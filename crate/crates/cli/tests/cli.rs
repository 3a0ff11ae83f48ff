use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
[scenario]
kind = "static"
ues = 3
bss = 2
horizon = 12

[run]
algorithms = ["lda", "maxsinr", "oracle"]
seeds = 2
"#;

fn ldasim(args: &[&str], out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ldasim"));
    cmd.args(args).env_remove("LDASIM_OUT_DIR");
    if let Some(dir) = out {
        cmd.env("LDASIM_OUT_DIR", dir);
    }
    cmd.output().unwrap()
}

fn config(dir: &Path, body: &str) -> String {
    let p = dir.join("exp.toml");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn run_writes_metrics_to_env_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), TINY);
    let out = dir.path().join("env-out");
    let o = ldasim(&["run", &cfg], Some(&out));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let slots = fs::read_to_string(out.join("slots.csv")).unwrap();
    assert!(slots.starts_with("slot,algorithm,seed,"));
    // 3 algorithms x 2 seeds x 12 slots plus the header.
    assert_eq!(slots.lines().count(), 1 + 3 * 2 * 12);
    assert!(out.join("summary.json").exists());
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), TINY);
    let out = dir.path().join("flag-out");
    let o = ldasim(
        &[
            "run", &cfg, "--seeds", "7,8,9", "--algorithms", "random", "--format", "json",
            "--out-dir", out.to_str().unwrap(),
        ],
        Some(&dir.path().join("ignored")),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("slots.json").exists());
    assert!(!dir.path().join("ignored").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary.to_string().contains("\"random\""));
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "[scenario]\nhorizn = 4\n");
    let o = ldasim(&["run", &cfg], Some(dir.path()));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("scenario.horizn"));

    let cfg = config(dir.path(), TINY);
    let o = ldasim(&["run", &cfg, "--algorithms", "bogus"], Some(dir.path()));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn oracle_refusal_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "[scenario]\nues = 12\nbss = 4\nhorizon = 5\n[run]\nalgorithms = [\"maxsinr\", \"oracle\"]\nseeds = 1\n",
    );
    let o = ldasim(&["oracle", &cfg], Some(dir.path()));
    assert_eq!(o.status.code(), Some(2));
    // The run still completes the other algorithms before reporting the refusal.
    let o = ldasim(&["run", &cfg], Some(&dir.path().join("r")));
    assert_eq!(o.status.code(), Some(2));
    assert!(dir.path().join("r/slots.csv").exists());
}

#[test]
fn missing_files_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let o = ldasim(&["run", missing.to_str().unwrap()], Some(dir.path()));
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn oracle_writes_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), TINY);
    let o = ldasim(&["oracle", &cfg], Some(dir.path()));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("oracle.json")).unwrap()).unwrap();
    assert!(v["total_f"].is_number());
}

#[test]
fn sweep_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), TINY);
    let out = dir.path().join("sweep");
    let o = ldasim(&["sweep", &cfg, "--gamma", "0,5", "--algorithms", "lda,maxsinr"], Some(&out));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("gamma,algorithm,cum_g"));
    assert!(out.join("sweep.csv").exists());

    fs::write(dir.path().join("bs.csv"), "bs_id,bandwidth_hz,tx_power_w,rat,freq_group,x_m,y_m\n0,1e7,20,2G,0,,\n").unwrap();
    fs::write(dir.path().join("sinr.csv"), "slot,ue_id,bs_id,sinr_db\n0,0,0,3\n2,0,0,4\n").unwrap();
    let o = ldasim(
        &[
            "validate",
            dir.path().join("sinr.csv").to_str().unwrap(),
            "--bs",
            dir.path().join("bs.csv").to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("imputed_cells=1"));

    fs::write(dir.path().join("sinr.csv"), "slot,ue_id,bs_id,sinr_db\n0,0,0,oops\n").unwrap();
    let o = ldasim(
        &[
            "validate",
            dir.path().join("sinr.csv").to_str().unwrap(),
            "--bs",
            dir.path().join("bs.csv").to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sinr.csv:2:"));
}
