use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bdgchain"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    v.sort();
    v
}

#[test]
fn spectrum_is_byte_identical_across_runs_and_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let common = ["spectrum", "--n-sites", "16", "--omega-min", "-1", "--omega-max", "1", "--omega-count", "9"];
    let ra = bin().args(common).args(["--out", arg(a.path()), "--threads", "1"]).output().unwrap();
    let rb = bin().args(common).args(["--out", arg(b.path())]).env("BDGCHAIN_THREADS", "3").output().unwrap();
    assert!(ra.status.success() && rb.status.success());
    let fa = fs::read(a.path().join("spectrum.csv")).unwrap();
    let fb = fs::read(b.path().join("spectrum.csv")).unwrap();
    assert_eq!(fa, fb);
    let text = String::from_utf8(fa).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# bdgchain "));
    assert_eq!(lines[1], "omega,index,singular_value");
    assert_eq!(lines.len(), 2 + 9 * 32);
    assert!(lines[2].starts_with("-1.0000000000000000e0,0,"));
}

#[test]
fn periodic_spectrum_has_one_row_per_band() {
    let d = tempfile::tempdir().unwrap();
    // the periodic chain needs γ > 6 to be stable
    let out = run(&["spectrum", "--bc", "pbc", "--gamma", "7", "--n-sites", "12", "--omega-count", "3", "--out", arg(d.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(d.path().join("spectrum.csv")).unwrap();
    assert_eq!(text.lines().count(), 2 + 3 * 2);
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let bad = d.path().join("bad.toml");
    fs::write(&bad, "model = 3\n").unwrap();
    assert_eq!(run(&["spectrum", "--config", arg(&bad)]).status.code(), Some(2));
    assert_eq!(run(&["spectrum", "--config", arg(&d.path().join("missing.toml"))]).status.code(), Some(2));
    assert_eq!(run(&["spectrum", "--omega-count", "1"]).status.code(), Some(2));
    // Model I at γ = 1 has gain outrunning loss at the band edge
    let unstable = run(&["spectrum", "--gamma", "1", "--n-sites", "10", "--out", arg(d.path())]);
    assert_eq!(unstable.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&unstable.stderr).contains("unstable"));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn every_output_carries_the_same_header() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.toml");
    fs::write(
        &cfg,
        r#"
model = "model_i"
boundary = "obc"
[params]
n_sites = 6
j = 1.0
g_s = 1.0
g_c = 1.0
delta = 0.0
phi = 1.5707963267948966
gamma = 5.0
[omega_grid]
min = 0.0
max = 2.0
count = 3
[correlations]
omegas = [0.0, 1.0]
equal_time = true
"#,
    )
    .unwrap();
    let out = run(&["correlations", "--config", arg(&cfg), "--out", arg(d.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let names = files(d.path());
    assert!(names.contains(&"lro.csv".to_string()));
    assert!(names.contains(&"freq_1_nbar.csv".to_string()));
    assert!(names.contains(&"equal_time.json".to_string()));
    let mut headers: Vec<String> = names
        .iter()
        .filter(|n| n.as_str() != "c.toml")
        .map(|n| fs::read_to_string(d.path().join(n)).unwrap().lines().next().unwrap().to_string())
        .collect();
    headers.dedup();
    assert_eq!(headers.len(), 1, "{headers:?}");
    let nbar = fs::read_to_string(d.path().join("freq_0_nbar.csv")).unwrap();
    assert_eq!(nbar.lines().nth(1), Some("row,col,re,im,abs"));
    assert_eq!(nbar.lines().count(), 2 + 36);
}

#[test]
fn disorder_writes_sweep_collapse_and_summary() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.toml");
    fs::write(
        &cfg,
        r#"
seed = 5
model = "model_i"
boundary = "obc"
[params]
n_sites = 12
j = 1.0
g_s = 1.0
g_c = 1.0
delta = 0.0
phi = 1.5707963267948966
gamma = 5.0
[omega_grid]
min = 0.0
max = 1.0
count = 2
[disorder]
w_grid = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4]
n_r = 3
observable = { kind = "r", omega = 0.0 }
"#,
    )
    .unwrap();
    let out = run(&["disorder", "--config", arg(&cfg), "--out", arg(d.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sweep = fs::read_to_string(d.path().join("disorder_sweep.csv")).unwrap();
    assert_eq!(sweep.lines().nth(1), Some("W,mean,stderr,n_unstable"));
    assert_eq!(sweep.lines().count(), 2 + 8);
    let collapse = fs::read_to_string(d.path().join("disorder_collapse.csv")).unwrap();
    assert_eq!(collapse.lines().nth(1), Some("W,W_over_sqrt_delta_sg,mean,stderr"));
    let summary = fs::read_to_string(d.path().join("disorder_summary.json")).unwrap();
    let body = summary.split_once('\n').unwrap().1;
    let v: serde_json::Value = serde_json::from_str(body).unwrap();
    assert_eq!(v["data"]["seed"], 5);
    assert!(v["data"]["delta_sg"].as_f64().unwrap() > 0.0);

    // --seed overrides the file and changes the numbers
    let e = tempfile::tempdir().unwrap();
    assert!(run(&["disorder", "--config", arg(&cfg), "--seed", "6", "--out", arg(e.path())]).status.success());
    assert_ne!(sweep, fs::read_to_string(e.path().join("disorder_sweep.csv")).unwrap());
}

#[test]
fn disorder_without_table_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(&["disorder", "--out", arg(d.path())]).status.code(), Some(2));
}

#[test]
fn validate_reports_every_check() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.toml");
    let base = String::from_utf8(run(&["show-config"]).stdout).unwrap();
    let text = base.replace("weyl_trials = 1000", "weyl_trials = 20").replace("n_sites = 40", "n_sites = 8");
    assert_ne!(text, base);
    fs::write(&cfg, text).unwrap();
    let out = run(&["validate", "--config", arg(&cfg), "--out", arg(d.path())]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.lines().filter(|l| l.starts_with("PASS")).count() >= 10);
    assert!(!stdout.contains("FAIL"));
    assert!(d.path().join("validate.json").exists());
}

#[test]
fn show_config_round_trips() {
    let d = tempfile::tempdir().unwrap();
    let first = run(&["show-config", "--model", "model_ii_full", "--n-sites", "20", "--gamma", "3.5"]);
    assert!(first.status.success());
    let cfg = d.path().join("c.toml");
    fs::write(&cfg, &first.stdout).unwrap();
    let second = run(&["show-config", "--config", arg(&cfg)]);
    assert_eq!(first.stdout, second.stdout);
    let text = String::from_utf8(first.stdout).unwrap();
    assert!(text.contains("n_cells = 10") && text.contains("gamma = 3.5"));
}

#[test]
fn winding_json_body() {
    let d = tempfile::tempdir().unwrap();
    let out = run(&["winding", "--gamma", "4", "--omega-min", "-3", "--omega-max", "3", "--out", arg(d.path())]);
    assert!(out.status.success());
    let text = fs::read_to_string(d.path().join("winding.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(text.split_once('\n').unwrap().1).unwrap();
    assert_eq!(v["data"]["nus"], serde_json::json!([0, 1, 0]));
    let c = v["data"]["closings"][1].as_f64().unwrap();
    assert!((c - 3f64.sqrt()).abs() < 1e-3);
}
