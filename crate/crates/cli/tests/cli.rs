use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_flowmm"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], threads: Option<usize>) -> Output {
    let mut cmd = bin();
    cmd.args(args);
    if let Some(n) = threads {
        cmd.env("RAYON_NUM_THREADS", n.to_string());
    }
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().skip(1).map(String::from).collect()
}

const SMALL_EXEC: &str = r#"
seed = 9

[model]
kind = "exponential"
gamma = 1.0

[penalty]
phi = 0.04
terminal = 0.04

[exec]
n_trials = 4
n_grid = 21
flow_mean = 20.0
flow_spread = 10.0
imbalance = 30.0
q0_exec = 40.0

[grid]
n_q = 101
"#;

#[test]
fn impact_sweep_writes_twenty_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = configs().join("impact_constant.cfg");
    let o = run(&["impact-sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = rows(&out.join("impact.csv"));
    assert_eq!(r.len(), 20);
    assert!(r[0].starts_with("0,0,1"));
    assert!(out.join("plot.py").exists() && out.join("fit.csv").exists());
}

#[test]
fn as_compare_writes_three_row_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = configs().join("value_compare.cfg");
    let o = run(&["as-compare", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = rows(&out.join("compare.csv"));
    assert_eq!(r.len(), 3);
    let gaps: Vec<f64> = r.iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2]);
}

#[test]
fn missing_config_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("nope.cfg");
    let o = run(&["riccati", "--config", missing.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.starts_with("error[config]: ") && err.trim_end().lines().count() == 1, "{err}");
    assert!(!out.exists());
}

#[test]
fn unknown_key_and_wrong_model_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, SMALL_EXEC.replace("n_q = 101", "n_q = 101\nbogus = 1")).unwrap();
    let o = run(&["exec-eval", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"));

    let riccati = fs::read_to_string(configs().join("riccati.cfg")).unwrap();
    fs::write(&cfg, riccati.replace("kind = \"linear\"\nzeta = 1.0", "kind = \"exponential\"")).unwrap();
    let o = run(&["riccati", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = run(&["riccati"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[config]: "));
}

#[test]
fn numeric_failure_exits_3_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("narrow.cfg");
    let text = fs::read_to_string(configs().join("fbsde.cfg")).unwrap();
    fs::write(&cfg, text.replace("half_width = 15.0", "half_width = 0.01").replace("check_q0 = [-5.0, 0.0, 5.0]\n", ""))
        .unwrap();
    let out = dir.path().join("out");
    let o = run(&["solve-fbsde", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error[numeric]: "));
    assert!(!out.exists());
}

#[test]
fn outputs_are_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exec.cfg");
    fs::write(&cfg, SMALL_EXEC).unwrap();
    let mut results = Vec::new();
    for threads in [1, 4] {
        let out = dir.path().join(format!("out{threads}"));
        let o = run(&["exec-eval", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], Some(threads));
        assert!(o.status.success(), "{}", stderr(&o));
        results.push((fs::read(out.join("trials.csv")).unwrap(), fs::read(out.join("summary.csv")).unwrap()));
    }
    assert_eq!(results[0], results[1]);
    assert_eq!(rows(&dir.path().join("out1/trials.csv")).len(), 4);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("riccati.cfg");
    let go = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = run(&["riccati", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()], None);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read_to_string(out.join("coefficients.csv")).unwrap()
    };
    assert_eq!(go("3", "a"), go("3", "b"));
    assert_ne!(go("3", "a"), go("4", "c"));
}

#[test]
fn solve_hjb_writes_surface_and_fk_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("hjb.cfg");
    let text = fs::read_to_string(configs().join("hjb.cfg")).unwrap();
    fs::write(&cfg, text.replace("n_l = 97\nn_t = 401", "n_l = 25\nn_t = 41").replace("n_paths = 2000\nn_steps = 200", "n_paths = 200\nn_steps = 40"))
        .unwrap();
    let out = dir.path().join("out");
    let o = run(&["solve-hjb", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(rows(&out.join("surface.csv")).len(), 25 * 41);
    assert_eq!(rows(&out.join("fk.csv")).len(), 9 * 21);
    let header = fs::read_to_string(out.join("surface.csv")).unwrap();
    assert!(header.starts_with("t,l,h2,h1,h0\n"));
}
