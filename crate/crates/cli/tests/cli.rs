use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdp")).args(args).output().expect("spawn hdp")
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn run_writes_series_snapshot_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = hdp(&[
        "run", "--system", "vp-bgk", "--method", "hdp", "--nx", "20", "--neff", "1e-4", "--t-end", "0.1",
        "--snapshot-times", "0.05", "--out", out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["energy_series.csv", "snapshot_0.05.csv", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let m = manifest(dir.path());
    assert_eq!(m["scenario"]["system"], "vp-bgk");
    assert_eq!(m["n_steps"], 2);
}

#[test]
fn missing_system_or_method_exits_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = hdp(&["run", "--method", "hdp", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--system"));
    assert!(!dir.path().join("energy_series.csv").exists());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "[scenario]\nsystem = \"vpl\"\nmethod = \"pic-dsmc\"\nn_x = 16\nn_eff_c = 1e-3\nt_end = 0.05\nalpha = 0.2\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = hdp(&["run", "--config", cfg.to_str().unwrap(), "--t-end", "0.1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["scenario"]["method"], "pic-dsmc");
    assert_eq!(m["scenario"]["n_x"], 16);
    assert_eq!(m["scenario"]["alpha"], 0.2);
    assert_eq!(m["scenario"]["t_end"], 0.1);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[scenario]\nsystem = \"vpl\"\nmethod = \"hdp\"\nnx = 10\n").unwrap();
    let o = hdp(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.toml"));
}

#[test]
fn invalid_parameters_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = hdp(&["run", "--system", "vpl", "--method", "hdp", "--alpha", "1.5", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha"));
}

#[test]
fn sweep_writes_table_with_fitted_slope() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    fs::write(&cfg, "[sweep]\nneff_factors = [4.0, 2.0, 1.0]\nneff_reference_factor = 0.5\n").unwrap();
    let o = hdp(&[
        "sweep", "--kind", "convergence_neff", "--config", cfg.to_str().unwrap(), "--system", "vp-bgk", "--method",
        "hdp", "--alpha", "0.2", "--nx", "20", "--neff", "1e-4", "--t-end", "0.2", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(dir.path().join("sweep_convergence_neff.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "label,param,error,wall_s");
    assert_eq!(lines.len(), 5);
    assert!(lines[4].starts_with("# fitted_slope,n_eff,"));
}
