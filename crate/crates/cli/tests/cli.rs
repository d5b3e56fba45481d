use std::path::Path;
use std::process::{Command, Output};

fn aci(args: &[&str], env_out: Option<&Path>, cwd: &Path) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_aci"));
    c.args(args).current_dir(cwd).env_remove("ACI_OUT_DIR");
    if let Some(p) = env_out {
        c.env("ACI_OUT_DIR", p);
    }
    c.output().expect("binary runs")
}

const SMALL: [&str; 4] = ["--set", "horizon=400", "--set", "replications=2"];

fn preset_args<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["preset", "ablation"];
    v.extend_from_slice(&SMALL);
    v.extend_from_slice(extra);
    v
}

#[test]
fn preset_writes_results_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = aci(&preset_args(&["--seed", "5", "--out", out.to_str().unwrap()]), None, tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let root = out.join("ablation");
    assert!(root.join("manifest.json").is_file());
    for f in ["metrics.json", "delays.csv", "budget.csv", "switches.csv", "backlog_trace.csv", "config.toml"] {
        assert!(root.join("aci/seed-5").join(f).is_file(), "{f}");
    }
    assert!(root.join("mw/seed-6/metrics.json").is_file());
    assert!(String::from_utf8_lossy(&o.stdout).contains("aci-no-penalty"));
}

#[test]
fn output_root_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let env_dir = tmp.path().join("env");
    let flag_dir = tmp.path().join("flag");

    // flag beats env
    let o = aci(&preset_args(&["--out", flag_dir.to_str().unwrap()]), Some(&env_dir), tmp.path());
    assert!(o.status.success());
    assert!(flag_dir.join("ablation/manifest.json").is_file());
    assert!(!env_dir.exists());

    // env beats default
    let o = aci(&preset_args(&[]), Some(&env_dir), tmp.path());
    assert!(o.status.success());
    assert!(env_dir.join("ablation/manifest.json").is_file());
    assert!(!tmp.path().join("results").exists());

    let o = aci(&preset_args(&[]), None, tmp.path());
    assert!(o.status.success());
    assert!(tmp.path().join("results/ablation/manifest.json").is_file());
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = aci(&["preset", "nope"], None, tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("delay-cdf") && err.contains("time-budget"), "{err}");

    let o = aci(&["preset", "ablation", "--set", "betta=1"], None, tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("betta"));

    let o = aci(&["preset", "ablation", "--set", "beta=-1"], None, tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("beta"));

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[policy]\nbeta = \"x\"\n").unwrap();
    assert_eq!(aci(&["run", bad.to_str().unwrap()], None, tmp.path()).status.code(), Some(2));
    assert_eq!(aci(&["run", "missing.toml"], None, tmp.path()).status.code(), Some(2));
    assert_eq!(aci(&["bogus-verb"], None, tmp.path()).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(aci(&["report", empty.to_str().unwrap()], None, tmp.path()).status.code(), Some(3));

    // output root is a file
    let file = tmp.path().join("f");
    std::fs::write(&file, "").unwrap();
    let o = aci(&preset_args(&["--out", file.to_str().unwrap()]), None, tmp.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn run_config_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.toml");
    std::fs::write(&cfg, "scenario = \"mine\"\nhorizon = 500\nreplications = 3\n\n[policy]\nbeta = 0.5\n").unwrap();
    let out = tmp.path().join("o");
    let o = aci(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None, tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let echoed = std::fs::read_to_string(out.join("mine/seed-1/config.toml")).unwrap();
    assert!(echoed.contains("beta = 0.5"));
    assert!(out.join("mine/manifest.json").is_file());

    let json = tmp.path().join("report.json");
    let o = aci(&["report", out.to_str().unwrap(), "--json", json.to_str().unwrap()], None, tmp.path());
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("mine/aci/fso"));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(r["groups"][0]["seeds"].as_array().unwrap().len(), 3);
}
