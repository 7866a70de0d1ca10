use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_transonic"));
    c.env_remove("TA_GAS_GAMMA");
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn empty_config_runs_the_asset_background() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.cfg");
    std::fs::write(&cfg, "").unwrap();
    let out = dir.path().join("out");
    let o = run(&["--config", cfg.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(&out);
    assert_eq!(r["mode"], "background");
    assert_eq!(r["config"]["gas"]["gamma"], 1.4);
    assert_eq!(r["passed"], true);
    for f in ["fields.csv", "coefficients.csv", "report.json", "timing.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn gamma_out_of_range_exits_with_parse_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "[gas]\ngamma = 3.5\n").unwrap();
    let o = run(&["background", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    let o = bin().args(["background", "--out"]).arg(dir.path()).env("TA_GAS_GAMMA", "3.5").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("TA_GAS_GAMMA"));

    let o = run(&["background", "--set", "gas.gama=1.3"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn forbidden_l0_exits_with_regime_code_and_prints_interval() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["irrotational", "--set", "spectral.l0=-0.5", "--set", "nr=33"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let e = stderr(&o);
    assert!(e.contains("inadmissible l0 = -0.5") && e.contains("forbidden interval"), "{e}");
}

#[test]
fn iteration_cap_exits_with_nonconvergence_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["irrotational", "--set", "max_iter=1", "--set", "nr=33"], dir.path());
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn identities_preset_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--preset", "background-identities"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(dir.path());
    assert_eq!(r["probes"].as_array().unwrap().len(), 1);
    assert_eq!(r["probes"][0]["name"], "identities");
}

#[test]
fn sweep_schedules_one_child_per_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["sweep", "--set", "epsilon=[1e-3, 2e-3, 4e-3]", "--set", "nr=65"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for eps in ["0.001", "0.002", "0.004"] {
        assert!(dir.path().join(format!("eps-{eps}/fields.csv")).exists());
    }
    let r = report(dir.path());
    assert_eq!(r["results"]["points"].as_array().unwrap().len(), 3);
    let lin = r["probes"].as_array().unwrap().iter().find(|p| p["name"] == "linearity").unwrap();
    assert_eq!(lin["passed"], true);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["rotational", "--set", "nr=33", "--set", "perturbation.b1=cos(theta)"];
    let read = || {
        ["fields.csv", "sonic.csv", "spectrum.csv", "report.json"].map(|f| std::fs::read(dir.path().join(f)).unwrap())
    };
    assert!(run(&args, dir.path()).status.success());
    let first = read();
    assert!(run(&args, dir.path()).status.success());
    assert_eq!(first, read());

    // the thread count only shows up in the configuration echo
    let mut threaded: Vec<&str> = args.to_vec();
    threaded.extend(["--threads", "2"]);
    assert!(run(&threaded, dir.path()).status.success());
    let second = read();
    assert_eq!(first[..3], second[..3]);
    let strip = |b: &[u8]| {
        let mut v: Value = serde_json::from_slice(b).unwrap();
        v["config"]["run"]["threads"] = Value::Null;
        v
    };
    assert_eq!(strip(&first[3]), strip(&second[3]));
}

#[test]
fn json_config_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"run": {"mode": "axisym"}, "domain": {"nr": 17}, "axisym": {"half_length": 8, "n_axial": 129}}"#).unwrap();
    let out = dir.path().join("out");
    let o = run(&["--config", cfg.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(report(&out)["mode"], "axisym");
    assert!(out.join("sonic.csv").exists());
}

#[test]
fn help_documents_keys_and_defaults() {
    let o = bin().arg("--help").output().unwrap();
    let s = String::from_utf8_lossy(&o.stdout);
    assert!(s.contains("gas.gamma") && s.contains("TA_SECTION_KEY") && s.contains("--preset"));
}
