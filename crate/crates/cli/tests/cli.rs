use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bec-mirror"));
    c.env_remove("BEC_MIRROR_CONSTANTS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const STABLE_CONFIG: &str = r#"{
    "cavity_length": 1e-3, "laser_wavelength": 1e-6, "laser_power": 0.05,
    "finesse": 1e4, "mirror_mass": 4e-12, "mirror_frequency": 6283185.307179586,
    "mirror_damping": 628.3185307179587, "temperature": 1e-5, "mirror_coupling": 1.0,
    "bec_coupling": 1.0, "effective_detuning": 12566370.614359172,
    "bec_frequency": 6283185.307179586
}"#;

const ENTANGLED_MODEL: &str = r#"{"omega_m":1.0,"omega_a":0.31,"gamma":0.57,"kappa":0.16,
    "delta":-5.7,"g_mc_eff":3.4,"g_ac_eff":4.5,"n_th":0.0,"n_c":0.0}"#;

#[test]
fn sweep_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = run(&["sweep", "--axis", "temperature:1e-7:1e-3:100:log", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    assert!(text.starts_with("# schema: bec-mirror-sweep/1\n# constants: CODATA-2018\n# config-sha256: "));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 101);
}

#[test]
fn single_point_sweep_matches_entangle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", STABLE_CONFIG);
    let out = dir.path().join("s.json");
    let o = run(&[
        "sweep", "--config", &cfg, "--axis", "delta:12566370.614359172:12566370.614359172:2",
        "--out", out.to_str().unwrap(), "--format", "json",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sweep: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let ent = json(&run(&["entangle", "--config", &cfg]));
    assert_eq!(sweep["rows"][0]["code"], "OK");
    assert_eq!(sweep["rows"][0]["log_negativity"], ent["entanglement"]["log_negativity"]);
    assert_eq!(sweep["rows"][0]["nu_minus"], ent["entanglement"]["nu_minus"]);
}

#[test]
fn failed_points_set_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let o = run(&["sweep", "--axis", "cavity_length:-1e-3:1e-3:2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.contains(",INVALID,"));
}

#[test]
fn unstable_covariance_is_an_error() {
    let o = run(&["covariance"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("UNSTABLE"));
    let s = json(&run(&["stability"]));
    assert_eq!(s["is_stable"], false);
    assert_eq!(s["reduced_condition_pass"], true);
}

#[test]
fn derive_reports_cavity_decay() {
    let v = json(&run(&["derive"]));
    let kappa = v["derived"]["kappa"].as_f64().unwrap();
    assert!((kappa - 4.709_128_918e7).abs() < 1.0, "{kappa}");
}

#[test]
fn hz_flag_converts_frequencies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "hz.json",
        &STABLE_CONFIG
            .replace("6283185.307179586", "1e6")
            .replace("628.3185307179587", "100")
            .replace("12566370.614359172", "2e6")
            .replace("\"mirror_coupling\": 1.0", "\"mirror_coupling\": 0.15915494309189535")
            .replace("\"bec_coupling\": 1.0", "\"bec_coupling\": 0.15915494309189535"),
    );
    let angular = write(dir.path(), "rad.json", STABLE_CONFIG);
    let a = json(&run(&["effective", "--config", &cfg, "--hz"]));
    let b = json(&run(&["effective", "--config", &angular]));
    let (x, y) = (a["g_ma"].as_f64().unwrap(), b["g_ma"].as_f64().unwrap());
    assert!((x - y).abs() < 1e-9 * y.abs(), "{x} {y}");
}

#[test]
fn model_file_and_entanglement() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", ENTANGLED_MODEL);
    let v = json(&run(&["entangle", "--model", &model]));
    let en = v["entanglement"]["log_negativity"].as_f64().unwrap();
    assert!((en - 0.11305).abs() < 1e-4, "{en}");
}

#[test]
fn homodyne_sim_writes_records() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", ENTANGLED_MODEL);
    let rec = dir.path().join("r.csv");
    let traj = dir.path().join("t.csv");
    let v = json(&run(&[
        "homodyne-sim", "--model", &model, "--horizon", "500",
        "--records", rec.to_str().unwrap(), "--trajectory", traj.to_str().unwrap(),
    ]));
    assert!(v["reconstructed"]["log_negativity"].is_number());
    assert_eq!(v["probes"].as_array().unwrap().len(), 4);
    let r = std::fs::read_to_string(rec).unwrap();
    assert!(r.starts_with("t,X1,X2,X3,X4\n"));
    let t = std::fs::read_to_string(traj).unwrap();
    assert_eq!(t.lines().nth(1), Some("t,q_m,p_m,q_a,p_a,q_c,p_c"));
}

#[test]
fn sde_verify_passes_at_entangled_point() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", ENTANGLED_MODEL);
    let v = json(&run(&["sde-verify", "--model", &model]));
    assert_eq!(v["covariance_pass"], true);
    assert_eq!(v["log_negativity_pass"], true);
}

#[test]
fn constants_pin_is_enforced() {
    let o = bin().env("BEC_MIRROR_CONSTANTS", "CODATA-2014").arg("derive").output().unwrap();
    assert!(!o.status.success());
    let ok = bin().env("BEC_MIRROR_CONSTANTS", "CODATA-2018").arg("derive").output().unwrap();
    assert!(ok.status.success());
}

#[test]
fn bad_axis_is_rejected() {
    let o = run(&["sweep", "--axis", "G_mc:0:1:3", "--out", "/dev/null"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("derived"));
}
