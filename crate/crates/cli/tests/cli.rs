use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;

use kpo_cli::RunConfig;
use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kpoqa"))
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

/// Small single-KPO run that finishes in well under a second.
fn small_config() -> Value {
    json!({
        "name": "small",
        "network": { "chi": [1.0], "detuning": [1.0], "pump": [1.0], "coherent_drive": [1.0] },
        "cutoffs": [8],
        "schedule": { "t_ann": 20.0, "s1": 0.5, "lambda": 0.5 },
        "level": 1,
        "observable": { "kind": "n", "mode": 0 },
        "sweep": {
            "omega": { "start": 0.8, "stop": 1.2, "points": 5, "unit": "gap" },
            "tau": { "start": 0.0, "stop": 100.0, "points": 201 }
        },
        "numerics": { "dwell_window": 8.0 }
    })
}

fn write_config(dir: &Path, v: &Value) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> (i32, String) {
    let o = bin().arg(cmd).arg("--config").arg(config).arg("--out").arg(out).args(extra).output().unwrap();
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stderr).into_owned())
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small_config();
    v["schedule"]["lamda"] = json!(0.1);
    let (code, err) = run("oracle", &write_config(dir.path(), &v), &dir.path().join("o"), &[]);
    assert_eq!(code, 2);
    assert!(err.contains("unknown field `lamda`"), "{err}");
    assert!(err.contains("line"), "diagnostic should carry a position: {err}");
}

#[test]
fn negative_loss_rate_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small_config();
    v["network"]["gamma"] = json!(-0.1);
    let (code, err) = run("oracle", &write_config(dir.path(), &v), &dir.path().join("o"), &[]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn missing_file_and_bad_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = run("oracle", &dir.path().join("absent.json"), &dir.path().join("o"), &[]);
    assert_eq!(code, 2);
    for (path, value) in [("/cutoffs", json!([8, 8])), ("/observable/mode", json!(3)), ("/sweep/tau/points", json!(0))] {
        let mut v = small_config();
        *v.pointer_mut(path).unwrap() = value;
        assert!(RunConfig::parse(&v.to_string()).is_err(), "{path}");
    }
}

#[test]
fn coarse_dwell_sampling_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small_config();
    v["sweep"]["tau"] = json!({ "start": 0.0, "stop": 100.0, "points": 5 });
    let (code, err) = run("sweep", &write_config(dir.path(), &v), &dir.path().join("o"), &[]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("Nyquist"), "{err}");
}

#[test]
fn single_point_sweep_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small_config();
    v["sweep"] = json!({
        "omega": { "start": 1.0, "stop": 1.0, "points": 1, "unit": "gap" },
        "tau": { "start": 5.0, "stop": 5.0, "points": 1 }
    });
    let out = dir.path().join("o");
    let (code, err) = run("sweep", &write_config(dir.path(), &v), &out, &[]);
    assert_eq!(code, 0, "{err}");
    let signal = std::fs::read_to_string(out.join("signal.csv")).unwrap();
    let lines: Vec<&str> = signal.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "omega,tau,expectation");
    assert_eq!(std::fs::read_to_string(out.join("spectrum.csv")).unwrap(), "omega,Omega,power\n");
}

#[test]
fn csv_layout_and_number_format() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let (code, err) = run("sweep", &write_config(dir.path(), &small_config()), &out, &[]);
    assert_eq!(code, 0, "{err}");
    let num = |s: &str| {
        let (m, e) = s.split_once('e').unwrap();
        let m = m.strip_prefix('-').unwrap_or(m);
        assert!(m.len() == 14 && m.as_bytes()[1] == b'.', "mantissa {s}");
        assert!((e.starts_with('+') || e.starts_with('-')) && e.len() >= 3, "exponent {s}");
        s.parse::<f64>().unwrap()
    };
    for (file, header, rows) in [("signal.csv", "omega,tau,expectation", 5 * 201), ("spectrum.csv", "omega,Omega,power", 5 * 4 * 200)] {
        let text = std::fs::read_to_string(out.join(file)).unwrap();
        assert!(!text.contains('\r'));
        assert!(text.ends_with('\n'));
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(header));
        let body: Vec<&str> = lines.collect();
        assert_eq!(body.len(), rows, "{file}");
        for l in &body {
            let cols: Vec<&str> = l.split(',').collect();
            assert_eq!(cols.len(), 3);
            cols.iter().for_each(|c| assert!(num(c).is_finite()));
        }
    }
}

#[test]
fn rerun_and_metadata_round_trip_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_config());
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(run("sweep", &cfg, &a, &[]).0, 0);
    assert_eq!(run("sweep", &cfg, &b, &["--threads", "2"]).0, 0);
    assert_eq!(run("sweep", &a.join("metadata.json"), &c, &[]).0, 0);
    for file in ["signal.csv", "spectrum.csv"] {
        let first = std::fs::read(a.join(file)).unwrap();
        assert_eq!(first, std::fs::read(b.join(file)).unwrap(), "{file} depends on threads");
        assert_eq!(first, std::fs::read(c.join(file)).unwrap(), "{file} differs after metadata rerun");
    }
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(a.join("metadata.json")).unwrap()).unwrap();
    let embedded: RunConfig = serde_json::from_value(meta["config"].clone()).unwrap();
    assert_eq!(embedded, RunConfig::parse(&small_config().to_string()).unwrap());
    assert_eq!(meta["run"]["spectrum"]["window"], "hann");
    assert_eq!(meta["run"]["tau"]["points"], 201);
}

#[test]
fn excluded_gap_is_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small_config();
    v["sweep"]["omega"] = json!({ "start": 0.5, "stop": 0.7, "points": 5, "unit": "gap" });
    let out = dir.path().join("o");
    let (code, err) = run("estimate", &write_config(dir.path(), &v), &out, &[]);
    assert_eq!(code, 3, "{err}");
    let est: Value = serde_json::from_str(&std::fs::read_to_string(out.join("estimate.json")).unwrap()).unwrap();
    assert_eq!(est["status"], "inconclusive");
    assert!(est["value_est"].is_null());
}

#[test]
fn estimate_reports_both_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let (code, err) = run("estimate", &write_config(dir.path(), &small_config()), &out, &[]);
    assert_eq!(code, 0, "{err}");
    let est: Value = serde_json::from_str(&std::fs::read_to_string(out.join("estimate.json")).unwrap()).unwrap();
    for key in ["value_est", "numerator_est", "gap_est", "value_exact", "relative_error"] {
        assert!(est[key].as_f64().unwrap().is_finite(), "{key}");
    }
    assert_eq!(est["config"]["name"], "small");
}

#[test]
fn oracle_summary_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let (code, err) = run("oracle", &bundled("one_kpo.json"), &out, &[]);
    assert_eq!(code, 0, "{err}");
    let s: Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let cfg = RunConfig::load(&bundled("one_kpo.json")).unwrap();
    let m = kpo_core::oracle::adiabatic_metric_exact(&cfg.params().unwrap(), &cfg.space().unwrap(), &cfg.schedule(0.0, 0.0), 1).unwrap();
    assert_eq!(s["value_exact"].as_f64().unwrap(), m.value);
    assert_eq!(s["gap"].as_f64().unwrap(), m.gap);
    let target = &s["lines"]["target"];
    assert!((target["coupling"].as_f64().unwrap() - 0.1 * m.numerator).abs() < 1e-15);
    assert_eq!(s["curves"]["omega"].as_array().unwrap().len(), 41);
    assert!(s["lines"]["pair"].is_object() && s["lines"]["two_photon"].is_object());
}

#[test]
fn validate_passes_on_bundled_configs_and_fails_on_coarse_cutoff() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["one_kpo.json", "two_kpo.json"] {
        let (code, err) = run("validate", &bundled(name), &dir.path().join(name), &[]);
        assert_eq!(code, 0, "{name}: {err}");
    }
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(bundled("two_kpo.json")).unwrap()).unwrap();
    v["cutoffs"] = json!([4, 4]);
    let out = dir.path().join("coarse");
    let (code, err) = run("validate", &write_config(dir.path(), &v), &out, &[]);
    assert_eq!(code, 4, "{err}");
    assert!(err.contains("cutoff_convergence"), "{err}");
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("validate.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], false);
}

fn schema_keys(schema: &Value, prefix: &str, out: &mut BTreeSet<String>) {
    if let Some(props) = schema.get("properties").and_then(Value::as_object) {
        for (k, sub) in props {
            let path = format!("{prefix}/{k}");
            out.insert(path.clone());
            schema_keys(sub, &path, out);
            if let Some(items) = sub.get("items") {
                schema_keys(items, &path, out);
            }
        }
    }
}

fn value_keys(v: &Value, prefix: &str, out: &mut BTreeSet<String>) {
    match v {
        Value::Object(map) => {
            for (k, sub) in map {
                let path = format!("{prefix}/{k}");
                out.insert(path.clone());
                value_keys(sub, &path, out);
            }
        }
        Value::Array(items) => items.iter().filter(|i| i.is_object()).for_each(|i| value_keys(i, prefix, out)),
        _ => {}
    }
}

#[test]
fn published_schema_covers_every_config_key() {
    let schema: Value = serde_json::from_str(
        &std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/run_config.schema.json")).unwrap(),
    )
    .unwrap();
    let mut declared = BTreeSet::new();
    schema_keys(&schema, "", &mut declared);
    // The two-mode config exercises the coupling entries.
    let cfg = RunConfig::load(&bundled("two_kpo.json")).unwrap();
    let mut emitted = BTreeSet::new();
    value_keys(&serde_json::to_value(&cfg).unwrap(), "", &mut emitted);
    assert_eq!(declared, emitted);
}
