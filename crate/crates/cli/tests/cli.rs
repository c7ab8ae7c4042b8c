use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fbspde(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbspde"))
        .args(args)
        .arg("--output-dir")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn schema() -> jsonschema::Validator {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("schema/output.schema.json");
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).expect("schema compiles")
}

fn report(dir: &Path, command: &str) -> Value {
    let text = std::fs::read_to_string(dir.join(format!("{command}.json"))).unwrap();
    let doc: Value = serde_json::from_str(&text).unwrap();
    let errors: Vec<String> = schema().iter_errors(&doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{command}: {errors:?}");
    doc
}

fn column(csv: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(csv).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn kernel_csv_has_unit_mass() {
    let dir = tempfile::tempdir().unwrap();
    let o = fbspde(dir.path(), &["kernel", "--alpha", "1.5", "--A", "1.0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let xs = column(&dir.path().join("kernel.csv"), "x");
    let g = column(&dir.path().join("kernel.csv"), "G");
    let dx = xs[1] - xs[0];
    let mass: f64 = g.iter().sum::<f64>() * dx;
    assert!((mass - 1.0).abs() < 1e-6, "{mass}");
    let doc = report(dir.path(), "kernel");
    assert_eq!(doc["report"]["passed"], true);
    assert_eq!(doc["config"]["kernel"]["A"], 1.0);
}

#[test]
fn line_kernel_accounts_for_its_tails() {
    let dir = tempfile::tempdir().unwrap();
    let o = fbspde(
        dir.path(),
        &["kernel", "--mode", "line", "--xrange", "-64,64", "--samples", "4096", "--alpha", "1.8"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let line = &report(dir.path(), "kernel")["report"]["mass"]["line"];
    assert!((line["total"].as_f64().unwrap() - 1.0).abs() < 1e-6, "{line}");
}

#[test]
fn unknown_flag_exits_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fbspde(dir.path(), &["kernel", "--alpah", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--alpah"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_2_with_key_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"levy": {"alpha": 1.5, "pathz": 10}}"#).unwrap();
    let o = fbspde(dir.path(), &["levy", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("levy.pathz"), "{}", stderr(&o));

    std::fs::write(&cfg, r#"{"solve-pde": {"g": "tanh"}}"#).unwrap();
    let o = fbspde(dir.path(), &["solve-pde", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("solve-pde.g"), "{}", stderr(&o));

    let o = fbspde(dir.path(), &["kernel", "--alpha", "2.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kernel.alpha"), "{}", stderr(&o));

    std::fs::write(&cfg, r#"{"command": "zakai"}"#).unwrap();
    let o = fbspde(dir.path(), &["levy", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    // interval midpoints that are not nodes of the half-step grid
    let o = fbspde(dir.path(), &["control", "--paths", "20", "--steps", "12", "--intervals", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("control.intervals"), "{}", stderr(&o));

    let o = fbspde(dir.path(), &["verify-all", "--only", "no-such-check"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("verify-all.only"), "{}", stderr(&o));
}

#[test]
fn verify_all_reports_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["verify-all", "--seed", "7", "--only", "kernel-mass,chapman-kolmogorov,zakai-closed-form"];
    let oa = fbspde(a.path(), &args);
    let ob = fbspde(b.path(), &args);
    assert!(oa.status.success(), "{}", stderr(&oa));
    assert!(ob.status.success(), "{}", stderr(&ob));
    // the output directory is echoed, so compare with it normalized
    let read = |d: &Path| std::fs::read_to_string(d.join("verify-all.json")).unwrap().replace(d.to_str().unwrap(), "OUT");
    assert_eq!(read(a.path()), read(b.path()));
    let doc = report(a.path(), "verify-all");
    let checks = doc["report"]["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 3);
    assert!(checks.iter().all(|c| c["status"] == "pass" && !c["anchor"].as_str().unwrap().is_empty()));
    assert!(String::from_utf8_lossy(&oa.stdout).contains("kernel-mass"));
}

#[test]
fn quick_tier_skips_full_only_checks() {
    let dir = tempfile::tempdir().unwrap();
    let o = fbspde(dir.path(), &["verify-all", "--tier", "quick", "--only", "holder-ratio,maximum-principle"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc = report(dir.path(), "verify-all");
    let checks = doc["report"]["checks"].as_array().unwrap();
    assert!(checks.iter().all(|c| c["status"] == "skipped"));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |t: &'static str| ["levy", "--paths", "300", "--steps", "20", "--emit", "paths", "--threads", t];
    assert!(fbspde(a.path(), &args("1")).status.success());
    assert!(fbspde(b.path(), &args("3")).status.success());
    let read = |d: &Path| std::fs::read(d.join("levy_paths.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert_eq!(report(a.path(), "levy")["report"]["ks_statistic"], report(b.path(), "levy")["report"]["ks_statistic"]);
}

#[test]
fn every_subcommand_emits_schema_valid_json() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let runs: [&[&str]; 7] = [
        &["fraclap", "--method", "integral"],
        &["levy", "--paths", "500"],
        &["solve-pde", "--compare", "fourier", "--probe", "0,0.5", "--probe", "1,0"],
        &["solve-bspde", "--paths", "300", "--steps", "8"],
        &["zakai", "--policy", "1,0,-1", "--stride", "4", "--steps", "12"],
        &["control", "--paths", "100", "--steps", "12", "--intervals", "3"],
        &["kernel", "--samples", "512", "--xrange", "-16,16"],
    ];
    for args in runs {
        let o = fbspde(d, args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        report(d, args[0]);
    }
    let pde = report(d, "solve-pde");
    let diff = pde["report"]["comparison"]["max_abs_diff"].as_f64().unwrap();
    assert!(diff < 1e-10, "{diff}");
    let z = report(d, "zakai");
    let times = z["report"]["times"].as_array().unwrap();
    assert_eq!(times.len(), 4);
    // the toy problem observes the state, so mass varies; it stays positive
    assert!(z["report"]["masses"].as_array().unwrap().iter().all(|m| m.as_f64().unwrap() > 0.0));
}

#[test]
fn config_file_drives_a_run_and_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.csv"), "t,a\n0,1\n1,1.5\n").unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{
            "experiment": "tabulated diffusivity",
            "command": "solve-pde",
            "solve-pde": {
                "a": {"csv": "a.csv"},
                "g": {"preset": "gauss", "frequency": 0.5},
                "solver": "fourier",
                "compare": "kernel",
                "probes": [[0.5, 0.0]]
            }
        }"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_fbspde"))
        .args(["solve-pde", "--config", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let doc = report(&out, "solve-pde");
    assert_eq!(doc["config"]["experiment"], "tabulated diffusivity");
    assert_eq!(doc["config"]["solve-pde"]["a"]["csv"], "a.csv");
    assert!(doc["report"]["comparison"]["max_abs_diff"].as_f64().unwrap() < 1e-8);
}
