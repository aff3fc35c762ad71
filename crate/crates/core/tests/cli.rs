use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nystrom-svs"))
}

#[test]
fn synth_train_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.libsvm");
    let test = dir.path().join("test.libsvm");
    let model = dir.path().join("model.json");
    let diag = dir.path().join("diag.json");
    let preds = dir.path().join("preds.txt");

    for (path, seed) in [(&train, "0"), (&test, "1")] {
        let out = bin()
            .args(["synth", "--kind", "two-gaussians", "--n", "300", "--seed", seed])
            .args(["--separation", "4.0", "--out", path.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }

    let out = bin()
        .args(["train", "--train", train.to_str().unwrap(), "--gamma", "0.5"])
        .args(["--n0", "60", "--nf", "20", "--model-out", model.to_str().unwrap()])
        .args(["--diagnostics-out", diag.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let diag_json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&diag).unwrap()).unwrap();
    assert_eq!(diag_json["selected"].as_array().unwrap().len(), 20);

    let out = bin()
        .args(["predict", "--model", model.to_str().unwrap()])
        .args(["--data", test.to_str().unwrap(), "--out", preds.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let acc: f64 = stderr
        .lines()
        .find_map(|l| l.strip_prefix("accuracy: "))
        .expect("accuracy line")
        .parse()
        .unwrap();
    assert!(acc > 0.9, "accuracy {acc}");
    let lines = std::fs::read_to_string(&preds).unwrap();
    assert_eq!(lines.lines().count(), 300);
    assert!(lines.lines().all(|l| l == "0" || l == "1"));
}

#[test]
fn bench_writes_parseable_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    let csv_path = dir.path().join("out.csv");
    let cfg = serde_json::json!({
        "data": {"source": "synth", "kind": "two-gaussians", "separation": 3.0,
                 "n_train": 200, "n_test": 100, "d": 2, "seed": 0},
        "gamma": 0.5,
        "methods": ["Nys", "Nys+"],
        "grid": [{"n0": 40, "k0": 40, "nf": 15, "kf": 15}],
        "trials": 2,
        "base_seed": 5,
        "rho": 1e-3
    });
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();

    let out = bin()
        .args(["bench", "--config", cfg_path.to_str().unwrap()])
        .args(["--out", csv_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let records = nystrom_svs::harness::read_csv(&csv_path).unwrap();
    assert_eq!(records.len(), 4);
    assert!(records.iter().all(|r| r.accuracy > 0.5));
    // seed-paired rows for the supervised method
    for r in records.iter().filter(|r| r.method == "Nys+") {
        assert!(records.iter().any(|o| o.method == "Nys" && o.seed == r.seed));
    }
}

#[test]
fn bound_check_reports_valid_inequality() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.libsvm");
    let out = bin()
        .args(["synth", "--kind", "two-gaussians", "--n", "150", "--seed", "3"])
        .args(["--separation", "2.0", "--out", train.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());

    let out = bin()
        .args(["bound-check", "--train", train.to_str().unwrap()])
        .args(["--gamma", "1.0", "--n", "30", "--rho", "0.01"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["holds"].as_bool().unwrap());
    assert!(v["lhs"].as_f64().unwrap() <= v["rhs"].as_f64().unwrap());
}

#[test]
fn missing_file_exits_nonzero() {
    let out = bin()
        .args(["train", "--train", "/nonexistent/file", "--gamma", "1.0"])
        .args(["--n0", "10", "--nf", "5", "--model-out", "/tmp/never.json"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
