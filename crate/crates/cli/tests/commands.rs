//! End-to-end runs of the `hom` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hom"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn csv_column(text: &str, name: &str) -> Vec<f64> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(i).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn simulate_output_feeds_estimate_unmodified() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mu = 0.05\nn_pulses = 2000000\nn_trials = 4\n");
    let out = dir.path().join("sim");
    ok(&hom(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]));
    let counts = fs::read_to_string(out.join("counts.csv")).unwrap();
    assert!(counts.starts_with("setting,trial,n_pulses,singles_d1,singles_d2,coincidences\n"));
    assert_eq!(counts.lines().count(), 1 + 16);

    let est = dir.path().join("est");
    ok(&hom(&[
        "estimate",
        out.join("counts.csv").to_str().unwrap(),
        "--out",
        est.to_str().unwrap(),
    ]));
    let table = fs::read_to_string(est.join("estimate.csv")).unwrap();
    assert!(table.starts_with(
        "value,g2,g2_sd,g2_sem,p_ub,p_ub_sd,p_ub_sem,v,err_low,err_high,numerator,denominator,clamped,negative_numerator,n_trials\n"
    ));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(est.join("estimate.json")).unwrap()).unwrap();
    assert_eq!(json[0]["result"]["normalization"], "decoy_sum");
    let p = csv_column(&table, "p_ub")[0];
    let v = csv_column(&table, "v")[0];
    assert_eq!(v, 1.0 - p);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "delta = 0.9\nn_pulses = 20000000\nn_trials = 2\n");
    let mut trees = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "3")] {
        let out = dir.path().join(name);
        ok(&hom(&[
            "--threads", threads, "simulate", "--config", &cfg, "--seed", "77", "--scan", "tau",
            "--grid", "-1:1:3", "--out", out.to_str().unwrap(),
        ]));
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        trees.push(files);
    }
    assert_eq!(trees[0].len(), 5);
    assert_eq!(trees[0], trees[1]);
}

#[test]
fn scan_writes_index_and_sixteen_rows_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n_pulses = 100000\n");
    let out = dir.path().join("scan");
    ok(&hom(&[
        "simulate", "--config", &cfg, "--scan", "mu", "--grid", "0.01:0.03:3", "--out",
        out.to_str().unwrap(),
    ]));
    let index = fs::read_to_string(out.join("scan_index.csv")).unwrap();
    assert_eq!(
        index,
        "index,variable,value,counts_file\n0,mu,0.01,counts_000.csv\n1,mu,0.02,counts_001.csv\n2,mu,0.03,counts_002.csv\n"
    );
    for i in 0..3 {
        let counts = fs::read_to_string(out.join(format!("counts_{i:03}.csv"))).unwrap();
        assert_eq!(counts.lines().count(), 17);
    }
    let table = ok(&hom(&["estimate", out.join("scan_index.csv").to_str().unwrap()]));
    assert_eq!(csv_column(&table, "value"), vec![0.01, 0.02, 0.03]);
}

#[test]
fn missing_dark_rows_are_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("counts.csv");
    fs::write(
        &path,
        "setting,trial,n_pulses,singles_d1,singles_d2,coincidences\n\
         signal,0,1000,30,30,1\ndecoy_a,0,1000,15,15,0\ndecoy_b,0,1000,15,15,0\n",
    )
    .unwrap();
    let out = hom(&["estimate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing dark"));
}

#[test]
fn bad_configuration_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write_config(dir.path(), "mu = 0.01\ncolour = 3\n");
    assert_eq!(hom(&["predict", "--config", &unknown]).status.code(), Some(2));
    let invalid = write_config(dir.path(), "delta = 1.2\n");
    assert_eq!(hom(&["predict", "--config", &invalid]).status.code(), Some(2));
    assert_eq!(
        hom(&["predict", "--scan", "tau", "--grid", "0:1"]).status.code(),
        Some(2)
    );
}

#[test]
fn predicted_delay_dip_is_symmetric() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "delta = 1.0\n");
    let table = ok(&hom(&["predict", "--config", &cfg, "--scan", "tau", "--grid", "-2:2:9"]));
    for col in ["g2", "p_ub_predicted"] {
        let v = csv_column(&table, col);
        for i in 0..v.len() {
            assert!((v[i] - v[v.len() - 1 - i]).abs() < 1e-12, "{col}");
        }
    }
}

#[test]
fn predicted_g2_rises_with_mu_and_truth_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "delta = 0.985\nr_coeff = 0.52\ndark = 0.0\n");
    let table = ok(&hom(&["predict", "--config", &cfg, "--scan", "mu", "--grid", "0.005:0.1:8"]));
    let g2 = csv_column(&table, "g2");
    assert!(g2.windows(2).all(|w| w[1] > w[0]));
    for t in csv_column(&table, "true_p11") {
        assert!((t - 0.0016).abs() < 1e-15);
    }
}

#[test]
fn fit_without_uncertainties_warns_and_matches_measured_minimum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "delta = 0.985\ndark = 0.0\n");
    let curve = ok(&hom(&["predict", "--config", &cfg, "--scan", "tau", "--grid", "-3:3:21"]));
    let path = dir.path().join("curve.csv");
    fs::write(&path, curve).unwrap();
    let out = hom(&["fit", path.to_str().unwrap(), "--baseline", "1"]);
    let json: serde_json::Value = serde_json::from_str(&ok(&out)).unwrap();
    assert!(String::from_utf8_lossy(&out.stderr).contains("unweighted"));
    assert_eq!(json["fit"]["weighted"], false);
    let min = json["fit"]["minimum"].as_f64().unwrap();
    assert!((min - 0.529).abs() <= 0.015, "{min}");
}

#[test]
fn bound_dip_fit_minimum_consistent_with_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "mu = 0.05\ndelta = 0.996\nn_pulses = 10000000\nn_trials = 4\n",
    );
    let sim = dir.path().join("sim");
    ok(&hom(&[
        "simulate", "--config", &cfg, "--scan", "tau", "--grid", "-3:3:13", "--out",
        sim.to_str().unwrap(),
    ]));
    let est = dir.path().join("est");
    ok(&hom(&[
        "estimate",
        sim.join("scan_index.csv").to_str().unwrap(),
        "--out",
        est.to_str().unwrap(),
    ]));
    let fit = dir.path().join("fit");
    ok(&hom(&[
        "fit",
        est.join("estimate.csv").to_str().unwrap(),
        "--baseline",
        "0.5",
        "--out",
        fit.to_str().unwrap(),
    ]));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fit.join("fit.json")).unwrap()).unwrap();
    assert_eq!(json["y_column"], "p_ub");
    assert_eq!(json["fit"]["weighted"], true);
    let f = &json["fit"];
    let min = f["minimum"].as_f64().unwrap();
    let low = f["ci_minimum_low"].as_f64().unwrap();
    let high = f["ci_minimum"].as_f64().unwrap();
    assert!(min - low <= 0.0 && 0.0 <= min + high, "{min} -{low} +{high}");
    let row = fs::read_to_string(fit.join("fit.csv")).unwrap();
    assert_eq!(row.lines().count(), 2);
}

#[test]
fn quick_reproduction_writes_report_and_flags_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out = hom(&["reproduce-paper", "--quick", "--out", dir.path().to_str().unwrap()]);
    let report = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    let failures = report.lines().filter(|l| l.starts_with("[FAIL]")).count();
    assert!(report.lines().filter(|l| l.starts_with("[PASS]")).count() > 0);
    let expected = if failures == 0 { 0 } else { 4 };
    assert_eq!(out.status.code(), Some(expected));
    for table in ["fig2_scan.csv", "fig3_predict.csv", "bound_validity_decoy_sum.csv", "report.json"] {
        assert!(dir.path().join(table).exists(), "{table}");
    }
}
