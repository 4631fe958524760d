use std::fs;
use std::process::Command;

use ssep::harness::{parse_csv, CSV_COLUMNS, JSON_SCHEMA_ID};

fn ssep() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ssep"));
    cmd.env("SSEP_THREADS", "2");
    cmd
}

#[test]
fn csv_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let path = dir.path().join(name);
        let status = ssep()
            .args(["ideal", "--n", "12", "--engine", "both", "--k", "64", "--t", "0.05,0.1", "--u0", "sine"])
            .args(["--v-minus", "0", "--v-plus", "0", "--seed", "9", "--out"])
            .arg(&path)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(fs::read(&path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    assert!(text.starts_with(&CSV_COLUMNS.join(",")));
    let rows = parse_csv(&text).unwrap();
    // 11 probes and two reservoirs, two times, two engines.
    assert_eq!(rows.len(), 13 * 2 * 2);
    assert!(rows.iter().all(|r| r.regime == "ideal_hydrodynamic" && r.seed == 9));
}

#[test]
fn json_output_follows_schema() {
    let out = ssep()
        .args(["adiabatic", "--n", "10", "--t", "0.5", "--t", "1", "--format", "json"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["schema"], JSON_SCHEMA_ID);
    assert_eq!(v["regime"], "adiabatic");
    assert_eq!(v["N"], 10);
    assert_eq!(v["engine"], "ode");
    assert!(v["wall_clock_seconds"].is_number());
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 26);
    for row in rows {
        for key in CSV_COLUMNS {
            assert!(row.get(key).is_some(), "missing {key}");
        }
        assert!(row["se"].is_null());
        assert!(row["abs_err"].as_f64().unwrap() >= 0.0);
    }
    let summary = v["summary"].as_array().unwrap();
    assert_eq!(summary.len(), 2);
    for s in summary {
        assert!(s["sup_error"].as_f64().unwrap() >= 0.0);
        assert!(s["boundary_minus_error"].is_number());
    }
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# global run\nn = 8\nalpha = 0.25\nalpha_prime = 0.75\nt = 1\nv-minus = 1\nv-plus = 0\n").unwrap();
    let out = ssep().args(["global", "--n", "9", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = parse_csv(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert!(rows.iter().all(|r| r.n == 9 && r.regime == "global" && r.reference == 0.5));
}

#[test]
fn over_budget_runs_are_refused() {
    let out = ssep()
        .args(["ideal", "--n", "40", "--engine", "kmc", "--k", "1000", "--budget-events", "1000"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
    assert!(out.stdout.is_empty());
}

#[test]
fn regime_mismatch_is_an_error() {
    let out = ssep().args(["global", "--alpha", "0.5", "--alpha-prime", "0.25"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn chaos_subcommand_reports_pairs() {
    let out = ssep()
        .args(["chaos", "--n", "10", "--k", "200", "--pair", "0.25,0.75", "--pair", "0.4,0.6"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = parse_csv(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    let labels: Vec<&str> = rows.iter().map(|r| r.site_or_pair.as_str()).collect();
    assert_eq!(labels, ["kmc:x=3/x=8", "kmc:x=4/x=7"]);
    assert!(rows.iter().all(|r| r.reference == 0.0 && r.se.is_some()));
}

#[test]
fn verify_subcommand_prints_one_line_per_check() {
    let out = ssep().args(["verify", "--criterion", "11", "--criterion", "12"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("[PASS] 11"));
    assert!(lines[1].starts_with("[PASS] 12"));
}
