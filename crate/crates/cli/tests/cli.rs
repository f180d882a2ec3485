//! End-to-end checks of the command-line workflows via the built binary.

use std::path::Path;
use std::process::{Command, Output};

fn tradesr(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tradesr"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn help_lists_flags_with_units() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["simulate", "fit", "snr", "acf"] {
        let out = tradesr(&[sub, "--help"], dir.path());
        assert!(out.status.success());
        let text = stdout(&out);
        assert!(text.contains("second"), "{sub} help mentions units:\n{text}");
    }
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "simulate", "--r0", "0.0283", "--as", "0.2880", "--sigma", "0.9554", "--tauc", "1.7",
        "--days", "2", "--seed", "42",
    ];
    let out1 = tradesr(&[&args[..], &["-o", "a.csv"]].concat(), dir.path());
    assert!(out1.status.success(), "{}", stderr(&out1));
    assert!(stdout(&out1).contains("total trades:"));
    assert!(stdout(&out1).contains("mean rate:"));
    let out2 = tradesr(&[&args[..], &["-o", "b.csv"]].concat(), dir.path());
    assert!(out2.status.success());
    assert_eq!(
        std::fs::read(dir.path().join("a.csv")).unwrap(),
        std::fs::read(dir.path().join("b.csv")).unwrap()
    );
    assert_eq!(
        std::fs::read(dir.path().join("a.meta.json")).unwrap(),
        std::fs::read(dir.path().join("b.meta.json")).unwrap()
    );
}

#[test]
fn simulate_rejects_invalid_params() {
    let dir = tempfile::tempdir().unwrap();
    let out = tradesr(
        &[
            "simulate", "--r0", "0", "--as", "0.1", "--sigma", "0.5", "--tauc", "1.0",
            "--days", "1", "--seed", "1", "-o", "x.csv",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.starts_with("error: "), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1, "single-line error: {err}");
}

#[test]
fn fit_runs_on_simulated_data_and_honors_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = tradesr(
        &[
            "simulate", "--r0", "0.06", "--as", "0.25", "--sigma", "0.7", "--tauc", "3.0",
            "--days", "4", "--seed", "9", "-o", "d.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let out = tradesr(
        &[
            "fit", "-i", "d.csv", "-o", "d.report.json", "--seed", "11", "--replicas", "4",
            "--tau-points", "6", "--acf-max-lag", "100", "--days", "4",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("tau_c * r0"), "{text}");
    assert!(text.contains("SR verdict:"), "{text}");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("d.report.json")).unwrap())
            .unwrap();
    assert_eq!(report["provenance"]["acf_max_lag"], 100);
    assert_eq!(report["provenance"]["tau_replicas"], 4);
    assert!(report["params"]["r0"].as_f64().unwrap() > 0.0);
    for key in ["params", "residuals", "sr", "provenance"] {
        assert!(report.get(key).is_some(), "missing top-level key {key}");
    }
}

#[test]
fn fit_on_empty_file_fails_at_binning() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.csv"), "day,t,symbol\n").unwrap();
    let out = tradesr(
        &["fit", "-i", "empty.csv", "--seed", "1", "--days", "1"],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(stderr(&out).contains("binning"), "{}", stderr(&out));
}

#[test]
fn snr_from_table_parameters() {
    let dir = tempfile::tempdir().unwrap();
    // Resonant row: interior maximum.
    let out = tradesr(
        &[
            "snr", "--r0", "0.0283", "--as", "0.2880", "--tauc", "1.7", "--sigma", "0.9554",
            "-o", "aep_snr.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("SR verdict: resonance"), "{text}");
    assert!(text.contains("current sigma"), "{text}");

    // Non-resonant row: monotone decreasing curve.
    let out = tradesr(
        &[
            "snr", "--r0", "0.0947", "--as", "0.2194", "--tauc", "26.5", "-o", "f_snr.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    assert!(stdout(&out).contains("SR verdict: no resonance"));

    let csv = std::fs::read_to_string(dir.path().join("aep_snr.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "sigma,snr_raw,snr_normalized");
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "0");
    assert_eq!(first[2], "1");
}

#[test]
fn snr_requires_a_parameter_source() {
    let dir = tempfile::tempdir().unwrap();
    let out = tradesr(&["snr", "-o", "x.csv"], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error: "));
}

#[test]
fn acf_empirical_and_model_paths() {
    let dir = tempfile::tempdir().unwrap();
    let out = tradesr(
        &[
            "simulate", "--r0", "0.5", "--as", "0.0", "--sigma", "0.0", "--tauc", "1.0",
            "--days", "1", "--seed", "3", "-o", "w.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success());

    let out = tradesr(
        &[
            "acf", "-i", "w.csv", "--max-lag", "30", "--days", "1", "-o", "emp.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("emp.csv")).unwrap();
    let lines: Vec<&str> = csv.trim_end().lines().collect();
    assert_eq!(lines[0], "lag_s,value,noise_floor");
    assert_eq!(lines.len(), 31);
    // white data: every correlation within the noise floor
    let floor: f64 = lines[1].split(',').nth(2).unwrap().parse().unwrap();
    let mut outside = 0;
    for line in &lines[1..] {
        let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        if v.abs() > floor {
            outside += 1;
        }
    }
    assert!(outside <= 1, "{outside} lags outside the floor");

    let out = tradesr(
        &[
            "acf", "--r0", "0.1", "--sigma", "0.8", "--tauc", "5.0", "--replicas", "4",
            "--seed", "8", "--max-lag", "30", "--days", "1", "-o", "mc.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("mc.csv")).unwrap();
    assert_eq!(csv.lines().count(), 31);

    // model mode without a seed is refused
    let out = tradesr(
        &[
            "acf", "--r0", "0.1", "--sigma", "0.8", "--tauc", "5.0", "-o", "no.csv",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
}

#[test]
fn snr_reads_fit_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = tradesr(
        &[
            "simulate", "--r0", "0.06", "--as", "0.25", "--sigma", "0.7", "--tauc", "3.0",
            "--days", "3", "--seed", "5", "-o", "r.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let out = tradesr(
        &[
            "fit", "-i", "r.csv", "-o", "r.report.json", "--seed", "2", "--replicas", "3",
            "--tau-points", "5", "--acf-max-lag", "60", "--days", "3",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let out = tradesr(
        &["snr", "--report", "r.report.json", "-o", "rs.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("current sigma"));
    assert!(dir.path().join("rs.csv").exists());
}
