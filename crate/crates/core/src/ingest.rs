//! On-disk formats: the tick CSV interchange format, dataset metadata
//! sidecars, fit reports, and plot-ready curve series.
//!
//! Tick files are UTF-8 CSV with header `day,t,symbol`, one record per
//! line (LF or CRLF), timestamps in seconds since session open, decimal
//! points only. A file may contain several symbols; readers can filter.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, LineError, Result};
use crate::estimate::{FitReport, RatePattern};
use crate::model::{ModelParams, SnrCurve};
use crate::session::SessionSpec;
use crate::simulate::{gen_ticks, AutocorrFn};

pub const TICK_HEADER: &str = "day,t,symbol";
const MAX_REPORTED_LINES: usize = 20;

/// One trade event: trading-day ordinal, seconds since session open
/// (fractional allowed), and a short symbol identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub day: u32,
    pub t: f64,
    pub symbol: String,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Parses a tick stream, validating each record and sorting the result by
/// `(day, t)`. Malformed lines are reported with their line numbers; at
/// most 20 are listed. `t` must lie in `[0, session_length)`. When
/// `symbol` is given, records for other symbols are dropped.
pub fn parse_ticks<R: BufRead>(
    reader: R,
    session_length: f64,
    symbol: Option<&str>,
) -> Result<Vec<TickRecord>> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, Ok(h))) => h,
        Some((_, Err(e))) => {
            return Err(Error::Parse {
                errors: vec![LineError {
                    line: 1,
                    message: format!("unreadable: {e}"),
                }],
            })
        }
        None => {
            return Err(Error::Parse {
                errors: vec![LineError {
                    line: 1,
                    message: "missing header".into(),
                }],
            })
        }
    };
    if header.trim_end_matches('\r') != TICK_HEADER {
        return Err(Error::Parse {
            errors: vec![LineError {
                line: 1,
                message: format!("expected header `{TICK_HEADER}`, found `{header}`"),
            }],
        });
    }

    let mut records = Vec::new();
    let mut errors: Vec<LineError> = Vec::new();
    let push_err = |errors: &mut Vec<LineError>, line: usize, message: String| {
        if errors.len() < MAX_REPORTED_LINES {
            errors.push(LineError { line, message });
        }
    };

    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                push_err(&mut errors, line_no, format!("unreadable: {e}"));
                continue;
            }
        };
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (day_s, t_s, sym) = match (fields.next(), fields.next(), fields.next(), fields.next())
        {
            (Some(d), Some(t), Some(s), None) => (d, t, s),
            _ => {
                push_err(&mut errors, line_no, "expected 3 comma-separated fields".into());
                continue;
            }
        };
        let day = match day_s.parse::<u32>() {
            Ok(d) => d,
            Err(_) => {
                push_err(&mut errors, line_no, format!("invalid day `{day_s}`"));
                continue;
            }
        };
        let t = match t_s.parse::<f64>() {
            Ok(t) if t.is_finite() => t,
            _ => {
                push_err(&mut errors, line_no, format!("invalid t `{t_s}`"));
                continue;
            }
        };
        if t < 0.0 || t >= session_length {
            push_err(
                &mut errors,
                line_no,
                format!("t = {t} outside session [0, {session_length})"),
            );
            continue;
        }
        if sym.is_empty() {
            push_err(&mut errors, line_no, "empty symbol".into());
            continue;
        }
        if let Some(want) = symbol {
            if sym != want {
                continue;
            }
        }
        records.push(TickRecord {
            day,
            t,
            symbol: sym.to_string(),
        });
    }

    if !errors.is_empty() {
        return Err(Error::Parse { errors });
    }
    records.sort_by(|a, b| {
        a.day
            .cmp(&b.day)
            .then(a.t.partial_cmp(&b.t).expect("finite timestamps"))
    });
    Ok(records)
}

pub fn parse_ticks_path(
    path: impl AsRef<Path>,
    session_length: f64,
    symbol: Option<&str>,
) -> Result<Vec<TickRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    parse_ticks(BufReader::new(file), session_length, symbol)
}

/// Writes records in the canonical CSV format. Timestamps use the shortest
/// decimal representation that round-trips, so `parse_ticks` recovers the
/// records exactly and output bytes are deterministic.
pub fn write_ticks<W: Write>(mut w: W, records: &[TickRecord]) -> Result<()> {
    let inner = |w: &mut W| -> std::io::Result<()> {
        writeln!(w, "{TICK_HEADER}")?;
        for r in records {
            writeln!(w, "{},{},{}", r.day, r.t, r.symbol)?;
        }
        Ok(())
    };
    for r in records {
        if r.symbol.contains(',') || r.symbol.contains('\n') || r.symbol.is_empty() {
            return Err(Error::InvalidParams(format!(
                "symbol `{}` cannot be written as CSV",
                r.symbol
            )));
        }
    }
    inner(&mut w).map_err(|e| Error::Io {
        path: "<writer>".into(),
        source: e,
    })
}

pub fn write_ticks_path(path: impl AsRef<Path>, records: &[TickRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    write_ticks(&mut w, records)?;
    w.flush().map_err(|e| io_err(path, e))
}

/// Sidecar metadata recording how a synthetic dataset was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub r0: f64,
    pub a_s: f64,
    pub f_s: f64,
    pub sigma: f64,
    pub tau_c: f64,
    pub session_length: u32,
    pub warmup_skip: u32,
    pub bin_width: u32,
    pub bins_per_day: u32,
    pub days: usize,
    pub seed: u64,
}

impl DatasetMeta {
    pub fn new(params: &ModelParams, session: &SessionSpec, seed: u64) -> Self {
        DatasetMeta {
            r0: params.r0,
            a_s: params.a_s,
            f_s: params.f_s,
            sigma: params.sigma,
            tau_c: params.tau_c,
            session_length: session.session_length,
            warmup_skip: session.warmup_skip,
            bin_width: session.bin_width,
            bins_per_day: session.bins_per_day,
            days: session.days,
            seed,
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.r0, self.a_s, self.f_s, self.sigma, self.tau_c)
    }

    pub fn session(&self) -> SessionSpec {
        SessionSpec {
            session_length: self.session_length,
            warmup_skip: self.warmup_skip,
            bin_width: self.bin_width,
            bins_per_day: self.bins_per_day,
            days: self.days,
            tick_resolution: 1,
            noise_reset_daily: false,
        }
    }
}

/// Path of the metadata sidecar for a dataset path.
pub fn meta_path_for(dataset: &Path) -> PathBuf {
    dataset.with_extension("meta.json")
}

/// Result summary of [`synth_dataset`].
#[derive(Debug, Clone)]
pub struct DatasetSummary {
    pub ticks_path: PathBuf,
    pub meta_path: PathBuf,
    pub total_ticks: usize,
}

/// Generates a synthetic tick dataset and writes it with its metadata
/// sidecar. Byte-deterministic given identical inputs.
pub fn synth_dataset(
    params: &ModelParams,
    session: &SessionSpec,
    seed: u64,
    path: impl AsRef<Path>,
    symbol: &str,
) -> Result<DatasetSummary> {
    let path = path.as_ref();
    let ticks = gen_ticks(params, session, seed, symbol)?;
    write_ticks_path(path, &ticks)?;
    let meta = DatasetMeta::new(params, session, seed);
    let meta_path = meta_path_for(path);
    write_json(&meta, &meta_path)?;
    Ok(DatasetSummary {
        ticks_path: path.to_path_buf(),
        meta_path,
        total_ticks: ticks.len(),
    })
}

pub fn read_metadata(path: impl AsRef<Path>) -> Result<DatasetMeta> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Parse {
        errors: vec![LineError {
            line: e.line(),
            message: e.to_string(),
        }],
    })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value).expect("serializable value");
    body.push('\n');
    std::fs::write(path, body).map_err(|e| io_err(path, e))
}

/// Writes a fit report as JSON with stable key order.
pub fn write_report(report: &FitReport, path: impl AsRef<Path>) -> Result<()> {
    write_json(report, path.as_ref())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<FitReport> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Parse {
        errors: vec![LineError {
            line: e.line(),
            message: e.to_string(),
        }],
    })
}

/// SNR curve as CSV: `sigma,snr_raw,snr_normalized`.
pub fn snr_curve_csv(curve: &SnrCurve) -> String {
    let mut out = String::from("sigma,snr_raw,snr_normalized\n");
    for i in 0..curve.sigma_grid.len() {
        out.push_str(&format!(
            "{},{},{}\n",
            curve.sigma_grid[i], curve.raw[i], curve.normalized[i]
        ));
    }
    out
}

pub fn write_snr_curve(curve: &SnrCurve, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, snr_curve_csv(curve)).map_err(|e| io_err(path, e))
}

/// Autocorrelation as CSV: `lag_s,value,noise_floor`.
pub fn autocorr_csv(acf: &AutocorrFn) -> String {
    let mut out = String::from("lag_s,value,noise_floor\n");
    for (lag, value) in acf.lags.iter().zip(&acf.values) {
        out.push_str(&format!("{},{},{}\n", lag, value, acf.noise_floor));
    }
    out
}

pub fn write_autocorr(acf: &AutocorrFn, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, autocorr_csv(acf)).map_err(|e| io_err(path, e))
}

/// Rate pattern as CSV: `bin_mid_s,rate_per_s`.
pub fn rate_pattern_csv(pattern: &RatePattern) -> String {
    let mut out = String::from("bin_mid_s,rate_per_s\n");
    for (t, r) in pattern.mid_times.iter().zip(&pattern.rates) {
        out.push_str(&format!("{},{}\n", t, r));
    }
    out
}

pub fn write_rate_pattern(pattern: &RatePattern, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, rate_pattern_csv(pattern)).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DEFAULT_SIGNAL_FREQ_HZ;
    use proptest::prelude::*;
    use std::io::Cursor;

    const SESSION_LEN: f64 = 23_400.0;

    #[test]
    fn header_only_gives_empty_list() {
        let got = parse_ticks(Cursor::new("day,t,symbol\n"), SESSION_LEN, None).unwrap();
        assert!(got.is_empty());
    }

    #[test]
    fn single_line_parses() {
        let got = parse_ticks(Cursor::new("day,t,symbol\n0,301.0,AEP\n"), SESSION_LEN, None)
            .unwrap();
        assert_eq!(
            got,
            vec![TickRecord {
                day: 0,
                t: 301.0,
                symbol: "AEP".into()
            }]
        );
    }

    #[test]
    fn crlf_and_missing_trailing_newline_accepted() {
        let got = parse_ticks(
            Cursor::new("day,t,symbol\r\n1,5.5,F\r\n0,2,F"),
            SESSION_LEN,
            None,
        )
        .unwrap();
        assert_eq!(got.len(), 2);
        // sorted by (day, t)
        assert_eq!(got[0].day, 0);
        assert_eq!(got[1].day, 1);
    }

    #[test]
    fn malformed_lines_reported_with_numbers() {
        let input = "day,t,symbol\n0,1.0,A\nbad line\n0,-3,A\n0,99999,A\nx,1,A\n";
        let err = parse_ticks(Cursor::new(input), SESSION_LEN, None).unwrap_err();
        match err {
            Error::Parse { errors } => {
                let lines: Vec<usize> = errors.iter().map(|e| e.line).collect();
                assert_eq!(lines, vec![3, 4, 5, 6]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn error_listing_caps_at_twenty() {
        let mut input = String::from("day,t,symbol\n");
        for _ in 0..50 {
            input.push_str("nope\n");
        }
        let err = parse_ticks(Cursor::new(input), SESSION_LEN, None).unwrap_err();
        match err {
            Error::Parse { errors } => assert_eq!(errors.len(), 20),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_header_rejected() {
        assert!(parse_ticks(Cursor::new(""), SESSION_LEN, None).is_err());
        assert!(parse_ticks(Cursor::new("0,1.0,A\n"), SESSION_LEN, None).is_err());
    }

    #[test]
    fn symbol_filter_drops_other_symbols() {
        let input = "day,t,symbol\n0,1.0,A\n0,2.0,B\n0,3.0,A\n";
        let got = parse_ticks(Cursor::new(input), SESSION_LEN, Some("A")).unwrap();
        assert_eq!(got.len(), 2);
        assert!(got.iter().all(|r| r.symbol == "A"));
    }

    #[test]
    fn write_then_parse_round_trips() {
        let records = vec![
            TickRecord {
                day: 0,
                t: 301.0,
                symbol: "AEP".into(),
            },
            TickRecord {
                day: 0,
                t: 301.5000000001,
                symbol: "AEP".into(),
            },
            TickRecord {
                day: 3,
                t: 0.12345678901234567,
                symbol: "AEP".into(),
            },
        ];
        let mut buf = Vec::new();
        write_ticks(&mut buf, &records).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 4);
        let parsed = parse_ticks(Cursor::new(buf), SESSION_LEN, None).unwrap();
        assert_eq!(parsed, records);
    }

    #[test]
    fn empty_records_write_header_only() {
        let mut buf = Vec::new();
        write_ticks(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "day,t,symbol\n");
    }

    #[test]
    fn synth_dataset_is_byte_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let params =
            ModelParams::new(0.0283, 0.2880, DEFAULT_SIGNAL_FREQ_HZ, 0.9554, 1.7).unwrap();
        let session = SessionSpec::with_days(2);
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        let s1 = synth_dataset(&params, &session, 42, &p1, "AEP").unwrap();
        let s2 = synth_dataset(&params, &session, 42, &p2, "AEP").unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap()
        );
        assert_eq!(
            std::fs::read(&s1.meta_path).unwrap(),
            std::fs::read(&s2.meta_path).unwrap()
        );
        assert!(s1.total_ticks > 0);

        let meta = read_metadata(&s1.meta_path).unwrap();
        assert_eq!(meta, DatasetMeta::new(&params, &session, 42));
        assert_eq!(meta.params().unwrap(), params);
        assert_eq!(meta.session().days, 2);
    }

    #[test]
    fn tiny_rate_dataset_still_valid() {
        let dir = tempfile::tempdir().unwrap();
        let params = ModelParams::new(1e-12, 0.0, DEFAULT_SIGNAL_FREQ_HZ, 0.0, 1.0).unwrap();
        let session = SessionSpec::with_days(1);
        let path = dir.path().join("tiny.csv");
        let summary = synth_dataset(&params, &session, 1, &path, "Z").unwrap();
        assert_eq!(summary.total_ticks, 0);
        let parsed = parse_ticks_path(&path, SESSION_LEN, None).unwrap();
        assert!(parsed.is_empty());
    }

    #[test]
    fn report_json_round_trips() {
        use crate::estimate::{FitReport, Provenance, Residuals, SrSummary};
        let report = FitReport {
            params: ModelParams::new(0.03, 0.25, DEFAULT_SIGNAL_FREQ_HZ, 0.9, 2.0).unwrap(),
            residuals: Residuals {
                pattern_sse: 1e-3,
                acf_mse: 2e-6,
                pdf_sse: 0.5,
            },
            sr: SrSummary {
                tau_c_r0: 0.06,
                condition: true,
                tau_c_at_grid_edge: false,
                sigma_at_bound: false,
            },
            provenance: Provenance {
                input: Some("ticks.csv".into()),
                session: SessionSpec::with_days(21),
                seed: 42,
                tau_grid: vec![1.0, 2.0],
                tau_replicas: 40,
                tau_mc_days: 1,
                acf_max_lag: 60,
                sigma_max: 3.0,
                rate_amplitude: 0.045,
                bin_sigma: 0.18,
            },
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        write_report(&report, &path).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        for key in ["\"params\"", "\"residuals\"", "\"sr\"", "\"provenance\""] {
            assert!(body.contains(key), "missing {key}");
        }
        assert_eq!(read_report(&path).unwrap(), report);
    }

    #[test]
    fn rate_pattern_csv_shape() {
        let pattern = RatePattern {
            rates: vec![0.1, 0.2, 0.3],
            mid_times: vec![360.0, 480.0, 600.0],
            session: SessionSpec::with_days(1),
        };
        let csv = rate_pattern_csv(&pattern);
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines[0], "bin_mid_s,rate_per_s");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "360,0.1");
    }

    #[test]
    fn curve_csv_shape() {
        let curve = SnrCurve {
            sigma_grid: vec![0.0, 1.0],
            raw: vec![2.0, 3.0],
            normalized: vec![1.0, 1.5],
            argmax_sigma: Some(1.0),
            sr_detected: false,
        };
        let csv = snr_curve_csv(&curve);
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "sigma,snr_raw,snr_normalized");
        assert!(lines[1].ends_with(",1"));
    }

    proptest! {
        #[test]
        fn parse_write_inverse(
            days in proptest::collection::vec(0u32..40, 0..80),
            times in proptest::collection::vec(0.0f64..23_400.0, 0..80),
        ) {
            let n = days.len().min(times.len());
            let mut records: Vec<TickRecord> = (0..n)
                .map(|i| TickRecord { day: days[i], t: times[i], symbol: "SYM".into() })
                .collect();
            let mut buf = Vec::new();
            write_ticks(&mut buf, &records).unwrap();
            let parsed = parse_ticks(Cursor::new(buf), SESSION_LEN, None).unwrap();
            records.sort_by(|a, b| a.day.cmp(&b.day).then(a.t.partial_cmp(&b.t).unwrap()));
            prop_assert_eq!(parsed, records);
        }
    }
}
