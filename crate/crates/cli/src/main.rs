//! Command-line entry point: reproducible simulate / fit / snr / acf
//! workflows emitting plot-ready CSV and JSON.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tradesr::error::{Error, Result};
use tradesr::estimate::{counts_from_ticks, empirical_autocorr, fit_all, FitConfig, FitReport};
use tradesr::ingest::{
    parse_ticks_path, read_report, synth_dataset, write_autocorr, write_report, write_snr_curve,
};
use tradesr::model::{snr_curve, ModelParams, SnrCurve, DEFAULT_SIGNAL_FREQ_HZ};
use tradesr::session::SessionSpec;
use tradesr::simulate::mc_autocorr;

#[derive(Parser)]
#[command(
    name = "tradesr",
    version,
    about = "Doubly stochastic trade-arrival model: simulation, calibration, and resonance detection",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic tick dataset with a metadata sidecar.
    Simulate(SimulateArgs),
    /// Calibrate model parameters from a tick file and report the SR verdict.
    Fit(FitArgs),
    /// Evaluate the normalized SNR curve over a noise-intensity grid.
    Snr(SnrArgs),
    /// Compute an empirical or model (Monte Carlo) count autocorrelation.
    Acf(AcfArgs),
}

#[derive(Args, Clone)]
struct SessionArgs {
    /// Trading-day length, seconds.
    #[arg(long, default_value_t = 23_400)]
    session_length: u32,
    /// Seconds skipped at the session open before binning.
    #[arg(long, default_value_t = 300)]
    warmup_skip: u32,
    /// Counting bin width, seconds.
    #[arg(long, default_value_t = 120)]
    bin_width: u32,
    /// Complete bins per day (trailing remainder discarded).
    #[arg(long, default_value_t = 192)]
    bins_per_day: u32,
    /// Number of trading days.
    #[arg(long, default_value_t = 21)]
    days: usize,
}

impl SessionArgs {
    fn build(&self) -> Result<SessionSpec> {
        let session = SessionSpec {
            session_length: self.session_length,
            warmup_skip: self.warmup_skip,
            bin_width: self.bin_width,
            bins_per_day: self.bins_per_day,
            days: self.days,
            tick_resolution: 1,
            noise_reset_daily: false,
        };
        session.validate()?;
        Ok(session)
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Equilibrium arrival rate r0, events/second.
    #[arg(long)]
    r0: f64,
    /// Signal amplitude, dimensionless.
    #[arg(long = "as")]
    a_s: f64,
    /// Noise root-mean-square, dimensionless.
    #[arg(long)]
    sigma: f64,
    /// Noise correlation time, seconds.
    #[arg(long)]
    tauc: f64,
    /// Signal frequency, hertz.
    #[arg(long, default_value_t = DEFAULT_SIGNAL_FREQ_HZ)]
    fs: f64,
    /// RNG seed (simulation is bit-reproducible given the seed).
    #[arg(long)]
    seed: u64,
    /// Output tick CSV path; the sidecar goes to `<output>.meta.json`.
    #[arg(short, long)]
    output: PathBuf,
    /// Symbol written on every record.
    #[arg(long, default_value = "SYNTH")]
    symbol: String,
    #[command(flatten)]
    session: SessionArgs,
}

#[derive(Args)]
struct FitArgs {
    /// Input tick CSV path.
    #[arg(short, long)]
    input: PathBuf,
    /// Report JSON output path.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// RNG seed for the Monte Carlo correlation-time fit.
    #[arg(long)]
    seed: u64,
    /// Keep only this symbol when reading the tick file.
    #[arg(long)]
    symbol: Option<String>,
    /// Monte Carlo replicas per correlation-time candidate.
    #[arg(long, default_value_t = 40)]
    replicas: usize,
    /// Days simulated per replica.
    #[arg(long, default_value_t = 1)]
    mc_days: usize,
    /// Autocorrelation lags used in the fit, seconds; derived from the
    /// candidate grid when omitted.
    #[arg(long)]
    acf_max_lag: Option<usize>,
    /// Smallest correlation-time candidate, seconds.
    #[arg(long, default_value_t = 0.5)]
    tau_min: f64,
    /// Largest correlation-time candidate, seconds.
    #[arg(long, default_value_t = 60.0)]
    tau_max: f64,
    /// Number of log-spaced correlation-time candidates.
    #[arg(long, default_value_t = 25)]
    tau_points: usize,
    /// Upper bound of the noise-RMS search, dimensionless.
    #[arg(long, default_value_t = 3.0)]
    sigma_max: f64,
    #[command(flatten)]
    session: SessionArgs,
}

#[derive(Args)]
struct SnrArgs {
    /// Read parameters (and the current-sigma marker) from a fit report.
    #[arg(long, conflicts_with_all = ["r0", "tauc"])]
    report: Option<PathBuf>,
    /// Equilibrium arrival rate r0, events/second.
    #[arg(long, requires = "a_s", requires = "tauc")]
    r0: Option<f64>,
    /// Signal amplitude, dimensionless.
    #[arg(long = "as")]
    a_s: Option<f64>,
    /// Noise correlation time, seconds.
    #[arg(long)]
    tauc: Option<f64>,
    /// Marker: the current noise RMS, dimensionless.
    #[arg(long)]
    sigma: Option<f64>,
    /// Upper end of the sigma grid, dimensionless.
    #[arg(long, default_value_t = 3.0)]
    sigma_max: f64,
    /// Sigma grid step, dimensionless.
    #[arg(long, default_value_t = 0.01)]
    sigma_step: f64,
    /// Output curve CSV path.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct AcfArgs {
    /// Input tick CSV path (empirical autocorrelation).
    #[arg(short, long)]
    input: Option<PathBuf>,
    /// Keep only this symbol when reading the tick file.
    #[arg(long)]
    symbol: Option<String>,
    /// Equilibrium arrival rate r0, events/second (model autocorrelation).
    #[arg(long)]
    r0: Option<f64>,
    /// Signal amplitude, dimensionless.
    #[arg(long = "as", default_value_t = 0.0)]
    a_s: f64,
    /// Noise root-mean-square, dimensionless.
    #[arg(long)]
    sigma: Option<f64>,
    /// Noise correlation time, seconds.
    #[arg(long)]
    tauc: Option<f64>,
    /// Signal frequency, hertz.
    #[arg(long, default_value_t = DEFAULT_SIGNAL_FREQ_HZ)]
    fs: f64,
    /// Monte Carlo replicas for the model autocorrelation.
    #[arg(long, default_value_t = 20)]
    replicas: usize,
    /// RNG seed (required for the model autocorrelation).
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum lag, seconds.
    #[arg(long, default_value_t = 60)]
    max_lag: usize,
    /// Output CSV path with columns lag_s,value,noise_floor.
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    session: SessionArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Fit(args) => cmd_fit(&args),
        Command::Snr(args) => cmd_snr(&args),
        Command::Acf(args) => cmd_acf(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let params = ModelParams::new(args.r0, args.a_s, args.fs, args.sigma, args.tauc)?;
    let session = args.session.build()?;
    let summary = synth_dataset(&params, &session, args.seed, &args.output, &args.symbol)?;
    let span = session.days as f64 * f64::from(session.session_length);
    println!(
        "wrote {} ({} ticks) with sidecar {}",
        summary.ticks_path.display(),
        summary.total_ticks,
        summary.meta_path.display()
    );
    println!("total trades: {}", summary.total_ticks);
    println!(
        "mean rate: {:.6} events/second over {} days",
        summary.total_ticks as f64 / span,
        session.days
    );
    Ok(())
}

fn print_params(params: &ModelParams) {
    println!("r0      = {:.6} events/second", params.r0);
    println!("a_s     = {:.6}", params.a_s);
    println!("f_s     = {:.8e} Hz", params.f_s);
    println!("sigma   = {:.6}", params.sigma);
    println!("tau_c   = {:.4} seconds", params.tau_c);
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let session = args.session.build()?;
    if args.tau_points < 1 || !(args.tau_min > 0.0) || !(args.tau_max > args.tau_min) {
        return Err(Error::InvalidGrid(
            "need tau_points >= 1 and 0 < tau_min < tau_max".into(),
        ));
    }
    let ticks = parse_ticks_path(
        &args.input,
        f64::from(session.session_length),
        args.symbol.as_deref(),
    )?;
    let tau_grid: Vec<f64> = if args.tau_points == 1 {
        vec![args.tau_min]
    } else {
        (0..args.tau_points)
            .map(|k| {
                args.tau_min
                    * (args.tau_max / args.tau_min)
                        .powf(k as f64 / (args.tau_points - 1) as f64)
            })
            .collect()
    };
    let config = FitConfig {
        seed: args.seed,
        tau_grid,
        tau_replicas: args.replicas,
        tau_mc_days: args.mc_days,
        acf_max_lag: args.acf_max_lag,
        sigma_max: args.sigma_max,
        input: Some(args.input.display().to_string()),
    };
    let report = fit_all(&ticks, &session, &config)?;
    print_params(&report.params);
    println!("tau_c * r0 = {:.4}", report.sr.tau_c_r0);
    println!(
        "SR verdict: {}",
        if report.sr.condition {
            "resonance (tau_c * r0 < 0.25)"
        } else {
            "no resonance (tau_c * r0 >= 0.25)"
        }
    );
    if report.sr.tau_c_at_grid_edge {
        println!("note: selected tau_c sits at a grid endpoint (grid truncation)");
    }
    if report.sr.sigma_at_bound {
        println!("note: fitted sigma sits at a search bound");
    }
    println!(
        "residuals: pattern_sse = {:.6e}, acf_mse = {:.6e}, pdf_sse = {:.6e}",
        report.residuals.pattern_sse, report.residuals.acf_mse, report.residuals.pdf_sse
    );
    if let Some(out) = &args.output {
        write_report(&report, out)?;
        println!("report written to {}", out.display());
    }
    Ok(())
}

fn snr_inputs(args: &SnrArgs) -> Result<(ModelParams, Option<f64>)> {
    if let Some(path) = &args.report {
        let report: FitReport = read_report(path)?;
        let marker = args.sigma.or(Some(report.params.sigma));
        return Ok((report.params, marker));
    }
    match (args.r0, args.a_s, args.tauc) {
        (Some(r0), Some(a_s), Some(tauc)) => {
            let params = ModelParams::new(r0, a_s, DEFAULT_SIGNAL_FREQ_HZ, 0.0, tauc)?;
            Ok((params, args.sigma))
        }
        _ => Err(Error::InvalidParams(
            "provide either --report or all of --r0, --as, --tauc".into(),
        )),
    }
}

fn cmd_snr(args: &SnrArgs) -> Result<()> {
    if !(args.sigma_step > 0.0) || !(args.sigma_max > 0.0) {
        return Err(Error::InvalidGrid(
            "sigma_max and sigma_step must be positive".into(),
        ));
    }
    let (params, marker) = snr_inputs(args)?;
    let n = (args.sigma_max / args.sigma_step).round() as usize;
    let grid: Vec<f64> = (0..=n).map(|i| i as f64 * args.sigma_step).collect();
    let curve: SnrCurve = snr_curve(&params, &grid)?;
    match curve.argmax_sigma {
        Some(s) if curve.sr_detected => println!(
            "maximum normalized SNR {:.4} at sigma = {:.4}",
            curve.normalized_at(s).unwrap(),
            s
        ),
        _ => println!("no interior maximum on the grid"),
    }
    println!(
        "SR verdict: {}",
        if curve.sr_detected {
            "resonance"
        } else {
            "no resonance"
        }
    );
    if let Some(m) = marker {
        if let Some(v) = curve.normalized_at(m) {
            println!("current sigma = {m:.4}: normalized SNR {v:.4}");
        }
    }
    write_snr_curve(&curve, &args.output)?;
    println!("curve written to {}", args.output.display());
    Ok(())
}

fn cmd_acf(args: &AcfArgs) -> Result<()> {
    let session = args.session.build()?;
    let acf = if let Some(input) = &args.input {
        let ticks = parse_ticks_path(
            input,
            f64::from(session.session_length),
            args.symbol.as_deref(),
        )?;
        let counts = counts_from_ticks(&ticks, &session)?;
        empirical_autocorr(&counts, args.max_lag)?
    } else {
        let (r0, sigma, tauc, seed) = match (args.r0, args.sigma, args.tauc, args.seed) {
            (Some(r0), Some(sigma), Some(tauc), Some(seed)) => (r0, sigma, tauc, seed),
            _ => {
                return Err(Error::InvalidParams(
                    "provide --input, or all of --r0, --sigma, --tauc, --seed".into(),
                ))
            }
        };
        let params = ModelParams::new(r0, args.a_s, args.fs, sigma, tauc)?;
        if args.replicas == 0 {
            return Err(Error::InvalidParams("replicas must be >= 1".into()));
        }
        mc_autocorr(&params, &session, args.replicas, args.max_lag, seed)?
    };
    write_autocorr(&acf, &args.output)?;
    println!(
        "wrote {} ({} lags, noise floor {:.6})",
        args.output.display(),
        acf.values.len(),
        acf.noise_floor
    );
    Ok(())
}
