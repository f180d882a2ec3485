//! Calibration pipeline: binning, rate-pattern fit, empirical
//! autocorrelation, correlation-time fit by Monte Carlo matching, and
//! noise-intensity fit via the Poisson-lognormal count distribution.
//!
//! Two model-consistency corrections make the pipeline recover the
//! generating parameters on synthetic data:
//!
//! 1. Mean de-bias. The rate noise `exp(W)` has mean `exp(sigma^2/2)`, so
//!    the per-bin average rate estimates `r0 * exp(sigma^2/2) * exp(a_s
//!    cos ...)`, not the equilibrium rate itself. [`fit_rate_pattern`]
//!    returns the observed mean-rate amplitude; [`fit_all`] reports the
//!    de-biased equilibrium rate `r0 = amplitude * exp(-sigma^2/2)`.
//!
//! 2. Within-bin averaging. The count-distribution fit treats the noise
//!    as a single lognormal draw per bin, but the noise decorrelates on
//!    the scale `tau_c`, usually far below the bin width; the bin count
//!    actually mixes over the bin-averaged multiplier, whose dispersion is
//!    much smaller than the per-second one. [`fit_sigma`] therefore
//!    measures the effective per-bin RMS, and the per-second RMS is
//!    recovered by inverting the averaging relation
//!    ([`sigma_from_bin_sigma`]) jointly with the correlation time
//!    ([`fit_tau_sigma`]), so every candidate pair is consistent with the
//!    observed per-bin dispersion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};
use crate::ingest::TickRecord;
use crate::model::ModelParams;
use crate::quad::{poisson_lognormal_pmf, suggested_n_max};
use crate::rng::derive_seed;
use crate::session::SessionSpec;
use crate::simulate::{mc_autocorr, AutocorrFn, CountSeries, DailySignalMoments};

#[cfg(not(feature = "parallel"))]
use crate::simulate::sample_autocorr_seq;
#[cfg(feature = "parallel")]
use crate::simulate::sample_autocorr_par;

/// Per-day, per-bin trade counts: the estimation pipeline's working form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinnedCounts {
    /// Indexed `[day][bin]`, with `session.bins_per_day` columns.
    pub counts: Vec<Vec<u32>>,
    pub session: SessionSpec,
}

impl BinnedCounts {
    pub fn days(&self) -> usize {
        self.counts.len()
    }
}

/// Per-bin average arrival rate with bin mid-times.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePattern {
    /// Events/second, one per bin.
    pub rates: Vec<f64>,
    /// Bin mid-times, seconds from session open.
    pub mid_times: Vec<f64>,
    pub session: SessionSpec,
}

fn check_tick(tick: &TickRecord, session: &SessionSpec) -> Result<()> {
    let reject = |reason: String| Error::OutOfSession {
        day: tick.day,
        t: tick.t,
        symbol: tick.symbol.clone(),
        reason,
    };
    if !tick.t.is_finite() || tick.t < 0.0 || tick.t >= f64::from(session.session_length) {
        return Err(reject(format!(
            "t outside session [0, {})",
            session.session_length
        )));
    }
    if tick.day as usize >= session.days {
        return Err(reject(format!("day beyond session days {}", session.days)));
    }
    Ok(())
}

/// Bins ticks per `[day][bin]` following the session layout: the warmup
/// region and the trailing remainder of each day are dropped. Ticks with
/// timestamps outside the session are rejected with a diagnostic naming
/// the offending record.
pub fn bin_counts(ticks: &[TickRecord], session: &SessionSpec) -> Result<BinnedCounts> {
    session.validate()?;
    let mut counts = vec![vec![0u32; session.bins_per_day as usize]; session.days];
    for tick in ticks {
        check_tick(tick, session)?;
        if let Some(b) = session.bin_of(tick.t) {
            counts[tick.day as usize][b as usize] += 1;
        }
    }
    Ok(BinnedCounts {
        counts,
        session: session.clone(),
    })
}

/// Bins an already generated count series with the same layout as
/// [`bin_counts`]; used to cross-check the tick path against the count
/// path.
pub fn bin_series(series: &CountSeries, session: &SessionSpec) -> Result<BinnedCounts> {
    session.validate()?;
    let dt = f64::from(session.tick_resolution);
    let per_day = series.ticks_per_day();
    let mut counts = vec![vec![0u32; session.bins_per_day as usize]; series.days()];
    for (k, &c) in series.values().iter().enumerate() {
        let day = k / per_day;
        let t = (k % per_day) as f64 * dt;
        if let Some(b) = session.bin_of(t) {
            counts[day][b as usize] += c;
        }
    }
    Ok(BinnedCounts {
        counts,
        session: session.clone(),
    })
}

/// 1-second-resolution count series over the full session (warmup
/// included), for autocorrelation estimation.
pub fn counts_from_ticks(ticks: &[TickRecord], session: &SessionSpec) -> Result<CountSeries> {
    session.validate()?;
    let per_day = session.ticks_per_day();
    let dt = f64::from(session.tick_resolution);
    let mut counts = vec![0u32; session.total_ticks()];
    for tick in ticks {
        check_tick(tick, session)?;
        let k = tick.day as usize * per_day + (tick.t / dt) as usize;
        counts[k] += 1;
    }
    Ok(CountSeries::new(counts, per_day, session.tick_resolution))
}

/// Per-bin maximum-likelihood rate: total count over days divided by the
/// total observation time of the bin.
pub fn empirical_rate_pattern(binned: &BinnedCounts) -> RatePattern {
    let session = &binned.session;
    let days = binned.days().max(1) as f64;
    let width = f64::from(session.bin_width);
    let bins = session.bins_per_day as usize;
    let mut rates = vec![0.0; bins];
    for day in &binned.counts {
        for (b, &c) in day.iter().enumerate() {
            rates[b] += f64::from(c);
        }
    }
    for r in &mut rates {
        *r /= days * width;
    }
    let mid_times = (0..bins).map(|b| session.bin_mid_time(b as u32)).collect();
    RatePattern {
        rates,
        mid_times,
        session: binned.session.clone(),
    }
}

/// Result of the daily-pattern fit. `amplitude` is the least-squares
/// multiplier of `exp(a_s cos(2 pi f_s t))` in rate space: the observed
/// mean-rate amplitude (the equilibrium rate times the lognormal mean
/// factor when rate noise is present).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternFit {
    pub amplitude: f64,
    pub a_s: f64,
    pub sse: f64,
}

/// Least-squares fit of the daily pattern `amp * exp(a_s cos(2 pi f_s t_b))`
/// with `f_s = 1 / session_length`, initialized from a log-domain linear
/// regression over positive-rate bins and refined by a profiled
/// one-dimensional search in `a_s` (for fixed `a_s` the optimal amplitude
/// is closed-form). Fails when fewer than 3 bins have positive rate.
pub fn fit_rate_pattern(pattern: &RatePattern) -> Result<PatternFit> {
    let f_s = 1.0 / f64::from(pattern.session.session_length);
    let cosines: Vec<f64> = pattern
        .mid_times
        .iter()
        .map(|&t| (2.0 * std::f64::consts::PI * f_s * t).cos())
        .collect();
    let rates = &pattern.rates;

    let positive: Vec<usize> = (0..rates.len()).filter(|&b| rates[b] > 0.0).collect();
    if positive.len() < 3 {
        return Err(Error::Degenerate(format!(
            "only {} bins with positive rate; need at least 3",
            positive.len()
        )));
    }

    // Log-domain initializer: ln y = ln amp + a * cos.
    let n = positive.len() as f64;
    let mean_c = positive.iter().map(|&b| cosines[b]).sum::<f64>() / n;
    let mean_l = positive.iter().map(|&b| rates[b].ln()).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &b in &positive {
        let dc = cosines[b] - mean_c;
        sxx += dc * dc;
        sxy += dc * (rates[b].ln() - mean_l);
    }
    let a_init = if sxx > 0.0 { sxy / sxx } else { 0.0 };

    // Profiled objective over all bins: for fixed a, the optimal amplitude
    // is sum(y e) / sum(e^2).
    let eval = |a: f64| -> (f64, f64) {
        let mut se2 = 0.0;
        let mut sye = 0.0;
        for (b, &c) in cosines.iter().enumerate() {
            let e = (a * c).exp();
            se2 += e * e;
            sye += rates[b] * e;
        }
        let amp = (sye / se2).max(f64::MIN_POSITIVE);
        let sse: f64 = cosines
            .iter()
            .enumerate()
            .map(|(b, &c)| {
                let d = rates[b] - amp * (a * c).exp();
                d * d
            })
            .sum();
        (sse, amp)
    };

    let lo = (a_init - 1.0).max(-6.0);
    let hi = (a_init + 1.0).min(6.0);
    let steps = 400usize;
    let mut best = (f64::INFINITY, lo);
    for k in 0..=steps {
        let a = lo + (hi - lo) * k as f64 / steps as f64;
        let (sse, _) = eval(a);
        if sse < best.0 {
            best = (sse, a);
        }
    }
    let span = (hi - lo) / steps as f64;
    let (a_s, _) = golden_min(
        &mut |a| eval(a).0,
        (best.1 - span).max(lo),
        (best.1 + span).min(hi),
        1e-10,
    );
    let (sse, amplitude) = eval(a_s);
    Ok(PatternFit {
        amplitude,
        a_s,
        sse,
    })
}

/// Sample autocorrelation of the concatenated count series up to `max_lag`
/// intervals, with noise floor `3/sqrt(series length)`. Errors on a
/// constant series.
pub fn empirical_autocorr(counts: &CountSeries, max_lag: usize) -> Result<AutocorrFn> {
    #[cfg(feature = "parallel")]
    let values = sample_autocorr_par(&counts.to_f64(), max_lag)?;
    #[cfg(not(feature = "parallel"))]
    let values = sample_autocorr_seq(&counts.to_f64(), max_lag)?;
    Ok(assemble_acf(counts, max_lag, values))
}

/// Sequential reference implementation of [`empirical_autocorr`];
/// bit-identical to the parallel path.
pub fn empirical_autocorr_seq(counts: &CountSeries, max_lag: usize) -> Result<AutocorrFn> {
    let values = crate::simulate::sample_autocorr_seq(&counts.to_f64(), max_lag)?;
    Ok(assemble_acf(counts, max_lag, values))
}

fn assemble_acf(counts: &CountSeries, max_lag: usize, values: Vec<f64>) -> AutocorrFn {
    let dt = f64::from(counts.tick_resolution());
    AutocorrFn {
        lags: (1..=max_lag).map(|s| s as f64 * dt).collect(),
        values,
        noise_floor: 3.0 / (counts.len() as f64).sqrt(),
    }
}

/// Count distribution of a 2-minute-style bin: Poisson mixed over a
/// lognormal rate. `P(n)` for `n = 0..=n_max`, computed by Gauss-Hermite
/// quadrature on the Gaussian log-rate; no renormalization. Fails when
/// `n_max` leaves more than 1e-9 of truncated tail mass, suggesting a
/// sufficient `n_max`.
pub fn mixed_pdf(rate_det: f64, bin_width: f64, sigma: f64, n_max: usize) -> Result<Vec<f64>> {
    if !(rate_det > 0.0) || !rate_det.is_finite() {
        return Err(Error::InvalidParams(format!(
            "rate_det = {rate_det} must be positive and finite"
        )));
    }
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::InvalidParams(format!(
            "bin_width = {bin_width} must be positive and finite"
        )));
    }
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::InvalidParams(format!(
            "sigma = {sigma} must be nonnegative and finite"
        )));
    }
    let mean_count = rate_det * bin_width;
    let p = poisson_lognormal_pmf(mean_count, sigma, n_max);
    let tail = 1.0 - p.iter().sum::<f64>();
    if tail > 1e-9 {
        return Err(Error::TailMass {
            n_max,
            tail,
            suggested: suggested_n_max(mean_count, sigma),
        });
    }
    Ok(p)
}

/// Result of the noise-intensity fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaFit {
    /// Per-second noise RMS. Equal to `bin_sigma` unless the fit applied
    /// the within-bin averaging correction.
    pub sigma: f64,
    /// Effective per-bin lognormal RMS: the direct minimizer of the
    /// count-distribution objective.
    pub bin_sigma: f64,
    /// Sum of squared frequency residuals over all bins at the minimum.
    pub sse: f64,
    /// True when the search settled on a boundary of `[0, sigma_max]`.
    pub at_bound: bool,
}

/// Squared coefficient of variation of the bin-averaged noise multiplier
/// `mean of exp(W_i)` over `width_steps` samples spaced `dt` seconds, for
/// per-sample RMS `sigma` and correlation time `tau_c`:
///
/// ```text
/// (1/T^2) [ T (e^(s2) - 1) + 2 sum_{s=1}^{T-1} (T - s)(e^(s2 rho_s) - 1) ]
/// ```
///
/// with `s2 = sigma^2` and `rho_s = exp(-s dt / tau_c)`.
pub fn bin_dispersion_cv2(sigma: f64, tau_c: f64, width_steps: usize, dt: f64) -> f64 {
    let s2 = sigma * sigma;
    let t = width_steps as f64;
    let mut acc = t * (s2.exp() - 1.0);
    for s in 1..width_steps {
        let rho = (-(s as f64) * dt / tau_c).exp();
        acc += 2.0 * (t - s as f64) * ((s2 * rho).exp() - 1.0);
    }
    acc / (t * t)
}

/// Largest per-second RMS considered by the averaging inversion.
pub const SIGMA_INVERSION_MAX: f64 = 8.0;

/// Per-second noise RMS whose bin-averaged multiplier has the dispersion
/// of a single lognormal draw with RMS `bin_sigma`: solves
/// `bin_dispersion_cv2(sigma, tau_c, ...) = e^(bin_sigma^2) - 1` by
/// bisection (the left side is strictly increasing in `sigma`). Values
/// beyond [`SIGMA_INVERSION_MAX`] are clamped.
pub fn sigma_from_bin_sigma(bin_sigma: f64, tau_c: f64, width_steps: usize, dt: f64) -> f64 {
    if bin_sigma <= 0.0 {
        return 0.0;
    }
    let target = (bin_sigma * bin_sigma).exp() - 1.0;
    let (mut lo, mut hi) = (bin_sigma, SIGMA_INVERSION_MAX);
    if bin_dispersion_cv2(hi, tau_c, width_steps, dt) < target {
        return hi;
    }
    debug_assert!(bin_dispersion_cv2(lo, tau_c, width_steps, dt) <= target + 1e-15);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if bin_dispersion_cv2(mid, tau_c, width_steps, dt) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

struct BinHist {
    /// Observed count frequencies padded with zeros up to the evaluation
    /// range.
    freq: Vec<f64>,
    cos_mid: f64,
}

fn build_histograms(binned: &BinnedCounts) -> Vec<BinHist> {
    let session = &binned.session;
    let f_s = 1.0 / f64::from(session.session_length);
    let days = binned.days().max(1) as f64;
    let bins = session.bins_per_day as usize;
    (0..bins)
        .map(|b| {
            let max_count = binned
                .counts
                .iter()
                .map(|day| day[b])
                .max()
                .unwrap_or(0) as usize;
            // Pad past the largest observation so candidate distributions
            // pushing mass beyond the data are penalized.
            let upper = max_count + 10;
            let mut freq = vec![0.0; upper + 1];
            for day in &binned.counts {
                freq[day[b] as usize] += 1.0 / days;
            }
            let t = session.bin_mid_time(b as u32);
            BinHist {
                freq,
                cos_mid: (2.0 * std::f64::consts::PI * f_s * t).cos(),
            }
        })
        .collect()
}

fn sigma_objective(
    hists: &[BinHist],
    amplitude: f64,
    a_s: f64,
    bin_width: f64,
    sigma: f64,
) -> f64 {
    // Tie each candidate sigma to the observed mean: the deterministic
    // rate is the fitted mean amplitude divided by the lognormal mean
    // factor exp(sigma^2/2).
    let debias = (-sigma * sigma / 2.0).exp();
    let per_bin = |h: &BinHist| -> f64 {
        let rate = amplitude * debias * (a_s * h.cos_mid).exp();
        let pmf = poisson_lognormal_pmf(rate * bin_width, sigma, h.freq.len() - 1);
        h.freq
            .iter()
            .zip(&pmf)
            .map(|(f, p)| (f - p) * (f - p))
            .sum()
    };
    #[cfg(feature = "parallel")]
    let terms: Vec<f64> = {
        use rayon::prelude::*;
        hists.par_iter().map(per_bin).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let terms: Vec<f64> = hists.iter().map(per_bin).collect();
    terms.iter().sum()
}

/// Default upper bound of the sigma search.
pub const SIGMA_SEARCH_MAX: f64 = 3.0;

/// Fits the effective per-bin noise RMS by matching the per-bin count
/// distributions of all bins at once in the mean-square sense: coarse grid
/// over `[0, sigma_max]` followed by golden-section refinement to 1e-4.
/// `amplitude` and `a_s` come from [`fit_rate_pattern`]. The returned
/// `sigma` equals `bin_sigma`; see [`fit_sigma_corrected`] for the
/// per-second value when the correlation time is known.
pub fn fit_sigma(binned: &BinnedCounts, amplitude: f64, a_s: f64) -> Result<SigmaFit> {
    fit_sigma_bounded(binned, amplitude, a_s, SIGMA_SEARCH_MAX)
}

/// [`fit_sigma`] followed by the within-bin averaging inversion at a known
/// correlation time: `sigma` is the per-second RMS consistent with the
/// fitted per-bin dispersion.
pub fn fit_sigma_corrected(
    binned: &BinnedCounts,
    amplitude: f64,
    a_s: f64,
    tau_c: f64,
) -> Result<SigmaFit> {
    let mut fit = fit_sigma(binned, amplitude, a_s)?;
    let session = &binned.session;
    let steps = (session.bin_width / session.tick_resolution) as usize;
    fit.sigma = sigma_from_bin_sigma(
        fit.bin_sigma,
        tau_c,
        steps,
        f64::from(session.tick_resolution),
    );
    Ok(fit)
}

pub fn fit_sigma_bounded(
    binned: &BinnedCounts,
    amplitude: f64,
    a_s: f64,
    sigma_max: f64,
) -> Result<SigmaFit> {
    if !(amplitude > 0.0) {
        return Err(Error::InvalidParams(format!(
            "amplitude = {amplitude} must be positive"
        )));
    }
    if binned.days() == 0 {
        return Err(Error::Degenerate("no days to fit".into()));
    }
    let hists = build_histograms(binned);
    let width = f64::from(binned.session.bin_width);
    let mut eval = |s: f64| sigma_objective(&hists, amplitude, a_s, width, s);

    let steps = (sigma_max / 0.1).round() as usize;
    let mut best = (f64::INFINITY, 0usize);
    let mut xs = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let s = sigma_max * k as f64 / steps as f64;
        xs.push(s);
        let v = eval(s);
        if v < best.0 {
            best = (v, k);
        }
    }
    let lo = if best.1 == 0 { 0.0 } else { xs[best.1 - 1] };
    let hi = if best.1 == steps {
        sigma_max
    } else {
        xs[best.1 + 1]
    };
    let (sigma, sse) = golden_min(&mut eval, lo, hi, 1e-4);
    Ok(SigmaFit {
        sigma,
        bin_sigma: sigma,
        sse,
        at_bound: sigma <= 1e-3 || sigma >= sigma_max - 1e-3,
    })
}

/// Monte Carlo configuration of the correlation-time fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauFitConfig {
    /// Independent replicas per candidate.
    pub replicas: usize,
    /// Days per replica session.
    pub mc_days: usize,
    /// Number of lags entering the mean-square error.
    pub max_lag: usize,
    pub seed: u64,
}

/// Result of the correlation-time fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauFit {
    pub tau_c: f64,
    /// Mean-square error between simulated and empirical autocorrelation
    /// at the selected candidate.
    pub mse: f64,
    /// True when an endpoint of the candidate grid was selected,
    /// signaling grid truncation.
    pub at_grid_edge: bool,
    pub index: usize,
}

/// Default candidate grid: 25 log-spaced correlation times over
/// `[0.5, 60]` seconds.
pub fn default_tau_grid() -> Vec<f64> {
    let n = 25usize;
    let (lo, hi) = (0.5f64, 60.0f64);
    (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect()
}

/// Suggested autocorrelation lag range for a candidate grid: long enough
/// to resolve the slowest candidate's decay.
pub fn acf_lag_range(tau_grid: &[f64]) -> usize {
    let max_tau = tau_grid.iter().cloned().fold(0.0f64, f64::max);
    60usize.max((5.0 * max_tau).ceil() as usize)
}

/// Selects the correlation time whose Monte Carlo count autocorrelation
/// minimizes the mean-square error against the empirical one.
///
/// `params.tau_c` is ignored; every other field (including the fitted
/// noise RMS) parameterizes the candidate simulations. Candidate `j` runs
/// [`mc_autocorr`] under the derived seed `derive_seed(cfg.seed, j)` over a
/// session of `cfg.mc_days` days, so candidates own independent streams and
/// the selection is independent of evaluation order; ties break toward the
/// smaller correlation time.
pub fn fit_tau_c(
    empirical: &AutocorrFn,
    params: &ModelParams,
    session: &SessionSpec,
    tau_grid: &[f64],
    cfg: &TauFitConfig,
) -> Result<TauFit> {
    if tau_grid.is_empty() {
        return Err(Error::InvalidGrid("empty tau candidate grid".into()));
    }
    for w in tau_grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidGrid(
                "tau candidate grid must be strictly increasing".into(),
            ));
        }
    }
    if tau_grid[0] <= 0.0 {
        return Err(Error::InvalidGrid("tau candidates must be positive".into()));
    }
    if empirical.values.len() < cfg.max_lag {
        return Err(Error::InvalidGrid(format!(
            "empirical autocorrelation has {} lags; need {}",
            empirical.values.len(),
            cfg.max_lag
        )));
    }
    let mc_session = SessionSpec {
        days: cfg.mc_days,
        ..session.clone()
    };
    mc_session.validate()?;

    let candidate_mse = |j: usize| -> Result<f64> {
        let candidate = params.with_tau_c(tau_grid[j]);
        let sim = mc_autocorr(
            &candidate,
            &mc_session,
            cfg.replicas,
            cfg.max_lag,
            derive_seed(cfg.seed, j),
        )?;
        let mse = sim
            .values
            .iter()
            .zip(&empirical.values)
            .map(|(s, e)| (s - e) * (s - e))
            .sum::<f64>()
            / cfg.max_lag as f64;
        Ok(mse)
    };

    #[cfg(feature = "parallel")]
    let mses: Vec<f64> = {
        use rayon::prelude::*;
        (0..tau_grid.len())
            .into_par_iter()
            .map(candidate_mse)
            .collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let mses: Vec<f64> = (0..tau_grid.len())
        .map(candidate_mse)
        .collect::<Result<_>>()?;

    let mut best = 0usize;
    for (j, &m) in mses.iter().enumerate() {
        if m < mses[best] {
            best = j;
        }
    }
    Ok(TauFit {
        tau_c: tau_grid[best],
        mse: mses[best],
        at_grid_edge: best == 0 || best + 1 == tau_grid.len(),
        index: best,
    })
}

/// Result of the joint correlation-time / noise-RMS selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauSigmaFit {
    pub tau_c: f64,
    /// Per-second noise RMS whose expected autocorrelation best matches
    /// the empirical one at the selected correlation time.
    pub sigma: f64,
    /// Monte Carlo autocorrelation mean-square error at the selection.
    pub mse: f64,
    /// Least-squares residual of the expected autocorrelation at the
    /// selected `(tau_c, sigma)`.
    pub acf_sse: f64,
    pub at_grid_edge: bool,
    pub index: usize,
}

/// A tau-independent estimate of the squared noise RMS from the variance
/// of the 1-second counts, with its sampling variance. The count variance
/// is `mean + (amplitude dt)^2 [e^(s2) e2(0) - e1^2]`, strictly increasing
/// in `s2 = sigma^2`, so the observed variance inverts in closed form; the
/// estimate's variance comes from the sample fourth moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionAnchor {
    pub sigma_sq: f64,
    /// Sampling variance of `sigma_sq`.
    pub variance: f64,
}

/// Computes the [`DispersionAnchor`] of a count series given the fitted
/// mean-rate amplitude and signal shape. Returns `None` when the series
/// carries no usable dispersion signal (e.g. at- or under-dispersed).
pub fn dispersion_anchor(
    counts: &CountSeries,
    amplitude: f64,
    a_s: f64,
    f_s: f64,
    session: &SessionSpec,
) -> Option<DispersionAnchor> {
    let n = counts.len() as f64;
    if counts.len() < 2 || amplitude <= 0.0 {
        return None;
    }
    let dt = f64::from(counts.tick_resolution());
    let mut mean = 0.0;
    for &c in counts.values() {
        mean += f64::from(c);
    }
    mean /= n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &c in counts.values() {
        let d = f64::from(c) - mean;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= n;
    m4 /= n;
    let var_of_var = (m4 - m2 * m2) / n;
    if !(var_of_var > 0.0) || m2 <= 0.0 {
        return None;
    }

    let moments = DailySignalMoments::new(a_s.max(0.0), f_s, session, 0);
    let a = amplitude * dt;
    let (e1, e20) = (moments.e1(), moments.e2_at(0));
    // excess variance over the Poisson part, mapped through the model
    let arg = ((m2 - mean) / (a * a) + e1 * e1) / e20;
    let sigma_sq = if arg > 1.0 { arg.ln() } else { 0.0 };
    let slope = a * a * sigma_sq.exp() * e20;
    Some(DispersionAnchor {
        sigma_sq,
        variance: var_of_var / (slope * slope),
    })
}

/// Noise RMS whose expected full-model autocorrelation best matches the
/// empirical one at a fixed correlation time, by least squares over the
/// first `max_lag` lags. The equilibrium rate is tied to the observed
/// mean-rate `amplitude` via `r0 = amplitude exp(-sigma^2/2)` for every
/// candidate. Returns `(sigma, sse)`.
fn sigma_matching_acf(
    empirical: &AutocorrFn,
    moments: &DailySignalMoments,
    amplitude: f64,
    tau_c: f64,
    max_lag: usize,
    sigma_max: f64,
) -> (f64, f64) {
    let mut eval = |sigma: f64| -> f64 {
        let r0 = amplitude * (-sigma * sigma / 2.0).exp();
        let model = moments.count_autocorr(r0, sigma, tau_c, max_lag);
        model
            .iter()
            .zip(&empirical.values)
            .map(|(m, e)| (m - e) * (m - e))
            .sum()
    };
    let steps = (sigma_max / 0.1).round() as usize;
    let mut best = (f64::INFINITY, 0usize);
    for k in 0..=steps {
        let v = eval(sigma_max * k as f64 / steps as f64);
        if v < best.0 {
            best = (v, k);
        }
    }
    let lo = if best.1 == 0 {
        0.0
    } else {
        sigma_max * (best.1 - 1) as f64 / steps as f64
    };
    let hi = if best.1 == steps {
        sigma_max
    } else {
        sigma_max * (best.1 + 1) as f64 / steps as f64
    };
    golden_min(&mut eval, lo, hi, 1e-4)
}

/// Selects the correlation time by Monte Carlo autocorrelation matching,
/// with each candidate's noise RMS fitted from the empirical
/// autocorrelation amplitude: candidate `tau_j` first solves the
/// 1-D least-squares problem for `sigma_j` against the expected full-model
/// autocorrelation (fast, closed form), then simulates with
/// `(sigma_j, tau_j)` and equilibrium rate `amplitude exp(-sigma_j^2/2)`,
/// so every candidate reproduces the observed mean pattern and
/// autocorrelation amplitude and the Monte Carlo mean-square error
/// discriminates the decay.
///
/// All candidates share the replica streams of `cfg.seed` (common random
/// numbers): their Monte Carlo errors are strongly correlated and cancel
/// in the mean-square-error differences that drive the selection, which
/// would otherwise be dominated by independent simulation noise summed
/// over the lag range. The result is deterministic given the seed and
/// independent of evaluation order; ties break toward the smaller
/// correlation time.
#[allow(clippy::too_many_arguments)]
pub fn fit_tau_sigma(
    empirical: &AutocorrFn,
    amplitude: f64,
    a_s: f64,
    session: &SessionSpec,
    tau_grid: &[f64],
    cfg: &TauFitConfig,
    sigma_max: f64,
    dispersion: Option<DispersionAnchor>,
) -> Result<TauSigmaFit> {
    if tau_grid.is_empty() {
        return Err(Error::InvalidGrid("empty tau candidate grid".into()));
    }
    for w in tau_grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidGrid(
                "tau candidate grid must be strictly increasing".into(),
            ));
        }
    }
    if tau_grid[0] <= 0.0 {
        return Err(Error::InvalidGrid("tau candidates must be positive".into()));
    }
    if empirical.values.len() < cfg.max_lag {
        return Err(Error::InvalidGrid(format!(
            "empirical autocorrelation has {} lags; need {}",
            empirical.values.len(),
            cfg.max_lag
        )));
    }
    if !(amplitude > 0.0) {
        return Err(Error::InvalidParams(format!(
            "amplitude = {amplitude} must be positive"
        )));
    }
    let mc_session = SessionSpec {
        days: cfg.mc_days,
        ..session.clone()
    };
    mc_session.validate()?;
    let f_s = 1.0 / f64::from(session.session_length);
    let a_s = a_s.max(0.0);
    let moments = DailySignalMoments::new(a_s, f_s, session, cfg.max_lag);
    // Per-lag noise of the empirical autocorrelation, recovered from its
    // noise floor (3/sqrt(N)).
    let acf_noise_var = (empirical.noise_floor / 3.0).powi(2);

    let candidate = |j: usize| -> Result<(f64, f64, f64)> {
        let tau = tau_grid[j];
        let (sigma, acf_sse) =
            sigma_matching_acf(empirical, &moments, amplitude, tau, cfg.max_lag, sigma_max);
        let r0 = amplitude * (-sigma * sigma / 2.0).exp();
        let params = ModelParams::new(r0, a_s, f_s, sigma, tau)?;
        let sim = mc_autocorr(&params, &mc_session, cfg.replicas, cfg.max_lag, cfg.seed)?;
        let mse = sim
            .values
            .iter()
            .zip(&empirical.values)
            .map(|(s, e)| (s - e) * (s - e))
            .sum::<f64>()
            / cfg.max_lag as f64;
        Ok((mse, sigma, acf_sse))
    };

    #[cfg(feature = "parallel")]
    let results: Vec<(f64, f64, f64)> = {
        use rayon::prelude::*;
        (0..tau_grid.len())
            .into_par_iter()
            .map(candidate)
            .collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<(f64, f64, f64)> = (0..tau_grid.len())
        .map(candidate)
        .collect::<Result<_>>()?;

    let mut best = 0usize;
    for (j, r) in results.iter().enumerate() {
        if r.0 < results[best].0 {
            best = j;
        }
    }
    let tau_c = tau_grid[best];
    let sigma_acf = results[best].1;

    // Final noise RMS: inverse-variance combination (in sigma^2) of the
    // autocorrelation-matched estimate at the selected correlation time
    // with the tau-free count-dispersion estimate. The combination runs
    // after the selection so anchor noise cannot tilt it.
    let sigma = match dispersion {
        Some(anchor) if anchor.variance > 0.0 => {
            let s2_acf = sigma_acf * sigma_acf;
            let h = (0.05 * s2_acf).max(1e-3);
            let lo = (s2_acf - h).max(0.0);
            let up = moments.count_autocorr(
                amplitude * (-(s2_acf + h) / 2.0).exp(),
                (s2_acf + h).sqrt(),
                tau_c,
                cfg.max_lag,
            );
            let dn = moments.count_autocorr(
                amplitude * (-lo / 2.0).exp(),
                lo.sqrt(),
                tau_c,
                cfg.max_lag,
            );
            let grad_sq: f64 = up
                .iter()
                .zip(&dn)
                .map(|(u, d)| {
                    let g = (u - d) / (s2_acf + h - lo);
                    g * g
                })
                .sum();
            if grad_sq > 0.0 {
                let v_acf = acf_noise_var / grad_sq;
                let w = anchor.variance / (anchor.variance + v_acf);
                (w * s2_acf + (1.0 - w) * anchor.sigma_sq).max(0.0).sqrt()
            } else {
                sigma_acf
            }
        }
        _ => sigma_acf,
    };

    Ok(TauSigmaFit {
        tau_c,
        sigma,
        mse: results[best].0,
        acf_sse: results[best].2,
        at_grid_edge: best == 0 || best + 1 == tau_grid.len(),
        index: best,
    })
}

/// Residual metrics per pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// Rate-space sum of squared errors of the daily-pattern fit.
    pub pattern_sse: f64,
    /// Mean-square autocorrelation error at the selected correlation time.
    pub acf_mse: f64,
    /// Count-distribution sum of squared errors at the fitted sigma.
    pub pdf_sse: f64,
}

/// Resonance summary of a fitted parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrSummary {
    pub tau_c_r0: f64,
    pub condition: bool,
    pub tau_c_at_grid_edge: bool,
    pub sigma_at_bound: bool,
}

/// Inputs that produced a report: file, session, seeds, and grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub input: Option<String>,
    pub session: SessionSpec,
    pub seed: u64,
    pub tau_grid: Vec<f64>,
    pub tau_replicas: usize,
    pub tau_mc_days: usize,
    pub acf_max_lag: usize,
    pub sigma_max: f64,
    /// Observed mean-rate amplitude before the lognormal de-bias.
    pub rate_amplitude: f64,
    /// Effective per-bin noise RMS before the within-bin averaging
    /// correction.
    pub bin_sigma: f64,
}

/// Full output of [`fit_all`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: ModelParams,
    pub residuals: Residuals,
    pub sr: SrSummary,
    pub provenance: Provenance,
}

/// Configuration of the full pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub seed: u64,
    pub tau_grid: Vec<f64>,
    pub tau_replicas: usize,
    pub tau_mc_days: usize,
    /// Lags entering the empirical autocorrelation and the tau fit;
    /// `None` derives it from the candidate grid via [`acf_lag_range`].
    pub acf_max_lag: Option<usize>,
    pub sigma_max: f64,
    /// Recorded in provenance.
    pub input: Option<String>,
}

impl FitConfig {
    pub fn new(seed: u64) -> Self {
        FitConfig {
            seed,
            tau_grid: default_tau_grid(),
            tau_replicas: 40,
            tau_mc_days: 1,
            acf_max_lag: None,
            sigma_max: SIGMA_SEARCH_MAX,
            input: None,
        }
    }
}

/// Runs the whole calibration pipeline on a tick list and assembles the
/// report. Stage failures carry the stage name. Deterministic given
/// identical inputs, configuration, and seed.
pub fn fit_all(ticks: &[TickRecord], session: &SessionSpec, config: &FitConfig) -> Result<FitReport> {
    session.validate()?;
    if ticks.is_empty() {
        return Err(
            Error::Degenerate("no ticks in dataset".into()).at_stage(Stage::Binning),
        );
    }
    let binned = bin_counts(ticks, session).map_err(|e| e.at_stage(Stage::Binning))?;

    let pattern = empirical_rate_pattern(&binned);
    let pattern_fit = fit_rate_pattern(&pattern).map_err(|e| e.at_stage(Stage::PatternFit))?;

    let max_lag = config
        .acf_max_lag
        .unwrap_or_else(|| acf_lag_range(&config.tau_grid));
    let counts = counts_from_ticks(ticks, session).map_err(|e| e.at_stage(Stage::Autocorr))?;
    let emp_acf =
        empirical_autocorr(&counts, max_lag).map_err(|e| e.at_stage(Stage::Autocorr))?;

    let sigma_fit = fit_sigma_bounded(&binned, pattern_fit.amplitude, pattern_fit.a_s, config.sigma_max)
        .map_err(|e| e.at_stage(Stage::SigmaFit))?;

    let tau_cfg = TauFitConfig {
        replicas: config.tau_replicas,
        mc_days: config.tau_mc_days,
        max_lag,
        seed: config.seed,
    };
    let a_s = pattern_fit.a_s.max(0.0);
    let f_s_session = 1.0 / f64::from(session.session_length);
    let anchor = dispersion_anchor(&counts, pattern_fit.amplitude, a_s, f_s_session, session);
    let tau_fit = fit_tau_sigma(
        &emp_acf,
        pattern_fit.amplitude,
        a_s,
        session,
        &config.tau_grid,
        &tau_cfg,
        config.sigma_max,
        anchor,
    )
    .map_err(|e| e.at_stage(Stage::TauFit))?;

    // De-bias the equilibrium rate by the lognormal mean factor.
    let r0 = pattern_fit.amplitude * (-tau_fit.sigma * tau_fit.sigma / 2.0).exp();
    let f_s = 1.0 / f64::from(session.session_length);
    let params = ModelParams::new(r0, a_s, f_s, tau_fit.sigma, tau_fit.tau_c)
        .map_err(|e| e.at_stage(Stage::TauFit))?;
    Ok(FitReport {
        params,
        residuals: Residuals {
            pattern_sse: pattern_fit.sse,
            acf_mse: tau_fit.mse,
            pdf_sse: sigma_fit.sse,
        },
        sr: SrSummary {
            tau_c_r0: params.sr_product(),
            condition: crate::model::sr_condition(params.r0, params.tau_c),
            tau_c_at_grid_edge: tau_fit.at_grid_edge,
            sigma_at_bound: sigma_fit.at_bound,
        },
        provenance: Provenance {
            input: config.input.clone(),
            session: session.clone(),
            seed: config.seed,
            tau_grid: config.tau_grid.clone(),
            tau_replicas: config.tau_replicas,
            tau_mc_days: config.tau_mc_days,
            acf_max_lag: max_lag,
            sigma_max: config.sigma_max,
            rate_amplitude: pattern_fit.amplitude,
            bin_sigma: sigma_fit.bin_sigma,
        },
    })
}

/// Golden-section minimization on `[a, b]` to interval width `tol`.
fn golden_min(f: &mut impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INVPHI * (b - a);
    let mut d = a + INVPHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INVPHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}
