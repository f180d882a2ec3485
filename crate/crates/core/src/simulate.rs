//! Generators for noise paths, rate paths, count series, and tick
//! timestamps, plus the Monte Carlo and closed-form autocorrelation
//! machinery used for correlation-time calibration.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::TickRecord;
use crate::model::ModelParams;
use crate::rng::stream_rng;
use crate::session::SessionSpec;

/// Counts per tick-resolution interval, concatenated across days.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountSeries {
    counts: Vec<u32>,
    ticks_per_day: usize,
    tick_resolution: u32,
}

impl CountSeries {
    pub fn new(counts: Vec<u32>, ticks_per_day: usize, tick_resolution: u32) -> Self {
        debug_assert!(ticks_per_day > 0 && counts.len() % ticks_per_day == 0);
        CountSeries {
            counts,
            ticks_per_day,
            tick_resolution,
        }
    }

    pub fn values(&self) -> &[u32] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn days(&self) -> usize {
        self.counts.len() / self.ticks_per_day
    }

    pub fn ticks_per_day(&self) -> usize {
        self.ticks_per_day
    }

    pub fn tick_resolution(&self) -> u32 {
        self.tick_resolution
    }

    /// Start indices of each day in the concatenated series.
    pub fn day_boundaries(&self) -> Vec<usize> {
        (0..self.days()).map(|d| d * self.ticks_per_day).collect()
    }

    pub fn day_slice(&self, day: usize) -> &[u32] {
        let start = day * self.ticks_per_day;
        &self.counts[start..start + self.ticks_per_day]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| f64::from(c)).collect()
    }
}

/// Lagged autocorrelation values with their sampling noise floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocorrFn {
    /// Lag in seconds, from one tick interval up to the maximum lag.
    pub lags: Vec<f64>,
    /// Correlation coefficients, each in `[-1, 1]`.
    pub values: Vec<f64>,
    /// `3 / sqrt(N)` where `N` is the number of data points actually used.
    pub noise_floor: f64,
}

/// Stationary zero-mean Gaussian sequence with variance `sigma^2` and
/// autocorrelation `exp(-s/tau_c)` at lag `s`, sampled every `dt` seconds.
///
/// Uses the exact stationary recursion
/// `W_{k+1} = rho W_k + sigma sqrt(1 - rho^2) xi_k` with
/// `rho = exp(-dt/tau_c)` and `W_0` drawn from the stationary law, so the
/// target covariance holds at every sample, not only asymptotically.
pub fn gen_noise_path(sigma: f64, tau_c: f64, dt: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, 0);
    let mut out = Vec::with_capacity(n);
    noise_path_into(&mut rng, sigma, tau_c, dt, n, &mut out);
    out
}

fn noise_path_into(
    rng: &mut ChaCha8Rng,
    sigma: f64,
    tau_c: f64,
    dt: f64,
    n: usize,
    out: &mut Vec<f64>,
) {
    debug_assert!(sigma >= 0.0 && tau_c > 0.0 && dt > 0.0 && n >= 1);
    let rho = (-dt / tau_c).exp();
    let step_sd = sigma * (1.0 - rho * rho).sqrt();
    let mut w = sigma * sample_standard_normal(rng);
    out.push(w);
    for _ in 1..n {
        w = rho * w + step_sd * sample_standard_normal(rng);
        out.push(w);
    }
}

fn sample_standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn sample_poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u32 {
    if !(lambda > 0.0) {
        return 0;
    }
    let draw: f64 = Poisson::new(lambda)
        .expect("positive finite lambda")
        .sample(rng);
    draw.min(f64::from(u32::MAX)) as u32
}

/// Count series of the doubly stochastic process: for each tick interval at
/// time-of-day `t_k`, the count is Poisson with mean
/// `r0 exp(W_k + a_s cos(2 pi f_s t_k)) * dt`. The noise evolves
/// continuously across day boundaries unless the session requests a daily
/// stationary restart. Deterministic given `seed`.
pub fn gen_count_path(params: &ModelParams, session: &SessionSpec, seed: u64) -> Result<CountSeries> {
    let mut rng = stream_rng(seed, 0);
    count_path_with_rng(params, session, &mut rng)
}

fn count_path_with_rng(
    params: &ModelParams,
    session: &SessionSpec,
    rng: &mut ChaCha8Rng,
) -> Result<CountSeries> {
    params.validate()?;
    session.validate()?;
    let per_day = session.ticks_per_day();
    let n = session.total_ticks();
    let dt = f64::from(session.tick_resolution);

    let mut noise = Vec::with_capacity(n);
    if session.noise_reset_daily {
        for _ in 0..session.days {
            noise_path_into(rng, params.sigma, params.tau_c, dt, per_day, &mut noise);
        }
    } else {
        noise_path_into(rng, params.sigma, params.tau_c, dt, n, &mut noise);
    }

    // Per-interval signal phase repeats every day, so precompute one day.
    let two_pi_fs = 2.0 * std::f64::consts::PI * params.f_s;
    let signal: Vec<f64> = (0..per_day)
        .map(|s| params.a_s * (two_pi_fs * (s as f64 * dt)).cos())
        .collect();

    let mut counts = Vec::with_capacity(n);
    for (k, &w) in noise.iter().enumerate() {
        let lambda = params.r0 * (w + signal[k % per_day]).exp() * dt;
        counts.push(sample_poisson(rng, lambda));
    }
    Ok(CountSeries::new(counts, per_day, session.tick_resolution))
}

/// Materializes the count path of `(params, session, seed)` as timestamps:
/// an interval with count `n` yields `n` timestamps placed uniformly within
/// it and sorted. Binning the output reproduces the binned count path
/// exactly, since every timestamp stays inside its source interval.
pub fn gen_ticks(
    params: &ModelParams,
    session: &SessionSpec,
    seed: u64,
    symbol: &str,
) -> Result<Vec<TickRecord>> {
    let mut rng = stream_rng(seed, 0);
    let counts = count_path_with_rng(params, session, &mut rng)?;
    let per_day = counts.ticks_per_day();
    let dt = f64::from(session.tick_resolution);

    let mut ticks = Vec::with_capacity(counts.total() as usize);
    let mut within = Vec::new();
    for (k, &c) in counts.values().iter().enumerate() {
        if c == 0 {
            continue;
        }
        let day = (k / per_day) as u32;
        let start = (k % per_day) as f64 * dt;
        within.clear();
        for _ in 0..c {
            within.push(start + rng.random_range(0.0..dt));
        }
        within.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for &t in &within {
            ticks.push(TickRecord {
                day,
                t,
                symbol: symbol.to_string(),
            });
        }
    }
    Ok(ticks)
}

/// Biased (divide by N) sample autocovariance normalized by lag 0.
/// Errors on a constant series, where the correlation is undefined.
pub(crate) fn sample_autocorr_seq(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let (mean, c0) = autocorr_prepare(x, max_lag)?;
    Ok((1..=max_lag)
        .map(|s| autocov_at(x, mean, s) / c0)
        .collect())
}

#[cfg(feature = "parallel")]
pub(crate) fn sample_autocorr_par(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    let (mean, c0) = autocorr_prepare(x, max_lag)?;
    Ok((1..=max_lag)
        .into_par_iter()
        .map(|s| autocov_at(x, mean, s) / c0)
        .collect())
}

fn autocorr_prepare(x: &[f64], max_lag: usize) -> Result<(f64, f64)> {
    if max_lag == 0 || x.len() <= max_lag {
        return Err(Error::InvalidGrid(format!(
            "max_lag {max_lag} must be in [1, series length {})",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let c0 = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if c0 == 0.0 {
        return Err(Error::ConstantSeries);
    }
    Ok((mean, c0))
}

fn autocov_at(x: &[f64], mean: f64, s: usize) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for k in 0..n - s {
        acc += (x[k] - mean) * (x[k + s] - mean);
    }
    acc / n as f64
}

/// Monte Carlo estimate of the count autocorrelation: averages the sample
/// autocorrelation of independent seeded replicas of the count series.
/// Replica `i` uses stream `i` of `seed`; the average runs in replica-index
/// order, so the result is deterministic and identical to the sequential
/// variant. `max_lag` is in tick-resolution intervals (seconds at the
/// default resolution).
pub fn mc_autocorr(
    params: &ModelParams,
    session: &SessionSpec,
    replicas: usize,
    max_lag: usize,
    seed: u64,
) -> Result<AutocorrFn> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let per_replica: Vec<Vec<f64>> = (0..replicas)
            .into_par_iter()
            .map(|i| mc_replica_acf(params, session, seed, i, max_lag))
            .collect::<Result<_>>()?;
        combine_replicas(params, session, replicas, max_lag, per_replica)
    }
    #[cfg(not(feature = "parallel"))]
    {
        mc_autocorr_seq(params, session, replicas, max_lag, seed)
    }
}

/// Sequential reference implementation of [`mc_autocorr`]; bit-identical to
/// the parallel path.
pub fn mc_autocorr_seq(
    params: &ModelParams,
    session: &SessionSpec,
    replicas: usize,
    max_lag: usize,
    seed: u64,
) -> Result<AutocorrFn> {
    let per_replica: Vec<Vec<f64>> = (0..replicas)
        .map(|i| mc_replica_acf(params, session, seed, i, max_lag))
        .collect::<Result<_>>()?;
    combine_replicas(params, session, replicas, max_lag, per_replica)
}

fn mc_replica_acf(
    params: &ModelParams,
    session: &SessionSpec,
    seed: u64,
    replica: usize,
    max_lag: usize,
) -> Result<Vec<f64>> {
    let mut rng = stream_rng(seed, replica as u64);
    let counts = count_path_with_rng(params, session, &mut rng)?;
    sample_autocorr_seq(&counts.to_f64(), max_lag)
}

fn combine_replicas(
    params: &ModelParams,
    session: &SessionSpec,
    replicas: usize,
    max_lag: usize,
    per_replica: Vec<Vec<f64>>,
) -> Result<AutocorrFn> {
    let _ = params;
    if replicas == 0 {
        return Err(Error::InvalidGrid("replicas must be >= 1".into()));
    }
    let mut values = vec![0.0; max_lag];
    for acf in &per_replica {
        for (v, &a) in values.iter_mut().zip(acf) {
            *v += a;
        }
    }
    for v in &mut values {
        *v /= replicas as f64;
    }
    let dt = f64::from(session.tick_resolution);
    let sample_points = (replicas * session.total_ticks()) as f64;
    Ok(AutocorrFn {
        lags: (1..=max_lag).map(|s| s as f64 * dt).collect(),
        values,
        noise_floor: 3.0 / sample_points.sqrt(),
    })
}

/// Closed-form autocovariance of the counts for the stationary case
/// (`a_s = 0`) with deterministic rate `r_det`, used as an oracle for
/// [`mc_autocorr`]. Derived from the lognormal moments of the mixed
/// process:
///
/// - lag 0:  `r dt e^(s2/2) + (r dt)^2 (e^(2 s2) - e^(s2))`
/// - lag s:  `(r dt)^2 e^(s2) (e^(s2 exp(-s/tau_c)) - 1)`
///
/// with `s2 = sigma^2`.
pub fn analytic_count_autocov(r_det: f64, sigma: f64, tau_c: f64, dt: f64, lag: f64) -> f64 {
    debug_assert!(lag >= 0.0);
    let s2 = sigma * sigma;
    let m = r_det * dt;
    if lag == 0.0 {
        m * (s2 / 2.0).exp() + m * m * ((2.0 * s2).exp() - s2.exp())
    } else {
        m * m * s2.exp() * ((s2 * (-lag / tau_c).exp()).exp() - 1.0)
    }
}

/// [`analytic_count_autocov`] converted to a correlation coefficient.
pub fn analytic_count_autocorr(r_det: f64, sigma: f64, tau_c: f64, dt: f64, lag: f64) -> f64 {
    analytic_count_autocov(r_det, sigma, tau_c, dt, lag)
        / analytic_count_autocov(r_det, sigma, tau_c, dt, 0.0)
}

/// Daily-signal moment table for the full-model count autocorrelation:
/// lagged averages of the periodic factor `exp(a_s cos(2 pi f_s t))` over
/// one day. Depends only on the signal shape, so it is computed once and
/// reused across candidate `(sigma, tau_c)` evaluations.
#[derive(Debug, Clone)]
pub struct DailySignalMoments {
    /// Average of `E_k = exp(a_s cos(...))` over the day.
    e1: f64,
    /// `e2[s]` = average of `E_k * E_{k+s}` (periodic wrap), `s = 0..=max_lag`.
    e2: Vec<f64>,
    dt: f64,
}

impl DailySignalMoments {
    pub fn new(a_s: f64, f_s: f64, session: &SessionSpec, max_lag: usize) -> Self {
        let per_day = session.ticks_per_day();
        let dt = f64::from(session.tick_resolution);
        let two_pi_fs = 2.0 * std::f64::consts::PI * f_s;
        let factors: Vec<f64> = (0..per_day)
            .map(|k| (a_s * (two_pi_fs * (k as f64 * dt)).cos()).exp())
            .collect();
        let e1 = factors.iter().sum::<f64>() / per_day as f64;
        let e2 = (0..=max_lag)
            .map(|s| {
                factors
                    .iter()
                    .enumerate()
                    .map(|(k, &f)| f * factors[(k + s) % per_day])
                    .sum::<f64>()
                    / per_day as f64
            })
            .collect();
        DailySignalMoments { e1, e2, dt }
    }

    pub fn max_lag(&self) -> usize {
        self.e2.len() - 1
    }

    pub fn e1(&self) -> f64 {
        self.e1
    }

    pub fn e2_at(&self, lag: usize) -> f64 {
        self.e2[lag]
    }

    /// Expected count autocorrelation of the full model (noise and daily
    /// signal) at lags `1..=max_lag`, treating the series as stationary the
    /// way the sample estimator does: the periodic mean modulation enters
    /// the covariance through the lagged signal moments.
    ///
    /// With `m = r0 dt`, `s2 = sigma^2`, `rho_s = exp(-s dt/tau_c)`:
    ///
    /// ```text
    /// cov(0) = r0 e^(s2/2) e1 dt + m^2 [e^(2 s2) e2[0] - e^(s2) e1^2]
    /// cov(s) = m^2 e^(s2) [e2[s] e^(s2 rho_s) - e1^2]
    /// ```
    pub fn count_autocorr(&self, r0: f64, sigma: f64, tau_c: f64, max_lag: usize) -> Vec<f64> {
        debug_assert!(max_lag <= self.max_lag());
        let s2 = sigma * sigma;
        let m = r0 * self.dt;
        let mean = m * (s2 / 2.0).exp() * self.e1;
        let e1sq = self.e1 * self.e1;
        let cov0 = mean + m * m * ((2.0 * s2).exp() * self.e2[0] - s2.exp() * e1sq);
        (1..=max_lag)
            .map(|s| {
                let rho = (-(s as f64) * self.dt / tau_c).exp();
                m * m * s2.exp() * (self.e2[s] * (s2 * rho).exp() - e1sq) / cov0
            })
            .collect()
    }
}
