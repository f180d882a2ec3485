//! Model parameterization, the deterministic daily rate law, the closed-form
//! output signal-to-noise ratio, and the resonance criterion.
//!
//! The arrival process is a Poisson counting process whose rate is
//! `r(t) = r0 * exp(W(t) + a_s * cos(2*pi*f_s*t))`, where `W` is zero-mean
//! exponentially correlated Gaussian noise with RMS `sigma` and correlation
//! time `tau_c`. Detection quality of the periodic component is measured by
//! the output SNR, which for this process has a closed form; an interior
//! maximum of SNR over `sigma` marks stochastic resonance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default signal frequency: one cycle per 23400-second trading session.
pub const DEFAULT_SIGNAL_FREQ_HZ: f64 = 1.0 / 23_400.0;

/// The process shows an interior SNR maximum iff `tau_c * r0` is below this.
pub const SR_PRODUCT_THRESHOLD: f64 = 0.25;

/// Default relative truncation tolerance for [`perturbation_series`].
pub const DEFAULT_SERIES_REL_TOL: f64 = 1e-12;

/// A discrete maximum must exceed 1 by at least this much to count as SR;
/// guards against floating-point ties on flat curves.
const INTERIOR_MAX_MARGIN: f64 = 1e-9;

/// The five parameters of the doubly stochastic arrival model.
///
/// `tau_c` is the stored noise parameter; the corner frequency is always
/// derived from it via [`ModelParams::corner_frequency`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Equilibrium arrival rate, events/second.
    pub r0: f64,
    /// Signal amplitude, dimensionless.
    pub a_s: f64,
    /// Signal frequency, hertz.
    pub f_s: f64,
    /// Noise root-mean-square, dimensionless.
    pub sigma: f64,
    /// Noise correlation time, seconds.
    pub tau_c: f64,
}

impl ModelParams {
    /// Validating constructor. Requires `r0 > 0`, `f_s > 0`, `tau_c > 0`,
    /// `sigma >= 0`, `a_s >= 0`, all finite.
    pub fn new(r0: f64, a_s: f64, f_s: f64, sigma: f64, tau_c: f64) -> Result<Self> {
        let p = ModelParams {
            r0,
            a_s,
            f_s,
            sigma,
            tau_c,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        fn check(name: &str, v: f64, strictly_positive: bool) -> Result<()> {
            if !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} = {v} is not finite")));
            }
            if strictly_positive && v <= 0.0 {
                return Err(Error::InvalidParams(format!("{name} = {v} must be > 0")));
            }
            if !strictly_positive && v < 0.0 {
                return Err(Error::InvalidParams(format!("{name} = {v} must be >= 0")));
            }
            Ok(())
        }
        check("r0", self.r0, true)?;
        check("a_s", self.a_s, false)?;
        check("f_s", self.f_s, true)?;
        check("sigma", self.sigma, false)?;
        check("tau_c", self.tau_c, true)?;
        Ok(())
    }

    /// Corner frequency of the noise spectrum, `1 / (2*pi*tau_c)`.
    pub fn corner_frequency(&self) -> f64 {
        1.0 / (2.0 * std::f64::consts::PI * self.tau_c)
    }

    /// The resonance-criterion product `tau_c * r0`.
    pub fn sr_product(&self) -> f64 {
        self.tau_c * self.r0
    }

    /// Copy with a different noise RMS.
    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    /// Copy with a different noise correlation time.
    pub fn with_tau_c(mut self, tau_c: f64) -> Self {
        self.tau_c = tau_c;
        self
    }
}

/// Deterministic rate law `r0 * exp(a_s * cos(2*pi*f_s*t))`, periodic with
/// period `1/f_s`. `t` is seconds from session open.
pub fn deterministic_rate(params: &ModelParams, t: f64) -> f64 {
    params.r0 * (params.a_s * (2.0 * std::f64::consts::PI * params.f_s * t).cos()).exp()
}

/// The series `sum_{n>=1} sigma^(2n) / (n * n!)` appearing in the SNR
/// denominator, truncated once the next term drops below `rel_tol` times the
/// running sum. Factorial decay makes this safe and fast for `sigma <= 4`.
pub fn perturbation_series(sigma: f64, rel_tol: f64) -> f64 {
    debug_assert!(sigma >= 0.0);
    debug_assert!(rel_tol > 0.0 && rel_tol < 1.0);
    let x = sigma * sigma;
    if x == 0.0 {
        return 0.0;
    }
    let mut term = x; // n = 1 term
    let mut sum = x;
    let mut n = 1u32;
    // term_{n+1} = term_n * x * n / (n+1)^2
    while n < 500 {
        let nf = f64::from(n);
        term *= x * nf / ((nf + 1.0) * (nf + 1.0));
        sum += term;
        if term < rel_tol * sum {
            break;
        }
        n += 1;
    }
    sum
}

/// Closed-form output SNR of the modulated counting process:
///
/// ```text
/// (a_s^2 r0 / 2) exp(sigma^2/2)
/// -----------------------------------------------------------
/// 2 + (2 r0 / (pi f_c)) exp(sigma^2/2) sum_n sigma^(2n)/(n n!)
/// ```
///
/// At `sigma = 0` this reduces to `a_s^2 * r0 / 4`.
pub fn snr(a_s: f64, r0: f64, f_c: f64, sigma: f64) -> f64 {
    let ex = (sigma * sigma / 2.0).exp();
    let series = perturbation_series(sigma, DEFAULT_SERIES_REL_TOL);
    (a_s * a_s * r0 / 2.0) * ex / (2.0 + (2.0 * r0 / (std::f64::consts::PI * f_c)) * ex * series)
}

/// True iff the process exhibits stochastic resonance: `tau_c * r0 < 0.25`
/// (strict). Equivalent to a positive small-sigma slope of the SNR.
pub fn sr_condition(r0: f64, tau_c: f64) -> bool {
    tau_c * r0 < SR_PRODUCT_THRESHOLD
}

/// SNR evaluated on a sigma grid, normalized so the value at `sigma = 0`
/// is exactly 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrCurve {
    /// Strictly increasing grid starting at 0.
    pub sigma_grid: Vec<f64>,
    /// Raw SNR values.
    pub raw: Vec<f64>,
    /// `raw[i] / raw[0]`.
    pub normalized: Vec<f64>,
    /// Location of the maximum normalized value; `None` when the maximum
    /// sits at the grid boundary `sigma = 0`.
    pub argmax_sigma: Option<f64>,
    /// True iff an interior maximum exists: the discrete argmax is neither
    /// the first nor the last grid point, exceeds both neighbors, and
    /// exceeds 1 by more than a floating-point guard margin.
    pub sr_detected: bool,
}

impl SnrCurve {
    /// Normalized SNR at the grid point nearest to `sigma`.
    pub fn normalized_at(&self, sigma: f64) -> Option<f64> {
        let idx = self
            .sigma_grid
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                (*a - sigma).abs().partial_cmp(&(*b - sigma).abs()).unwrap()
            })
            .map(|(i, _)| i)?;
        self.normalized.get(idx).copied()
    }
}

/// Default sigma grid for SNR curves: `[0, 3]` in steps of 0.01.
pub fn default_sigma_grid() -> Vec<f64> {
    (0..=300).map(|i| f64::from(i) / 100.0).collect()
}

/// Evaluates the normalized SNR curve of `params` over `sigma_grid`.
///
/// Rejects a grid that does not start at 0 (normalization is undefined
/// otherwise) and a zero signal amplitude (all raw values would be 0).
pub fn snr_curve(params: &ModelParams, sigma_grid: &[f64]) -> Result<SnrCurve> {
    params.validate()?;
    if params.a_s == 0.0 {
        return Err(Error::Degenerate(
            "a_s = 0: SNR is identically zero and cannot be normalized".into(),
        ));
    }
    if sigma_grid.is_empty() || sigma_grid[0] != 0.0 {
        return Err(Error::InvalidGrid(
            "sigma grid must start at 0".into(),
        ));
    }
    for w in sigma_grid.windows(2) {
        if !(w[1] > w[0]) || !w[1].is_finite() {
            return Err(Error::InvalidGrid(
                "sigma grid must be strictly increasing and finite".into(),
            ));
        }
    }

    let f_c = params.corner_frequency();
    let raw: Vec<f64> = sigma_grid
        .iter()
        .map(|&s| snr(params.a_s, params.r0, f_c, s))
        .collect();
    let normalized: Vec<f64> = raw.iter().map(|&v| v / raw[0]).collect();

    let mut argmax = 0usize;
    for (i, &v) in normalized.iter().enumerate() {
        if v > normalized[argmax] {
            argmax = i;
        }
    }
    let interior = argmax > 0 && argmax + 1 < normalized.len();
    let sr_detected = interior
        && normalized[argmax] > normalized[argmax - 1]
        && normalized[argmax] > normalized[argmax + 1]
        && normalized[argmax] > 1.0 + INTERIOR_MAX_MARGIN;
    let argmax_sigma = if argmax == 0 {
        None
    } else {
        Some(sigma_grid[argmax])
    };

    Ok(SnrCurve {
        sigma_grid: sigma_grid.to_vec(),
        raw,
        normalized,
        argmax_sigma,
        sr_detected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn aep() -> ModelParams {
        ModelParams::new(0.0283, 0.2880, DEFAULT_SIGNAL_FREQ_HZ, 0.9554, 1.7).unwrap()
    }

    fn f_row() -> ModelParams {
        ModelParams::new(0.0947, 0.2194, DEFAULT_SIGNAL_FREQ_HZ, 0.8118, 26.5).unwrap()
    }

    /// Independent fixed-length summation of the series, term-by-term in
    /// log space with compensated accumulation.
    fn series_oracle(sigma: f64, terms: usize) -> f64 {
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for n in 1..=terms {
            let nf = n as f64;
            let log_term =
                2.0 * nf * sigma.ln() - nf.ln() - statrs::function::gamma::ln_gamma(nf + 1.0);
            let term = log_term.exp();
            // Kahan step
            let y = term - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        sum
    }

    #[test]
    fn rate_zero_amplitude_is_flat() {
        let p = ModelParams::new(1.0, 0.0, DEFAULT_SIGNAL_FREQ_HZ, 0.5, 2.0).unwrap();
        for t in [0.0, 1.0, 1000.0, 23399.0] {
            assert_eq!(deterministic_rate(&p, t), 1.0);
        }
    }

    #[test]
    fn rate_at_open_matches_table_row() {
        let p = f_row();
        assert_relative_eq!(
            deterministic_rate(&p, 0.0),
            0.0947 * 0.2194f64.exp(),
            max_relative = 1e-15
        );
        assert_abs_diff_eq!(deterministic_rate(&p, 0.0), 0.11793, epsilon = 5e-6);
    }

    #[test]
    fn rate_cosine_zero_crossing() {
        let p = ModelParams::new(2.0, 0.5, DEFAULT_SIGNAL_FREQ_HZ, 0.0, 1.0).unwrap();
        let t = 1.0 / (4.0 * p.f_s);
        assert_relative_eq!(deterministic_rate(&p, t), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn rate_is_periodic() {
        let p = aep();
        let period = 1.0 / p.f_s;
        for t in [0.0, 137.0, 5000.0] {
            assert_relative_eq!(
                deterministic_rate(&p, t),
                deterministic_rate(&p, t + period),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn series_zero_sigma() {
        assert_eq!(perturbation_series(0.0, 1e-12), 0.0);
    }

    #[test]
    fn series_matches_oracle() {
        // sum 1/(n*n!) for sigma = 1
        assert_relative_eq!(
            perturbation_series(1.0, 1e-12),
            1.3179,
            max_relative = 1e-4
        );
        for sigma in [0.25, 0.5, 1.0, 2.0, 3.0, 4.0] {
            let got = perturbation_series(sigma, 1e-12);
            let want = series_oracle(sigma, 200);
            assert_relative_eq!(got, want, max_relative = 1e-10);
        }
    }

    #[test]
    fn snr_at_zero_sigma_is_quarter_scale() {
        let v = snr(0.288, 0.0283, 0.1, 0.0);
        assert_eq!(v, 0.288 * 0.288 * 0.0283 / 4.0);
        assert_abs_diff_eq!(v, 5.868e-4, epsilon = 5e-7);
    }

    #[test]
    fn snr_zero_amplitude_is_zero() {
        assert_eq!(snr(0.0, 0.1, 0.1, 1.0), 0.0);
    }

    #[test]
    fn snr_curve_aep_has_interior_maximum() {
        let curve = snr_curve(&aep(), &default_sigma_grid()).unwrap();
        assert!(curve.sr_detected);
        assert!(curve.argmax_sigma.unwrap() > 0.1);
        assert_eq!(curve.normalized[0], 1.0);
    }

    #[test]
    fn snr_curve_f_is_monotone_decreasing() {
        let curve = snr_curve(&f_row(), &default_sigma_grid()).unwrap();
        assert!(!curve.sr_detected);
        assert!(curve
            .normalized
            .windows(2)
            .all(|w| w[1] < w[0]));
        assert_eq!(curve.argmax_sigma, None);
    }

    #[test]
    fn snr_curve_rejects_zero_amplitude() {
        let p = ModelParams::new(0.1, 0.0, DEFAULT_SIGNAL_FREQ_HZ, 0.5, 1.0).unwrap();
        assert!(snr_curve(&p, &default_sigma_grid()).is_err());
    }

    #[test]
    fn snr_curve_rejects_grid_not_starting_at_zero() {
        let grid: Vec<f64> = (1..=10).map(|i| f64::from(i) / 10.0).collect();
        assert!(snr_curve(&aep(), &grid).is_err());
    }

    #[test]
    fn sr_condition_table_rows() {
        assert!(sr_condition(0.0283, 1.7)); // product ~0.048
        assert!(!sr_condition(0.0947, 26.5)); // product ~2.51
        assert!(!sr_condition(0.25, 1.0)); // boundary is strict
    }

    #[test]
    fn params_validation_rejects_bad_values() {
        assert!(ModelParams::new(0.0, 0.1, 0.1, 0.1, 1.0).is_err());
        assert!(ModelParams::new(0.1, -0.1, 0.1, 0.1, 1.0).is_err());
        assert!(ModelParams::new(0.1, 0.1, 0.0, 0.1, 1.0).is_err());
        assert!(ModelParams::new(0.1, 0.1, 0.1, -0.1, 1.0).is_err());
        assert!(ModelParams::new(0.1, 0.1, 0.1, 0.1, 0.0).is_err());
        assert!(ModelParams::new(f64::NAN, 0.1, 0.1, 0.1, 1.0).is_err());
    }

    #[test]
    fn corner_frequency_positive_and_inverse_of_tau() {
        let p = aep();
        let f_c = p.corner_frequency();
        assert!(f_c > 0.0);
        assert_relative_eq!(
            1.0 / (2.0 * std::f64::consts::PI * f_c),
            1.7,
            max_relative = 1e-12
        );
    }

    #[test]
    fn rate_integral_over_period_exceeds_flat_rate() {
        // Simpson quadrature over one period; exp(cos) averages above 1.
        let p = ModelParams::new(0.05, 0.25, DEFAULT_SIGNAL_FREQ_HZ, 0.5, 2.0).unwrap();
        let period = 1.0 / p.f_s;
        let n = 2000usize;
        let h = period / n as f64;
        let mut integral = deterministic_rate(&p, 0.0) + deterministic_rate(&p, period);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            integral += w * deterministic_rate(&p, k as f64 * h);
        }
        integral *= h / 3.0;
        assert!(integral > p.r0 / p.f_s * 1.0001);
    }

    proptest! {
        #[test]
        fn series_monotone_in_sigma(a in 0.01f64..3.9, delta in 0.01f64..0.5) {
            let lo = perturbation_series(a, 1e-12);
            let hi = perturbation_series(a + delta, 1e-12);
            prop_assert!(hi > lo);
        }

        #[test]
        fn series_tracks_oracle(sigma in 0.0f64..4.0) {
            let got = perturbation_series(sigma, 1e-12);
            let want = series_oracle(sigma.max(1e-300), 200);
            if sigma == 0.0 {
                prop_assert_eq!(got, 0.0);
            } else {
                prop_assert!((got - want).abs() <= 1e-10 * want.abs().max(1e-300));
            }
        }

        #[test]
        fn snr_zero_sigma_exact(a_s in 0.01f64..2.0, r0 in 1e-4f64..10.0, f_c in 1e-4f64..10.0) {
            prop_assert_eq!(snr(a_s, r0, f_c, 0.0), a_s * a_s * r0 / 4.0);
        }

        #[test]
        fn snr_scaling_depends_on_rate_ratio(
            a_s in 0.05f64..1.0,
            r0 in 1e-3f64..1.0,
            f_c in 1e-3f64..1.0,
            k in 0.1f64..10.0,
            sigma in 0.0f64..3.0,
        ) {
            let lhs = snr(a_s, r0, f_c, sigma) / r0;
            let rhs = snr(a_s, k * r0, k * f_c, sigma) / (k * r0);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs());
        }

        #[test]
        fn resonance_flag_tracks_product(
            r0 in 0.005f64..0.2,
            product in prop_oneof![0.01f64..0.2, 0.3f64..3.0],
            a_s in 0.05f64..0.5,
        ) {
            let tau_c = product / r0;
            let p = ModelParams::new(r0, a_s, DEFAULT_SIGNAL_FREQ_HZ, 1.0, tau_c).unwrap();
            let curve = snr_curve(&p, &default_sigma_grid()).unwrap();
            if product < 0.2 {
                prop_assert!(curve.sr_detected);
                prop_assert!(curve.normalized[curve.sigma_grid.len() - 1] < curve.normalized.iter().cloned().fold(f64::MIN, f64::max));
                prop_assert!(curve.normalized.iter().any(|&v| v > 1.0));
            } else {
                prop_assert!(!curve.sr_detected);
                prop_assert!(curve.normalized.windows(2).all(|w| w[1] < w[0]));
            }
        }
    }
}
