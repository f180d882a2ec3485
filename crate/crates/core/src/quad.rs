//! Gauss-Hermite quadrature and the Poisson-lognormal count distribution.

use std::sync::OnceLock;

/// Nodes and weights of the n-point Gauss-Hermite rule for the weight
/// function `exp(-x^2)` on the real line.
///
/// Roots are found by Newton iteration on the orthonormal Hermite
/// recurrence, seeded with the classic asymptotic guesses and exploiting
/// root symmetry. Exact for polynomials of degree `2n - 1`; for the
/// entire integrands used here (exponentials of `x`), truncation error is
/// far below f64 resolution at 64 nodes.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "need at least two nodes");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        let nf = n as f64;
        let pim4 = std::f64::consts::PI.powf(-0.25);

        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                // Orthonormal recurrence: p1 ends as H~_n(z), p2 as H~_{n-1}(z).
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        // Stored ascending.
        nodes.reverse();
        GaussHermite { nodes, weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[f(W)]` for `W ~ Normal(0, std^2)`:
    /// `(1/sqrt(pi)) * sum_i w_i f(sqrt(2) * std * x_i)`.
    pub fn gaussian_expectation(&self, std: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let scale = std::f64::consts::SQRT_2 * std;
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(scale * x))
            .sum::<f64>()
            * inv_sqrt_pi
    }
}

/// Node count used for the count-distribution mixture; sufficient for
/// 1e-8 accuracy over the sigma range searched by the calibration.
pub const MIXTURE_NODES: usize = 64;

/// Shared 64-node rule; built once.
pub(crate) fn mixture_rule() -> &'static GaussHermite {
    static RULE: OnceLock<GaussHermite> = OnceLock::new();
    RULE.get_or_init(|| GaussHermite::new(MIXTURE_NODES))
}

/// Probabilities `P(n)`, `n = 0..=n_max`, of the Poisson-lognormal mixture:
/// a Poisson count whose mean is `mean_count * exp(w)` with
/// `w ~ Normal(0, sigma^2)`. No renormalization is applied; the truncated
/// tail mass is exactly `1 - sum(P)` up to quadrature resolution.
///
/// Poisson terms are accumulated per quadrature node with a log-space
/// recurrence, so very large node means underflow gracefully to zero
/// instead of overflowing.
pub(crate) fn poisson_lognormal_pmf(mean_count: f64, sigma: f64, n_max: usize) -> Vec<f64> {
    debug_assert!(mean_count > 0.0 && sigma >= 0.0);
    let mut out = vec![0.0; n_max + 1];
    // ln(n+1) table shared across nodes.
    let ln_next: Vec<f64> = (0..n_max).map(|n| ((n + 1) as f64).ln()).collect();

    if sigma == 0.0 {
        accumulate_poisson(&mut out, mean_count, 1.0, &ln_next);
        return out;
    }

    let rule = mixture_rule();
    let scale = std::f64::consts::SQRT_2 * sigma;
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
        let lambda = mean_count * (scale * x).exp();
        accumulate_poisson(&mut out, lambda, w * inv_sqrt_pi, &ln_next);
    }
    out
}

fn accumulate_poisson(out: &mut [f64], lambda: f64, weight: f64, ln_next: &[f64]) {
    if lambda <= 0.0 {
        out[0] += weight;
        return;
    }
    let ln_lambda = lambda.ln();
    let mut log_p = -lambda;
    for (n, slot) in out.iter_mut().enumerate() {
        *slot += weight * log_p.exp();
        if n < ln_next.len() {
            log_p += ln_lambda - ln_next[n];
        }
    }
}

/// Smallest `n_max` expected to leave total truncated tail mass below 1e-9,
/// from the largest node mean that carries non-negligible weight.
pub fn suggested_n_max(mean_count: f64, sigma: f64) -> usize {
    let rule = mixture_rule();
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    let scale = std::f64::consts::SQRT_2 * sigma;
    let mut needed = 0usize;
    for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
        if w * inv_sqrt_pi < 1e-12 {
            continue;
        }
        let lambda = mean_count * (scale * x).exp();
        let n = (lambda + 12.0 * lambda.sqrt() + 30.0).ceil() as usize;
        needed = needed.max(n);
    }
    needed
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weights_integrate_gaussian_moments() {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        for n in [8usize, 32, 64] {
            let gh = GaussHermite::new(n);
            let total: f64 = gh.weights().iter().sum();
            assert_relative_eq!(total, sqrt_pi, max_relative = 1e-12);

            let m2: f64 = gh
                .nodes()
                .iter()
                .zip(gh.weights())
                .map(|(&x, &w)| w * x * x)
                .sum();
            assert_relative_eq!(m2, sqrt_pi / 2.0, max_relative = 1e-12);
        }
        // 10th moment: integral x^10 e^{-x^2} = sqrt(pi) * 945 / 32
        let gh = GaussHermite::new(64);
        let m10: f64 = gh
            .nodes()
            .iter()
            .zip(gh.weights())
            .map(|(&x, &w)| w * x.powi(10))
            .sum();
        assert_relative_eq!(m10, sqrt_pi * 945.0 / 32.0, max_relative = 1e-11);
    }

    #[test]
    fn nodes_are_symmetric_and_sorted() {
        let gh = GaussHermite::new(64);
        assert!(gh.nodes().windows(2).all(|w| w[1] > w[0]));
        for i in 0..32 {
            assert_relative_eq!(gh.nodes()[i], -gh.nodes()[63 - i], max_relative = 1e-14);
        }
    }

    #[test]
    fn gaussian_expectation_of_exponential() {
        // E[exp(W)] = exp(sigma^2 / 2) for W ~ N(0, sigma^2)
        let gh = GaussHermite::new(64);
        for sigma in [0.3, 0.8, 1.5, 3.0] {
            let got = gh.gaussian_expectation(sigma, f64::exp);
            assert_relative_eq!(got, (sigma * sigma / 2.0).exp(), max_relative = 1e-12);
        }
    }

    #[test]
    fn degenerate_mixture_is_poisson() {
        let p = poisson_lognormal_pmf(2.0, 0.0, 30);
        // P(0) = e^{-2}
        assert_relative_eq!(p[0], (-2.0f64).exp(), max_relative = 1e-13);
        // P(3) = e^{-2} 2^3 / 3!
        assert_relative_eq!(p[3], (-2.0f64).exp() * 8.0 / 6.0, max_relative = 1e-12);
        let total: f64 = p.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}
