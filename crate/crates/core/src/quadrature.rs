//! Generalized Gauss–Laguerre rules.
//!
//! A rule with parameter `a > -1` integrates `∫_0^∞ x^a e^{-x} f(x) dx`
//! exactly for polynomials `f` of degree `< 2n`. Weights are normalized to
//! sum to one, so a rule evaluates the expectation `E[f(X)]` for
//! `X ~ Gamma(a + 1, 1)`.

use alloc::vec::Vec;

use crate::{Error, Result};

/// Node count used when nothing else is configured.
pub const DEFAULT_NODES: usize = 64;

const MAX_NEWTON: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussLaguerre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLaguerre {
    /// Rule with `n` nodes for the weight `x^a e^{-x}`.
    pub fn new(n: usize, a: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::OutOfDomain { what: "quadrature node count", value: 0.0 });
        }
        if !(a > -1.0) || !a.is_finite() {
            return Err(Error::OutOfDomain { what: "Laguerre parameter", value: a });
        }
        let nf = n as f64;
        let mut nodes: Vec<f64> = Vec::with_capacity(n);
        let mut log_weights = Vec::with_capacity(n);
        let log_norm = libm::lgamma(a + nf) - libm::lgamma(nf);
        let mut z = 0.0;
        for k in 0..n {
            // Asymptotic initial guesses for the k-th root (Stroud & Secrest).
            z = match k {
                0 => (1.0 + a) * (3.0 + 0.92 * a) / (1.0 + 2.4 * nf + 1.8 * a),
                1 => z + (15.0 + 6.25 * a) / (1.0 + 0.9 * a + 2.5 * nf),
                _ => {
                    let ai = (k - 1) as f64;
                    z + ((1.0 + 2.55 * ai) / (1.9 * ai) + 1.26 * ai * a / (1.0 + 3.5 * ai))
                        * (z - nodes[k - 2])
                        / (1.0 + 0.3 * a)
                }
            };
            let mut converged = false;
            for _ in 0..MAX_NEWTON {
                let (p_n, p_nm1) = laguerre_pair(n, a, z);
                let step = p_n / derivative(n, a, z, p_n, p_nm1);
                z -= step;
                // Rounding in the recurrence limits relative accuracy to ~1e-13.
                if step.abs() <= 1e-12 * z.abs() {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::RootNotConverged("Laguerre node"));
            }
            let (p_n, prev) = laguerre_pair(n, a, z);
            let deriv = derivative(n, a, z, p_n, prev);
            nodes.push(z);
            // w = -Γ(a+n) / (Γ(n) n L'_n(z) L_{n-1}(z)); the product is negative.
            log_weights.push(log_norm - libm::log(-(deriv * nf * prev)));
        }
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = log_weights.iter().map(|lw| libm::exp(lw - max)).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[f(X)]` for `X ~ Gamma(a + 1, 1)`.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

fn derivative(n: usize, a: f64, z: f64, p_n: f64, p_nm1: f64) -> f64 {
    let nf = n as f64;
    (nf * p_n - (nf + a) * p_nm1) / z
}

/// `(L_n^{(a)}(z), L_{n-1}^{(a)}(z))` by the three-term recurrence.
fn laguerre_pair(n: usize, a: f64, z: f64) -> (f64, f64) {
    let (mut p1, mut p2) = (1.0, 0.0);
    for j in 1..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = ((2.0 * jf - 1.0 + a - z) * p2 - (jf - 1.0 + a) * p3) / jf;
    }
    (p1, p2)
}
