//! Query lower bound for imaginary-time evolution and the gap of P1 to it.

use crate::error::{invalid, Error, Result};
use crate::funcapprox::q1_bound;
use crate::kinds::even_ceil;
use serde::{Deserialize, Serialize};

/// Solution of the lower-bound equation with its residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundQuery {
    pub beta: f64,
    pub eps_prime: f64,
    pub alpha: f64,
    pub q_tilde: f64,
    /// `|f(q̃)|` at the returned root.
    pub residual: f64,
}

/// `ln |(1 − e^{−β/(4q)})/2|^{2q}`.
fn log_lhs(beta: f64, q: f64) -> f64 {
    2.0 * q * ((-(-beta / (4.0 * q)).exp_m1()) / 2.0).ln()
}

/// `|(1 − e^{−β/(4q)})/2|^{2q} − 2ε'/α`.
pub fn lower_bound_residual(beta: f64, eps_prime: f64, alpha: f64, q: f64) -> f64 {
    log_lhs(beta, q).exp() - 2.0 * eps_prime / alpha
}

/// Smallest real query count compatible with a (β, ε', α) primitive.
pub fn solve_lower_bound(beta: f64, eps_prime: f64, alpha: f64) -> Result<LowerBoundQuery> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(invalid("beta must be positive"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid("alpha must lie in (0, 1]"));
    }
    if !(eps_prime > 0.0 && eps_prime < alpha / 2.0) {
        return Err(Error::Precondition(format!("need 0 < eps' < alpha/2, got eps' = {eps_prime}")));
    }
    let log_rhs = (2.0 * eps_prime / alpha).ln();
    let g = |q: f64| log_lhs(beta, q) - log_rhs;
    let mut lo = 1e-6;
    while g(lo) <= 0.0 {
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(Error::Precondition("no sign change near q = 0".into()));
        }
    }
    let mut hi = beta.max(1.0);
    while g(hi) >= 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Precondition("no sign change at large q".into()));
        }
    }
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = 0.5 * (lo + hi);
    Ok(LowerBoundQuery {
        beta,
        eps_prime,
        alpha,
        q_tilde: q,
        residual: lower_bound_residual(beta, eps_prime, alpha, q).abs(),
    })
}

/// Ratio of the even-rounded P1 estimate to the lower bound at α = 1.
pub fn optimality_gap(beta: f64, eps_prime: f64) -> Result<f64> {
    let lb = solve_lower_bound(beta, eps_prime, 1.0)?;
    Ok(even_ceil(q1_bound(beta, eps_prime)) as f64 / lb.q_tilde)
}

/// Largest bit-string length whose parity a (β, ε', α) primitive can decide.
pub fn largest_parity_length(beta: f64, eps_prime: f64, alpha: f64) -> Result<usize> {
    Ok((2.0 * solve_lower_bound(beta, eps_prime, alpha)?.q_tilde).floor() as usize)
}
