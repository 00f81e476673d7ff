//! Certified polynomial and trigonometric approximations of the
//! imaginary-time propagator `F(λ) = exp(-β(λ - λ_min))`.

use crate::error::{invalid, Error, Result};
use crate::kinds::{even_ceil, Strategy};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{E, PI};

/// Grid size used by the certification routines.
pub const CERT_GRID: usize = 10_000;

/// Modified Bessel function of the first kind, `I_k(β)`.
pub fn bessel_i(k: usize, beta: f64) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(invalid("bessel_i needs beta >= 0"));
    }
    if beta > 700.0 {
        return Err(invalid(format!("bessel_i overflows for beta = {beta} > 700")));
    }
    if beta == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    if beta <= 20.0 {
        Ok(bessel_series(k, beta))
    } else {
        Ok(bessel_miller(k, beta))
    }
}

fn bessel_series(k: usize, beta: f64) -> f64 {
    let h = 0.5 * beta;
    // leading term (β/2)^k / k!, built in log space to avoid overflow
    let lead = (k as f64 * h.ln() - ln_factorial(k)).exp();
    let h2 = h * h;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut m = 0usize;
    loop {
        m += 1;
        term *= h2 / (m as f64 * (m + k) as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    lead * sum
}

/// Backward recurrence normalized by `e^β = I_0 + 2 Σ I_n`.
fn bessel_miller(k: usize, beta: f64) -> f64 {
    let top = k.max(beta as usize);
    let start = 2 * (top + 20 + ((40 * top) as f64).sqrt() as usize);
    let mut next = 0.0f64; // I_{n+1}
    let mut cur = 1e-300f64; // I_n
    let mut norm = 0.0f64;
    let mut kth = 0.0f64;
    for n in (1..=start).rev() {
        let prev = next + 2.0 * n as f64 / beta * cur;
        next = cur;
        cur = prev; // now I_{n-1}
        if n - 1 > 0 {
            norm += 2.0 * cur;
        }
        if n - 1 == k {
            kth = cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            norm *= 1e-250;
            kth *= 1e-250;
        }
    }
    norm += cur;
    // norm now represents e^β in the recurrence's units
    kth / norm * beta.exp()
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

/// Chebyshev series `Σ b_k T_k(λ)` on [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevSeries {
    pub coeffs: Vec<f64>,
    pub beta: f64,
    pub lambda_min: f64,
    pub certified_error: f64,
}

impl ChebyshevSeries {
    /// Degree of the QSP polynomial in the half-angle variable (twice the Chebyshev degree).
    pub fn q(&self) -> usize {
        2 * (self.coeffs.len().saturating_sub(1))
    }

    /// Clenshaw evaluation.
    pub fn eval(&self, lambda: f64) -> f64 {
        clenshaw(&self.coeffs, lambda)
    }

    pub fn eval_naive(&self, lambda: f64) -> f64 {
        let theta = lambda.clamp(-1.0, 1.0).acos();
        self.coeffs.iter().enumerate().map(|(k, b)| b * (k as f64 * theta).cos()).sum()
    }

    /// Max |Σ b_k T_k| on a uniform grid of [-1, 1].
    pub fn max_abs(&self, points: usize) -> f64 {
        grid(-1.0, 1.0, points).map(|l| self.eval(l).abs()).fold(0.0, f64::max)
    }

    /// Max deviation from the exact propagator on a uniform grid of [-1, 1].
    pub fn max_error(&self, points: usize) -> f64 {
        grid(-1.0, 1.0, points)
            .map(|l| (self.eval(l) - propagator(self.beta, self.lambda_min, l)).abs())
            .fold(0.0, f64::max)
    }

    /// Returns a copy with every coefficient multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|b| b * s).collect(), ..self.clone() }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "kind": "chebyshev",
            "coeffs": self.coeffs,
            "beta": self.beta,
            "lambda_min": self.lambda_min,
            "t": serde_json::Value::Null,
            "delta": serde_json::Value::Null,
            "alpha": 1.0,
            "certified_error": self.certified_error,
        })
        .to_string()
    }
}

pub fn clenshaw(coeffs: &[f64], x: f64) -> f64 {
    let n = coeffs.len();
    if n == 0 {
        return 0.0;
    }
    let (mut b1, mut b2) = (0.0, 0.0);
    for &c in coeffs[1..].iter().rev() {
        let b0 = 2.0 * x * b1 - b2 + c;
        b2 = b1;
        b1 = b0;
    }
    coeffs[0] + x * b1 - b2
}

pub(crate) fn grid(lo: f64, hi: f64, points: usize) -> impl Iterator<Item = f64> {
    let n = points.max(2);
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

/// `exp(-β(λ - λ_min))`.
pub fn propagator(beta: f64, lambda_min: f64, lambda: f64) -> f64 {
    (-beta * (lambda - lambda_min)).exp()
}

/// App.-E style bound `β^{q/2+1} / (2^{q/2} (q/2+1)!)`.
pub fn first_bound(beta: f64, q: usize) -> f64 {
    let h = q / 2;
    if beta == 0.0 {
        return 0.0;
    }
    ((h as f64 + 1.0) * beta.ln() - h as f64 * 2f64.ln() - ln_factorial(h + 1)).exp()
}

/// Jacobi–Anger coefficients of `F` truncated at Chebyshev degree q/2.
pub fn jacobi_anger_coeffs(beta: f64, lambda_min: f64, q: usize) -> Result<ChebyshevSeries> {
    if q % 2 != 0 {
        return Err(invalid(format!("q = {q} must be even")));
    }
    let scale = (beta * lambda_min).exp();
    let mut coeffs = Vec::with_capacity(q / 2 + 1);
    for k in 0..=q / 2 {
        let ik = bessel_i(k, beta)?;
        let c = if k == 0 { ik } else if k % 2 == 0 { 2.0 * ik } else { -2.0 * ik };
        coeffs.push(scale * c);
    }
    // derivative bound over [-1, 1] includes e^{β(1+λ_min)} when λ_min > -1
    let certified_error = (beta * (1.0 + lambda_min)).exp() * first_bound(beta, q);
    Ok(ChebyshevSeries { coeffs, beta, lambda_min, certified_error })
}

/// Smallest even q whose App.-E bound drops below ε'.
pub fn cheb_truncation_order(beta: f64, eps: f64) -> usize {
    let mut q = 0;
    while first_bound(beta, q) >= eps {
        q += 2;
    }
    q
}

/// Continuous P1 query estimate q̃1(β, ε').
pub fn q1_bound(beta: f64, eps: f64) -> f64 {
    if beta <= 0.0 {
        return 0.0;
    }
    let l = (1.0 / eps).ln();
    2.0 * (E * beta / 2.0 + l / (E + 2.0 * l / (E * beta)).ln())
}

/// Even-rounded P1 query count.
pub fn q1_queries(beta: f64, eps: f64) -> u64 {
    even_ceil(q1_bound(beta, eps))
}

/// Continuous P2 query estimate q̃2(β, γ, ε').
pub fn q2_bound(beta: f64, gamma: f64, eps: f64) -> f64 {
    4.0 * (beta / gamma + 1.0) * (4.0 / eps).ln()
}

pub fn q2_queries(beta: f64, gamma: f64, eps: f64) -> u64 {
    even_ceil(q2_bound(beta, gamma, eps))
}

/// Chebyshev interpolation coefficients from q/2+1 Gauss nodes.
pub fn generic_cheb_coeffs(f: impl Fn(f64) -> f64, q: usize) -> Result<ChebyshevSeries> {
    generic_cheb_coeffs_with_nodes(f, q, q / 2 + 1)
}

/// Same as [`generic_cheb_coeffs`] with an explicit node count (≥ q/2+1).
/// Oversampling suppresses aliasing and approaches the truncated expansion.
pub fn generic_cheb_coeffs_with_nodes(f: impl Fn(f64) -> f64, q: usize, nodes: usize) -> Result<ChebyshevSeries> {
    if q % 2 != 0 {
        return Err(invalid(format!("q = {q} must be even")));
    }
    let n = nodes.max(q / 2 + 1);
    let thetas: Vec<f64> = (0..n).map(|j| PI * (j as f64 + 0.5) / n as f64).collect();
    let values: Vec<f64> = thetas.iter().map(|t| f(t.cos())).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("function is not finite at a Chebyshev node"));
    }
    let coeffs = (0..=q / 2)
        .map(|k| {
            let s: f64 = thetas.iter().zip(&values).map(|(t, v)| v * (k as f64 * t).cos()).sum();
            let c = 2.0 * s / n as f64;
            if k == 0 {
                0.5 * c
            } else {
                c
            }
        })
        .collect();
    Ok(ChebyshevSeries { coeffs, beta: f64::NAN, lambda_min: f64::NAN, certified_error: f64::NAN })
}

/// `max_derivative / (2^{q/2} (q/2+1)!)`.
pub fn cheb_error_bound(max_derivative: f64, q: usize) -> f64 {
    let h = q / 2;
    max_derivative * (-(h as f64) * 2f64.ln() - ln_factorial(h + 1)).exp()
}

/// Truncated Taylor series of the propagator together with the
/// sub-normalization used by the Fourier route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorSeries {
    pub coeffs: Vec<f64>,
    pub order: usize,
    pub beta: f64,
    pub lambda_min: f64,
    pub alpha: f64,
}

impl TaylorSeries {
    pub fn eval(&self, lambda: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, a| acc * lambda + a)
    }
}

/// Sub-normalization α, Taylor order L and coefficients.
pub fn taylor_order_and_alpha(beta: f64, lambda_min: f64, gamma: f64, eps_tr: f64) -> Result<(usize, f64, TaylorSeries)> {
    if !(beta >= 0.0) || !(gamma > 0.0) || !(eps_tr > 0.0) {
        return Err(invalid("taylor_order_and_alpha needs beta >= 0, gamma > 0, eps_tr > 0"));
    }
    let alpha = (-beta * (1.0 + lambda_min) - gamma).exp();
    let mut l = 0usize;
    // remainder α β^{L+1}/(L+1)!, tracked incrementally
    let mut rem = alpha * beta;
    while rem > eps_tr / 4.0 {
        l += 1;
        rem *= beta / (l as f64 + 1.0);
    }
    let scale = (beta * lambda_min).exp();
    let mut coeffs = Vec::with_capacity(l + 1);
    let mut term = 1.0;
    for i in 0..=l {
        if i > 0 {
            term *= -beta / i as f64;
        }
        coeffs.push(scale * term);
    }
    Ok((l, alpha, TaylorSeries { coeffs, order: l, beta, lambda_min, alpha }))
}

/// Trigonometric series `Σ_{m=-q/2}^{q/2} c_m e^{imx}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierSeries {
    pub coeffs: Vec<Complex64>,
    pub t: f64,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda_min: f64,
    pub certified_error: f64,
}

impl FourierSeries {
    pub fn q(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn half(&self) -> i64 {
        (self.coeffs.len() as i64 - 1) / 2
    }

    pub fn coeff(&self, m: i64) -> Complex64 {
        let idx = m + self.half();
        if idx < 0 || idx as usize >= self.coeffs.len() {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[idx as usize]
        }
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        let n = self.half();
        let z = Complex64::from_polar(1.0, x);
        let zinv = z.conj();
        // Horner on the positive and negative halves
        let mut pos = Complex64::new(0.0, 0.0);
        for m in (1..=n).rev() {
            pos = (pos + self.coeff(m)) * z;
        }
        let mut neg = Complex64::new(0.0, 0.0);
        for m in (1..=n).rev() {
            neg = (neg + self.coeff(-m)) * zinv;
        }
        self.coeff(0) + pos + neg
    }

    /// `x ↦ g̃(-x)`, i.e. `c_m → c_{-m}`.
    pub fn reflected(&self) -> Self {
        let mut c = self.coeffs.clone();
        c.reverse();
        Self { coeffs: c, ..self.clone() }
    }

    /// Target α F(x/t) on the convergence window.
    pub fn target(&self, x: f64) -> f64 {
        self.alpha * propagator(self.beta, self.lambda_min, x / self.t)
    }

    pub fn max_abs(&self, points: usize) -> f64 {
        grid(-PI, PI, points).map(|x| self.eval(x).norm()).fold(0.0, f64::max)
    }

    pub fn window_error(&self, points: usize) -> f64 {
        grid(-self.t, self.t, points)
            .map(|x| (self.eval(x) - self.target(x)).norm())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        let coeffs: Vec<[f64; 2]> = self.coeffs.iter().map(|c| [c.re, c.im]).collect();
        serde_json::json!({
            "kind": "fourier",
            "coeffs": coeffs,
            "beta": self.beta,
            "lambda_min": self.lambda_min,
            "t": self.t,
            "delta": self.delta,
            "alpha": self.alpha,
            "certified_error": self.certified_error,
        })
        .to_string()
    }
}

/// Grid maximum of `f` refined by doubling until two successive values agree to 1%.
pub(crate) fn stable_grid_max(f: impl Fn(usize) -> f64) -> f64 {
    let mut n = CERT_GRID;
    let mut prev = f(n);
    for _ in 0..4 {
        n *= 2;
        let cur = f(n);
        if (cur - prev).abs() <= 0.01 * cur.abs().max(1e-300) {
            return cur.max(prev);
        }
        prev = cur;
    }
    prev
}

/// Fourier order from the convergence-window width.
pub fn fourier_order(beta: f64, gamma: f64, eps_tr: f64) -> (usize, f64) {
    let delta = 0.5 * PI / (1.0 + beta / gamma);
    let q = ((2.0 * PI / delta) * (4.0 / eps_tr).ln()).ceil();
    (even_ceil(q) as usize, delta)
}

/// Weighted least-squares trigonometric fit of α F(x/t) on the convergence
/// window, with a small penalty pulling the series towards zero outside it,
/// followed by grid certification.
pub fn fourier_from_taylor(taylor: &TaylorSeries, beta: f64, gamma: f64, eps_tr: f64) -> Result<FourierSeries> {
    if !(gamma > 0.0) || !(eps_tr > 0.0) {
        return Err(invalid("fourier_from_taylor needs gamma > 0 and eps_tr > 0"));
    }
    let (q, delta) = fourier_order(beta, gamma, eps_tr);
    let t = 0.5 * PI - delta;
    let alpha = taylor.alpha;
    let lambda_min = taylor.lambda_min;
    let n = q / 2;
    let target = |x: f64| alpha * propagator(beta, lambda_min, x / t);

    let coeffs = if beta == 0.0 {
        let mut c = vec![Complex64::new(0.0, 0.0); q + 1];
        c[n] = Complex64::new(alpha, 0.0);
        c
    } else {
        fit_real_trig(n, t, &target, (0.1 * eps_tr).min(1e-2))
    };
    let mut series = FourierSeries { coeffs, t, delta, alpha, beta, lambda_min, certified_error: f64::NAN };
    let peak = stable_grid_max(|m| series.max_abs(m));
    if peak >= 1.0 {
        let s = (1.0 - 1e-9) / peak;
        series.coeffs.iter_mut().for_each(|c| *c *= s);
    }
    let err = stable_grid_max(|m| series.window_error(m));
    series.certified_error = err;
    if err > eps_tr {
        return Err(Error::Certification { achieved: err, tol: eps_tr });
    }
    Ok(series)
}

/// The window error scales with `out_weight`, so it is tied to the tolerance.
fn fit_real_trig(n: usize, t: f64, target: &dyn Fn(f64) -> f64, out_weight: f64) -> Vec<Complex64> {
    let unknowns = 2 * n + 1;
    let inside = (4 * unknowns).max(1024);
    let outside = inside / 2;
    let rows = inside + outside;
    let a = design_matrix(rows, unknowns, t, inside, outside, out_weight);
    let rhs = DVector::from_fn(rows, |r, _| {
        if r < inside {
            target(-t * (PI * (r as f64 + 0.5) / inside as f64).cos())
        } else {
            0.0
        }
    });
    let qr = a.clone().qr();
    let qtb = qr.q().transpose() * &rhs;
    let sol = match qr.r().solve_upper_triangular(&qtb) {
        Some(s) if s.iter().all(|v| v.is_finite()) => s,
        _ => nalgebra::SVD::new(a, true, true).solve(&rhs, 1e-14).expect("svd solve"),
    };
    let mut c = vec![Complex64::new(0.0, 0.0); 2 * n + 1];
    c[n] = Complex64::new(sol[0], 0.0);
    for m in 1..=n {
        let (am, bm) = (sol[2 * m - 1], sol[2 * m]);
        // a cos + b sin = ((a - ib)/2) e^{imx} + ((a + ib)/2) e^{-imx}
        c[n + m] = Complex64::new(0.5 * am, -0.5 * bm);
        c[n - m] = Complex64::new(0.5 * am, 0.5 * bm);
    }
    c
}

fn design_matrix(rows: usize, unknowns: usize, t: f64, inside: usize, outside: usize, w_out: f64) -> DMatrix<f64> {
    let gap = 2.0 * PI - 2.0 * t;
    DMatrix::from_fn(rows, unknowns, |r, col| {
        let (x, w) = if r < inside {
            (-t * (PI * (r as f64 + 0.5) / inside as f64).cos(), 1.0)
        } else {
            (t + gap * ((r - inside) as f64 + 0.5) / outside as f64, w_out)
        };
        if col == 0 {
            w
        } else {
            let m = ((col + 1) / 2) as f64;
            if col % 2 == 1 {
                w * (m * x).cos()
            } else {
                w * (m * x).sin()
            }
        }
    })
}

/// γ_κ = (β/2)(√(1 + 2/(μ_κ β)) − 1).
pub fn gamma_opt(beta: f64, kind: Strategy) -> f64 {
    0.5 * beta * ((1.0 + 2.0 / (kind.mu() * beta)).sqrt() - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_small_values() {
        assert_eq!(bessel_i(0, 0.0).unwrap(), 1.0);
        assert!((bessel_i(1, 1.0).unwrap() - 0.565159103992485).abs() < 1e-14);
        assert!((bessel_i(0, 1.0).unwrap() - 1.266065877752008).abs() < 1e-14);
        assert!(bessel_i(0, 701.0).is_err());
    }

    #[test]
    fn series_and_recurrence_agree_at_the_switch() {
        for k in [0usize, 1, 5, 20, 40] {
            let a = bessel_series(k, 20.5);
            let b = bessel_miller(k, 20.5);
            assert!((a - b).abs() <= 1e-12 * a, "k={k}: {a} vs {b}");
        }
    }

    #[test]
    fn jacobi_anger_unit_beta() {
        let s = jacobi_anger_coeffs(1.0, 0.0, 8).unwrap();
        assert!((s.coeffs[0] - 1.266066).abs() < 1e-6);
        assert!((s.coeffs[1] + 1.130318).abs() < 1e-6);
        assert!((s.coeffs[2] - 0.271495).abs() < 1e-6);
        assert!(jacobi_anger_coeffs(1.0, 0.0, 3).is_err());
    }

    #[test]
    fn jacobi_anger_zero_beta_is_identity() {
        let s = jacobi_anger_coeffs(0.0, -1.0, 6).unwrap();
        assert_eq!(s.coeffs, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn lambda_min_scales_coefficients() {
        let a = jacobi_anger_coeffs(2.0, 0.0, 10).unwrap();
        let b = jacobi_anger_coeffs(2.0, -1.0, 10).unwrap();
        for (x, y) in a.coeffs.iter().zip(&b.coeffs) {
            assert!((x * (-2.0f64).exp() - y).abs() < 1e-15);
        }
    }

    #[test]
    fn truncation_order_examples() {
        assert_eq!(cheb_truncation_order(1.0, 1e-3), 8);
        assert!((first_bound(1.0, 8) - 1.0 / 1920.0).abs() < 1e-15);
        assert_eq!(cheb_truncation_order(0.0, 1e-3), 0);
    }

    #[test]
    fn q1_example() {
        let v = q1_bound(10.0, 1e-3);
        assert!((v - 38.98).abs() < 0.01, "{v}");
        assert_eq!(q1_queries(10.0, 1e-3), 40);
        assert!(q1_bound(1e-9, 1e-3) < q1_bound(1e-3, 1e-3));
        assert_eq!(q1_bound(0.0, 1e-3), 0.0);
    }

    #[test]
    fn q2_example() {
        let v = q2_bound(2.0, 0.414214, 1e-3);
        assert!((v - 193.4).abs() < 0.1, "{v}");
        assert_eq!(q2_queries(2.0, 0.414214, 1e-3), 194);
        assert!((q2_bound(0.0, 1.0, 1e-3) - 4.0 * 4000f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn generic_coefficients() {
        let t3 = |x: f64| 4.0 * x * x * x - 3.0 * x;
        let s = generic_cheb_coeffs(t3, 6).unwrap();
        for (k, b) in s.coeffs.iter().enumerate() {
            assert!((b - if k == 3 { 1.0 } else { 0.0 }).abs() < 1e-14);
        }
        let c = generic_cheb_coeffs(|_| 0.7, 4).unwrap();
        assert!((c.coeffs[0] - 0.7).abs() < 1e-15 && c.coeffs[1..].iter().all(|b| b.abs() < 1e-15));
        assert!(generic_cheb_coeffs(|_| f64::NAN, 4).is_err());
    }

    #[test]
    fn gamma_values() {
        assert!((gamma_opt(2.0, Strategy::Prob) - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        assert!((gamma_opt(2.0, Strategy::Coh) - (3f64.sqrt() - 1.0)).abs() < 1e-15);
        assert!((gamma_opt(1e9, Strategy::Prob) - 0.5).abs() < 1e-6);
        assert!((gamma_opt(1e9, Strategy::Coh) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn taylor_zero_beta() {
        let (l, a, t) = taylor_order_and_alpha(0.0, -1.0, 0.5, 1e-3).unwrap();
        assert_eq!(l, 0);
        assert!((a - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(t.coeffs, vec![1.0]);
    }

    #[test]
    fn fourier_constant_for_zero_beta() {
        let (_, _, t) = taylor_order_and_alpha(0.0, -1.0, 0.5, 1e-3).unwrap();
        let f = fourier_from_taylor(&t, 0.0, 0.5, 1e-3).unwrap();
        assert!((f.coeff(0).re - (-0.5f64).exp()).abs() < 1e-12);
        assert!(f.certified_error < 1e-12);
    }

    #[test]
    fn fourier_order_at_gamma_equal_beta() {
        let (q, delta) = fourier_order(1.3, 1.3, 1e-3);
        assert!((delta - PI / 4.0).abs() < 1e-15);
        assert_eq!(q, even_ceil((8.0 * 4000f64.ln()).ceil()) as usize);
    }
}
