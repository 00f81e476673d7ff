//! Quantum signal processing: pulse sequences for the two single-qubit
//! iterates, polynomial completion and layer stripping.
//!
//! Method 1 uses `R1(θ, φ) = e^{iθX} e^{iφZ}` with alternating signal sign,
//! `U = e^{iφ_{q+1}Z} R1(-θ, φ_q) R1(θ, φ_{q-1}) ... R1(-θ, φ_2) R1(θ, φ_1)`.
//! Its top-left entry is a polynomial B(cos θ); the realized function is
//! `Re B(cos θ)`, which for `cos θ = cos(arccos(λ)/2)` equals `Σ b_k T_k(λ)`.
//!
//! Method 2 interleaves `e^{iω_k x Z}` (ω_k = ±1/2) with general SU(2)
//! rotations and realizes trigonometric series in x.

use crate::error::{invalid, Error, Result};
use crate::funcapprox::{grid, ChebyshevSeries, FourierSeries};
use crate::poly::{spectral_factor, FactorMethod};
use nalgebra::Matrix2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub type C = Complex64;
pub type Mat2 = Matrix2<C>;

const ZERO: C = C::new(0.0, 0.0);
const ONE: C = C::new(1.0, 0.0);

/// Grid used when fitting.
pub const FIT_GRID: usize = 1024;
/// Grid used when certifying.
pub const CHECK_GRID: usize = 8192;
/// Largest total coefficient mass method 1 may leave unsynthesized.
pub const MAX_DROPPED: f64 = 1e-7;

/// `e^{iaX}`.
pub fn exp_x(a: f64) -> Mat2 {
    let (s, c) = a.sin_cos();
    Mat2::new(C::new(c, 0.0), C::new(0.0, s), C::new(0.0, s), C::new(c, 0.0))
}

/// `e^{iaY}`.
pub fn exp_y(a: f64) -> Mat2 {
    let (s, c) = a.sin_cos();
    Mat2::new(C::new(c, 0.0), C::new(s, 0.0), C::new(-s, 0.0), C::new(c, 0.0))
}

/// `e^{iaZ}`.
pub fn exp_z(a: f64) -> Mat2 {
    Mat2::new(C::from_polar(1.0, a), ZERO, ZERO, C::from_polar(1.0, -a))
}

pub fn unitarity_residual(u: &Mat2) -> f64 {
    max_entry(&(u.adjoint() * u - Mat2::identity()))
}

/// Largest entry modulus.
pub fn max_entry(m: &Mat2) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// `⟨+|U|+⟩`.
pub fn plus_expectation(u: &Mat2) -> C {
    0.5 * (u[(0, 0)] + u[(0, 1)] + u[(1, 0)] + u[(1, 1)])
}

// ---------------------------------------------------------------------------
// Method 1

/// Complementary polynomials of the method-1 iterate, in the half-angle
/// variable x = cos φ: `B(x) = Σ_k b_k T_{2k}(x)` and
/// `sin φ · D(cos φ) = Σ_{k≥1} d_k sin(2kφ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyPair {
    pub b: Vec<C>,
    /// `d[k-1]` multiplies `sin(2kφ)`.
    pub d: Vec<C>,
}

impl PolyPair {
    pub fn q(&self) -> usize {
        2 * (self.b.len() - 1)
    }

    pub fn eval_b(&self, x: f64) -> C {
        let phi = x.clamp(-1.0, 1.0).acos();
        self.b.iter().enumerate().map(|(k, &c)| c * (2.0 * k as f64 * phi).cos()).sum()
    }

    /// `sin φ · D(cos φ)`.
    pub fn eval_sin_d(&self, x: f64) -> C {
        let phi = x.clamp(-1.0, 1.0).acos();
        self.d.iter().enumerate().map(|(k, &c)| c * (2.0 * (k + 1) as f64 * phi).sin()).sum()
    }

    /// `D(x)` via Chebyshev polynomials of the second kind, `D = Σ d_k U_{2k-1}`.
    pub fn eval_d(&self, x: f64) -> C {
        let mut u_prev = 1.0; // U_0
        let mut u_cur = 2.0 * x; // U_1
        let mut acc = ZERO;
        for &c in &self.d {
            acc += c * u_cur;
            for _ in 0..2 {
                let next = 2.0 * x * u_cur - u_prev;
                u_prev = u_cur;
                u_cur = next;
            }
        }
        acc
    }

    /// Max |  |B|² + (1-x²)|D|² - 1 | on a grid.
    pub fn unitarity_residual(&self, points: usize) -> f64 {
        grid(-1.0, 1.0, points)
            .map(|x| (self.eval_b(x).norm_sqr() + self.eval_sin_d(x).norm_sqr() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Target in the even-cosine form `𝓑(cos φ) = Σ b_k cos(2kφ)`.
pub fn cosine_form_max(b: &[f64], points: usize) -> (f64, f64) {
    grid(0.0, PI / 2.0, points)
        .map(|phi| {
            let v: f64 = b.iter().enumerate().map(|(k, c)| c * (2.0 * k as f64 * phi).cos()).sum();
            (v.abs(), phi.cos())
        })
        .fold((0.0, 0.0), |acc, v| if v.0 > acc.0 { v } else { acc })
}

/// Finds complex B with Re B = 𝓑 and a purely imaginary D completing the
/// unitary, by spectral factorization of 1 − 𝓑².
pub fn complete_polynomials(b: &[f64]) -> Result<PolyPair> {
    if b.is_empty() {
        return Err(invalid("empty target"));
    }
    let (max, at) = cosine_form_max(b, 4 * CHECK_GRID);
    if max > 1.0 + 1e-10 {
        return Err(Error::Normalization { max, at });
    }
    let n = b.len() - 1;
    // 𝓑 as a Laurent polynomial in ζ = e^{2iφ}: p_0 = b_0, p_{±k} = b_k/2
    let mut p = vec![ZERO; 2 * n + 1];
    p[n] = C::new(b[0], 0.0);
    for k in 1..=n {
        p[n + k] = C::new(0.5 * b[k], 0.0);
        p[n - k] = C::new(0.5 * b[k], 0.0);
    }
    // A = 1 - p², Laurent degree 2n
    let mut a = vec![ZERO; 4 * n + 1];
    a[2 * n] = ONE;
    for i in 0..=2 * n {
        for j in 0..=2 * n {
            a[i + j] -= p[i] * p[j];
        }
    }
    let (h, residual, _) = spectral_factor(&a, true, FactorMethod::Roots);
    if residual > 1e-6 {
        return Err(Error::Factorization(residual));
    }
    // h has degree ≤ 2n; G = ζ^{-n} h has range [-n, n] with real coefficients
    let g = |m: i64| -> f64 {
        let idx = m + n as i64;
        if idx < 0 || idx as usize >= h.len() {
            0.0
        } else {
            h[idx as usize].re
        }
    };
    let mut bb = Vec::with_capacity(n + 1);
    bb.push(C::new(b[0], g(0)));
    for k in 1..=n as i64 {
        bb.push(C::new(b[k as usize], g(k) + g(-k)));
    }
    let d = (1..=n as i64).map(|k| C::new(0.0, g(k) - g(-k))).collect();
    let pair = PolyPair { b: bb, d };
    let res = pair.unitarity_residual(CHECK_GRID);
    if res > 1e-6 {
        return Err(Error::Factorization(res));
    }
    Ok(pair)
}

/// Method-1 pulse sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSeq1 {
    pub phis: Vec<f64>,
    pub q: usize,
    pub target: ChebyshevSeries,
    /// Largest coefficient discarded while stripping layers.
    pub strip_residual: f64,
}

impl PulseSeq1 {
    /// Realized `Re B(cos(arccos(λ)/2))`, averaged over both signal signs as
    /// the qubitized walk does.
    pub fn realized(&self, lambda: f64) -> f64 {
        let th = 0.5 * lambda.clamp(-1.0, 1.0).acos();
        let up = plus_expectation(&eval_sequence1(&self.phis, th));
        let dn = plus_expectation(&eval_sequence1(&self.phis, -th));
        0.5 * (up + dn).re
    }

    pub fn max_error(&self, points: usize) -> f64 {
        grid(-1.0, 1.0, points)
            .map(|l| (self.realized(l) - self.target.eval(l)).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self, target_ref: &str) -> String {
        serde_json::json!({
            "method": 1,
            "q": self.q,
            "phis": self.phis,
            "target_ref": target_ref,
            "residual": self.strip_residual,
        })
        .to_string()
    }
}

/// `e^{iφ_{q+1}Z} Π_k R1(∓θ, φ_k)`, with `phis[k-1] = φ_k`.
pub fn eval_sequence1(phis: &[f64], theta: f64) -> Mat2 {
    let mut u = Mat2::identity();
    let q = phis.len().saturating_sub(1);
    for k in 1..=q {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        u = exp_x(sign * theta) * exp_z(phis[k - 1]) * u;
    }
    exp_z(*phis.last().unwrap_or(&0.0)) * u
}

/// Laurent matrix polynomial `Σ_j C_j w^j`, j ∈ [-deg, deg].
#[derive(Clone)]
struct LaurentMat {
    deg: usize,
    c: Vec<Mat2>,
}

impl LaurentMat {
    fn get(&self, j: i64) -> Mat2 {
        let idx = j + self.deg as i64;
        if idx < 0 || idx as usize >= self.c.len() {
            Mat2::zeros()
        } else {
            self.c[idx as usize]
        }
    }
}

fn proj_plus() -> Mat2 {
    Mat2::new(C::new(0.5, 0.0), C::new(0.5, 0.0), C::new(0.5, 0.0), C::new(0.5, 0.0))
}

fn proj_minus() -> Mat2 {
    Mat2::new(C::new(0.5, 0.0), C::new(-0.5, 0.0), C::new(-0.5, 0.0), C::new(0.5, 0.0))
}

/// Layer stripping of the unitary built from `pair`.
pub fn angles_method1(pair: &PolyPair, target: &ChebyshevSeries) -> Result<PulseSeq1> {
    let q = pair.q();
    let n = q / 2;
    if pair.d.len() != n {
        return Err(invalid("D must have q/2 coefficients"));
    }
    // coefficients in w = e^{iφ}: cos(2kφ) → (w^{2k}+w^{-2k})/2, i sinφ D → Σ d_k (w^{2k}-w^{-2k})/2
    let mut c = vec![Mat2::zeros(); 2 * q + 1];
    for k in 0..=n {
        let bk = pair.b[k];
        let dk = if k == 0 { ZERO } else { pair.d[k - 1] };
        for (pow, sb, sd) in [(2 * k as i64, 0.5, 0.5), (-(2 * k as i64), 0.5, -0.5)] {
            let (sb, sd) = if k == 0 { (0.5, 0.0) } else { (sb, sd) };
            let m = Mat2::new(bk * sb, dk * sd, dk.conj() * sd, bk.conj() * sb);
            c[(pow + q as i64) as usize] += m;
        }
    }
    let mut u = LaurentMat { deg: q, c };
    let mut phis = vec![0.0; q + 1];
    let mut strip_residual = 0.0f64;
    let (pp, pm) = (proj_plus(), proj_minus());
    for j in (1..=q).rev() {
        let sigma: i64 = if j % 2 == 1 { 1 } else { -1 };
        let (top, bottom) = (u.get(j as i64), u.get(-(j as i64)));
        // the rows that must vanish: ⟨s_top| e^{-iψZ} C_j and ⟨s_bot| e^{-iψZ} C_{-j}
        let (s_top, s_bot) = if sigma == 1 { (-1.0, 1.0) } else { (1.0, -1.0) };
        let (mut num, mut den) = (ZERO, 0.0);
        for (m, s) in [(top, s_top), (bottom, s_bot)] {
            for col in 0..2 {
                let (v0, v1) = (m[(0, col)], m[(1, col)]);
                // v0 = -s v1 u
                let coef = -s * v1;
                num += coef.conj() * v0;
                den += coef.norm_sqr();
            }
        }
        let psi = if den < 1e-24 {
            0.0
        } else {
            let ratio = num / den;
            let off = (ratio.norm() - 1.0).abs();
            if off > 1e-6 {
                return Err(Error::Degenerate { step: q - j, residual: off });
            }
            0.5 * ratio.arg()
        };
        phis[j] = psi;
        let rot = exp_z(-psi);
        // next = X(-σ) e^{-iψZ} U, X(-σ) = w^{-σ} P+ + w^{σ} P-
        let deg = j - 1;
        let mut next = LaurentMat { deg, c: vec![Mat2::zeros(); 2 * deg + 1] };
        for p in -(j as i64) - 1..=(j as i64) + 1 {
            let m = pp * rot * u.get(p + sigma) + pm * rot * u.get(p - sigma);
            if p.unsigned_abs() as usize > deg {
                strip_residual = strip_residual.max(max_entry(&m));
            } else {
                next.c[(p + deg as i64) as usize] = m;
            }
        }
        u = next;
    }
    let last = u.get(0);
    strip_residual = strip_residual.max(last[(0, 1)].norm()).max(last[(1, 0)].norm());
    if strip_residual > 1e-6 {
        return Err(Error::Degenerate { step: q, residual: strip_residual });
    }
    phis[0] = last[(0, 0)].arg();
    Ok(PulseSeq1 { phis, q, target: target.clone(), strip_residual })
}

/// Completion plus stripping for a Chebyshev target with |series| ≤ 1.
pub fn synthesize_method1(target: &ChebyshevSeries) -> Result<PulseSeq1> {
    // Top coefficients below ~1e-8 vanish from 1 − 𝓑² in double precision and
    // the complement comes out short. Synthesize the resolvable head and pad
    // with zero phases, whose alternating signal pairs cancel.
    let full = target.coeffs.len();
    let mut first_err = None;
    for keep in (1..=full).rev() {
        let dropped: f64 = target.coeffs[keep..].iter().map(|c| c.abs()).sum();
        if dropped > MAX_DROPPED {
            break;
        }
        match complete_polynomials(&target.coeffs[..keep]).and_then(|pair| angles_method1(&pair, target)) {
            Ok(mut seq) => {
                seq.q = 2 * (full - 1);
                seq.phis.resize(seq.q + 1, 0.0);
                seq.strip_residual = seq.strip_residual.max(dropped);
                return Ok(seq);
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    Err(first_err.expect("at least one attempt"))
}

/// Coefficients of `𝓑(x) = Σ b_k T_{2k}(x)` in the plain `T_j(x)` basis.
pub fn halved_angle_coeffs(series: &ChebyshevSeries) -> Vec<f64> {
    let mut out = vec![0.0; 2 * series.coeffs.len() - 1];
    for (k, &b) in series.coeffs.iter().enumerate() {
        out[2 * k] = b;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AchievabilityReport {
    pub max_value: f64,
    pub at_x: f64,
    pub parity_ok: bool,
    pub degree_ok: bool,
    pub pass: bool,
}

/// Checks `𝓑² + (1−x²)𝓓² ≤ 1` with 𝓑 = Σ β_j T_j(x) (even) and
/// 𝓓 = Σ δ_j U_j(x) (odd).
pub fn verify_achievability(b_cheb: &[f64], d_cheb: &[f64]) -> AchievabilityReport {
    let tol = 1e-12;
    let parity_ok = b_cheb.iter().enumerate().all(|(j, c)| j % 2 == 0 || c.abs() <= tol)
        && d_cheb.iter().enumerate().all(|(j, c)| j % 2 == 1 || c.abs() <= tol);
    let deg = |v: &[f64]| v.iter().rposition(|c| c.abs() > tol);
    let degree_ok = match (deg(b_cheb), deg(d_cheb)) {
        (_, None) => true,
        (None, Some(_)) => false,
        (Some(db), Some(dd)) => dd < db.max(1),
    };
    let (mut max_value, mut at_x) = (f64::NEG_INFINITY, 0.0);
    for x in grid(-1.0, 1.0, 4 * CHECK_GRID) {
        let bv = crate::funcapprox::clenshaw(b_cheb, x);
        let dv = cheb_u(d_cheb, x);
        let v = bv * bv + (1.0 - x * x) * dv * dv;
        if v > max_value {
            max_value = v;
            at_x = x;
        }
    }
    AchievabilityReport { max_value, at_x, parity_ok, degree_ok, pass: parity_ok && degree_ok && max_value <= 1.0 + 1e-12 }
}

fn cheb_u(coeffs: &[f64], x: f64) -> f64 {
    let (mut prev, mut cur) = (0.0, 1.0);
    let mut acc = 0.0;
    for &c in coeffs {
        acc += c * cur;
        let next = 2.0 * x * cur - prev;
        prev = cur;
        cur = next;
    }
    acc
}

// ---------------------------------------------------------------------------
// Method 2

/// `R2(x, ω, ζ, η, φ, κ) = e^{i(ζ+η)/2 Z} e^{-iφY} e^{i(ζ-η)/2 Z} e^{iωxZ} e^{-iκY}`.
pub fn r2(x: f64, omega: f64, xi: [f64; 4]) -> Mat2 {
    let [zeta, eta, phi, kappa] = xi;
    rot_part(zeta, eta, phi) * exp_z(omega * x) * exp_y(-kappa)
}

fn rot_part(zeta: f64, eta: f64, phi: f64) -> Mat2 {
    exp_z(0.5 * (zeta + eta)) * exp_y(-phi) * exp_z(0.5 * (zeta - eta))
}

/// Signal frequencies ω_0 = 0, ω_k = (−1)^k / 2.
pub fn method2_omegas(q: usize) -> Vec<f64> {
    (0..=q).map(|k| if k == 0 { 0.0 } else if k % 2 == 0 { 0.5 } else { -0.5 }).collect()
}

/// `Π_{k=0}^{q} R2(x, ω_k, ξ_k)`, with k = 0 applied first.
pub fn eval_sequence2(omegas: &[f64], xis: &[f64], x: f64) -> Mat2 {
    let mut u = Mat2::identity();
    for (k, &w) in omegas.iter().enumerate() {
        let xi = [xis[4 * k], xis[4 * k + 1], xis[4 * k + 2], xis[4 * k + 3]];
        u = r2(x, w, xi) * u;
    }
    u
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSeq2 {
    pub omegas: Vec<f64>,
    pub xis: Vec<f64>,
    pub target: FourierSeries,
    pub max_error: f64,
    pub converged: bool,
}

impl PulseSeq2 {
    pub fn q(&self) -> usize {
        self.omegas.len() - 1
    }

    pub fn compile(&self) -> CompiledSeq2 {
        let gates = (0..self.omegas.len())
            .map(|k| {
                let xi = &self.xis[4 * k..4 * k + 4];
                (rot_part(xi[0], xi[1], xi[2]), self.omegas[k], exp_y(-xi[3]))
            })
            .collect();
        CompiledSeq2 { gates }
    }

    pub fn to_json(&self, target_ref: &str) -> String {
        serde_json::json!({
            "method": 2,
            "q": self.q(),
            "omegas": self.omegas,
            "xis": self.xis,
            "target_ref": target_ref,
            "residual": self.max_error,
        })
        .to_string()
    }
}

/// Precomputed x-independent factors of a method-2 sequence.
#[derive(Debug, Clone)]
pub struct CompiledSeq2 {
    gates: Vec<(Mat2, f64, Mat2)>,
}

impl CompiledSeq2 {
    pub fn eval(&self, x: f64) -> Mat2 {
        let mut u = Mat2::identity();
        for (rot, w, kap) in &self.gates {
            let ph = C::from_polar(1.0, w * x);
            // diag(ph, conj ph) * kap * u
            let mut m = kap * u;
            m[(0, 0)] *= ph;
            m[(0, 1)] *= ph;
            m[(1, 0)] *= ph.conj();
            m[(1, 1)] *= ph.conj();
            u = rot * m;
        }
        u
    }

    pub fn top_left(&self, x: f64) -> C {
        self.eval(x)[(0, 0)]
    }
}

fn seq2_error(seq: &CompiledSeq2, target: &FourierSeries, points: usize) -> f64 {
    grid(-PI, PI, points)
        .map(|x| (seq.top_left(x) - target.eval(x)).norm())
        .fold(0.0, f64::max)
}

/// SU(2) matrix with first column (a, b).
fn su2_from_column(a: C, b: C) -> Mat2 {
    Mat2::new(a, -b.conj(), b, a.conj())
}

/// (ζ, η, φ) with `rot_part(ζ, η, φ) = u` for u ∈ SU(2).
fn zyz_angles(u: &Mat2) -> (f64, f64, f64) {
    let (a, b) = (u[(0, 0)], u[(1, 0)]);
    let phi = b.norm().atan2(a.norm());
    let zeta = if a.norm() > 1e-300 { a.arg() } else { 0.0 };
    let eta = if b.norm() > 1e-300 { -b.arg() } else { 0.0 };
    (zeta, eta, phi)
}

/// Constructive pulses: complement the Laurent polynomial, strip layers of
/// the associated polynomial unitary and map each layer onto R2 gates.
fn constructive_method2(target: &FourierSeries) -> Result<Vec<f64>> {
    let q = target.q();
    if q % 2 != 0 {
        return Err(invalid("method 2 needs an even number of coefficients minus one"));
    }
    // P(z) = Σ c_m z^{m + q/2}
    let p: Vec<C> = target.coeffs.clone();
    // A = 1 - |P|², Laurent range [-q, q]
    let mut a = vec![ZERO; 2 * q + 1];
    a[q] = ONE;
    for i in 0..=q {
        for j in 0..=q {
            a[q + i - j] -= p[i] * p[j].conj();
        }
    }
    let (qpoly, residual, _) = spectral_factor(&a, false, FactorMethod::Cepstrum);
    if residual > 1e-8 {
        return Err(Error::Factorization(residual));
    }
    // column polynomial v(z) = (P, Q)
    let mut v: Vec<[C; 2]> = (0..=q).map(|k| [p[k], qpoly[k]]).collect();
    let mut layers: Vec<Mat2> = vec![Mat2::identity(); q + 1];
    for deg in (1..=q).rev() {
        let low = v[0];
        let high = v[deg];
        let (nl, nh) = (norm2(low), norm2(high));
        let (c0, c1) = match (nl > 1e-14, nh > 1e-14) {
            (true, true) => {
                let c0 = scale2(low, 1.0 / nl);
                // remove any residual overlap so the layer is exactly unitary
                let ov = dot2(c0, high);
                let h = [high[0] - ov * c0[0], high[1] - ov * c0[1]];
                let nh2 = norm2(h);
                if nh2 < 1e-14 {
                    (c0, orth2(c0))
                } else {
                    (c0, scale2(h, 1.0 / nh2))
                }
            }
            (true, false) => {
                let c0 = scale2(low, 1.0 / nl);
                (c0, orth2(c0))
            }
            (false, true) => {
                let c1 = scale2(high, 1.0 / nh);
                (orth2(c1).map(|z| -z), c1)
            }
            (false, false) => ([ONE, ZERO], [ZERO, ONE]),
        };
        let w = Mat2::new(c0[0], c1[0], c0[1], c1[1]);
        layers[deg] = w;
        let wd = w.adjoint();
        // v' = diag(1, 1/z) W† v
        let rotated: Vec<[C; 2]> = v[..=deg]
            .iter()
            .map(|col| [wd[(0, 0)] * col[0] + wd[(0, 1)] * col[1], wd[(1, 0)] * col[0] + wd[(1, 1)] * col[1]])
            .collect();
        let mut next = vec![[ZERO, ZERO]; deg];
        for k in 0..deg {
            next[k][0] = rotated[k][0];
            next[k][1] = rotated[k + 1][1];
        }
        v = next;
    }
    let v0 = v[0];
    let nv = norm2(v0);
    let v0 = scale2(v0, 1.0 / nv);
    let x = Mat2::new(ZERO, ONE, ONE, ZERO);
    // A_k = W_k X (even k ≥ 2), X W_k (odd k), A_0 = W_0
    let mut gates: Vec<Mat2> = vec![Mat2::identity(); q + 1];
    for k in 1..=q {
        gates[k] = if k % 2 == 0 { layers[k] * x } else { x * layers[k] };
    }
    // collect determinant phases of A_1..A_q and cancel them in A_0
    let mut phase = ONE;
    let mut su: Vec<Mat2> = vec![Mat2::identity(); q + 1];
    for k in 1..=q {
        let det = gates[k].determinant();
        let chi = 0.5 * det.arg();
        su[k] = gates[k] * C::from_polar(1.0, -chi);
        phase *= C::from_polar(1.0, chi);
    }
    // Π_{k≥1} Ã_k drops e^{iΣχ}; the first layer puts it back on its column
    let c0 = v0[0] * phase;
    let c1 = v0[1] * phase;
    su[0] = su2_from_column(c0, c1);
    let mut xis = vec![0.0; 4 * (q + 1)];
    for k in 0..=q {
        let (zeta, eta, phi) = zyz_angles(&su[k]);
        xis[4 * k] = zeta;
        xis[4 * k + 1] = eta;
        xis[4 * k + 2] = phi;
    }
    Ok(xis)
}

fn norm2(v: [C; 2]) -> f64 {
    (v[0].norm_sqr() + v[1].norm_sqr()).sqrt()
}

fn scale2(v: [C; 2], s: f64) -> [C; 2] {
    [v[0] * s, v[1] * s]
}

fn dot2(a: [C; 2], b: [C; 2]) -> C {
    a[0].conj() * b[0] + a[1].conj() * b[1]
}

fn orth2(v: [C; 2]) -> [C; 2] {
    [-v[1].conj(), v[0].conj()]
}

/// Method-2 pulses: constructive synthesis, refined by least squares if
/// needed; falls back to multi-start least squares.
pub fn angles_method2(target: &FourierSeries, tol: f64) -> Result<PulseSeq2> {
    let q = target.q();
    let omegas = method2_omegas(q);
    let peak = target.max_abs(CHECK_GRID);
    if peak > 1.0 + 1e-10 {
        return Err(Error::Normalization { max: peak, at: f64::NAN });
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    if let Ok(xis) = constructive_method2(target) {
        let seq = PulseSeq2 { omegas: omegas.clone(), xis, target: target.clone(), max_error: 0.0, converged: true };
        let err = seq2_error(&seq.compile(), target, 512);
        best = Some((seq.xis, err));
    }
    let need_fit = best.as_ref().map_or(true, |b| b.1 > tol);
    if need_fit {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ q as u64);
        let mut starts: Vec<Vec<f64>> = Vec::new();
        if let Some((x, _)) = &best {
            starts.push(x.clone());
        }
        for _ in 0..8 {
            starts.push((0..4 * (q + 1)).map(|_| rng.gen_range(-PI..PI)).collect());
        }
        for s in starts {
            let (xis, err) = least_squares_fit(&omegas, s, target, 200);
            if best.as_ref().map_or(true, |b| err < b.1) {
                best = Some((xis, err));
            }
            if best.as_ref().unwrap().1 <= tol {
                break;
            }
        }
    }
    let (xis, _) = best.expect("at least one candidate");
    let mut seq = PulseSeq2 { omegas, xis, target: target.clone(), max_error: 0.0, converged: false };
    seq.max_error = seq2_error(&seq.compile(), target, 512);
    seq.converged = seq.max_error <= tol;
    Ok(seq)
}

/// Levenberg–Marquardt on `Σ_grid |⟨0|U(x)|0⟩ − g̃(x)|²` with a
/// finite-difference Jacobian.
fn least_squares_fit(omegas: &[f64], start: Vec<f64>, target: &FourierSeries, iters: usize) -> (Vec<f64>, f64) {
    use nalgebra::{DMatrix, DVector};
    let np = start.len();
    let pts = (4 * omegas.len() + 16).min(FIT_GRID).max(32);
    let xs: Vec<f64> = (0..pts).map(|i| -PI + 2.0 * PI * (i as f64 + 0.5) / pts as f64).collect();
    let tv: Vec<C> = xs.iter().map(|&x| target.eval(x)).collect();
    let resid = |p: &[f64]| -> DVector<f64> {
        let mut r = DVector::zeros(2 * pts);
        for (i, &x) in xs.iter().enumerate() {
            let d = eval_sequence2(omegas, p, x)[(0, 0)] - tv[i];
            r[2 * i] = d.re;
            r[2 * i + 1] = d.im;
        }
        r
    };
    let mut p = start;
    let mut r = resid(&p);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    for _ in 0..iters {
        let h = 1e-7;
        let mut jac = DMatrix::zeros(2 * pts, np);
        for j in 0..np {
            let mut pp = p.clone();
            pp[j] += h;
            let rj = resid(&pp);
            jac.set_column(j, &((rj - &r) / h));
        }
        let jt = jac.transpose();
        let g = &jt * &r;
        let mut improved = false;
        for _ in 0..10 {
            let mut a = &jt * &jac;
            for d in 0..np {
                a[(d, d)] += lambda * (1.0 + a[(d, d)]);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rt = resid(&trial);
            let ct = rt.norm_squared();
            if ct < cost {
                p = trial;
                r = rt;
                cost = ct;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved || cost < 1e-26 {
            break;
        }
    }
    let max = (0..pts)
        .map(|i| (r[2 * i].powi(2) + r[2 * i + 1].powi(2)).sqrt())
        .fold(0.0, f64::max);
    (p, max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcapprox::{fourier_from_taylor, jacobi_anger_coeffs, taylor_order_and_alpha};

    fn unit_target(beta: f64, q: usize) -> ChebyshevSeries {
        let s = jacobi_anger_coeffs(beta, -1.0, q).unwrap();
        let peak = s.max_abs(4096).max(1.0);
        s.scaled((1.0 - 1e-6) / peak)
    }

    #[test]
    fn rotations_are_unitary() {
        for a in [0.0, 0.3, -1.7] {
            for m in [exp_x(a), exp_y(a), exp_z(a)] {
                assert!(unitarity_residual(&m) < 1e-15);
            }
        }
    }

    #[test]
    fn completion_is_unitary() {
        let t = unit_target(1.0, 8);
        let pair = complete_polynomials(&t.coeffs).unwrap();
        assert!(pair.unitarity_residual(2048) < 1e-9);
        for x in [-0.9, 0.1, 0.7] {
            assert!((pair.eval_b(x).re - t.eval(2.0 * x * x - 1.0)).abs() < 1e-12);
            let s = (1.0 - x * x).sqrt();
            assert!((pair.eval_sin_d(x) - s * pair.eval_d(x)).norm() < 1e-12);
        }
    }

    #[test]
    fn method1_round_trip() {
        for (beta, q) in [(0.5, 4), (1.0, 8), (3.0, 16)] {
            let t = unit_target(beta, q);
            let seq = synthesize_method1(&t).unwrap();
            assert_eq!(seq.phis.len(), q + 1);
            let err = seq.max_error(1001);
            assert!(err < 1e-8, "beta {beta}: {err}");
        }
    }

    #[test]
    fn normalization_violation_is_reported() {
        assert!(matches!(complete_polynomials(&[0.7, 0.6]), Err(Error::Normalization { .. })));
    }

    #[test]
    fn achievability_of_simple_pairs() {
        // B = T_2, D = 0
        let r = verify_achievability(&[0.0, 0.0, 1.0], &[]);
        assert!(r.pass);
        // odd B fails parity
        assert!(!verify_achievability(&[0.0, 0.5], &[]).pass);
        // too large
        assert!(!verify_achievability(&[1.2], &[]).pass);
    }

    #[test]
    fn method2_round_trip() {
        let beta = 0.5;
        let gamma = 1.0;
        let eps = 1e-2;
        let (_, _, taylor) = taylor_order_and_alpha(beta, -1.0, gamma, eps).unwrap();
        let f = fourier_from_taylor(&taylor, beta, gamma, eps).unwrap();
        let seq = angles_method2(&f, 1e-8).unwrap();
        assert!(seq.converged, "{}", seq.max_error);
        let c = seq.compile();
        for x in [-2.0, 0.0, 0.4, 3.0] {
            assert!((c.top_left(x) - eval_sequence2(&seq.omegas, &seq.xis, x)[(0, 0)]).norm() < 1e-12);
        }
    }

    #[test]
    fn constructive_pulses_are_exact() {
        for (beta, gamma) in [(1.0, 0.5), (2.0, 0.4)] {
            let (_, _, taylor) = taylor_order_and_alpha(beta, -1.0, gamma, 1e-3).unwrap();
            let f = fourier_from_taylor(&taylor, beta, gamma, 1e-3).unwrap();
            let xis = constructive_method2(&f).unwrap();
            let seq = PulseSeq2 { omegas: method2_omegas(f.q()), xis, target: f.clone(), max_error: 0.0, converged: true };
            let err = seq2_error(&seq.compile(), &f, 512);
            assert!(err < 1e-10, "q {}: {err}", f.q());
        }
    }
}
