//! Polynomial roots and spectral factorization of nonnegative Laurent
//! polynomials on the unit circle.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

/// Evaluates `Σ c_j z^j`.
pub fn horner(coeffs: &[C], z: C) -> C {
    coeffs.iter().rev().fold(ZERO, |acc, &c| acc * z + c)
}

/// Newton ratio p(z)/p'(z), evaluated through the reversed polynomial
/// when |z| > 1 to avoid overflow.
fn newton_ratio(coeffs: &[C], z: C) -> C {
    let n = coeffs.len() - 1;
    if z.norm() <= 1.0 {
        let (mut p, mut dp) = (ZERO, ZERO);
        for &c in coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        p / dp
    } else {
        // p(z) = z^n r(w), w = 1/z, r(w) = Σ c_{n-j} w^j
        let w = z.inv();
        let (mut r, mut dr) = (ZERO, ZERO);
        for &c in coeffs.iter() {
            dr = dr * w + r;
            r = r * w + c;
        }
        // p'/p = n/z - w² r'/r
        let logd = C::new(n as f64, 0.0) * w - w * w * dr / r;
        logd.inv()
    }
}

/// All roots of `Σ c_j z^j` by the Aberth–Ehrlich iteration.
pub fn roots(coeffs: &[C]) -> Vec<C> {
    let mut c: Vec<C> = coeffs.to_vec();
    while c.len() > 1 && c[c.len() - 1] == ZERO {
        c.pop();
    }
    let mut zeros = 0;
    while c.len() > 1 && c[0] == ZERO {
        c.remove(0);
        zeros += 1;
    }
    let n = c.len() - 1;
    let mut out = vec![ZERO; zeros];
    if n == 0 {
        return out;
    }
    let radius = (c[0].norm() / c[n].norm()).powf(1.0 / n as f64);
    let mut z: Vec<C> = (0..n)
        .map(|k| C::from_polar(radius, 2.0 * PI * k as f64 / n as f64 + 0.4))
        .collect();
    for _ in 0..2000 {
        let mut max_step = 0.0f64;
        for k in 0..n {
            let ratio = newton_ratio(&c, z[k]);
            if !ratio.is_finite() {
                continue;
            }
            let s: C = (0..n).filter(|&j| j != k).map(|j| (z[k] - z[j]).inv()).sum();
            let w = ratio / (C::new(1.0, 0.0) - ratio * s);
            if w.is_finite() {
                z[k] -= w;
                max_step = max_step.max(w.norm() / z[k].norm().max(1e-300));
            }
        }
        if max_step < 1e-15 {
            break;
        }
    }
    for zk in z.iter_mut() {
        for _ in 0..3 {
            let r = newton_ratio(&c, *zk);
            if r.is_finite() {
                *zk -= r;
            }
        }
    }
    out.extend(z);
    out
}

/// Laurent polynomial `Σ_{j=-d}^{d} a_j z^j`, stored with index `j + d`.
pub fn laurent_eval(a: &[C], z: C) -> C {
    let d = (a.len() - 1) / 2;
    let zi = z.inv();
    let mut pos = ZERO;
    for j in (1..=d).rev() {
        pos = (pos + a[d + j]) * z;
    }
    let mut neg = ZERO;
    for j in (1..=d).rev() {
        neg = (neg + a[d - j]) * zi;
    }
    a[d] + pos + neg
}

/// Max | |h|² - A | on a uniform grid of the circle.
pub fn factor_residual(a: &[C], h: &[C], points: usize) -> f64 {
    (0..points)
        .map(|k| {
            let z = C::from_polar(1.0, 2.0 * PI * k as f64 / points as f64);
            (horner(h, z).norm_sqr() - laurent_eval(a, z).re).abs()
        })
        .fold(0.0, f64::max)
}

/// Drops negligible outer coefficients of a Hermitian-symmetric Laurent polynomial.
fn trim(a: &[C]) -> Vec<C> {
    let d = (a.len() - 1) / 2;
    let scale = a.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-300);
    let mut e = d;
    while e > 0 && a[d + e].norm() <= 1e-15 * scale && a[d - e].norm() <= 1e-15 * scale {
        e -= 1;
    }
    a[d - e..=d + e].to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorMethod {
    Roots,
    Cepstrum,
}

/// Polynomial `h` (degree ≤ d) with |h(e^{iθ})|² = A(θ), where `a` holds the
/// Laurent coefficients of the nonnegative A. Returns (h, residual, method).
/// When `real` is set the coefficients of `h` are made real, which requires
/// A to have real coefficients.
pub fn spectral_factor(a: &[C], real: bool, prefer: FactorMethod) -> (Vec<C>, f64, FactorMethod) {
    let d = (a.len() - 1) / 2;
    let t = trim(a);
    let order = match prefer {
        FactorMethod::Roots => [FactorMethod::Roots, FactorMethod::Cepstrum],
        FactorMethod::Cepstrum => [FactorMethod::Cepstrum, FactorMethod::Roots],
    };
    let grid = (16 * (d + 1)).max(4096);
    let mut best: Option<(Vec<C>, f64, FactorMethod)> = None;
    for m in order {
        let mut h = match m {
            FactorMethod::Roots => factor_by_roots(&t),
            FactorMethod::Cepstrum => factor_by_cepstrum(&t),
        };
        if real {
            h.iter_mut().for_each(|c| *c = C::new(c.re, 0.0));
        }
        let res = factor_residual(&t, &h, grid);
        let better = best.as_ref().map_or(true, |b| res < b.1);
        if better {
            best = Some((h, res, m));
        }
        if res < 1e-12 {
            break;
        }
    }
    let (mut h, res, m) = best.expect("at least one method");
    h.resize(d + 1, ZERO);
    (h, res, m)
}

fn factor_by_roots(a: &[C]) -> Vec<C> {
    let d = (a.len() - 1) / 2;
    if d == 0 {
        return vec![C::new(a[0].re.max(0.0).sqrt(), 0.0)];
    }
    let rts = roots(a);
    if rts.len() != 2 * d || rts.iter().any(|r| !r.is_finite()) {
        return vec![ZERO; d + 1];
    }
    let tol = 1e-4;
    let mut chosen: Vec<C> = rts.iter().copied().filter(|r| r.norm() < 1.0 - tol).collect();
    let mut ring: Vec<C> = rts.iter().copied().filter(|r| (r.norm() - 1.0).abs() <= tol).collect();
    if ring.len() % 2 == 1 {
        return vec![ZERO; d + 1];
    }
    if !ring.is_empty() {
        ring.sort_by(|x, y| x.arg().total_cmp(&y.arg()));
        // start just after the widest angular gap so that pairs stay adjacent
        let m = ring.len();
        let mut start = 0;
        let mut widest = -1.0;
        for i in 0..m {
            let next = ring[(i + 1) % m].arg() + if i + 1 == m { 2.0 * PI } else { 0.0 };
            let gap = next - ring[i].arg();
            if gap > widest {
                widest = gap;
                start = (i + 1) % m;
            }
        }
        for k in (0..m).step_by(2) {
            let (p, q) = (ring[(start + k) % m], ring[(start + k + 1) % m]);
            // one representative per double root, placed on the circle
            let mid = 0.5 * (p + q);
            chosen.push(mid / mid.norm());
        }
    }
    if chosen.len() != d {
        return vec![ZERO; d + 1];
    }
    let mut h = vec![C::new(1.0, 0.0)];
    for r in &chosen {
        let mut next = vec![ZERO; h.len() + 1];
        for (i, &c) in h.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= c * r;
        }
        h = next;
    }
    // scale from a least-squares match of |h|² to A
    let pts = (8 * (d + 1)).max(256);
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..pts {
        let z = C::from_polar(1.0, 2.0 * PI * (k as f64 + 0.5) / pts as f64);
        let hv = horner(&h, z).norm_sqr();
        num += laurent_eval(a, z).re * hv;
        den += hv * hv;
    }
    let c = (num / den).max(0.0).sqrt();
    h.iter_mut().for_each(|x| *x *= c);
    h
}

fn factor_by_cepstrum(a: &[C]) -> Vec<C> {
    let d = (a.len() - 1) / 2;
    let m = ((64 * (d + 1)).max(1 << 14)).next_power_of_two().min(1 << 21);
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut buf = vec![ZERO; m];
    for (idx, &c) in a.iter().enumerate() {
        let j = idx as i64 - d as i64;
        buf[j.rem_euclid(m as i64) as usize] += c;
    }
    // values A(θ_k), θ_k = 2πk/m
    inv.process(&mut buf);
    let floor = 1e-300;
    for v in buf.iter_mut() {
        *v = C::new(v.re.max(floor).ln(), 0.0);
    }
    fwd.process(&mut buf);
    let scale = 1.0 / m as f64;
    for (k, v) in buf.iter_mut().enumerate() {
        *v *= scale;
        if k == 0 || k == m / 2 {
            *v *= 0.5;
        } else if k > m / 2 {
            *v = ZERO;
        }
    }
    inv.process(&mut buf);
    for v in buf.iter_mut() {
        *v = v.exp();
    }
    fwd.process(&mut buf);
    buf.truncate(d + 1);
    buf.iter_mut().for_each(|v| *v *= scale);
    buf
}
