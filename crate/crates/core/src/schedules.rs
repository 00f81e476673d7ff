//! Fragmentation schedules: the power-law ansatz and its optimizer, the
//! analytic two-fragment schedule, critical inverse temperatures and fits.

use crate::error::{invalid, Error, Result};
use crate::hamiltonians::{inverse_success_prob, success_prob_unchecked, Spectrum};
use crate::kinds::{Mode, Primitive, Strategy};
use crate::master::{baseline_cost, compress_spectrum, fragmented_cost, ComplexityReport, Schedule};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::E;

/// Smallest and largest ansatz exponent searched.
pub const A_MIN: f64 = 1.0;
pub const A_MAX: f64 = 50.0;
const GRID_STEP: f64 = 0.25;
const LOCAL_STEP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnsatzParams {
    pub r: usize,
    pub a: f64,
}

/// `β_l = (l/r)^a · total`.
pub fn ansatz_schedule(r: usize, a: f64, total_beta: f64) -> Result<Schedule> {
    if r == 0 || !(a >= 1.0) || !a.is_finite() || !(total_beta > 0.0) {
        return Err(invalid("ansatz needs r >= 1, finite a >= 1 and total_beta > 0"));
    }
    let rf = r as f64;
    let frags = (1..=r)
        .map(|l| ((l as f64 / rf).powf(a) - ((l - 1) as f64 / rf).powf(a)) * total_beta)
        .collect();
    Schedule::new(frags)
}

/// Cost model of a fixed instance, shared by all schedule searches.
struct CostModel {
    spectrum: Spectrum,
    /// Overlap mass at and above each (sorted) eigenvalue.
    tail_mass: Vec<f64>,
    eps: f64,
    primitive: Primitive,
}

impl CostModel {
    fn new(spectrum: &Spectrum, eps: f64, primitive: Primitive) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(invalid("eps must lie in (0, 1)"));
        }
        let mut sorted = spectrum.clone();
        if sorted.eigenvalues.windows(2).any(|w| w[0] > w[1]) {
            sorted = Spectrum::from_parts(sorted.eigenvalues, sorted.overlaps)?;
        }
        let spectrum = compress_spectrum(&sorted);
        let mut tail_mass = spectrum.overlaps.clone();
        for k in (0..tail_mass.len().saturating_sub(1)).rev() {
            tail_mass[k] += tail_mass[k + 1];
        }
        Ok(Self { spectrum, tail_mass, eps, primitive })
    }

    /// Success probability, stopping once the remaining terms cannot change
    /// the sum in double precision.
    fn p(&self, beta: f64) -> f64 {
        let lm = self.spectrum.lambda_min;
        let mut sum = 0.0;
        for (k, (&l, &o)) in self.spectrum.eigenvalues.iter().zip(&self.spectrum.overlaps).enumerate() {
            let decay = (-2.0 * beta * (l - lm)).exp();
            if sum > 0.0 && self.tail_mass[k] * decay < 1e-17 * sum {
                break;
            }
            sum += o * decay;
        }
        sum.min(1.0)
    }

    fn report(&self, schedule: &Schedule, continuous: bool) -> ComplexityReport {
        fragmented_cost(schedule, self.eps, self.spectrum.lambda_min, &|b| self.p(b), self.primitive, continuous)
    }

    fn cost(&self, r: usize, a: f64, total: f64, continuous: bool) -> f64 {
        match ansatz_schedule(r, a, total) {
            Ok(s) => self.report(&s, continuous).expected_queries,
            Err(_) => f64::INFINITY,
        }
    }

    fn baseline(&self, total: f64, strategy: Strategy) -> ComplexityReport {
        baseline_cost(total, self.eps, self.spectrum.lambda_min, self.p(total), strategy, self.primitive)
    }
}

/// Projected quasi-Newton descent on `[lo, hi]` with a central-difference
/// gradient. Returns `None` when the objective stops being finite.
fn quasi_newton_1d(f: &dyn Fn(f64) -> f64, x0: f64, lo: f64, hi: f64) -> Option<f64> {
    let grad = |x: f64| {
        let h = 1e-4 * x.abs().max(1.0);
        let (a, b) = ((x - h).max(lo), (x + h).min(hi));
        (f(b) - f(a)) / (b - a)
    };
    let mut x = x0.clamp(lo, hi);
    let mut fx = f(x);
    let mut g = grad(x);
    let mut hinv = 1.0;
    for _ in 0..100 {
        if !fx.is_finite() || !g.is_finite() {
            return None;
        }
        let step = (-hinv * g).clamp(-10.0, 10.0);
        let mut t = 1.0;
        let (xn, fxn) = loop {
            let xn = (x + t * step).clamp(lo, hi);
            let fxn = f(xn);
            if fxn <= fx + 1e-4 * g * (xn - x) {
                break (xn, fxn);
            }
            t *= 0.5;
            if t < 1e-10 {
                return Some(x);
            }
        };
        let s = xn - x;
        if s.abs() < 1e-8 {
            return Some(xn);
        }
        let gn = grad(xn);
        let y = gn - g;
        if s * y > 0.0 {
            hinv = s / y;
        }
        x = xn;
        fx = fxn;
        g = gn;
    }
    Some(x)
}

/// Best `a` for a fixed `r` and its exact cost.
fn best_a(model: &CostModel, r: usize, total: f64) -> (f64, f64) {
    if r == 1 {
        return (1.0, model.cost(1, 1.0, total, false));
    }
    let surrogate = |a: f64| model.cost(r, a, total, true).ln();
    let exact = |a: f64| model.cost(r, a, total, false);
    let starts = [1.0, 2.0, total.cbrt().clamp(A_MIN, A_MAX)];
    let minima: Vec<f64> = starts.iter().filter_map(|&a0| quasi_newton_1d(&surrogate, a0, A_MIN, A_MAX)).collect();
    let mut candidates = vec![A_MIN];
    if minima.is_empty() {
        let steps = ((A_MAX - A_MIN) / GRID_STEP).round() as usize;
        candidates.extend((0..=steps).map(|i| A_MIN + i as f64 * GRID_STEP));
    }
    // The ceilings make the exact cost piecewise constant, so the surrogate
    // minimum is polished by a short exact scan around it.
    for a in minima {
        candidates.extend((-10..=10).map(|k| (a + k as f64 * LOCAL_STEP).clamp(A_MIN, A_MAX)));
    }
    candidates
        .into_iter()
        .map(|a| (a, exact(a)))
        .fold((A_MIN, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
}

/// An optimized schedule with its cost breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizedSchedule {
    pub params: AnsatzParams,
    pub schedule: Schedule,
    pub report: ComplexityReport,
}

fn finish(model: &CostModel, r: usize, a: f64, total: f64) -> Result<OptimizedSchedule> {
    let schedule = ansatz_schedule(r, a, total)?;
    let report = model.report(&schedule, false);
    Ok(OptimizedSchedule { params: AnsatzParams { r, a }, schedule, report })
}

fn check_beta(beta: f64, r_max: usize) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(invalid("beta must be positive"));
    }
    if r_max == 0 {
        return Err(invalid("r_max must be at least 1"));
    }
    Ok(())
}

/// Minimizes the expected query count of `S_{r,a}` over `r ≤ r_max` and
/// `a ∈ [1, 50]`.
pub fn optimize_schedule(
    spectrum: &Spectrum,
    beta: f64,
    eps: f64,
    primitive: Primitive,
    r_max: usize,
    mode: Mode,
) -> Result<OptimizedSchedule> {
    check_beta(beta, r_max)?;
    let model = CostModel::new(spectrum, eps, primitive)?;
    optimize_with(&model, mode.total_beta(beta), r_max)
}

fn optimize_with(model: &CostModel, total: f64, r_max: usize) -> Result<OptimizedSchedule> {
    let (r, a, _) = (1..=r_max)
        .map(|r| {
            let (a, q) = best_a(model, r, total);
            (r, a, q)
        })
        .fold((1, 1.0, f64::INFINITY), |best, c| if c.2 < best.2 { c } else { best });
    finish(model, r, a, total)
}

/// Best uniform schedule `S_{r,1}`.
pub fn best_uniform(
    spectrum: &Spectrum,
    beta: f64,
    eps: f64,
    primitive: Primitive,
    r_max: usize,
    mode: Mode,
) -> Result<OptimizedSchedule> {
    check_beta(beta, r_max)?;
    let model = CostModel::new(spectrum, eps, primitive)?;
    let total = mode.total_beta(beta);
    uniform_with(&model, total, r_max)
}

fn uniform_with(model: &CostModel, total: f64, r_max: usize) -> Result<OptimizedSchedule> {
    let r = (1..=r_max)
        .map(|r| (r, model.cost(r, 1.0, total, false)))
        .fold((1, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
        .0;
    finish(model, r, 1.0, total)
}

/// All strategies compared at a single inverse temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub beta: f64,
    pub q_prob: f64,
    pub q_coh: f64,
    pub q_uniform: f64,
    pub q_frag: f64,
    pub depth_prob: u64,
    pub depth_coh: u64,
    pub depth_uniform: u64,
    pub depth_frag: u64,
    pub uniform_r: usize,
    pub best: OptimizedSchedule,
}

pub fn scan_point(
    spectrum: &Spectrum,
    beta: f64,
    eps: f64,
    primitive: Primitive,
    r_max: usize,
    mode: Mode,
) -> Result<ScanPoint> {
    if r_max == 0 || !(beta >= 0.0) {
        return Err(invalid("need beta >= 0 and r_max >= 1"));
    }
    let model = CostModel::new(spectrum, eps, primitive)?;
    let total = mode.total_beta(beta);
    let prob = model.baseline(total, Strategy::Prob);
    let coh = model.baseline(total, Strategy::Coh);
    if total == 0.0 {
        let s = Schedule { fragments: vec![0.0], betas: vec![0.0] };
        let best = OptimizedSchedule { params: AnsatzParams { r: 1, a: 1.0 }, schedule: s, report: prob.clone() };
        return Ok(ScanPoint {
            beta,
            q_prob: prob.expected_queries,
            q_coh: coh.expected_queries,
            q_uniform: prob.expected_queries,
            q_frag: prob.expected_queries,
            depth_prob: prob.query_depth,
            depth_coh: coh.query_depth,
            depth_uniform: prob.query_depth,
            depth_frag: prob.query_depth,
            uniform_r: 1,
            best,
        });
    }
    let uni = uniform_with(&model, total, r_max)?;
    let best = optimize_with(&model, total, r_max)?;
    Ok(ScanPoint {
        beta,
        q_prob: prob.expected_queries,
        q_coh: coh.expected_queries,
        q_uniform: uni.report.expected_queries,
        q_frag: best.report.expected_queries,
        depth_prob: prob.query_depth,
        depth_coh: coh.query_depth,
        depth_uniform: uni.report.query_depth,
        depth_frag: best.report.query_depth,
        uniform_r: uni.params.r,
        best,
    })
}

/// Largest admissible ground-state amplitude for the analytic schedule.
pub const MAX_OVERLAP: f64 = 1.0 / 2.2;

fn check_overlap(o: f64) -> Result<()> {
    if !(o > 0.0 && o <= MAX_OVERLAP) {
        return Err(Error::Precondition(format!("ground amplitude {o} must lie in (0, 1/2.2]")));
    }
    Ok(())
}

/// Critical inverse temperature above which the analytic two-fragment
/// schedule beats coherent QITE; `p_inv_at` is `p⁻¹(o/2.2)`.
pub fn beta_crit_theorem(o: f64, eps: f64, p_inv_at: f64) -> Result<f64> {
    check_overlap(o)?;
    if !(eps > 0.0) || !(p_inv_at >= 0.0) {
        return Err(invalid("need eps > 0 and a nonnegative inverse"));
    }
    Ok((2.0 / o) * ((2.0 / E) * (8.0 / (o * eps)).ln() + p_inv_at))
}

/// Critical inverse temperature of a spectrum whose ground amplitude is `o`.
pub fn beta_crit_for(spectrum: &Spectrum, o: f64, eps: f64) -> Result<f64> {
    check_overlap(o)?;
    beta_crit_theorem(o, eps, inverse_success_prob(spectrum, o / 2.2)?)
}

/// Two-fragment schedule with a short first fragment that brings the success
/// probability to roughly `o/2`.
pub fn theorem5_schedule(spectrum: &Spectrum, o: f64, beta: f64, eps: f64) -> Result<Schedule> {
    let beta_c = beta_crit_for(spectrum, o, eps)?;
    if beta < beta_c {
        return Err(Error::Precondition(format!("beta = {beta} is below the critical value {beta_c}")));
    }
    let p_c = success_prob_unchecked(spectrum, beta_c);
    if p_c > 0.25 {
        return Err(Error::Precondition(format!("p(beta_c) = {p_c} exceeds 1/4")));
    }
    let target = (o / 2.0) / (E + 2.0 * (2.0 / (o * eps)).ln() / (E * beta)).ln();
    let first = inverse_success_prob(spectrum, target)?;
    if !(first > 0.0 && first < beta) {
        return Err(Error::Precondition(format!("first fragment {first} outside (0, {beta})")));
    }
    Schedule::new(vec![first, beta - first])
}

/// Smallest β on the grid where the optimized fragmented cost drops to the
/// coherent one, refined by bisection to relative 1e−3.
pub fn beta_crit_empirical(
    spectrum: &Spectrum,
    eps: f64,
    primitive: Primitive,
    beta_grid: &[f64],
    mode: Mode,
    r_max: usize,
) -> Result<f64> {
    if beta_grid.is_empty() || beta_grid.windows(2).any(|w| !(w[0] < w[1])) || !(beta_grid[0] > 0.0) {
        return Err(invalid("beta grid must be positive and strictly ascending"));
    }
    if r_max == 0 {
        return Err(invalid("r_max must be at least 1"));
    }
    let model = CostModel::new(spectrum, eps, primitive)?;
    let wins = |beta: f64| -> Result<bool> {
        let total = mode.total_beta(beta);
        let frag = optimize_with(&model, total, r_max)?.report.expected_queries;
        Ok(frag <= model.baseline(total, Strategy::Coh).expected_queries)
    };
    let mut prev: Option<f64> = None;
    for &b in beta_grid {
        if wins(b)? {
            let Some(mut lo) = prev else { return Ok(b) };
            let mut hi = b;
            while hi - lo > 1e-3 * hi {
                let mid = 0.5 * (lo + hi);
                if wins(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(hi);
        }
        prev = Some(b);
    }
    Err(Error::NoCrossing { beta_max: *beta_grid.last().expect("nonempty") })
}

/// `β_c(N) = A·2^{ηN} + B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaCritFit {
    #[serde(rename = "A")]
    pub a: f64,
    pub eta: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub rmsd: f64,
}

/// Linear least squares for `(A, B)` at fixed η.
fn linear_part(points: &[(f64, f64)], eta: f64) -> (f64, f64, f64) {
    let n = points.len();
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { (eta * points[i].0).exp2() } else { 1.0 });
    let y = DVector::from_iterator(n, points.iter().map(|p| p.1));
    let svd = x.clone().svd(true, true);
    let sol = svd.solve(&y, 1e-12).unwrap_or_else(|_| DVector::zeros(2));
    let res = (&x * &sol - &y).norm_squared();
    (sol[0], sol[1], res)
}

/// Nonlinear least squares by variable projection: η is found by a scan
/// followed by golden-section refinement, `(A, B)` solve a linear problem.
pub fn fit_beta_crit(points: &[(f64, f64)]) -> Result<BetaCritFit> {
    if points.len() < 4 {
        return Err(invalid("at least four points are needed"));
    }
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::FitDiverged(format!("non-finite data {points:?}")));
    }
    let n = points.len() as f64;
    let mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let spread = points.iter().map(|p| (p.1 - mean).abs()).fold(0.0, f64::max);
    if spread <= 1e-12 * mean.abs().max(1.0) {
        return Ok(BetaCritFit { a: 0.0, eta: 0.0, b: mean, rmsd: 0.0 });
    }
    let (lo, hi) = (-3.0, 3.0);
    let obj = |eta: f64| linear_part(points, eta).2;
    let steps = 600;
    let h = (hi - lo) / steps as f64;
    let k = (0..=steps)
        .map(|i| (i, obj(lo + i as f64 * h)))
        .fold((0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b })
        .0;
    let (mut a, mut b) = ((lo + (k as f64 - 1.0) * h).max(lo), (lo + (k as f64 + 1.0) * h).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (obj(c), obj(d));
    while b - a > 1e-12 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = obj(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = obj(d);
        }
    }
    let eta = 0.5 * (a + b);
    let (amp, off, res) = linear_part(points, eta);
    if !amp.is_finite() || !off.is_finite() || (eta - lo).abs() < 1e-6 || (hi - eta).abs() < 1e-6 {
        return Err(Error::FitDiverged(format!("eta = {eta} at the search boundary; points {points:?}")));
    }
    Ok(BetaCritFit { a: amp, eta, b: off, rmsd: (res / n).sqrt() })
}

/// `y = A·x^η`, fitted in log-log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub prefactor: f64,
    pub exponent: f64,
    /// RMS deviation of the log residuals.
    pub rmsd: f64,
}

pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 2 || points.iter().any(|p| !(p.0 > 0.0 && p.1 > 0.0)) {
        return Err(invalid("power-law fit needs at least two positive points"));
    }
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|p| (p.0.ln(), p.1.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::FitDiverged("all abscissae coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let eta = sxy / sxx;
    let c = my - eta * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - c - eta * x).powi(2)).sum();
    Ok(PowerLawFit { prefactor: c.exp(), exponent: eta, rmsd: (rss / n).sqrt() })
}

/// `β_1 / (8 ln(4/ε'_1))` for an optimized schedule.
pub fn first_fragment_ratio(schedule: &Schedule, report: &ComplexityReport) -> f64 {
    schedule.fragments[0] / (8.0 * (4.0 / report.eps_l[0]).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equal-width histogram over the data range.
pub fn histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin { lo: lo + i as f64 * width, hi: lo + (i + 1) as f64 * width, count: 0 })
        .collect();
    for v in values {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        out[i].count += 1;
    }
    out
}
