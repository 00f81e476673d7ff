//! Master algorithms: probabilistic, coherent and fragmented QITE, their
//! error budgets and expected query counts, and a Monte-Carlo run of the
//! fragmented loop.

use crate::error::{invalid, Result};
use crate::funcapprox::{gamma_opt, q1_bound, q2_bound};
use crate::hamiltonians::{success_prob_unchecked, Spectrum};
use crate::kinds::{even_ceil, Primitive, Strategy};
use crate::simulator::{build_p1, build_p2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Partition of the imaginary time into consecutive fragments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub fragments: Vec<f64>,
    /// Partial sums; `betas[l]` is the time reached after fragment `l + 1`.
    pub betas: Vec<f64>,
}

impl Schedule {
    pub fn new(fragments: Vec<f64>) -> Result<Self> {
        if fragments.is_empty() {
            return Err(invalid("a schedule needs at least one fragment"));
        }
        if fragments.iter().any(|&f| !(f > 0.0) || !f.is_finite()) {
            return Err(invalid("fragments must be positive and finite"));
        }
        let mut acc = 0.0;
        let betas = fragments
            .iter()
            .map(|f| {
                acc += f;
                acc
            })
            .collect();
        Ok(Self { fragments, betas })
    }

    /// Single fragment covering `beta`.
    pub fn single(beta: f64) -> Result<Self> {
        Self::new(vec![beta])
    }

    pub fn r(&self) -> usize {
        self.fragments.len()
    }

    pub fn total(&self) -> f64 {
        *self.betas.last().expect("nonempty")
    }

    /// Time reached before fragment `l` (1-based), with `β_0 = 0`.
    pub fn before(&self, l: usize) -> f64 {
        if l <= 1 {
            0.0
        } else {
            self.betas[l - 2]
        }
    }
}

/// Per-fragment errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub eps_l: Vec<f64>,
    pub total: f64,
}

/// Expected-cost summary of a master algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub expected_queries: f64,
    pub n_l: Vec<f64>,
    pub q_l: Vec<u64>,
    pub eps_l: Vec<f64>,
    pub alphas: Vec<f64>,
    pub query_depth: u64,
    pub kind: String,
}

/// Canonical per-fragment errors: the first fragment gets
/// `ε Πα √p(β) / (2·4^{r−1})`, fragment l > 1 gets
/// `ε Π_{k≥l} α_k / 4^{r−l+1} · √(p(β)/p(β_{l−1}))`.
pub fn eps_budget(schedule: &Schedule, eps: f64, spectrum: &Spectrum, alphas: &[f64]) -> Result<ErrorBudget> {
    if !(eps > 0.0) {
        return Err(invalid("eps must be positive"));
    }
    let r = schedule.r();
    if alphas.len() != r {
        return Err(invalid("one subnormalization per fragment required"));
    }
    let p = |b: f64| success_prob_unchecked(spectrum, b);
    Ok(ErrorBudget { eps_l: budget_from(schedule, eps, &breakpoints(schedule, &p), alphas), total: eps })
}

/// `p(β_l)` for `l = 0..=r`, with `β_0 = 0`.
fn breakpoints(schedule: &Schedule, p: &dyn Fn(f64) -> f64) -> Vec<f64> {
    std::iter::once(p(0.0)).chain(schedule.betas.iter().map(|&b| p(b))).collect()
}

fn budget_from(schedule: &Schedule, eps: f64, p_at: &[f64], alphas: &[f64]) -> Vec<f64> {
    let r = schedule.r();
    let p_end = p_at[r];
    let tail = |l: usize| -> f64 { alphas[l - 1..].iter().product() };
    (1..=r)
        .map(|l| {
            if l == 1 {
                eps * tail(1) * p_end.sqrt() / (2.0 * 4f64.powi(r as i32 - 1))
            } else {
                let ratio = p_end / p_at[l - 1];
                eps * tail(l) / 4f64.powi((r - l + 1) as i32) * ratio.sqrt()
            }
        })
        .collect()
}

/// Subnormalization and, for P2, the γ used by one fragment.
fn fragment_alpha(primitive: Primitive, dbeta: f64, lambda_min: f64, strategy: Strategy) -> (f64, f64) {
    match primitive {
        Primitive::P1 => ((-dbeta * (1.0 + lambda_min)).exp(), 0.0),
        Primitive::P2 => {
            let g = gamma_opt(dbeta, strategy);
            ((-dbeta * (1.0 + lambda_min) - g).exp(), g)
        }
    }
}

fn continuous_queries(primitive: Primitive, dbeta: f64, gamma: f64, eps: f64) -> f64 {
    match primitive {
        Primitive::P1 => q1_bound(dbeta, eps),
        Primitive::P2 => q2_bound(dbeta, gamma, eps),
    }
}

/// Shared evaluation of the fragmented cost; `p` is the success probability
/// as a function of imaginary time.
pub(crate) fn fragmented_cost(
    schedule: &Schedule,
    eps: f64,
    lambda_min: f64,
    p: &dyn Fn(f64) -> f64,
    primitive: Primitive,
    continuous: bool,
) -> ComplexityReport {
    let r = schedule.r();
    let (alphas, gammas): (Vec<f64>, Vec<f64>) =
        schedule.fragments.iter().map(|&db| fragment_alpha(primitive, db, lambda_min, Strategy::Prob)).unzip();
    let p_at = breakpoints(schedule, p);
    let eps_l = budget_from(schedule, eps, &p_at, &alphas);
    let p_end = p_at[r];
    let mut n_l = Vec::with_capacity(r);
    let mut q_l = Vec::with_capacity(r);
    let mut total = 0.0;
    for l in 1..=r {
        let tail: f64 = alphas[l - 1..].iter().map(|a| a * a).product();
        let n = p_at[l - 1] / (p_end * tail);
        let qc = continuous_queries(primitive, schedule.fragments[l - 1], gammas[l - 1], eps_l[l - 1]);
        let q = even_ceil(qc);
        total += n * if continuous { qc } else { q as f64 };
        n_l.push(n);
        q_l.push(q);
    }
    let depth = q_l.iter().sum();
    ComplexityReport {
        expected_queries: total,
        n_l,
        q_l,
        eps_l,
        alphas,
        query_depth: depth,
        kind: format!("fragmented-{primitive}"),
    }
}

/// Expected total queries of the fragmented algorithm.
pub fn expected_queries_fragmented(
    schedule: &Schedule,
    spectrum: &Spectrum,
    eps: f64,
    primitive: Primitive,
) -> Result<ComplexityReport> {
    if !(eps > 0.0) {
        return Err(invalid("eps must be positive"));
    }
    let p = |b: f64| success_prob_unchecked(spectrum, b);
    Ok(fragmented_cost(schedule, eps, spectrum.lambda_min, &p, primitive, false))
}

/// Amplitude-amplification rounds needed to bring `p` close to one.
pub fn amplification_rounds(p: f64) -> u64 {
    let theta = p.clamp(0.0, 1.0).sqrt().asin();
    if theta <= 0.0 {
        return u64::MAX;
    }
    (std::f64::consts::PI / (4.0 * theta) - 0.5).ceil().max(0.0) as u64
}

/// Probabilistic or coherent master algorithm on a single primitive run.
pub fn expected_queries_baseline(
    beta: f64,
    eps: f64,
    spectrum: &Spectrum,
    strategy: Strategy,
    primitive: Primitive,
) -> Result<ComplexityReport> {
    if !(eps > 0.0) || !(beta >= 0.0) {
        return Err(invalid("need eps > 0 and beta >= 0"));
    }
    let p = success_prob_unchecked(spectrum, beta);
    Ok(baseline_cost(beta, eps, spectrum.lambda_min, p, strategy, primitive))
}

pub(crate) fn baseline_cost(beta: f64, eps: f64, lambda_min: f64, p: f64, strategy: Strategy, primitive: Primitive) -> ComplexityReport {
    let (alpha, gamma) = fragment_alpha(primitive, beta, lambda_min, strategy);
    let eps1 = eps * alpha * p.sqrt() / 2.0;
    let q = if beta == 0.0 && primitive == Primitive::P1 { 0 } else { even_ceil(continuous_queries(primitive, beta, gamma, eps1)) };
    let ps = alpha * alpha * p;
    let reps = ps.powf(-strategy.mu());
    let depth = match strategy {
        Strategy::Prob => q,
        Strategy::Coh => q.saturating_mul(2 * amplification_rounds(ps) + 1),
    };
    ComplexityReport {
        expected_queries: q as f64 * reps,
        n_l: vec![reps],
        q_l: vec![q],
        eps_l: vec![eps1],
        alphas: vec![alpha],
        query_depth: depth,
        kind: format!("{strategy}-{primitive}"),
    }
}

/// `sin²((2k+1) arcsin √p)`.
pub fn coherent_success(p: f64, k: u64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid("p must lie in (0, 1]"));
    }
    let theta = p.sqrt().asin();
    Ok(((2 * k + 1) as f64 * theta).sin().powi(2))
}

/// Where per-fragment success probabilities come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum McMode {
    /// From the spectrum and the subnormalizations.
    #[default]
    Analytic,
    /// From blocks realized by the simulated primitives.
    Circuit,
}

/// Aggregate of Monte-Carlo runs of the fragmented loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub n_runs: usize,
    /// First-fragment attempts summed over runs.
    pub trials: u64,
    pub total_queries: u64,
    /// Successful post-selections per fragment.
    pub successes: Vec<u64>,
    pub seed: u64,
    pub mean_queries: f64,
    pub std_error: f64,
    /// Conditional success probability of each fragment.
    pub fragment_success: Vec<f64>,
    pub q_l: Vec<u64>,
}

/// Per-fragment conditional success probabilities and query counts.
fn fragment_probabilities(
    spectrum: &Spectrum,
    schedule: &Schedule,
    eps: f64,
    primitive: Primitive,
    mode: McMode,
) -> Result<(Vec<f64>, Vec<u64>)> {
    let report = expected_queries_fragmented(schedule, spectrum, eps, primitive)?;
    let r = schedule.r();
    match mode {
        McMode::Analytic => {
            let p = |b: f64| success_prob_unchecked(spectrum, b);
            let s = (1..=r)
                .map(|l| {
                    let a = report.alphas[l - 1];
                    (a * a * p(schedule.betas[l - 1]) / p(schedule.before(l))).min(1.0)
                })
                .collect();
            Ok((s, report.q_l))
        }
        McMode::Circuit => {
            let mut w = spectrum.overlaps.clone();
            let mut s = Vec::with_capacity(r);
            let mut q = Vec::with_capacity(r);
            for l in 1..=r {
                let db = schedule.fragments[l - 1];
                let el = report.eps_l[l - 1];
                let (enc, ql) = match primitive {
                    Primitive::P1 => build_p1(spectrum, db, el)?,
                    Primitive::P2 => {
                        let g = gamma_opt(db, Strategy::Prob);
                        let (e, ql, _) = build_p2(spectrum, db, el, g)?;
                        (e, ql)
                    }
                };
                let crate::simulator::Backend::PerEigen(values) = &enc.backend else {
                    unreachable!("builders use the per-eigenvalue backend")
                };
                let before: f64 = w.iter().sum();
                w.iter_mut().zip(values).for_each(|(x, v)| *x *= v.norm_sqr());
                let after: f64 = w.iter().sum();
                s.push(if before > 0.0 { (after / before).min(1.0) } else { 0.0 });
                q.push(ql);
            }
            Ok((s, q))
        }
    }
}

/// Simulates the repeat-on-failure loop: every failed post-selection sends
/// the run back to the first fragment.
pub fn monte_carlo_fragmented(
    spectrum: &Spectrum,
    schedule: &Schedule,
    eps: f64,
    primitive: Primitive,
    seed: u64,
    n_runs: usize,
    mode: McMode,
) -> Result<RunStats> {
    if n_runs == 0 {
        return Err(invalid("n_runs must be at least 1"));
    }
    let (s, q) = fragment_probabilities(spectrum, schedule, eps, primitive, mode)?;
    if s.iter().any(|&x| !(x > 0.0)) {
        return Err(crate::error::Error::ZeroProbability);
    }
    let r = s.len();
    let runs: Vec<(u64, u64, Vec<u64>)> = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let (mut trials, mut queries) = (0u64, 0u64);
            let mut succ = vec![0u64; r];
            'outer: loop {
                trials += 1;
                for l in 0..r {
                    queries += q[l];
                    if rng.gen::<f64>() < s[l] {
                        succ[l] += 1;
                    } else {
                        continue 'outer;
                    }
                }
                break;
            }
            (trials, queries, succ)
        })
        .collect();
    let mut successes = vec![0u64; r];
    let (mut trials, mut total) = (0u64, 0u64);
    let (mut sum, mut sum2) = (0.0, 0.0);
    for (t, qs, sc) in &runs {
        trials += t;
        total += qs;
        let x = *qs as f64;
        sum += x;
        sum2 += x * x;
        for (a, b) in successes.iter_mut().zip(sc) {
            *a += b;
        }
    }
    let n = n_runs as f64;
    let mean = sum / n;
    let var = if n_runs > 1 { ((sum2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    Ok(RunStats {
        n_runs,
        trials,
        total_queries: total,
        successes,
        seed,
        mean_queries: mean,
        std_error: (var / n).sqrt(),
        fragment_success: s,
        q_l: q,
    })
}

/// Merges equal eigenvalues, summing their weights. Drops the eigenbasis.
pub fn compress_spectrum(s: &Spectrum) -> Spectrum {
    let mut ev: Vec<f64> = Vec::new();
    let mut ov: Vec<f64> = Vec::new();
    for (&l, &o) in s.eigenvalues.iter().zip(&s.overlaps) {
        match ev.last() {
            Some(&last) if (l - last).abs() <= 1e-12 * (1.0 + l.abs()) => *ov.last_mut().expect("paired") += o,
            _ => {
                ev.push(l);
                ov.push(o);
            }
        }
    }
    Spectrum { lambda_min: s.lambda_min, lambda_max: s.lambda_max, eigenvalues: ev, overlaps: ov, basis: None }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two-level spectrum with p(β) = w + (1 − w) e^{−4β}.
    fn two_level(w: f64) -> Spectrum {
        Spectrum::from_parts(vec![-1.0, 1.0], vec![w, 1.0 - w]).unwrap()
    }

    #[test]
    fn budget_examples() {
        let s = Schedule::new(vec![1.0, 1.0]).unwrap();
        let p = |b: f64| if b == 0.0 { 1.0 } else if b == 1.0 { 0.25 } else { 0.01 };
        let e = budget_from(&s, 1e-3, &breakpoints(&s, &p), &[1.0, 1.0]);
        assert!((e[0] - 1.25e-5).abs() < 1e-18);
        assert!((e[1] - 5e-5).abs() < 1e-17);
    }

    #[test]
    fn single_fragment_matches_probabilistic() {
        let s = two_level(0.05);
        for prim in [Primitive::P1, Primitive::P2] {
            let f = expected_queries_fragmented(&Schedule::single(3.0).unwrap(), &s, 1e-2, prim).unwrap();
            let b = expected_queries_baseline(3.0, 1e-2, &s, Strategy::Prob, prim).unwrap();
            assert_eq!(f.q_l, b.q_l);
            assert!((f.expected_queries - b.expected_queries).abs() <= 1e-9 * b.expected_queries);
        }
    }

    #[test]
    fn n_l_examples() {
        let s = Schedule::new(vec![1.0, 1.0]).unwrap();
        let p = |b: f64| if b == 0.0 { 1.0 } else if b == 1.0 { 0.25 } else { 0.01 };
        let r = fragmented_cost(&s, 1e-3, -1.0, &p, Primitive::P1, false);
        assert!((r.n_l[0] - 100.0).abs() < 1e-9);
        assert!((r.n_l[1] - 25.0).abs() < 1e-9);
    }

    #[test]
    fn coherent_success_values() {
        assert!((coherent_success(0.3, 0).unwrap() - 0.3).abs() < 1e-15);
        let v = coherent_success(0.01, 7).unwrap();
        let direct = (15.0 * 0.1f64.asin()).sin().powi(2);
        assert!((v - direct).abs() < 1e-15);
        assert!(coherent_success(0.0, 1).is_err());
    }

    #[test]
    fn monte_carlo_trivial_and_deterministic() {
        let s = Spectrum::uniform(vec![-1.0]).unwrap();
        let st = monte_carlo_fragmented(&s, &Schedule::single(1.0).unwrap(), 1e-2, Primitive::P1, 3, 5, McMode::Analytic).unwrap();
        assert_eq!(st.trials, 5);
        assert_eq!(st.total_queries, 5 * st.q_l[0]);
        let s2 = two_level(0.2);
        let sch = Schedule::new(vec![0.3, 0.7]).unwrap();
        let a = monte_carlo_fragmented(&s2, &sch, 1e-2, Primitive::P1, 9, 200, McMode::Analytic).unwrap();
        let b = monte_carlo_fragmented(&s2, &sch, 1e-2, Primitive::P1, 9, 200, McMode::Analytic).unwrap();
        assert_eq!(a, b);
    }
}
