//! Pauli-sum Hamiltonians, random ensembles, exact diagonalization and
//! post-selection probabilities.

use crate::error::{invalid, Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Largest register handled at all (diagonal classes).
pub const MAX_QUBITS: usize = 15;
/// Default cap for the dense eigensolver.
pub const DENSE_CAP: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    #[serde(rename = "coef")]
    pub coefficient: f64,
    pub word: Vec<(usize, Axis)>,
}

impl PauliTerm {
    pub fn new(coefficient: f64, word: Vec<(usize, Axis)>) -> Self {
        Self { coefficient, word }
    }

    pub fn is_diagonal(&self) -> bool {
        self.word.iter().all(|&(_, a)| a == Axis::Z)
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !self.coefficient.is_finite() {
            return Err(invalid("non-finite coefficient"));
        }
        let mut seen = vec![false; n];
        for &(q, _) in &self.word {
            if q >= n {
                return Err(invalid(format!("qubit index {q} out of range for {n} qubits")));
            }
            if seen[q] {
                return Err(invalid(format!("qubit index {q} repeated in a Pauli word")));
            }
            seen[q] = true;
        }
        Ok(())
    }

    /// Applies the Pauli word to basis state `b`: returns (image index, phase).
    fn act(&self, b: usize) -> (usize, Complex64) {
        let mut out = b;
        let mut phase = Complex64::new(1.0, 0.0);
        for &(q, a) in &self.word {
            let bit = (b >> q) & 1;
            match a {
                Axis::X => out ^= 1 << q,
                Axis::Y => {
                    out ^= 1 << q;
                    // Y|0> = i|1>, Y|1> = -i|0>
                    phase *= if bit == 0 { Complex64::i() } else { -Complex64::i() };
                }
                Axis::Z => {
                    if bit == 1 {
                        phase = -phase;
                    }
                }
            }
        }
        (out, phase)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianClass {
    Maxcut,
    WeightedMaxcut,
    Rbm,
    SkHeisenberg,
    Noninteracting,
    Custom,
}

impl HamiltonianClass {
    pub const ALL: [HamiltonianClass; 6] = [
        HamiltonianClass::Maxcut,
        HamiltonianClass::WeightedMaxcut,
        HamiltonianClass::Rbm,
        HamiltonianClass::SkHeisenberg,
        HamiltonianClass::Noninteracting,
        HamiltonianClass::Custom,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            HamiltonianClass::Maxcut => "maxcut",
            HamiltonianClass::WeightedMaxcut => "weighted_maxcut",
            HamiltonianClass::Rbm => "rbm",
            HamiltonianClass::SkHeisenberg => "sk_heisenberg",
            HamiltonianClass::Noninteracting => "noninteracting",
            HamiltonianClass::Custom => "custom",
        }
    }
}

impl fmt::Display for HamiltonianClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HamiltonianClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::UnknownClass(s.to_string()))
    }
}

/// Affine map applied by [`rescale`]: `H' = (H - shift) / scale`.
/// Inverse temperatures transform as `beta' = scale * beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rescaling {
    pub shift: f64,
    pub scale: f64,
}

impl Rescaling {
    pub fn beta_for_rescaled(&self, beta: f64) -> f64 {
        self.scale * beta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    #[serde(rename = "n")]
    pub n_qubits: usize,
    pub class: HamiltonianClass,
    pub seed: u64,
    pub terms: Vec<PauliTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rescaling: Option<Rescaling>,
}

impl HamiltonianSpec {
    pub fn new(n_qubits: usize, class: HamiltonianClass, seed: u64, terms: Vec<PauliTerm>) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(invalid(format!("n_qubits = {n_qubits} outside 1..={MAX_QUBITS}")));
        }
        for t in &terms {
            t.validate(n_qubits)?;
        }
        Ok(Self { n_qubits, class, seed, terms, rescaling: None })
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn is_diagonal(&self) -> bool {
        self.terms.iter().all(PauliTerm::is_diagonal)
    }

    /// Computational-basis energies; only meaningful for diagonal Hamiltonians.
    pub fn diagonal_energies(&self) -> Result<Vec<f64>> {
        if !self.is_diagonal() {
            return Err(invalid("Hamiltonian has off-diagonal terms"));
        }
        let masks: Vec<(f64, usize)> = self
            .terms
            .iter()
            .map(|t| (t.coefficient, t.word.iter().fold(0usize, |m, &(q, _)| m | (1 << q))))
            .collect();
        Ok((0..self.dim())
            .map(|b| {
                masks
                    .iter()
                    .map(|&(c, m)| if (b & m).count_ones() % 2 == 0 { c } else { -c })
                    .sum()
            })
            .collect())
    }

    pub fn dense_matrix(&self) -> DMatrix<Complex64> {
        let d = self.dim();
        let mut h = DMatrix::<Complex64>::zeros(d, d);
        for t in &self.terms {
            for b in 0..d {
                let (out, ph) = t.act(b);
                h[(out, b)] += ph * t.coefficient;
            }
        }
        h
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: HamiltonianSpec = serde_json::from_str(s).map_err(|e| invalid(e.to_string()))?;
        let mut checked = HamiltonianSpec::new(spec.n_qubits, spec.class, spec.seed, spec.terms)?;
        checked.rescaling = spec.rescaling;
        Ok(checked)
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Draws an instance of one of the random ensembles.
///
/// MaxCut instances with an empty graph are redrawn so the spectrum is never
/// trivial.
pub fn gen_ensemble(class: HamiltonianClass, n_qubits: usize, seed: u64) -> Result<HamiltonianSpec> {
    if !(2..=MAX_QUBITS).contains(&n_qubits) {
        return Err(invalid(format!("n_qubits = {n_qubits} outside 2..={MAX_QUBITS}")));
    }
    let n = n_qubits;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms = Vec::new();
    match class {
        HamiltonianClass::Maxcut => loop {
            terms.clear();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.gen::<bool>() {
                        terms.push(PauliTerm::new(1.0, vec![(i, Axis::Z), (j, Axis::Z)]));
                    }
                }
            }
            if !terms.is_empty() {
                break;
            }
        },
        HamiltonianClass::WeightedMaxcut => {
            for i in 0..n {
                for j in i + 1..n {
                    let w = uniform(&mut rng, 0.0, 1.0);
                    terms.push(PauliTerm::new(w, vec![(i, Axis::Z), (j, Axis::Z)]));
                }
            }
        }
        HamiltonianClass::Rbm => {
            let visible = n.div_ceil(2);
            for v in 0..visible {
                for h in visible..n {
                    let w = uniform(&mut rng, -1.0, 1.0);
                    terms.push(PauliTerm::new(w, vec![(v, Axis::Z), (h, Axis::Z)]));
                }
            }
            for i in 0..n {
                let h = uniform(&mut rng, 0.0, 1.0);
                terms.push(PauliTerm::new(h, vec![(i, Axis::X)]));
            }
        }
        HamiltonianClass::SkHeisenberg => {
            for i in 0..n {
                for j in i + 1..n {
                    for a in [Axis::X, Axis::Y, Axis::Z] {
                        let w = uniform(&mut rng, -1.0, 1.0);
                        terms.push(PauliTerm::new(w, vec![(i, a), (j, a)]));
                    }
                }
            }
        }
        HamiltonianClass::Noninteracting => {
            for j in 0..n {
                terms.push(PauliTerm::new(1.0 / n as f64, vec![(j, Axis::Z)]));
            }
        }
        HamiltonianClass::Custom => {
            return Err(invalid("custom Hamiltonians are supplied as JSON, not generated"));
        }
    }
    HamiltonianSpec::new(n, class, seed, terms)
}

/// Exact extreme eigenvalues (dense or diagonal path).
pub fn spectrum_bounds(h: &HamiltonianSpec) -> Result<(f64, f64)> {
    let ev = eigenvalues(h, DENSE_CAP)?;
    Ok((ev[0], ev[ev.len() - 1]))
}

fn eigenvalues(h: &HamiltonianSpec, cap: usize) -> Result<Vec<f64>> {
    if h.is_diagonal() {
        let mut e = h.diagonal_energies()?;
        e.sort_by(f64::total_cmp);
        return Ok(e);
    }
    Ok(dense_eigh(h, cap)?.0)
}

/// Affine map of the spectrum from `[lo, hi]` onto `[-1, 1]`.
pub fn rescale(h: &HamiltonianSpec, lo: f64, hi: f64) -> Result<HamiltonianSpec> {
    if !(lo < hi) {
        return Err(invalid("rescale requires lo < hi"));
    }
    let (min, max) = spectrum_bounds(h)?;
    let tol = 1e-10 * (1.0 + lo.abs().max(hi.abs()));
    if lo > min + tol || max > hi + tol {
        return Err(Error::BoundsViolated { lo, hi, min, max });
    }
    let shift = 0.5 * (hi + lo);
    let scale = 0.5 * (hi - lo);
    let mut terms: Vec<PauliTerm> = Vec::with_capacity(h.terms.len() + 1);
    let mut identity = -shift;
    for t in &h.terms {
        if t.word.is_empty() {
            identity += t.coefficient;
        } else {
            terms.push(PauliTerm::new(t.coefficient / scale, t.word.clone()));
        }
    }
    if identity != 0.0 {
        terms.push(PauliTerm::new(identity / scale, vec![]));
    }
    let previous = h.rescaling.unwrap_or(Rescaling { shift: 0.0, scale: 1.0 });
    let mut out = HamiltonianSpec::new(h.n_qubits, h.class, h.seed, terms)?;
    out.rescaling = Some(Rescaling {
        shift: previous.shift + previous.scale * shift,
        scale: previous.scale * scale,
    });
    Ok(out)
}

/// Rescales using the exact spectral extremes.
pub fn rescale_to_unit(h: &HamiltonianSpec) -> Result<HamiltonianSpec> {
    let (min, max) = spectrum_bounds(h)?;
    if max - min < 1e-12 {
        return Err(invalid("spectrum has zero width"));
    }
    rescale(h, min, max)
}

/// Input state used for overlaps.
#[derive(Debug, Clone, PartialEq)]
pub enum InputState {
    MaximallyMixed,
    Basis(usize),
    Pure(Vec<Complex64>),
}

#[derive(Debug, Clone)]
pub enum EigenBasis {
    /// Eigenvector k is computational basis state `perm[k]`.
    Computational(Vec<usize>),
    /// Columns are eigenvectors.
    Dense(DMatrix<Complex64>),
}

impl EigenBasis {
    pub fn to_matrix(&self) -> DMatrix<Complex64> {
        match self {
            EigenBasis::Dense(v) => v.clone(),
            EigenBasis::Computational(p) => {
                let d = p.len();
                let mut v = DMatrix::zeros(d, d);
                for (k, &b) in p.iter().enumerate() {
                    v[(b, k)] = Complex64::new(1.0, 0.0);
                }
                v
            }
        }
    }
}

/// Eigenvalues (ascending) and input-state overlaps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub overlaps: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    #[serde(skip)]
    pub basis: Option<EigenBasis>,
}

impl Spectrum {
    /// Builds a spectrum from raw parts, sorting by eigenvalue.
    pub fn from_parts(eigenvalues: Vec<f64>, overlaps: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() || eigenvalues.len() != overlaps.len() {
            return Err(invalid("eigenvalues and overlaps must be nonempty and equal length"));
        }
        if overlaps.iter().any(|&o| !(o >= 0.0)) {
            return Err(invalid("overlaps must be nonnegative"));
        }
        let total: f64 = overlaps.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(invalid(format!("overlaps sum to {total}, not 1")));
        }
        let mut idx: Vec<usize> = (0..eigenvalues.len()).collect();
        idx.sort_by(|&a, &b| eigenvalues[a].total_cmp(&eigenvalues[b]));
        let ev: Vec<f64> = idx.iter().map(|&i| eigenvalues[i]).collect();
        let ov: Vec<f64> = idx.iter().map(|&i| overlaps[i]).collect();
        Ok(Self { lambda_min: ev[0], lambda_max: ev[ev.len() - 1], eigenvalues: ev, overlaps: ov, basis: None })
    }

    /// Uniform overlaps (maximally mixed input).
    pub fn uniform(eigenvalues: Vec<f64>) -> Result<Self> {
        let w = 1.0 / eigenvalues.len() as f64;
        let n = eigenvalues.len();
        Self::from_parts(eigenvalues, vec![w; n])
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Weight of the input on the ground eigenspace, o².
    pub fn ground_overlap(&self) -> f64 {
        let tol = 1e-12 * (1.0 + self.lambda_min.abs());
        self.eigenvalues
            .iter()
            .zip(&self.overlaps)
            .take_while(|(&l, _)| l - self.lambda_min <= tol)
            .map(|(_, &o)| o)
            .sum()
    }

    pub fn is_rescaled(&self) -> bool {
        (self.lambda_min + 1.0).abs() <= 1e-10 && (self.lambda_max - 1.0).abs() <= 1e-10
    }

    /// Same eigenvalues with uniform weights.
    pub fn with_uniform_overlaps(&self) -> Self {
        let w = 1.0 / self.len() as f64;
        Self { overlaps: vec![w; self.len()], ..self.clone() }
    }
}

fn dense_eigh(h: &HamiltonianSpec, cap: usize) -> Result<(Vec<f64>, DMatrix<Complex64>)> {
    if h.n_qubits > cap {
        return Err(invalid(format!("dense eigensolve capped at {cap} qubits (got {})", h.n_qubits)));
    }
    let m = h.dense_matrix();
    let residual = (&m - m.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
    if residual > 1e-8 {
        return Err(Error::NotHermitian(residual));
    }
    hermitian_eigh(&m)
}

/// Eigen-decomposition of a Hermitian matrix, ascending order.
pub fn hermitian_eigh(m: &DMatrix<Complex64>) -> Result<(Vec<f64>, DMatrix<Complex64>)> {
    let d = m.nrows();
    let real = m.iter().all(|z| z.im.abs() < 1e-15);
    let (vals, vecs): (Vec<f64>, DMatrix<Complex64>) = if real {
        let re = m.map(|z| z.re);
        let eig = SymmetricEigen::new(re);
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors.map(|x| Complex64::new(x, 0.0)))
    } else {
        let eig = SymmetricEigen::new(m.clone());
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    };
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let sorted_vals = idx.iter().map(|&i| vals[i]).collect();
    let sorted_vecs = DMatrix::from_fn(d, d, |r, c| vecs[(r, idx[c])]);
    Ok((sorted_vals, sorted_vecs))
}

fn check_pure(psi: &[Complex64], d: usize) -> Result<()> {
    if psi.len() != d {
        return Err(invalid(format!("state has length {}, expected {d}", psi.len())));
    }
    let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(invalid(format!("input state norm² = {norm}")));
    }
    Ok(())
}

/// Exact diagonalization with overlaps against `input`.
pub fn diagonalize(h: &HamiltonianSpec, input: &InputState) -> Result<Spectrum> {
    diagonalize_capped(h, input, DENSE_CAP)
}

pub fn diagonalize_capped(h: &HamiltonianSpec, input: &InputState, cap: usize) -> Result<Spectrum> {
    let d = h.dim();
    let (eigenvalues, basis) = if h.is_diagonal() {
        let e = h.diagonal_energies()?;
        let mut perm: Vec<usize> = (0..d).collect();
        perm.sort_by(|&a, &b| e[a].total_cmp(&e[b]).then(a.cmp(&b)));
        (perm.iter().map(|&b| e[b]).collect::<Vec<f64>>(), EigenBasis::Computational(perm))
    } else {
        let (vals, vecs) = dense_eigh(h, cap)?;
        (vals, EigenBasis::Dense(vecs))
    };
    let overlaps: Vec<f64> = match input {
        InputState::MaximallyMixed => vec![1.0 / d as f64; d],
        InputState::Basis(b) => {
            if *b >= d {
                return Err(invalid(format!("basis index {b} out of range")));
            }
            match &basis {
                EigenBasis::Computational(p) => p.iter().map(|&k| if k == *b { 1.0 } else { 0.0 }).collect(),
                EigenBasis::Dense(v) => (0..d).map(|k| v[(*b, k)].norm_sqr()).collect(),
            }
        }
        InputState::Pure(psi) => {
            check_pure(psi, d)?;
            let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
            match &basis {
                EigenBasis::Computational(p) => p.iter().map(|&k| psi[k].norm_sqr() / norm).collect(),
                EigenBasis::Dense(v) => (0..d)
                    .map(|k| {
                        let amp: Complex64 = (0..d).map(|r| v[(r, k)].conj() * psi[r]).sum();
                        amp.norm_sqr() / norm
                    })
                    .collect(),
            }
        }
    };
    let mut s = Spectrum::from_parts(eigenvalues, renormalize(overlaps))?;
    s.basis = Some(basis);
    Ok(s)
}

fn renormalize(mut o: Vec<f64>) -> Vec<f64> {
    let t: f64 = o.iter().sum();
    o.iter_mut().for_each(|x| *x /= t);
    o
}

/// p_Ψ(β) = Σ o_λ e^{−2β(λ−λ_min)}.
pub fn success_prob(s: &Spectrum, beta: f64) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(invalid(format!("beta = {beta} must be nonnegative")));
    }
    Ok(success_prob_unchecked(s, beta))
}

pub(crate) fn success_prob_unchecked(s: &Spectrum, beta: f64) -> f64 {
    let lm = s.lambda_min;
    s.eigenvalues
        .iter()
        .zip(&s.overlaps)
        .map(|(&l, &o)| o * (-2.0 * beta * (l - lm)).exp())
        .sum::<f64>()
        .min(1.0)
}

/// Inverse of [`success_prob`] by bracketed bisection.
pub fn inverse_success_prob(s: &Spectrum, target: f64) -> Result<f64> {
    let floor = s.ground_overlap();
    if !(target <= 1.0) || target <= floor {
        return Err(Error::Unreachable { target, floor });
    }
    if success_prob_unchecked(s, 0.0) <= target {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while success_prob_unchecked(s, hi) > target {
        hi *= 2.0;
        if hi > 1e15 {
            return Err(Error::Unreachable { target, floor });
        }
    }
    let mut lo = 0.0;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if success_prob_unchecked(s, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// α² Σ e^{−β(λ−λ_min)} / 2^N, the Gibbs-sampling heralding probability.
pub fn gibbs_post_selection(s: &Spectrum, beta: f64, alpha: f64) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(invalid("beta must be nonnegative"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid("alpha must lie in (0, 1]"));
    }
    let lm = s.lambda_min;
    let z: f64 = s.eigenvalues.iter().map(|&l| (-beta * (l - lm)).exp()).sum();
    Ok(alpha * alpha * z / s.len() as f64)
}
