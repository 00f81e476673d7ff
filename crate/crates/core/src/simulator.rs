//! Exact simulation of the two imaginary-time primitives.
//!
//! Two backends are provided. The per-eigenvalue backend stores the value
//! the circuit realizes on each eigenvector of H, which is exact because
//! both primitives act block-diagonally over eigenvalues. The dense backend
//! builds the full unitary with explicit ancillas and is meant for small
//! systems and cross-checks.

use crate::error::{invalid, Error, Result};
use crate::funcapprox::{
    cheb_truncation_order, fourier_from_taylor, grid, jacobi_anger_coeffs, propagator, q1_bound, stable_grid_max,
    taylor_order_and_alpha,
    FourierSeries,
};
use crate::hamiltonians::{hermitian_eigh, EigenBasis, InputState, Spectrum};
use crate::kinds::even_ceil;
use crate::qsp::{angles_method2, synthesize_method1, CompiledSeq2, Mat2, PulseSeq1, PulseSeq2};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

pub type C = Complex64;
pub type CMat = DMatrix<C>;

const ZERO: C = C::new(0.0, 0.0);
const ONE: C = C::new(1.0, 0.0);

/// Largest system handled by the dense backend.
pub const DENSE_MAX_QUBITS: usize = 4;

#[derive(Debug, Clone)]
pub enum Backend {
    /// Block values on the eigenvectors of H, aligned with `spectrum.eigenvalues`.
    PerEigen(Vec<C>),
    /// Full unitary. The system index is least significant, so the
    /// ancilla-|0⟩ block is the leading `dim × dim` submatrix.
    Dense { unitary: CMat, ancilla_qubits: usize },
}

/// A unitary whose ancilla-|0⟩ block approximates `α e^{−β(H−λ_min)}`.
#[derive(Debug, Clone)]
pub struct BlockEncoding {
    pub n_qubits: usize,
    pub ancilla: String,
    /// Subnormalization α.
    pub alpha: f64,
    /// Declared error ε'.
    pub eps: f64,
    pub beta: f64,
    pub spectrum: Spectrum,
    pub backend: Backend,
}

impl BlockEncoding {
    /// Encoding that realizes exactly the given per-eigenvalue values.
    pub fn from_values(spectrum: Spectrum, values: Vec<C>, beta: f64, alpha: f64, eps: f64) -> Result<Self> {
        if values.len() != spectrum.len() {
            return Err(invalid("one value per eigenvalue required"));
        }
        let n_qubits = spectrum.len().trailing_zeros() as usize;
        Ok(Self { n_qubits, ancilla: "explicit".into(), alpha, eps, beta, spectrum, backend: Backend::PerEigen(values) })
    }

    pub fn dim(&self) -> usize {
        self.spectrum.len()
    }

    /// Ideal value `α e^{−β(λ−λ_min)}` on eigenvalue λ.
    pub fn target(&self, lambda: f64) -> f64 {
        self.alpha * (-self.beta * (lambda - self.spectrum.lambda_min)).exp()
    }

    /// `⟨0|U|0⟩` as a matrix in the computational basis.
    pub fn block_matrix(&self) -> Result<CMat> {
        match &self.backend {
            Backend::Dense { unitary, .. } => Ok(unitary.view((0, 0), (self.dim(), self.dim())).into_owned()),
            Backend::PerEigen(values) => {
                let v = self.eigenbasis()?;
                Ok(conjugate_diag(&v, values))
            }
        }
    }

    /// Diagonal of the block in the eigenbasis of H.
    pub fn eigen_values(&self) -> Result<Vec<C>> {
        match &self.backend {
            Backend::PerEigen(values) => Ok(values.clone()),
            Backend::Dense { .. } => {
                let v = self.eigenbasis()?;
                let b = self.block_matrix()?;
                let rot = v.adjoint() * b * &v;
                Ok((0..self.dim()).map(|k| rot[(k, k)]).collect())
            }
        }
    }

    fn eigenbasis(&self) -> Result<CMat> {
        self.spectrum
            .basis
            .as_ref()
            .map(EigenBasis::to_matrix)
            .ok_or_else(|| Error::Precondition("spectrum carries no eigenbasis".into()))
    }

    /// Spectral-norm distance between the block and `α e^{−β(H−λ_min)}`.
    pub fn block_error(&self) -> Result<f64> {
        match &self.backend {
            Backend::PerEigen(values) => Ok(self
                .spectrum
                .eigenvalues
                .iter()
                .zip(values)
                .map(|(&l, v)| (v - self.target(l)).norm())
                .fold(0.0, f64::max)),
            Backend::Dense { .. } => {
                let v = self.eigenbasis()?;
                let ideal: Vec<C> = self.spectrum.eigenvalues.iter().map(|&l| C::new(self.target(l), 0.0)).collect();
                Ok(spectral_norm(&(self.block_matrix()? - conjugate_diag(&v, &ideal))))
            }
        }
    }

    /// Spectral norm of the block.
    pub fn block_norm(&self) -> Result<f64> {
        match &self.backend {
            Backend::PerEigen(values) => Ok(values.iter().map(|v| v.norm()).fold(0.0, f64::max)),
            Backend::Dense { .. } => Ok(spectral_norm(&self.block_matrix()?)),
        }
    }

    /// `‖U†U − I‖_max`; zero for the per-eigenvalue backend, whose 2×2
    /// factors are unitary by construction.
    pub fn unitarity_residual(&self) -> f64 {
        match &self.backend {
            Backend::PerEigen(_) => 0.0,
            Backend::Dense { unitary, .. } => max_entry(&(unitary.adjoint() * unitary - CMat::identity(unitary.nrows(), unitary.ncols()))),
        }
    }
}

pub(crate) fn max_entry(m: &CMat) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

pub fn spectral_norm(m: &CMat) -> f64 {
    m.clone().svd(false, false).singular_values.iter().copied().fold(0.0, f64::max)
}

fn conjugate_diag(v: &CMat, values: &[C]) -> CMat {
    let mut scaled = v.clone();
    for (k, &val) in values.iter().enumerate() {
        for r in 0..scaled.nrows() {
            scaled[(r, k)] *= val;
        }
    }
    scaled * v.adjoint()
}

/// Evaluates `f` once per distinct eigenvalue.
fn per_eigen<F: Fn(f64) -> C + Sync>(spectrum: &Spectrum, f: F) -> Vec<C> {
    let ev = &spectrum.eigenvalues;
    let mut starts = vec![0usize];
    for i in 1..ev.len() {
        if ev[i] != ev[i - 1] {
            starts.push(i);
        }
    }
    let distinct: Vec<C> = starts.par_iter().map(|&i| f(ev[i])).collect();
    let mut out = Vec::with_capacity(ev.len());
    for (j, &s) in starts.iter().enumerate() {
        let end = starts.get(j + 1).copied().unwrap_or(ev.len());
        out.extend(std::iter::repeat(distinct[j]).take(end - s));
    }
    out
}

fn check_unit_interval(spectrum: &Spectrum) -> Result<()> {
    let tol = 1e-10;
    if spectrum.lambda_min < -1.0 - tol || spectrum.lambda_max > 1.0 + tol {
        return Err(Error::Precondition(format!(
            "spectrum [{}, {}] is not inside [-1, 1]; rescale first",
            spectrum.lambda_min, spectrum.lambda_max
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// P1

/// How the Chebyshev truncation order of P1 is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum P1Degree {
    /// Smallest order whose truncation bound is below ε'.
    #[default]
    Tight,
    /// Order from the closed-form estimate, rounded up to even.
    Estimate,
}

/// Output of [`build_p1_with`].
#[derive(Debug, Clone)]
pub struct P1Build {
    pub encoding: BlockEncoding,
    pub pulses: PulseSeq1,
    /// Calls to the block-encoding oracle (two per qubitized step).
    pub query_count: u64,
}

/// Chebyshev degree used by P1.
pub fn p1_degree(beta: f64, eps: f64, degree: P1Degree) -> usize {
    match degree {
        P1Degree::Tight => cheb_truncation_order(beta, eps),
        P1Degree::Estimate => even_ceil(q1_bound(beta, eps)) as usize,
    }
}

pub fn build_p1(spectrum: &Spectrum, beta: f64, eps: f64) -> Result<(BlockEncoding, u64)> {
    let b = build_p1_with(spectrum, beta, eps, P1Degree::Tight)?;
    Ok((b.encoding, b.query_count))
}

pub fn build_p1_with(spectrum: &Spectrum, beta: f64, eps: f64, degree: P1Degree) -> Result<P1Build> {
    if !(beta >= 0.0) || !(eps > 0.0) {
        return Err(invalid("build_p1 needs beta >= 0 and eps > 0"));
    }
    check_unit_interval(spectrum)?;
    let alpha = (-beta * (1.0 + spectrum.lambda_min)).exp();
    let q = if beta == 0.0 { 0 } else { p1_degree(beta, eps, degree) };
    let pulses = p1_pulses(beta, eps, q)?;
    let values = per_eigen(spectrum, |l| C::new(pulses.realized(l), 0.0));
    let n_qubits = spectrum.len().trailing_zeros() as usize;
    let encoding = BlockEncoding {
        n_qubits,
        ancilla: "block-encoding ancillas + control + signal qubit".into(),
        alpha,
        eps,
        beta,
        spectrum: spectrum.clone(),
        backend: Backend::PerEigen(values),
    };
    Ok(P1Build { encoding, pulses, query_count: 2 * q as u64 })
}

type P1Key = (u64, u64, usize);

fn p1_cache() -> &'static Mutex<HashMap<P1Key, Arc<PulseSeq1>>> {
    static CACHE: OnceLock<Mutex<HashMap<P1Key, Arc<PulseSeq1>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Method-1 pulses for `e^{−β(λ+1)}`, scaled just below unit modulus.
pub fn p1_pulses(beta: f64, eps: f64, q: usize) -> Result<PulseSeq1> {
    let key = (beta.to_bits(), eps.to_bits(), q);
    if let Some(p) = p1_cache().lock().expect("cache").get(&key) {
        return Ok((**p).clone());
    }
    let series = jacobi_anger_coeffs(beta, -1.0, q)?;
    if q == 0 && beta == 0.0 {
        return Ok(PulseSeq1 { phis: vec![0.0], q: 0, target: series, strip_residual: 0.0 });
    }
    let peak = stable_grid_max(|m| series.max_abs(m));
    let shrink = (1.0 - 1e-3 * eps) / peak.max(1.0);
    let target = series.scaled(shrink);
    let pulses = synthesize_method1(&target)?;
    // the truncation bound says nothing about precision lost in synthesis
    let achieved = stable_grid_max(|m| {
        grid(-1.0, 1.0, m).map(|l| (pulses.realized(l) - propagator(beta, -1.0, l)).abs()).fold(0.0, f64::max)
    });
    if achieved > eps {
        return Err(Error::Certification { achieved, tol: eps });
    }
    p1_cache().lock().expect("cache").insert(key, Arc::new(pulses.clone()));
    Ok(pulses)
}

// ---------------------------------------------------------------------------
// P2

/// Output of [`build_p2_full`].
#[derive(Debug, Clone)]
pub struct P2Build {
    pub encoding: BlockEncoding,
    /// Pulses fitted to the reflected series; evaluated at `x = −λt`.
    pub pulses: PulseSeq2,
    pub series: FourierSeries,
    pub query_count: u64,
    pub alpha: f64,
}

type P2Key = (u64, u64, u64, u64);

struct P2Entry {
    series: FourierSeries,
    pulses: PulseSeq2,
    compiled: CompiledSeq2,
}

fn p2_cache() -> &'static Mutex<HashMap<P2Key, Arc<P2Entry>>> {
    static CACHE: OnceLock<Mutex<HashMap<P2Key, Arc<P2Entry>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn p2_entry(beta: f64, eps: f64, gamma: f64, lambda_min: f64) -> Result<Arc<P2Entry>> {
    let key = (beta.to_bits(), eps.to_bits(), gamma.to_bits(), lambda_min.to_bits());
    if let Some(e) = p2_cache().lock().expect("cache").get(&key) {
        return Ok(e.clone());
    }
    let (_, _, taylor) = taylor_order_and_alpha(beta, lambda_min, gamma, eps)?;
    let series = fourier_from_taylor(&taylor, beta, gamma, eps)?;
    let tol = (1e-3 * eps).max(1e-12);
    let pulses = angles_method2(&series.reflected(), tol)?;
    if !pulses.converged {
        return Err(Error::PulseFit { achieved: pulses.max_error, tol });
    }
    let total = series.certified_error + pulses.max_error;
    if total > eps {
        return Err(Error::Certification { achieved: total, tol: eps });
    }
    let compiled = pulses.compile();
    let entry = Arc::new(P2Entry { series, pulses, compiled });
    p2_cache().lock().expect("cache").insert(key, entry.clone());
    Ok(entry)
}

pub fn build_p2(spectrum: &Spectrum, beta: f64, eps: f64, gamma: f64) -> Result<(BlockEncoding, u64, f64)> {
    let b = build_p2_full(spectrum, beta, eps, gamma)?;
    Ok((b.encoding, b.query_count, b.alpha))
}

pub fn build_p2_full(spectrum: &Spectrum, beta: f64, eps: f64, gamma: f64) -> Result<P2Build> {
    if !(gamma > 0.0) || !(beta >= 0.0) || !(eps > 0.0) {
        return Err(invalid("build_p2 needs gamma > 0, beta >= 0 and eps > 0"));
    }
    check_unit_interval(spectrum)?;
    let entry = p2_entry(beta, eps, gamma, spectrum.lambda_min)?;
    let t = entry.series.t;
    let values = per_eigen(spectrum, |l| entry.compiled.top_left(-l * t));
    let alpha = entry.series.alpha;
    let encoding = BlockEncoding {
        n_qubits: spectrum.len().trailing_zeros() as usize,
        ancilla: "control qubit".into(),
        alpha,
        eps,
        beta,
        spectrum: spectrum.clone(),
        backend: Backend::PerEigen(values),
    };
    Ok(P2Build {
        encoding,
        pulses: entry.pulses.clone(),
        series: entry.series.clone(),
        query_count: entry.series.q() as u64,
        alpha,
    })
}

// ---------------------------------------------------------------------------
// Post-selection

/// Outcome of running an encoding on an input and keeping the ancilla-|0⟩ branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub post_selection_prob: f64,
    /// Normalized output. For the per-eigenvalue backend these are
    /// coordinates in the eigenbasis (Schmidt coefficients for a purified
    /// mixed input); for the dense backend they are computational-basis
    /// amplitudes, with a purified input flattened column-major.
    pub output_state: Vec<C>,
    pub trace_distance_to_ideal: f64,
}

fn input_vector(input: &InputState, d: usize) -> Result<Vec<C>> {
    match input {
        InputState::MaximallyMixed => Err(invalid("mixed input has no state vector")),
        InputState::Basis(b) => {
            if *b >= d {
                return Err(invalid(format!("basis index {b} out of range")));
            }
            let mut v = vec![ZERO; d];
            v[*b] = ONE;
            Ok(v)
        }
        InputState::Pure(psi) => {
            if psi.len() != d {
                return Err(invalid("input length does not match the system"));
            }
            let n: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
            if (n - 1.0).abs() > 1e-8 {
                return Err(invalid(format!("input state norm² = {n}")));
            }
            Ok(psi.clone())
        }
    }
}

fn finish(out: Vec<C>, ideal: Vec<C>) -> Result<SimResult> {
    let p: f64 = out.iter().map(|z| z.norm_sqr()).sum();
    let pi: f64 = ideal.iter().map(|z| z.norm_sqr()).sum();
    if p < 1e-300 || pi < 1e-300 {
        return Err(Error::ZeroProbability);
    }
    let overlap: C = out.iter().zip(&ideal).map(|(a, b)| a.conj() * b).sum::<C>() / (p * pi).sqrt();
    let td = (1.0 - overlap.norm_sqr()).max(0.0).sqrt();
    let norm = p.sqrt();
    Ok(SimResult {
        post_selection_prob: p.min(1.0),
        output_state: out.into_iter().map(|z| z / norm).collect(),
        trace_distance_to_ideal: td,
    })
}

/// Applies the block to `input` and compares with `e^{−β(H−λ_min)}|Ψ⟩`.
/// Mixed inputs are purified with a reference register.
pub fn post_select(enc: &BlockEncoding, input: &InputState) -> Result<SimResult> {
    let d = enc.dim();
    let s = &enc.spectrum;
    let ideal_value = |l: f64| (-enc.beta * (l - s.lambda_min)).exp();
    match &enc.backend {
        Backend::PerEigen(values) => {
            let amps: Vec<C> = match input {
                InputState::MaximallyMixed => vec![C::new(1.0 / (d as f64).sqrt(), 0.0); d],
                _ => {
                    let psi = input_vector(input, d)?;
                    let v = enc.eigenbasis()?;
                    (0..d).map(|k| (0..d).map(|r| v[(r, k)].conj() * psi[r]).sum()).collect()
                }
            };
            let out = amps.iter().zip(values).map(|(a, v)| a * v).collect();
            let ideal = amps.iter().zip(&s.eigenvalues).map(|(a, &l)| a * ideal_value(l)).collect();
            finish(out, ideal)
        }
        Backend::Dense { .. } => {
            let b = enc.block_matrix()?;
            let v = enc.eigenbasis()?;
            let fvals: Vec<C> = s.eigenvalues.iter().map(|&l| C::new(ideal_value(l), 0.0)).collect();
            let f = conjugate_diag(&v, &fvals);
            match input {
                InputState::MaximallyMixed => {
                    let scale = 1.0 / (d as f64).sqrt();
                    finish(b.iter().map(|z| z * scale).collect(), f.iter().map(|z| z * scale).collect())
                }
                _ => {
                    let psi = nalgebra::DVector::from_vec(input_vector(input, d)?);
                    finish((&b * &psi).iter().copied().collect(), (&f * &psi).iter().copied().collect())
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Dense circuits

fn random_unitary(d: usize, rng: &mut ChaCha8Rng) -> CMat {
    let g = CMat::from_fn(d, d, |_, _| C::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    // fix column phases so the distribution is Haar
    let mut q = q;
    for k in 0..d {
        let ph = r[(k, k)] / r[(k, k)].norm();
        for i in 0..d {
            q[(i, k)] *= ph;
        }
    }
    q
}

/// Random Hermitian matrix with unit spectral norm.
fn random_unit_hermitian(d: usize, rng: &mut ChaCha8Rng) -> CMat {
    let g = CMat::from_fn(d, d, |_, _| C::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let h = (&g + g.adjoint()) * C::new(0.5, 0.0);
    let n = spectral_norm(&h);
    h / C::new(n, 0.0)
}

/// `e^{iεK}` for Hermitian K.
fn exp_i_hermitian(k: &CMat, eps: f64) -> Result<CMat> {
    let (vals, vecs) = hermitian_eigh(k)?;
    let phases: Vec<C> = vals.iter().map(|&l| C::from_polar(1.0, eps * l)).collect();
    Ok(conjugate_diag(&vecs, &phases))
}

fn hermitian_function(h: &CMat, f: impl Fn(f64) -> f64) -> Result<CMat> {
    let (vals, vecs) = hermitian_eigh(h)?;
    let fv: Vec<C> = vals.iter().map(|&l| C::new(f(l), 0.0)).collect();
    Ok(conjugate_diag(&vecs, &fv))
}

/// Spectrum of a dense Hermitian matrix, uniform overlaps, with eigenbasis.
pub fn dense_spectrum(h: &CMat) -> Result<Spectrum> {
    let (vals, vecs) = hermitian_eigh(h)?;
    let mut s = Spectrum::uniform(vals)?;
    s.basis = Some(EigenBasis::Dense(vecs));
    Ok(s)
}

fn hermiticity(h: &CMat) -> f64 {
    max_entry(&(h - h.adjoint()))
}

/// Block-encoding `(I ⊕ V) [[H, S], [S, −H]] (I ⊕ W)` of H with
/// `S = √(I − H²)` and random unitaries V, W, so the oracle is generic
/// rather than self-inverse. One ancilla qubit.
pub fn dilation(h: &CMat, seed: u64) -> Result<BlockEncoding> {
    let d = h.nrows();
    if d != h.ncols() || !d.is_power_of_two() || d > 1 << DENSE_MAX_QUBITS {
        return Err(invalid(format!("dense backend supports square 2^N matrices with N <= {DENSE_MAX_QUBITS}")));
    }
    let herm = hermiticity(h);
    if herm > 1e-8 {
        return Err(Error::NotHermitian(herm));
    }
    let norm = spectral_norm(h);
    if norm > 1.0 + 1e-10 {
        return Err(Error::Precondition(format!("‖H‖ = {norm} exceeds 1")));
    }
    let s = hermitian_function(h, |l| (1.0 - l * l).max(0.0).sqrt())?;
    let mut core = CMat::zeros(2 * d, 2 * d);
    core.view_mut((0, 0), (d, d)).copy_from(h);
    core.view_mut((0, d), (d, d)).copy_from(&s);
    core.view_mut((d, 0), (d, d)).copy_from(&s);
    core.view_mut((d, d), (d, d)).copy_from(&(-h));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (v, w) = (random_unitary(d, &mut rng), random_unitary(d, &mut rng));
    let left = direct_sum(&CMat::identity(d, d), &v);
    let right = direct_sum(&CMat::identity(d, d), &w);
    let unitary = left * core * right;
    Ok(BlockEncoding {
        n_qubits: d.trailing_zeros() as usize,
        ancilla: "1 dilation qubit".into(),
        alpha: 1.0,
        eps: 0.0,
        beta: 0.0,
        spectrum: dense_spectrum(h)?,
        backend: Backend::Dense { unitary, ancilla_qubits: 1 },
    })
}

fn direct_sum(a: &CMat, b: &CMat) -> CMat {
    let (n, m) = (a.nrows(), b.nrows());
    let mut out = CMat::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(a);
    out.view_mut((n, n), (m, m)).copy_from(b);
    out
}

fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

fn proj_pm(sign: f64) -> CMat {
    CMat::from_row_slice(2, 2, &[C::new(0.5, 0.0), C::new(0.5 * sign, 0.0), C::new(0.5 * sign, 0.0), C::new(0.5, 0.0)])
}

fn hadamard() -> CMat {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_row_slice(2, 2, &[C::new(h, 0.0), C::new(h, 0.0), C::new(h, 0.0), C::new(-h, 0.0)])
}

fn from_mat2(m: &Mat2) -> CMat {
    CMat::from_row_slice(2, 2, &[m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]])
}

/// Qubitized oracle `R_{|0⟩} Z_c (O ⊗ |+⟩⟨+| + O† ⊗ |−⟩⟨−|)` built from
/// the oracle and an adjoint call given separately, so that each call can
/// carry its own error.
fn qubitized_from_calls(o: &CMat, o_dag: &CMat) -> CMat {
    let inner = o.nrows();
    let u_prime = kron(&proj_pm(1.0), o) + kron(&proj_pm(-1.0), o_dag);
    let mut zr = CMat::identity(2 * inner, 2 * inner);
    // Z on the control qubit, then reflection about ancillas in |0⟩; the
    // system occupies the lowest `inner / 2` indices of each block
    let d = inner / 2;
    for i in 0..2 * inner {
        let control = i / inner;
        let anc_zero = control == 0 && (i % inner) < d;
        let z = if control == 0 { 1.0 } else { -1.0 };
        let r = if anc_zero { 1.0 } else { -1.0 };
        zr[(i, i)] = C::new(z * r, 0.0);
    }
    zr * u_prime
}

/// Qubitization of a one-ancilla block-encoding of Hermitian H.
pub fn qubitize(u_h: &BlockEncoding) -> Result<BlockEncoding> {
    let Backend::Dense { unitary, ancilla_qubits } = &u_h.backend else {
        return Err(Error::Precondition("qubitization needs the dense backend".into()));
    };
    let d = u_h.dim();
    let block = unitary.view((0, 0), (d, d)).into_owned();
    let herm = hermiticity(&block);
    if herm > 1e-8 {
        return Err(Error::NotHermitian(herm));
    }
    let o = qubitized_from_calls(unitary, &unitary.adjoint());
    Ok(BlockEncoding {
        ancilla: format!("{} oracle qubits + control", ancilla_qubits),
        backend: Backend::Dense { unitary: o, ancilla_qubits: ancilla_qubits + 1 },
        ..u_h.clone()
    })
}

/// For each eigenvector |λ⟩ of H, the eigenphases of the qubitized oracle
/// restricted to span{|0⟩|λ⟩, its orthogonal partner}. Returns
/// `(λ, expected arccos λ, measured |phase|)`.
pub fn rotation_angles(o_prime: &BlockEncoding) -> Result<Vec<(f64, f64, f64)>> {
    let Backend::Dense { unitary, .. } = &o_prime.backend else {
        return Err(Error::Precondition("needs the dense backend".into()));
    };
    let v = o_prime.eigenbasis()?;
    let (d, big) = (o_prime.dim(), unitary.nrows());
    let mut out = Vec::with_capacity(d);
    for (k, &lambda) in o_prime.spectrum.eigenvalues.iter().enumerate() {
        let mut e0 = nalgebra::DVector::<C>::zeros(big);
        for r in 0..d {
            e0[r] = v[(r, k)];
        }
        let img = unitary * &e0;
        let a: C = e0.dotc(&img);
        let rest = &img - &e0 * a;
        let b_norm = rest.norm();
        let measured = if b_norm < 1e-12 {
            a.arg().abs()
        } else {
            let e1 = &rest / C::new(b_norm, 0.0);
            let img1 = unitary * &e1;
            let m = Mat2::new(a, e0.dotc(&img1), C::new(b_norm, 0.0), e1.dotc(&img1));
            let tr = m[(0, 0)] + m[(1, 1)];
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            let disc = (tr * tr - 4.0 * det).sqrt();
            let z1 = 0.5 * (tr + disc);
            z1.arg().abs()
        };
        out.push((lambda, lambda.clamp(-1.0, 1.0).acos(), measured));
    }
    Ok(out)
}

/// Per-call oracle noise: each call is followed by `e^{iεK}` with a fresh
/// random Hermitian K of unit norm.
pub struct OracleNoise<'a> {
    pub eps: f64,
    pub rng: &'a mut ChaCha8Rng,
}

/// Full-ancilla circuit of P1: signal qubit e, qubitization control c and
/// the dilation qubit a of a random block-encoding of H.
#[derive(Debug, Clone)]
pub struct P1Circuit {
    pub h: CMat,
    pub oracle: CMat,
    pub pulses: PulseSeq1,
    pub beta: f64,
    pub eps: f64,
    pub spectrum: Spectrum,
}

impl P1Circuit {
    pub fn new(h: &CMat, beta: f64, eps: f64, degree: P1Degree, seed: u64) -> Result<Self> {
        let u = dilation(h, seed)?;
        let Backend::Dense { unitary, .. } = u.backend else { unreachable!("dilation is dense") };
        check_unit_interval(&u.spectrum)?;
        let q = if beta == 0.0 { 0 } else { p1_degree(beta, eps, degree) };
        let pulses = p1_pulses(beta, eps, q)?;
        Ok(Self { h: h.clone(), oracle: unitary, pulses, beta, eps, spectrum: u.spectrum })
    }

    pub fn query_count(&self) -> u64 {
        2 * self.pulses.q as u64
    }

    /// Full unitary, optionally with oracle noise.
    pub fn unitary(&self, mut noise: Option<OracleNoise<'_>>) -> Result<CMat> {
        let inner = self.oracle.nrows();
        let mut call = |adjoint: bool| -> Result<CMat> {
            let base = if adjoint { self.oracle.adjoint() } else { self.oracle.clone() };
            match noise.as_mut() {
                None => Ok(base),
                Some(n) => {
                    let k = random_unit_hermitian(inner, n.rng);
                    let e = exp_i_hermitian(&k, n.eps)?;
                    // (O e^{iεK})† for adjoint calls
                    Ok(if adjoint { e.adjoint() * base } else { base * e })
                }
            }
        };
        let dim = 2 * inner;
        let id = CMat::identity(dim, dim);
        let (pp, pm) = (proj_pm(1.0), proj_pm(-1.0));
        let phase = |phi: f64| from_mat2(&crate::qsp::exp_z(phi));
        let mut u = kron(&hadamard(), &id);
        let q = self.pulses.q;
        for k in 1..=q {
            u = kron(&phase(self.pulses.phis[k - 1]), &id) * u;
            let o = call(false)?;
            let od = call(true)?;
            let qb = qubitized_from_calls(&o, &od);
            let op = if k % 2 == 1 { qb } else { qb.adjoint() };
            u = (kron(&pp, &id) + kron(&pm, &op)) * u;
        }
        u = kron(&(hadamard() * phase(self.pulses.phis[q])), &id) * u;
        Ok(u)
    }

    pub fn encoding(&self) -> Result<BlockEncoding> {
        let unitary = self.unitary(None)?;
        Ok(BlockEncoding {
            n_qubits: self.h.nrows().trailing_zeros() as usize,
            ancilla: "dilation + control + signal".into(),
            alpha: (-self.beta * (1.0 + self.spectrum.lambda_min)).exp(),
            eps: self.eps,
            beta: self.beta,
            spectrum: self.spectrum.clone(),
            backend: Backend::Dense { unitary, ancilla_qubits: 3 },
        })
    }
}

/// Full-ancilla circuit of P2: a single control qubit driving
/// controlled `e^{∓iHt}`.
pub fn p2_dense(h: &CMat, beta: f64, eps: f64, gamma: f64) -> Result<BlockEncoding> {
    let d = h.nrows();
    if d > 1 << DENSE_MAX_QUBITS {
        return Err(invalid("dense backend capped at 4 qubits"));
    }
    let spectrum = dense_spectrum(h)?;
    check_unit_interval(&spectrum)?;
    let build = build_p2_full(&spectrum, beta, eps, gamma)?;
    let t = build.series.t;
    let (vals, vecs) = hermitian_eigh(h)?;
    let ph: Vec<C> = vals.iter().map(|&l| C::from_polar(1.0, -l * t)).collect();
    let evo = conjugate_diag(&vecs, &ph);
    let id = CMat::identity(d, d);
    let p0 = CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ZERO]);
    let p1 = CMat::from_row_slice(2, 2, &[ZERO, ZERO, ZERO, ONE]);
    let o2 = kron(&p0, &id) + kron(&p1, &evo);
    let o2_dag = o2.adjoint();
    let xis = &build.pulses.xis;
    let gate = |k: usize| {
        let r = crate::qsp::r2(0.0, 0.0, [xis[4 * k], xis[4 * k + 1], xis[4 * k + 2], xis[4 * k + 3]]);
        kron(&from_mat2(&r), &id)
    };
    let rot_only = |k: usize| {
        let r = crate::qsp::r2(0.0, 0.0, [xis[4 * k], xis[4 * k + 1], xis[4 * k + 2], 0.0]);
        kron(&from_mat2(&r), &id)
    };
    let kappa = |k: usize| kron(&from_mat2(&crate::qsp::exp_y(-xis[4 * k + 3])), &id);
    let mut u = gate(0);
    for k in 1..=build.series.q() {
        let o = if k % 2 == 1 { &o2 } else { &o2_dag };
        u = rot_only(k) * o * kappa(k) * u;
    }
    Ok(BlockEncoding { backend: Backend::Dense { unitary: u, ancilla_qubits: 1 }, spectrum, ..build.encoding })
}

/// Outcome of [`imperfect_oracle_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleNoiseReport {
    pub trials: usize,
    pub eps_oracle: f64,
    pub query_count: u64,
    pub declared_eps: f64,
    /// Block error of the noiseless circuit.
    pub ideal_error: f64,
    /// Largest block error over noisy trials.
    pub max_error: f64,
    /// Largest distance between noisy and noiseless blocks.
    pub max_deviation: f64,
    /// `ε' + (oracle calls)·ε_O`.
    pub bound: f64,
    pub pass: bool,
}

/// Perturbs every oracle call of the P1 circuit and checks the block error
/// against `ε' + (oracle calls)·ε_O`.
pub fn imperfect_oracle_check(circuit: &P1Circuit, eps_oracle: f64, trials: usize, seed: u64) -> Result<OracleNoiseReport> {
    let calls = circuit.query_count();
    if calls as f64 * eps_oracle >= 0.1 {
        return Err(Error::Precondition("total oracle error must stay below 0.1".into()));
    }
    let d = circuit.h.nrows();
    let clean = circuit.encoding()?;
    let ideal_error = clean.block_error()?;
    let clean_block = clean.block_matrix()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut max_error, mut max_deviation) = (ideal_error, 0.0f64);
    for _ in 0..trials {
        let u = circuit.unitary(Some(OracleNoise { eps: eps_oracle, rng: &mut rng }))?;
        let noisy = BlockEncoding { backend: Backend::Dense { unitary: u, ancilla_qubits: 3 }, ..clean.clone() };
        max_error = max_error.max(noisy.block_error()?);
        let nb = noisy.block_matrix()?;
        max_deviation = max_deviation.max(spectral_norm(&(nb - &clean_block)));
        debug_assert_eq!(d, clean.dim());
    }
    let bound = circuit.eps + calls as f64 * eps_oracle;
    Ok(OracleNoiseReport {
        trials,
        eps_oracle,
        query_count: calls,
        declared_eps: circuit.eps,
        ideal_error,
        max_error,
        max_deviation,
        bound,
        pass: max_error <= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pauli_z() -> CMat {
        CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
    }

    fn random_h(d: usize, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_unit_hermitian(d, &mut rng);
        // spread the spectrum to exactly [-1, 1]
        let (vals, vecs) = hermitian_eigh(&k).unwrap();
        let (lo, hi) = (vals[0], vals[d - 1]);
        let mapped: Vec<C> = vals.iter().map(|&l| C::new(2.0 * (l - lo) / (hi - lo) - 1.0, 0.0)).collect();
        conjugate_diag(&vecs, &mapped)
    }

    #[test]
    fn dilation_block_is_h() {
        let h = random_h(4, 3);
        let u = dilation(&h, 7).unwrap();
        assert!(u.unitarity_residual() < 1e-12);
        assert!(max_entry(&(u.block_matrix().unwrap() - &h)) < 1e-12);
    }

    #[test]
    fn qubitized_block_and_angles() {
        for (h, seed) in [(pauli_z(), 1), (random_h(4, 5), 2)] {
            let o = qubitize(&dilation(&h, seed).unwrap()).unwrap();
            assert!(o.unitarity_residual() < 1e-12);
            assert!(max_entry(&(o.block_matrix().unwrap() - &h)) < 1e-10);
            for (_, want, got) in rotation_angles(&o).unwrap() {
                assert!((want - got).abs() < 1e-8, "{want} vs {got}");
            }
        }
    }

    #[test]
    fn p1_backends_agree() {
        let h = random_h(4, 11);
        let c = P1Circuit::new(&h, 1.0, 1e-3, P1Degree::Tight, 4).unwrap();
        let dense = c.encoding().unwrap();
        assert!(dense.unitarity_residual() < 1e-10);
        let fast = build_p1(&c.spectrum, 1.0, 1e-3).unwrap().0;
        let diff = max_entry(&(dense.block_matrix().unwrap() - fast.block_matrix().unwrap()));
        assert!(diff < 1e-8, "{diff}");
        assert!(fast.block_error().unwrap() <= 1e-3);
    }

    #[test]
    fn p2_backends_agree() {
        let h = random_h(4, 12);
        let dense = p2_dense(&h, 1.0, 1e-3, 0.5).unwrap();
        assert!(dense.unitarity_residual() < 1e-10);
        let fast = build_p2(&dense.spectrum, 1.0, 1e-3, 0.5).unwrap().0;
        let diff = max_entry(&(dense.block_matrix().unwrap() - fast.block_matrix().unwrap()));
        assert!(diff < 1e-8, "{diff}");
        assert!(fast.block_error().unwrap() <= 1e-3);
    }

    #[test]
    fn zero_beta_is_identity() {
        let s = Spectrum::uniform(vec![-1.0, 0.2, 1.0]).unwrap();
        let (enc, q) = build_p1(&s, 0.0, 1e-3).unwrap();
        assert_eq!(q, 0);
        assert_eq!(enc.block_error().unwrap(), 0.0);
    }

    #[test]
    fn noisy_oracles_stay_within_bound() {
        let c = P1Circuit::new(&pauli_z(), 1.0, 1e-3, P1Degree::Tight, 9).unwrap();
        let r = imperfect_oracle_check(&c, 1e-6, 5, 1).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.max_deviation <= r.query_count as f64 * 1e-6);
    }
}
