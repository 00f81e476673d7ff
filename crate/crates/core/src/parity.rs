//! Bit-string parity as an imaginary-time evolution problem.
//!
//! Everything lives in the symmetric subspace `span{|j⟩_s}, j = 0..=N`,
//! tensored with a single write qubit. The combined index is `2j + w`.

use crate::error::{invalid, Result};
use crate::hamiltonians::Spectrum;
use crate::simulator::build_p1;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

pub type RMat = DMatrix<f64>;

/// Largest string handled by the explicit block encoding.
pub const ENCODING_MAX_BITS: usize = 8;

pub fn parity(bits: &[u8]) -> u8 {
    bits.iter().fold(0, |p, &b| p ^ (b & 1))
}

fn coupling(n: usize, j: usize) -> f64 {
    (((n - j) * (j + 1)) as f64).sqrt()
}

/// Raising operator on the symmetric subspace, `J₊|j⟩ = √((N−j)(j+1)) |j+1⟩`.
pub fn raising(n: usize) -> RMat {
    let mut m = RMat::zeros(n + 1, n + 1);
    for j in 0..n {
        m[(j + 1, j)] = coupling(n, j);
    }
    m
}

/// `Σ X_i / (4N)` restricted to the symmetric subspace.
pub fn build_h0(n: usize) -> Result<RMat> {
    if n == 0 {
        return Err(invalid("N must be at least 1"));
    }
    let jp = raising(n);
    Ok((&jp + jp.transpose()) / (4.0 * n as f64))
}

/// A bit string and its parity-encoding Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct ParityInstance {
    pub bits: Vec<u8>,
    pub h: RMat,
    pub parity: u8,
}

impl ParityInstance {
    pub fn n(&self) -> usize {
        self.bits.len()
    }

    pub fn index(j: usize, w: u8) -> usize {
        2 * j + w as usize
    }
}

fn check_bits(bits: &[u8]) -> Result<()> {
    if bits.is_empty() || bits.iter().any(|&b| b > 1) {
        return Err(invalid("bits must be a nonempty 0/1 string"));
    }
    Ok(())
}

/// `U_x = Σ_j |j⟩⟨j| ⊗ X^{x_j}`, with `x_N = 0`.
pub fn parity_oracle(bits: &[u8]) -> RMat {
    let n = bits.len();
    let d = 2 * (n + 1);
    let mut u = RMat::zeros(d, d);
    for j in 0..=n {
        let flip = bits.get(j).copied().unwrap_or(0) as usize;
        for w in 0..2 {
            u[(2 * j + (w ^ flip), 2 * j + w)] = 1.0;
        }
    }
    u
}

/// Couples `|j⟩` to `|j ± 1⟩`, flipping the write qubit when `x_j = 1`.
pub fn build_hx(bits: &[u8]) -> Result<ParityInstance> {
    check_bits(bits)?;
    let n = bits.len();
    let d = 2 * (n + 1);
    let scale = 4.0 * n as f64;
    let mut h = RMat::zeros(d, d);
    for j in 0..n {
        let c = coupling(n, j) / scale;
        for w in 0..2u8 {
            let from = ParityInstance::index(j, w);
            let to = ParityInstance::index(j + 1, w ^ bits[j]);
            h[(to, from)] = c;
            h[(from, to)] = c;
        }
    }
    Ok(ParityInstance { bits: bits.to_vec(), h, parity: parity(bits) })
}

/// Indices reachable from `start` through nonzero entries.
pub fn component(h: &RMat, start: usize) -> Vec<bool> {
    let mut seen = vec![false; h.nrows()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(i) = queue.pop_front() {
        for k in 0..h.ncols() {
            if h[(k, i)] != 0.0 && !seen[k] {
                seen[k] = true;
                queue.push_back(k);
            }
        }
    }
    seen
}

/// Whether `|0⟩|0⟩` reaches `|N⟩|par⟩` but not `|N⟩|par ⊕ 1⟩`.
pub fn connectivity_holds(inst: &ParityInstance) -> bool {
    let seen = component(&inst.h, 0);
    let n = inst.n();
    seen[ParityInstance::index(n, inst.parity)] && !seen[ParityInstance::index(n, inst.parity ^ 1)]
}

/// `|(1 − e^{−β/(2N)})/2|^N`, the amplitude on `|N⟩` after evolving `|0⟩`.
pub fn overlap_formula(n: usize, beta: f64) -> Result<f64> {
    if n == 0 || !(beta >= 0.0) {
        return Err(invalid("need N >= 1 and beta >= 0"));
    }
    Ok((-(-beta / (2.0 * n as f64)).exp_m1() / 2.0).powi(n as i32))
}

/// `f(H)` for a real symmetric matrix.
fn sym_function(h: &RMat, f: impl Fn(f64) -> f64) -> RMat {
    let eig = SymmetricEigen::new(h.clone());
    let d = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&l| f(l)));
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// `e^{−β(H − λ_min)}` for a real symmetric matrix.
pub fn propagator_matrix(h: &RMat, beta: f64) -> RMat {
    let lmin = SymmetricEigen::new(h.clone()).eigenvalues.min();
    sym_function(h, |l| (-beta * (l - lmin)).exp())
}

/// How the imaginary-time block is realized in the parity reduction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ParityPrimitive {
    /// `α e^{−β(H−λ_min)}` exactly.
    Ideal { alpha: f64 },
    /// The exact block plus an error of norm ε' placed entirely on the
    /// wrong-parity amplitude.
    Adversarial { alpha: f64, eps: f64 },
    /// The simulated P1 circuit; α is fixed by the spectrum.
    P1 { eps: f64 },
}

/// Outcome of deciding a parity with one imaginary-time block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParityOutcome {
    /// Probability that the final guess is correct.
    pub success_prob: f64,
    /// Probability that the final guess is wrong.
    pub failure_prob: f64,
    /// Probability of heralding `|N⟩` with the correct write qubit.
    pub heralded_correct: f64,
    /// Probability of heralding `|N⟩` with the wrong write qubit.
    pub heralded_wrong: f64,
    pub overlap: f64,
    pub alpha: f64,
    pub eps: f64,
    /// Whether `overlap > 2ε'/α`, the regime with a guaranteed advantage.
    pub condition_holds: bool,
}

/// Applies the block to `|0⟩|0⟩`, measures the symmetric index and the write
/// qubit, and falls back to a coin toss on any other outcome.
pub fn parity_via_qite(bits: &[u8], beta: f64, primitive: ParityPrimitive) -> Result<ParityOutcome> {
    let inst = build_hx(bits)?;
    if !(beta >= 0.0) {
        return Err(invalid("beta must be nonnegative"));
    }
    let n = inst.n();
    let start = ParityInstance::index(0, 0);
    let good = ParityInstance::index(n, inst.parity);
    let bad = ParityInstance::index(n, inst.parity ^ 1);
    let ideal = propagator_matrix(&inst.h, beta);
    let (block, alpha, eps) = match primitive {
        ParityPrimitive::Ideal { alpha } => (ideal * alpha, alpha, 0.0),
        ParityPrimitive::Adversarial { alpha, eps } => {
            let mut b = ideal * alpha;
            b[(bad, start)] += eps;
            (b, alpha, eps)
        }
        ParityPrimitive::P1 { eps } => {
            let eig = SymmetricEigen::new(inst.h.clone());
            let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let spectrum = Spectrum::uniform(order.iter().map(|&k| eig.eigenvalues[k]).collect())?;
            let (enc, _) = build_p1(&spectrum, beta, eps)?;
            let values = enc.eigen_values()?;
            let mut b = RMat::zeros(inst.h.nrows(), inst.h.ncols());
            for (&k, v) in order.iter().zip(&values) {
                let col = eig.eigenvectors.column(k);
                b += col * col.transpose() * v.re;
            }
            (b, enc.alpha, eps)
        }
    };
    if !(alpha > 0.0 && alpha <= 1.0) || !(eps >= 0.0) {
        return Err(invalid("need alpha in (0, 1] and eps >= 0"));
    }
    let a_c = block[(good, start)].powi(2);
    let a_w = block[(bad, start)].powi(2);
    let overlap = overlap_formula(n, beta)?;
    Ok(ParityOutcome {
        success_prob: 0.5 + 0.5 * (a_c - a_w),
        failure_prob: 0.5 - 0.5 * (a_c - a_w),
        heralded_correct: a_c,
        heralded_wrong: a_w,
        overlap,
        alpha,
        eps,
        condition_holds: overlap > 2.0 * eps / alpha,
    })
}

/// `[[A, √(I−AAᵀ)], [√(I−AᵀA), −Aᵀ]]`, a unitary with `A` as its top-left block.
pub fn unitary_dilation(a: &RMat) -> RMat {
    let d = a.nrows();
    let id = RMat::identity(d, d);
    let sqrt_psd = |m: RMat| sym_function(&m, |l| l.max(0.0).sqrt());
    let top = sqrt_psd(&id - a * a.transpose());
    let bottom = sqrt_psd(&id - a.transpose() * a);
    let mut u = RMat::zeros(2 * d, 2 * d);
    u.view_mut((0, 0), (d, d)).copy_from(a);
    u.view_mut((0, d), (d, d)).copy_from(&top);
    u.view_mut((d, 0), (d, d)).copy_from(&bottom);
    u.view_mut((d, d), (d, d)).copy_from(&(-a.transpose()));
    u
}

/// Explicit unitary whose ancilla-|0⟩ block is `H_x`.
#[derive(Debug, Clone)]
pub struct HxEncoding {
    pub unitary: RMat,
    /// Dimension of the system block.
    pub dim: usize,
    /// Applications of the parity oracle in the circuit.
    pub oracle_calls: usize,
}

impl HxEncoding {
    pub fn block(&self) -> RMat {
        self.unitary.view((0, 0), (self.dim, self.dim)).into_owned()
    }
}

/// `H_x = (J₊U_x + U_x J₋)/(4N)` from one oracle call: a control qubit in
/// `|+⟩` selects `J₊/(2N)` after the oracle or `J₋/(2N)` before it.
///
/// Layout: system index, then the ladder ancilla, then the control qubit.
pub fn block_encode_hx(bits: &[u8]) -> Result<HxEncoding> {
    check_bits(bits)?;
    let n = bits.len();
    if n > ENCODING_MAX_BITS {
        return Err(invalid(format!("explicit encoding supports N <= {ENCODING_MAX_BITS}")));
    }
    let d = 2 * (n + 1);
    let id_w = RMat::identity(2, 2);
    let jp = raising(n).kronecker(&id_w) / (2.0 * n as f64);
    let ujp = unitary_dilation(&jp);
    let ujm = unitary_dilation(&jp.transpose());
    let mut oracle_calls = 0;
    let mut apply_oracle = || {
        oracle_calls += 1;
        RMat::identity(2, 2).kronecker(&parity_oracle(bits))
    };
    let id2d = RMat::identity(2 * d, 2 * d);
    let controlled = |on_zero: &RMat, on_one: &RMat| {
        let mut m = RMat::zeros(4 * d, 4 * d);
        m.view_mut((0, 0), (2 * d, 2 * d)).copy_from(on_zero);
        m.view_mut((2 * d, 2 * d), (2 * d, 2 * d)).copy_from(on_one);
        m
    };
    let before = controlled(&id2d, &ujm);
    let ux = apply_oracle();
    let middle = controlled(&ux, &ux);
    let after = controlled(&ujp, &id2d);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let had = RMat::from_row_slice(2, 2, &[h, h, h, -h]).kronecker(&id2d);
    let unitary = &had * after * middle * before * &had;
    Ok(HxEncoding { unitary, dim: d, oracle_calls })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn h0_single_bit() {
        let h = build_h0(1).unwrap();
        assert_eq!(h, RMat::from_row_slice(2, 2, &[0.0, 0.25, 0.25, 0.0]));
    }

    #[test]
    fn figure_string_connectivity() {
        let inst = build_hx(&[0, 1, 0, 0, 1]).unwrap();
        let seen = component(&inst.h, 0);
        assert!(seen[ParityInstance::index(5, 0)]);
        assert!(!seen[ParityInstance::index(5, 1)]);
        assert!(connectivity_holds(&inst));
    }

    #[test]
    fn zero_string_is_h0_times_identity() {
        let inst = build_hx(&[0, 0, 0]).unwrap();
        let want = build_h0(3).unwrap().kronecker(&RMat::identity(2, 2));
        assert!((inst.h - want).abs().max() < 1e-15);
    }

    #[test]
    fn overlap_values() {
        assert_eq!(overlap_formula(3, 0.0).unwrap(), 0.0);
        let v = overlap_formula(1, 2.0).unwrap();
        assert!((v - (1.0 - (-1.0f64).exp()) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn coin_toss_at_zero_beta() {
        let o = parity_via_qite(&[1, 0, 1], 0.0, ParityPrimitive::Ideal { alpha: 1.0 }).unwrap();
        assert_eq!(o.success_prob, 0.5);
    }

    #[test]
    fn dilation_is_orthogonal() {
        let a = build_hx(&[1, 1]).unwrap().h * 3.0;
        let u = unitary_dilation(&a);
        let r = (u.transpose() * &u - RMat::identity(u.nrows(), u.ncols())).abs().max();
        assert!(r < 1e-12);
    }
}
