//! Closed forms and stated properties of the method, checked numerically.

use approx::assert_relative_eq;
use fragqite::funcapprox::{gamma_opt, q1_bound};
use fragqite::hamiltonians::{diagonalize, gen_ensemble, inverse_success_prob, success_prob};
use fragqite::master::{expected_queries_fragmented, Schedule};
use fragqite::parity::{block_encode_hx, build_h0, build_hx, component, parity_via_qite, ParityInstance, ParityPrimitive};
use fragqite::schedules::{beta_crit_for, theorem5_schedule};
use fragqite::simulator::build_p2_full;
use fragqite::{HamiltonianClass, InputState, Primitive, Spectrum, Strategy};
use nalgebra::SymmetricEigen;

fn noninteracting(n: usize) -> Spectrum {
    diagonalize(&gen_ensemble(HamiltonianClass::Noninteracting, n, 0).unwrap(), &InputState::MaximallyMixed).unwrap()
}

/// `(N/4) ln(c^{1/N} / (2^{1/2} − c^{1/N}))`.
fn band_edge(n: usize, c: f64) -> f64 {
    let r = c.powf(1.0 / n as f64);
    n as f64 / 4.0 * (r / (2f64.sqrt() - r)).ln()
}

#[test]
fn inverse_success_matches_closed_form() {
    for n in 3..=10usize {
        let s = noninteracting(n);
        let o = 0.5f64.powf(n as f64 / 2.0);
        assert_relative_eq!(inverse_success_prob(&s, o / 2.0).unwrap(), band_edge(n, 2.0), max_relative = 1e-9);
        assert_relative_eq!(inverse_success_prob(&s, o / 2.2).unwrap(), band_edge(n, 2.2), max_relative = 1e-9);
        assert!(band_edge(n, 2.0) / (n as f64 / 4.0) > 0.88);
        assert!(band_edge(n, 2.2) / (n as f64 / 4.0) <= 2.44);
    }
}

#[test]
fn first_fragment_lies_in_band() {
    for n in 3..=10usize {
        let s = noninteracting(n);
        let o = 0.5f64.powf(n as f64 / 2.0);
        for &eps in &[1e-1, 1e-3] {
            let bc = beta_crit_for(&s, o, eps).unwrap();
            for m in [1.0, 4.0] {
                let first = theorem5_schedule(&s, o, m * bc, eps).unwrap().fragments[0];
                assert!(band_edge(n, 2.0) <= first + 1e-12 && first <= band_edge(n, 2.2) + 1e-12, "N={n}: {first}");
            }
        }
    }
}

#[test]
fn critical_beta_scales_as_exponential_times_size() {
    let ratios: Vec<f64> = (4..=10usize)
        .map(|n| {
            let o = 0.5f64.powf(n as f64 / 2.0);
            beta_crit_for(&noninteracting(n), o, 1e-2).unwrap() / (2f64.powf(n as f64 / 2.0) * n as f64)
        })
        .collect();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    assert!(hi / lo < 3.0, "{ratios:?}");
}

#[test]
fn probabilistic_repetitions_of_single_fragment() {
    let s = noninteracting(4);
    for &b in &[0.5, 3.0, 20.0] {
        let r = expected_queries_fragmented(&Schedule::single(b).unwrap(), &s, 1e-2, Primitive::P1).unwrap();
        assert_relative_eq!(r.n_l[0], 1.0 / success_prob(&s, b).unwrap(), max_relative = 1e-12);
    }
}

#[test]
fn p2_subnormalization() {
    let s = Spectrum::uniform(vec![-1.0, 1.0]).unwrap();
    let g = gamma_opt(1.0, Strategy::Prob);
    let b = build_p2_full(&s, 1.0, 1e-3, g).unwrap();
    assert_relative_eq!(b.alpha, (-g).exp(), max_relative = 1e-14);
}

#[test]
fn gamma_tends_to_taylor_limit() {
    for (kind, mu) in [(Strategy::Prob, 1.0), (Strategy::Coh, 0.5)] {
        assert_relative_eq!(gamma_opt(1e9, kind), 1.0 / (2.0 * mu), max_relative = 1e-6);
    }
    assert_relative_eq!(gamma_opt(2.0, Strategy::Prob), 2f64.sqrt() - 1.0, epsilon = 1e-15);
}

#[test]
fn query_estimate_vanishes_at_small_beta() {
    let vals: Vec<f64> = [1e-2, 1e-8, 1e-30, 1e-100].iter().map(|&b| q1_bound(b, 1e-3)).collect();
    assert!(vals.windows(2).all(|w| w[1] < w[0]));
    // decays only like 2 ln(1/ε') / ln(1/β)
    assert!(vals[3] < 0.1);
}

#[test]
fn base_hamiltonian_norm_is_at_most_one() {
    for n in 1..=8usize {
        let h0 = build_h0(n).unwrap();
        let e = SymmetricEigen::new(h0).eigenvalues;
        assert!(e.amax() <= 1.0 + 1e-12);
        assert_relative_eq!(e.max(), -e.min(), epsilon = 1e-12);
    }
}

#[test]
fn indirect_coupling_follows_parity() {
    let bits = [0u8, 1, 0, 0, 1];
    let inst = build_hx(&bits).unwrap();
    let seen = component(&inst.h, ParityInstance::index(0, 0));
    assert!(seen[ParityInstance::index(5, 0)]);
    assert!(!seen[ParityInstance::index(5, 1)]);
}

#[test]
fn exact_block_reveals_parity_with_certainty() {
    for bits in [vec![1u8, 0, 1], vec![1, 1, 1, 0], vec![0, 1, 0, 0, 1]] {
        let out = parity_via_qite(&bits, 2.0 * bits.len() as f64, ParityPrimitive::Ideal { alpha: 1.0 }).unwrap();
        assert!(out.heralded_wrong < 1e-24);
        assert!(out.success_prob > 0.5);
    }
}

#[test]
fn one_oracle_call_per_encoding() {
    for bits in [vec![0u8, 0], vec![1, 0, 1, 1]] {
        assert_eq!(block_encode_hx(&bits).unwrap().oracle_calls, 1);
    }
}
