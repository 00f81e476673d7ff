//! Invariants over randomized inputs.

use fragqite::bounds::solve_lower_bound;
use fragqite::funcapprox::{gamma_opt, q1_bound, q2_bound};
use fragqite::hamiltonians::{inverse_success_prob, success_prob};
use fragqite::kinds::even_ceil;
use fragqite::master::{eps_budget, expected_queries_fragmented, Schedule};
use fragqite::parity::{block_encode_hx, build_hx, overlap_formula, parity_via_qite, ParityPrimitive};
use fragqite::schedules::{ansatz_schedule, best_uniform, optimize_schedule};
use fragqite::simulator::build_p1;
use fragqite::{Mode, Primitive, Spectrum, Strategy as Amplification};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Random spectrum in [−1, 1] with λ_min = −1 and positive overlaps.
fn spectrum() -> impl Strategy<Value = Spectrum> {
    prop::collection::vec((-1.0f64..1.0, 0.01f64..1.0), 1..8).prop_map(|pairs| {
        let mut ev: Vec<f64> = std::iter::once(-1.0).chain(pairs.iter().map(|p| p.0)).collect();
        let mut ov: Vec<f64> = std::iter::once(0.05).chain(pairs.iter().map(|p| p.1)).collect();
        let total: f64 = ov.iter().sum();
        ov.iter_mut().for_each(|o| *o /= total);
        let mut idx: Vec<usize> = (0..ev.len()).collect();
        idx.sort_by(|&a, &b| ev[a].total_cmp(&ev[b]));
        ev = idx.iter().map(|&i| ev[i]).collect();
        ov = idx.iter().map(|&i| ov[i]).collect();
        Spectrum::from_parts(ev, ov).unwrap()
    })
}

fn bits() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..2, 1..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ansatz_fragments_partition_total(r in 1usize..12, a in 1.0f64..20.0, total in 0.1f64..1e4) {
        let s = ansatz_schedule(r, a, total).unwrap();
        prop_assert_eq!(s.r(), r);
        prop_assert!((s.total() - total).abs() <= 1e-9 * total);
        prop_assert!(s.fragments.iter().all(|&f| f > 0.0));
        prop_assert!(s.fragments.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)));
    }

    #[test]
    fn success_probability_decreases(s in spectrum(), b in 0.0f64..50.0, db in 0.0f64..10.0) {
        let p = success_prob(&s, b).unwrap();
        let p2 = success_prob(&s, b + db).unwrap();
        prop_assert!(p > 0.0 && p <= 1.0 + 1e-15);
        prop_assert!(p2 <= p * (1.0 + 1e-12));
        prop_assert!(p2 >= s.ground_overlap() * (1.0 - 1e-12));
    }

    #[test]
    fn inverse_success_round_trips(s in spectrum(), b in 0.01f64..20.0) {
        let p = success_prob(&s, b).unwrap();
        prop_assume!(p - s.ground_overlap() > 1e-6);
        let back = inverse_success_prob(&s, p).unwrap();
        prop_assert!((success_prob(&s, back).unwrap() - p).abs() <= 1e-9 * p);
    }

    #[test]
    fn even_ceiling(x in 0.0f64..1e6) {
        let q = even_ceil(x);
        prop_assert_eq!(q % 2, 0);
        prop_assert!(q as f64 >= x && (q as f64) < x + 2.0);
    }

    #[test]
    fn query_estimates_are_monotone(b in 0.01f64..1e3, e in 1e-9f64..0.5, f in 1.0f64..3.0) {
        prop_assert!(q1_bound(b * f, e) >= q1_bound(b, e));
        prop_assert!(q1_bound(b, e / f) >= q1_bound(b, e));
        let g = gamma_opt(b, Amplification::Prob);
        prop_assert!(q2_bound(b, g * f, e) <= q2_bound(b, g, e));
    }

    #[test]
    fn lower_bound_grows_with_beta(b in 0.05f64..500.0, f in 1.01f64..4.0, e in 1e-8f64..0.1) {
        let lo = solve_lower_bound(b, e, 1.0).unwrap();
        let hi = solve_lower_bound(b * f, e, 1.0).unwrap();
        prop_assert!(hi.q_tilde >= lo.q_tilde * (1.0 - 1e-10));
        prop_assert!(lo.residual <= 1e-9);
    }

    #[test]
    fn budgets_stay_within_total(s in spectrum(), frags in prop::collection::vec(0.05f64..5.0, 1..6), e in 1e-4f64..0.5) {
        let sch = Schedule::new(frags).unwrap();
        let alphas = vec![1.0; sch.r()];
        let b = eps_budget(&sch, e, &s, &alphas).unwrap();
        prop_assert!(b.eps_l.iter().all(|&x| x > 0.0 && x <= e / 2.0));
    }

    #[test]
    fn optimizer_dominates_uniform(s in spectrum(), b in 1.0f64..300.0) {
        let best = optimize_schedule(&s, b, 1e-2, Primitive::P1, 6, Mode::Gibbs).unwrap();
        let uni = best_uniform(&s, b, 1e-2, Primitive::P1, 6, Mode::Gibbs).unwrap();
        let single = expected_queries_fragmented(&Schedule::single(b / 2.0).unwrap(), &s, 1e-2, Primitive::P1).unwrap();
        prop_assert!(best.report.expected_queries <= uni.report.expected_queries * (1.0 + 1e-9));
        prop_assert!(best.report.expected_queries <= single.expected_queries * (1.0 + 1e-9));
    }

    #[test]
    fn hx_encoding_is_exact(x in bits()) {
        let enc = block_encode_hx(&x).unwrap();
        let h = build_hx(&x).unwrap().h;
        prop_assert!((enc.block() - &h).abs().max() <= 1e-10);
        let u: &DMatrix<f64> = &enc.unitary;
        let eye = DMatrix::<f64>::identity(u.nrows(), u.ncols());
        prop_assert!((u.transpose() * u - eye).abs().max() <= 1e-10);
    }

    #[test]
    fn parity_advantage_under_condition(x in bits(), scale in 1.0f64..8.0, frac in 0.0f64..0.99) {
        let n = x.len();
        let beta = scale * n as f64;
        let eps = frac * overlap_formula(n, beta).unwrap() / 2.0;
        let out = parity_via_qite(&x, beta, ParityPrimitive::Adversarial { alpha: 1.0, eps }).unwrap();
        prop_assert!(out.condition_holds);
        prop_assert!(out.success_prob > 0.5);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn p1_meets_tolerance(s in spectrum(), b in 0.0f64..8.0, k in 1i32..6) {
        let e = 10f64.powi(-k);
        let (enc, q) = build_p1(&s, b, e).unwrap();
        prop_assert!(enc.block_error().unwrap() <= e);
        let floor = if b > 0.0 { solve_lower_bound(b, e, 1.0).unwrap().q_tilde } else { 0.0 };
        prop_assert!(q as f64 >= floor);
    }
}
