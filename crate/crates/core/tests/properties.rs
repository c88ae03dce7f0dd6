use mlppde::oracles::{hopf_hj, ConvexTerm, HopfOptions};
use mlppde::{
    mlp_estimate, mlp_estimate_parallel, predict_cost, CostLedger, DiffusionModel, InitialValue, Interval, MlpLevel, Nonlinearity,
    SemilinearProblem, StreamKey,
};
use proptest::prelude::*;

fn heat(d: usize, f: Nonlinearity, g: InitialValue) -> SemilinearProblem {
    SemilinearProblem::new(d, 1.0, DiffusionModel::ScaledHeat, f, g).unwrap()
}

fn clamped_allen_cahn() -> Nonlinearity {
    Nonlinearity::allen_cahn(Interval::new(-2.0, 2.0).unwrap()).clamped().unwrap()
}

fn nonlinearity() -> impl Strategy<Value = Nonlinearity> {
    prop_oneof![
        Just(Nonlinearity::zero()),
        (-2.0..2.0f64).prop_map(|a| Nonlinearity::linear(a).unwrap()),
        Just(clamped_allen_cahn()),
    ]
}

fn initial_value() -> impl Strategy<Value = InitialValue> {
    prop_oneof![
        (-5.0..5.0f64).prop_map(InitialValue::Constant),
        Just(InitialValue::Sum),
        Just(InitialValue::NormSq),
        Just(InitialValue::LogHalfOnePlusNormSq),
        Just(InitialValue::MinCoord),
        Just(InitialValue::HalfExpNegNormSq),
    ]
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ledger_merge_matches_accumulation(seed in any::<u64>(), n1 in 0u32..4, n2 in 0u32..4, m in 1u32..4) {
        let p = heat(3, clamped_allen_cahn(), InitialValue::NormSq);
        let x = [0.1, -0.2, 0.3];
        let key = StreamKey::new(seed);
        let (mut a, mut b, mut both) = (CostLedger::ZERO, CostLedger::ZERO, CostLedger::ZERO);
        mlp_estimate(&p, 1.0, &x, MlpLevel::new(n1, m).unwrap(), &key.derive(1), &mut a).unwrap();
        mlp_estimate(&p, 1.0, &x, MlpLevel::new(n2, m).unwrap(), &key.derive(2), &mut b).unwrap();
        mlp_estimate(&p, 1.0, &x, MlpLevel::new(n1, m).unwrap(), &key.derive(1), &mut both).unwrap();
        mlp_estimate(&p, 1.0, &x, MlpLevel::new(n2, m).unwrap(), &key.derive(2), &mut both).unwrap();
        prop_assert_eq!(a.merge(b), both);
        prop_assert_eq!(a + b, both);
    }

    #[test]
    fn evaluations_are_pure(f in nonlinearity(), g in initial_value(), u in -10.0..10.0f64, x in point(4)) {
        let p = heat(4, f, g);
        let mut l = CostLedger::ZERO;
        prop_assert_eq!(p.evaluate_f(u, &mut l).unwrap().to_bits(), p.evaluate_f(u, &mut l).unwrap().to_bits());
        prop_assert_eq!(p.evaluate_g(&x, &mut l).unwrap().to_bits(), p.evaluate_g(&x, &mut l).unwrap().to_bits());
        prop_assert_eq!(l, CostLedger::new(2, 2, 0));
    }

    #[test]
    fn degenerate_problem_is_exact(
        c in -100.0..100.0f64,
        d in 1usize..6,
        n in 1u32..5,
        m in 1u32..5,
        t in 0.0..1.0f64,
        seed in any::<u64>(),
    ) {
        let p = heat(d, Nonlinearity::zero(), InitialValue::Constant(c));
        let x = vec![0.5; d];
        let mut l = CostLedger::ZERO;
        let v = mlp_estimate(&p, t, &x, MlpLevel::new(n, m).unwrap(), &StreamKey::new(seed), &mut l).unwrap();
        prop_assert_eq!(v.to_bits(), c.to_bits());
    }

    #[test]
    fn time_zero_returns_initial_value(
        f in nonlinearity(),
        g in initial_value(),
        x in point(3),
        n in 1u32..5,
        m in 1u32..4,
        seed in any::<u64>(),
    ) {
        let p = heat(3, f, g.clone());
        let mut l = CostLedger::ZERO;
        let v = mlp_estimate(&p, 0.0, &x, MlpLevel::new(n, m).unwrap(), &StreamKey::new(seed), &mut l).unwrap();
        prop_assert_eq!(v.to_bits(), g.eval(&x).to_bits());
    }

    #[test]
    fn measured_cost_equals_prediction(
        f in nonlinearity(),
        g in initial_value(),
        d in 1usize..8,
        n in 0u32..5,
        m in 1u32..5,
        seed in any::<u64>(),
    ) {
        let p = heat(d, f, g);
        let level = MlpLevel::new(n, m).unwrap();
        let mut l = CostLedger::ZERO;
        mlp_estimate(&p, 0.7, &vec![0.2; d], level, &StreamKey::new(seed), &mut l).unwrap();
        prop_assert_eq!(l, predict_cost(level, d).unwrap());
    }

    #[test]
    fn estimates_are_deterministic(seed in any::<u64>(), path in prop::collection::vec(any::<i64>(), 0..4)) {
        let p = heat(2, clamped_allen_cahn(), InitialValue::LogHalfOnePlusNormSq);
        let key = StreamKey::with_path(seed, &path);
        let level = MlpLevel::new(3, 3).unwrap();
        let (mut a, mut b) = (CostLedger::ZERO, CostLedger::ZERO);
        let va = mlp_estimate(&p, 1.0, &[0.3, 0.4], level, &key, &mut a).unwrap();
        let vb = mlp_estimate(&p, 1.0, &[0.3, 0.4], level, &key, &mut b).unwrap();
        prop_assert_eq!(va.to_bits(), vb.to_bits());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn hopf_shift_invariance(c in -50.0..50.0f64, x0 in -3.0..3.0f64, x1 in -3.0..3.0f64) {
        let half_sq = |v: &[f64]| 0.5 * v.iter().map(|a| a * a).sum::<f64>();
        let shifted = |v: &[f64]| half_sq(v) + c;
        let opts = HopfOptions::default();
        let base = hopf_hj(ConvexTerm::new(&half_sq), ConvexTerm::new(&half_sq), 1.0, &[x0, x1], &opts).unwrap();
        let moved = hopf_hj(ConvexTerm::new(&shifted), ConvexTerm::new(&half_sq), 1.0, &[x0, x1], &opts).unwrap();
        prop_assert!((moved.value - base.value - c).abs() <= 1e-8);
    }

    #[test]
    fn uniform_draws_ignore_generation_order(seed in any::<u64>(), comps in prop::collection::vec(any::<i64>(), 1..32)) {
        let root = StreamKey::new(seed);
        let mut l = CostLedger::ZERO;
        let forward: Vec<u64> = comps.iter().map(|&c| root.derive(c).uniform01(0, &mut l).to_bits()).collect();
        let mut backward: Vec<u64> = comps.iter().rev().map(|&c| root.derive(c).uniform01(0, &mut l).to_bits()).collect();
        backward.reverse();
        prop_assert_eq!(forward, backward);
        prop_assert_eq!(l.scalar_draws, 2 * comps.len() as u64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn thread_count_does_not_change_results(seed in any::<u64>(), threads in 2usize..9) {
        let p = heat(2, clamped_allen_cahn(), InitialValue::NormSq);
        let key = StreamKey::new(seed);
        let level = MlpLevel::new(3, 4).unwrap();
        let one = mlp_estimate_parallel(&p, 1.0, &[0.0, 1.0], level, &key, 1).unwrap();
        let many = mlp_estimate_parallel(&p, 1.0, &[0.0, 1.0], level, &key, threads).unwrap();
        prop_assert_eq!(one.value.to_bits(), many.value.to_bits());
        prop_assert_eq!(one.ledger, many.ledger);
    }
}

#[test]
fn predicted_cost_is_monotone_and_affine_in_dimension() {
    for m in 1..=5 {
        for n in 0..=5 {
            let here = predict_cost(MlpLevel::new(n, m).unwrap(), 1).unwrap();
            if m >= 2 {
                let deeper = predict_cost(MlpLevel::new(n + 1, m).unwrap(), 1).unwrap();
                assert!(deeper.total() > here.total(), "n={n} M={m}");
            }
            if n >= 2 {
                let wider = predict_cost(MlpLevel::new(n, m + 1).unwrap(), 1).unwrap();
                assert!(wider.total() > here.total(), "n={n} M={m}");
            }
            let d1 = predict_cost(MlpLevel::new(n, m).unwrap(), 1).unwrap().scalar_draws;
            let d2 = predict_cost(MlpLevel::new(n, m).unwrap(), 2).unwrap().scalar_draws;
            for d in [5usize, 17, 100] {
                let dd = predict_cost(MlpLevel::new(n, m).unwrap(), d).unwrap().scalar_draws;
                assert_eq!(dd, d1 + (d as u64 - 1) * (d2 - d1));
            }
        }
    }
}
