use proptest::prelude::*;

use biorefinery::milp::{MilpInstance, RowSense, RowTag, VarKind, VarRole};
use biorefinery::model::{FeedstockId, Moisture};
use biorefinery::pool::run_indexed;
use biorefinery::runner::metrics_from_series;
use biorefinery::saa::{sample, EmpiricalDist};
use biorefinery::sequencing::{rule1_moisture, rule2_quality, Quality};
use biorefinery::solver::{oracle_solve, HighsBackend, MilpBackend, OracleLimits, SolveRequest, SolveStatus};

fn random_milp(binaries: usize, costs: &[f64], rows: &[(Vec<f64>, f64)]) -> MilpInstance {
    let mut inst = MilpInstance::default();
    let mut vars = Vec::new();
    for (k, &c) in costs.iter().enumerate() {
        let kind = if k < binaries { VarKind::Binary } else { VarKind::Continuous };
        let upper = if k < binaries { 1.0 } else { 3.0 };
        vars.push(inst.add_var(VarRole::Other(format!("v{k}")), kind, 0.0, upper, c));
    }
    for (coef, rhs) in rows {
        let terms = vars.iter().zip(coef).map(|(&j, &a)| (j, a)).collect();
        inst.add_row(RowTag::Plumbing, terms, RowSense::Le, *rhs);
    }
    inst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rule1_keeps_every_bale(l in 0u32..60, m in 0u32..60, h in 0u32..60) {
        prop_assume!(l + m + h > 0);
        let p = rule1_moisture(l, m, h).unwrap();
        let bales = p.expand();
        prop_assert_eq!(bales.len() as u32, l + m + h);
        for (want, level) in [(l, Moisture::Low), (m, Moisture::Medium), (h, Moisture::High)] {
            prop_assert_eq!(bales.iter().filter(|b| **b == level).count() as u32, want);
        }
    }

    #[test]
    fn rule2_keeps_every_bale(q in 0u32..80, nq in 0u32..80) {
        prop_assume!(q + nq > 0);
        let p = rule2_quality(q, nq).unwrap();
        let bales = p.expand();
        prop_assert_eq!(bales.iter().filter(|b| **b == Quality::Meets).count() as u32, q);
        prop_assert_eq!(bales.iter().filter(|b| **b == Quality::Fails).count() as u32, nq);
    }

    #[test]
    fn metrics_identity_and_scale_free_variation(
        feed in prop::collection::vec(0.0f64..5.0, 1..40),
        scale in 0.1f64..10.0,
        minutes in prop::sample::select(vec![0.25, 1.0, 2.0]),
    ) {
        let on = vec![true; feed.len()];
        let inv = vec![0.0; feed.len()];
        let m = metrics_from_series(&feed, &on, &inv, minutes).unwrap();
        prop_assert!((m.rate * m.time_hours - m.flow).abs() <= 1e-9 * m.flow.max(1.0));
        prop_assert!(m.cov >= 0.0);
        let scaled: Vec<f64> = feed.iter().map(|x| x * scale).collect();
        let s = metrics_from_series(&scaled, &on, &inv, minutes).unwrap();
        prop_assert!((s.cov - m.cov).abs() <= 1e-9);
    }

    #[test]
    fn pool_size_does_not_change_results(count in 0usize..40, pool in 1usize..9) {
        let sequential: Vec<u64> = (0..count).map(|j| (j as u64).wrapping_mul(0x9e37_79b9)).collect();
        let pooled = run_indexed(count, pool, |j| (j as u64).wrapping_mul(0x9e37_79b9));
        prop_assert_eq!(sequential, pooled);
    }

    #[test]
    fn sampling_is_reproducible(seed in any::<u64>(), n in 1usize..50) {
        let d = EmpiricalDist::new(FeedstockId::new("X"), vec![0.5, 0.6, 0.7], vec![1.0, 2.0, 1.0]).unwrap();
        let a = sample(std::slice::from_ref(&d), n, seed).unwrap();
        let b = sample(std::slice::from_ref(&d), n, seed).unwrap();
        prop_assert!(a.values.iter().all(|s| d.support.contains(&s[0])));
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn oracle_pruning_and_highs_agree(
        costs in prop::collection::vec(-5.0f64..5.0, 6),
        rows in prop::collection::vec((prop::collection::vec(-3.0f64..3.0, 6), 0.0f64..4.0), 1..5),
    ) {
        let inst = random_milp(4, &costs, &rows);
        let exhaustive = oracle_solve(&inst, OracleLimits { bound_pruning: false, ..OracleLimits::default() }).unwrap();
        let pruned = oracle_solve(&inst, OracleLimits::default()).unwrap();
        let highs = HighsBackend::new().solve(&SolveRequest::new(&inst)).unwrap();
        // Zero is feasible for every row, so all three must find an optimum.
        prop_assert_eq!(exhaustive.result.status, SolveStatus::Optimal);
        prop_assert_eq!(pruned.result.status, SolveStatus::Optimal);
        prop_assert_eq!(highs.status, SolveStatus::Optimal);
        let e = exhaustive.result.objective.unwrap();
        prop_assert!((pruned.result.objective.unwrap() - e).abs() <= 1e-6);
        prop_assert!((highs.objective.unwrap() - e).abs() <= 1e-6);
    }
}
