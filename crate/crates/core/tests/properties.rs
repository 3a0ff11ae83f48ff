mod common;

use std::path::Path;

use approx::assert_relative_eq;
use lda_handover::benchmarks::{oracle_dp, OracleBudget};
use lda_handover::lda::project_simplex_rows;
use lda_handover::net_model::{g_gradient, g_value, Association, DelayModel, SlotCapacity};
use lda_handover::scenarios::{build_scenario, ScenarioConfig, ScenarioKind};
use proptest::prelude::*;

fn row_stochastic(ues: usize, bss: usize) -> impl Strategy<Value = Association> {
    prop::collection::vec(0.01f64..1.0, ues * bss).prop_map(move |raw| {
        let mut v = raw;
        for row in v.chunks_mut(bss) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
        }
        Association::from_values(ues, bss, v).unwrap()
    })
}

fn capacities(ues: usize, bss: usize) -> impl Strategy<Value = SlotCapacity> {
    prop::collection::vec(5.0f64..9.0, ues * bss)
        .prop_map(move |c| SlotCapacity::from_log_capacity(ues, bss, c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn objective_is_concave(
        cap in capacities(3, 4),
        x in row_stochastic(3, 4),
        y in row_stochastic(3, 4),
        lam in 0.0f64..1.0,
    ) {
        let mid: Vec<f64> = x.values().iter().zip(y.values())
            .map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
        let mid = Association::from_values(3, 4, mid).unwrap();
        let lhs = g_value(&cap, &mid);
        let rhs = lam * g_value(&cap, &x) + (1.0 - lam) * g_value(&cap, &y);
        prop_assert!(lhs >= rhs - 1e-9, "{lhs} < {rhs}");
    }

    #[test]
    fn gradient_matches_finite_differences(cap in capacities(2, 3), x in row_stochastic(2, 3)) {
        let grad = g_gradient(&cap, &x);
        let reference = reference_gradient(&cap, &x);
        for (a, b) in grad.iter().zip(&reference) {
            prop_assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn projection_is_feasible_and_nonexpansive(
        a in prop::collection::vec(-3.0f64..3.0, 12),
        b in prop::collection::vec(-3.0f64..3.0, 12),
    ) {
        let pa = project_simplex_rows(a.clone(), 3, 4);
        let pb = project_simplex_rows(b.clone(), 3, 4);
        prop_assert!(pa.check_feasible().is_ok());
        let before: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        prop_assert!(pa.l2_distance(&pb) <= before + 1e-9);
        // Idempotent on feasible points.
        let again = project_simplex_rows(pa.values().to_vec(), 3, 4);
        prop_assert!(again.l2_distance(&pa) < 1e-12);
    }

    #[test]
    fn weighted_norm_is_a_norm(
        a in prop::collection::vec(0.0f64..1.0, 6),
        x in row_stochastic(2, 3),
        y in row_stochastic(2, 3),
        z in row_stochastic(2, 3),
    ) {
        let d = DelayModel::new_static(2, 3, 1.0, a.clone()).unwrap();
        prop_assert_eq!(d.a_norm(0, &x, &x), 0.0);
        prop_assert!((d.a_norm(0, &x, &y) - d.a_norm(0, &y, &x)).abs() < 1e-12);
        prop_assert!(d.a_norm(0, &x, &z) <= d.a_norm(0, &x, &y) + d.a_norm(0, &y, &z) + 1e-12);
        let amax = a.iter().cloned().fold(0.0, f64::max);
        prop_assert!(d.a_norm(0, &x, &y) <= amax.sqrt() * x.l2_distance(&y) + 1e-12);
    }
}

/// Central differences of `sum x log10 c - sum y log10 y`, evaluated
/// off the simplex.
fn reference_gradient(cap: &SlotCapacity, x: &Association) -> Vec<f64> {
    let (ues, bss) = (cap.ues, cap.bss);
    let f = |v: &[f64]| {
        let linear: f64 = v.iter().zip(&cap.log_capacity).map(|(a, c)| a * c).sum();
        let load: f64 = (0..bss)
            .map(|j| {
                let y: f64 = (0..ues).map(|i| v[i * bss + j]).sum();
                y * y.log10()
            })
            .sum();
        linear - load
    };
    let h = 1e-6;
    (0..ues * bss)
        .map(|n| {
            let mut up = x.values().to_vec();
            let mut down = up.clone();
            up[n] += h;
            down[n] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

#[test]
fn oracle_matches_enumeration_on_small_scenarios() {
    for (kind, seed) in [(ScenarioKind::Static, 1), (ScenarioKind::Volatile, 2), (ScenarioKind::Mobility, 3)] {
        for gamma in [0.0, 2.0, 50.0] {
            let cfg = ScenarioConfig {
                kind,
                ues: 2,
                bss: 3,
                horizon: 4,
                seed,
                gamma,
                volatile_period: 1,
                ..Default::default()
            };
            let s = build_scenario(&cfg, Path::new(".")).unwrap();
            let path = oracle_dp(&s.trace, &s.delay, &OracleBudget::default()).unwrap();
            let (best, _) = common::enumerate_best(&s.trace, &s.delay);
            assert_relative_eq!(path.total_f, best, max_relative = 1e-9);
        }
    }
}

#[test]
fn scenario_generation_is_deterministic() {
    for kind in [ScenarioKind::Static, ScenarioKind::Volatile, ScenarioKind::Mobility] {
        let cfg = ScenarioConfig { kind, ues: 6, bss: 4, horizon: 30, seed: 8, ..Default::default() };
        let a = build_scenario(&cfg, Path::new(".")).unwrap();
        let b = build_scenario(&cfg, Path::new(".")).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.delay.weights_at(7), b.delay.weights_at(7));
    }
}
