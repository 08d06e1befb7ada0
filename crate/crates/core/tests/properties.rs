//! Invariants over random inputs.

use cooprec::ccr::{solve_ccr, CcrConfig};
use cooprec::ccrcache::{g_function, profit_max_baseline};
use cooprec::metrics::{cache_hit_rate, quality_of_recommendations, relative_gains};
use cooprec::model::{self, CacheVector, RecommendationMatrix, UtilityCoefficients};
use cooprec::projection::{project_cache_capacity, project_capped_simplex, CappedSimplexSpec};
use cooprec::scenario::{generate, scenario_from_json, scenario_to_json, GeneratorParams};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn vector(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, 1..max_len)
}

proptest! {
    #[test]
    fn capped_simplex_projection_is_feasible_and_idempotent(v in vector(40), frac in 0.0..1.0f64) {
        let target = (frac * v.len() as f64).floor().max(1.0);
        let spec = CappedSimplexSpec::new(target, v.len()).unwrap();
        let w = project_capped_simplex(&v, &spec).unwrap();
        prop_assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!((w.iter().sum::<f64>() - target).abs() < 1e-9);
        let again = project_capped_simplex(&w, &spec).unwrap();
        for (a, b) in w.iter().zip(&again) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn capped_simplex_projection_is_nearest(v in vector(12), frac in 0.0..1.0f64, seed in any::<u64>()) {
        let n = v.len();
        let target = (frac * n as f64).floor().max(1.0);
        let spec = CappedSimplexSpec::new(target, n).unwrap();
        let w = project_capped_simplex(&v, &spec).unwrap();
        let dist = |p: &[f64]| p.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        // Any other feasible point, here a projected pseudo-random one, is no closer.
        let other_raw: Vec<f64> = (0..n).map(|i| ((seed >> (i % 60)) & 7) as f64 / 7.0).collect();
        let other = project_capped_simplex(&other_raw, &spec).unwrap();
        prop_assert!(dist(&w) <= dist(&other) + 1e-9);
    }

    #[test]
    fn cache_projection_respects_capacity(v in vector(30), capacity in 0.5..10.0f64) {
        let w = project_cache_capacity(&v, capacity).unwrap();
        prop_assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!(w.iter().sum::<f64>() <= capacity + 1e-9);
        let clipped: Vec<f64> = v.iter().map(|x| x.clamp(0.0, 1.0)).collect();
        if clipped.iter().sum::<f64>() <= capacity {
            prop_assert_eq!(w, clipped);
        }
    }

    #[test]
    fn generated_scenarios_are_valid_and_round_trip(seed in any::<u64>(), users in 1..6usize, contents in 3..15usize) {
        let s = generate(&GeneratorParams::small(users, contents, 2), seed, None).unwrap();
        prop_assert!(s.validate().is_ok());
        let back = scenario_from_json(&scenario_to_json(&s).unwrap()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn summed_utilities_do_not_depend_on_the_fee(seed in any::<u64>(), rho in 0.01..0.95f64, raw in prop::collection::vec(0.0..1.0f64, 24)) {
        let s = generate(&GeneratorParams::small(3, 8, 2), seed, None).unwrap();
        let y = Array2::from_shape_vec((3, 8), raw).unwrap();
        let at = |r: f64| {
            let c = UtilityCoefficients::from_scenario(&s.with_rho(r).unwrap());
            c.cp_utility(y.view()) + c.cdn_utility(y.view())
        };
        prop_assert!((at(rho) - at(0.5)).abs() < 1e-12 * at(0.5).abs().max(1.0));
    }

    #[test]
    fn g_is_affine_in_z(seed in any::<u64>(), raw in prop::collection::vec(0.0..1.0f64, 24), t in -2.0..2.0f64) {
        let s = generate(&GeneratorParams::small(3, 8, 2), seed, None).unwrap();
        let y = RecommendationMatrix::new(Array2::from_shape_vec((3, 8), raw.clone()).unwrap()).unwrap();
        let x = CacheVector::new(Array1::from_iter(raw[..8].iter().map(|v| v * 0.2))).unwrap();
        let z0 = Array2::<f64>::zeros((3, 8));
        let z1 = Array2::from_shape_fn((3, 8), |(u, i)| raw[(u * 5 + i) % 24]);
        let zt = &z1 * t;
        let g = |z: &Array2<f64>| g_function(&s, &x, &y, z.view()).unwrap();
        prop_assert!((g(&zt) - (g(&z0) + t * (g(&z1) - g(&z0)))).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bargaining_outcomes_are_feasible_and_improving(seed in any::<u64>(), users in 1..5usize, contents in 4..12usize, rho in 0.05..0.45f64) {
        let s = generate(&GeneratorParams::small(users, contents, 2), seed, None).unwrap().with_rho(rho).unwrap();
        let o = solve_ccr(&s, &CcrConfig::default()).unwrap();
        prop_assert!(o.y_star.is_row_feasible(&s.users.rec_count, 1e-9));
        let gains = relative_gains(&o);
        if o.is_agreement() {
            prop_assert!(o.cp_gain > 0.0 && o.cdn_gain > 0.0);
            prop_assert!(gains.cp > 0.0 && gains.cdn > 0.0);
            // The reported utilities are the model's own.
            let cp = model::cp_utility(&s, &o.y_star).unwrap();
            prop_assert!((cp - o.cp_utility).abs() < 1e-9 * cp.abs().max(1.0));
        } else {
            prop_assert_eq!(o.y_star.as_array(), &s.baseline.recommendations.mapv(f64::from));
            prop_assert_eq!(gains.cp, 0.0);
        }
        let hit = cache_hit_rate(&s, o.y_star.view(), cooprec::metrics::baseline_caching_matrix(&s).view()).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&hit.rate));
        let q = quality_of_recommendations(&s, o.y_star.view()).unwrap();
        prop_assert!(q.per_user_min <= q.aggregate + 1e-12 && q.aggregate <= q.per_user_max + 1e-12);
    }

    #[test]
    fn profit_max_is_feasible_and_stationary(seed in any::<u64>(), users in 1..5usize, contents in 4..12usize) {
        let s = generate(&GeneratorParams::small(users, contents, 2), seed, None).unwrap();
        let pm = profit_max_baseline(&s).unwrap();
        prop_assert!(pm.stationary);
        prop_assert!(pm.cache.is_feasible(s.topology.capacities[0]));
        for (u, row) in pm.recommendations.rows().into_iter().enumerate() {
            prop_assert_eq!(row.iter().map(|&v| v as usize).sum::<usize>(), s.users.rec_count[u]);
        }
        prop_assert!((pm.cp_utility + pm.cdn_utility - pm.aggregate_profit).abs() < 1e-12);
    }
}
