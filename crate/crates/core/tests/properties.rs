use essspec::alpha::{alpha_derivative, alpha_smatrix};
use essspec::hankel::{gamma_matrix, geometric_grid};
use essspec::linalg;
use essspec::opcore::{build_model, ModelSpec};
use essspec::pcfunc::{self, Background, PiecewiseFn};
use essspec::resolvent::boundary_value_closed_form;
use essspec::scatter1d::smatrix_transfer;
use essspec::tolerances::Tunables;
use proptest::prelude::*;

fn potential() -> impl Strategy<Value = Vec<(i64, f64)>> {
    prop::collection::btree_map(-3i64..=3, -2.0f64..2.0, 1..4).prop_map(|m| m.into_iter().collect())
}

fn closed_form_alpha(spec: &ModelSpec, lambda: f64) -> Option<(f64, f64)> {
    let pair = build_model(spec).ok()?;
    let bv = boundary_value_closed_form(&pair, lambda, &Tunables::default()).ok()?;
    let d = alpha_derivative(&bv, &pair.j).ok()?.value;
    let s = alpha_smatrix(&bv, &pair.j).ok()?.value;
    Some((d, s))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn transfer_smatrix_is_unitary_and_reciprocal(pot in potential(), lambda in -1.8f64..1.8) {
        let sc = smatrix_transfer(&pot, lambda, &Tunables::default()).unwrap();
        let t2 = sc.t.norm_sqr();
        prop_assert!((t2 + sc.r_plus.norm_sqr() - 1.0).abs() < 1e-9);
        prop_assert!((t2 + sc.r_minus.norm_sqr() - 1.0).abs() < 1e-9);
        // Columns of a unitary 2x2 are orthogonal.
        prop_assert!((sc.t.conj() * sc.r_plus + sc.r_minus.conj() * sc.t).norm() < 1e-9);
        prop_assert!(sc.unitarity_defect < 1e-9);
        prop_assert!(sc.reciprocity_defect < 1e-9);
    }

    #[test]
    fn alpha_lies_in_unit_interval(pot in potential(), lambda in -1.8f64..1.8) {
        let spec = ModelSpec::lattice(8, &pot);
        if let Some((d, s)) = closed_form_alpha(&spec, lambda) {
            prop_assert!((-1e-10..=1.0 + 1e-6).contains(&d), "alpha = {d}");
            prop_assert!((d - s).abs() < 1e-8);
        }
    }

    #[test]
    fn bridge_matches_transfer_norm(v in 0.05f64..2.0, lambda in -1.8f64..1.8) {
        let spec = ModelSpec::delta(8, v);
        let (a, _) = closed_form_alpha(&spec, lambda).unwrap();
        let sc = smatrix_transfer(&spec.potential, lambda, &Tunables::default()).unwrap();
        let sv = linalg::singular_values_c(&(&sc.s - &linalg::identity_c(2)).view()).unwrap();
        prop_assert!((0.5 * sv[0] - a).abs() < 1e-6);
    }

    #[test]
    fn prediction_scales_with_symbol(
        k1 in -2.0f64..2.0, k2 in -2.0f64..2.0, l1 in -1.5f64..-0.2, l2 in 0.2f64..1.5, c in -3.0f64..3.0,
    ) {
        let phi = PiecewiseFn::steps(&[(l1, k1), (l2, k2)], Background::Zero);
        let alpha = |l: f64| {
            let b = 0.7 / (2.0 * (l / 2.0).acos().sin());
            Ok(b / (1.0 + b * b).sqrt())
        };
        let window = pcfunc::band_window(&Tunables::default());
        let base = pcfunc::predicted_ess_spectrum(&phi, alpha, window).unwrap();
        let scaled = pcfunc::predicted_ess_spectrum(&phi.scaled(c), alpha, window).unwrap();
        let r0 = base.real_radius().unwrap();
        let r1 = scaled.real_radius().unwrap();
        prop_assert!((r1 - c.abs() * r0).abs() <= 1e-12 * (1.0 + r0));
    }

    #[test]
    fn geometric_grid_is_increasing_and_positive(n in 8usize..300, cutoff in 10.0f64..500.0) {
        let (t, w) = geometric_grid(n, cutoff).unwrap();
        prop_assert_eq!(t.len(), n);
        prop_assert!(t[0] > 0.0 && *t.last().unwrap() < cutoff);
        prop_assert!(t.windows(2).all(|p| p[0] < p[1]));
        prop_assert!(w.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn model_spec_json_round_trip(pot in potential(), n in 3usize..200, seed in any::<u64>()) {
        let mut spec = ModelSpec::lattice(n, &pot);
        spec.seed = seed;
        prop_assert_eq!(ModelSpec::from_json(&spec.to_json()).unwrap(), spec);
    }

    #[test]
    fn piecewise_json_round_trip(jumps in prop::collection::vec((-1.9f64..1.9, -3.0f64..3.0), 0..5)) {
        let mut jumps = jumps;
        jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
        jumps.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-3);
        let phi = PiecewiseFn::steps(&jumps, Background::Zero);
        let text = serde_json::to_string(&phi).unwrap();
        prop_assert_eq!(PiecewiseFn::from_json(&text).unwrap(), phi);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn nystrom_matrix_is_symmetric_and_bounded(n in 8usize..120, cutoff in 10.0f64..200.0) {
        let g = gamma_matrix(n, cutoff).unwrap();
        let m = &g.matrix;
        let asym = (m - &m.t()).iter().fold(0.0f64, |a, x| a.max(x.abs()));
        prop_assert!(asym <= 1e-12);
        let e = g.eigenvalues().unwrap();
        prop_assert!(e[0] >= -1e-8);
        prop_assert!(*e.last().unwrap() <= std::f64::consts::PI + 1e-6);
    }
}
