use std::f64::consts::PI;

use isoflow_core::geometry::{f_mean_curvatures, index_form, DiscreteCurve};
use isoflow_core::optimize::{enclosed_area, planar_total_area, restore_area, weighted_length, ChordSpline};
use isoflow_core::profiles::{build_profile, check_profile_ode, compare_profiles, ComparisonVerdict, Family};
use isoflow_core::spectrum::{rayleigh_quotient, spectral_gap_1d, SpectralProblem};
use isoflow_core::transport::{build_transport, check_contraction, pushforward_check, TransportOptions};
use isoflow_core::weights::PiecewiseLinear;
use isoflow_core::{Density, Slab, Weight1D};
use proptest::prelude::*;

fn concave_weight() -> impl Strategy<Value = Weight1D> {
    prop_oneof![
        Just(Weight1D::Zero),
        (-2.0..2.0f64).prop_map(|a| Weight1D::affine(a, 0.0)),
        (0.05..2.0f64, -1.0..1.0f64).prop_map(|(k, b)| Weight1D::quadratic(k, b, 0.0)),
    ]
}

fn finite_slab() -> impl Strategy<Value = Slab> {
    (-2.0..1.5f64, 0.2..2.5f64).prop_map(|(a, h)| Slab::new(a, a + h).unwrap())
}

fn random_pl() -> impl Strategy<Value = Weight1D> {
    (prop::collection::vec(-0.9..0.9f64, 1..5), prop::collection::vec(-3.0..3.0f64, 6)).prop_map(
        |(mut inner, mut slopes)| {
            inner.sort_by(f64::total_cmp);
            inner.dedup_by(|a, b| (*a - *b).abs() < 1e-2);
            let mut knots = vec![-1.0];
            knots.extend(inner);
            knots.push(1.0);
            slopes.truncate(knots.len() - 1);
            slopes.sort_by(|a, b| b.total_cmp(a));
            Weight1D::PiecewiseLinear(PiecewiseLinear::from_slopes(knots, 0.0, &slopes).unwrap())
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn perpendicular_beats_parallel(w in concave_weight(), slab in finite_slab(), c in 0.2..2.0f64) {
        let d = Density::new(w.clone(), c, 2, slab).unwrap();
        let perp = build_profile(&d, Family::Perpendicular, 41).unwrap();
        let par = build_profile(&d, Family::Parallel, 41).unwrap();
        let ode = check_profile_ode(&perp, c, 1e-6 * 2.0 * c);
        prop_assert!(ode.max_abs_residual <= 1e-6 * 2.0 * c);
        let ode = check_profile_ode(&par, c, 1e-6);
        prop_assert!(ode.max_signed_residual <= 1e-6);
        let cmp = compare_profiles(&par, &perp).unwrap();
        prop_assert!(cmp.min_difference >= -1e-8);
        prop_assert!(matches!(cmp.verdict, ComparisonVerdict::Strict));
    }

    #[test]
    fn transport_is_monotone_contraction(w in prop_oneof![concave_weight(), random_pl()], c in 0.25..1.5f64) {
        let d = Density::new(w, c, 2, Slab::new(-1.0, 1.0).unwrap()).unwrap();
        let map = build_transport(&d, &TransportOptions { grid_size: 81, ..Default::default() }).unwrap();
        let active: Vec<usize> = (0..map.s.len()).filter(|&i| !map.clipped[i]).collect();
        for w in active.windows(2) {
            prop_assert!(map.rho[w[1]] >= map.rho[w[0]]);
        }
        prop_assert!(check_contraction(&map).certified);
        prop_assert!(map.derivative_identity_residual() <= 1e-8 * map.normalizers.alpha);
        let report = pushforward_check(&map, &[(-0.7, 0.2), (0.1, 0.95)]).unwrap();
        prop_assert!(report.max_residual <= 1e-8);
    }

    #[test]
    fn straight_lines_have_closed_form_curvature(
        w in concave_weight(),
        x0 in -2.0..2.0f64,
        angle in 0.0..PI,
        c in 0.2..2.0f64,
    ) {
        let d = Density::new(w.clone(), c, 2, Slab::new(-1.0, 1.0).unwrap()).unwrap();
        let dir = [angle.cos(), angle.sin()];
        let half = if dir[1].abs() > 1e-3 { (0.9 / dir[1].abs()).min(2.0) } else { 2.0 };
        let p0 = [x0 - half * dir[0], -half * dir[1]];
        let p1 = [x0 + half * dir[0], half * dir[1]];
        let line = DiscreteCurve::segment(p0, p1, 101, [false, false]).unwrap();
        let h = f_mean_curvatures(&d, &line).unwrap();
        for (i, p) in line.points.iter().enumerate() {
            let n = line.normals[i];
            let grad = [-2.0 * c * p[0], w.derivative(p[1]).unwrap() - 2.0 * c * p[1]];
            let expected = -(grad[0] * n[0] + grad[1] * n[1]);
            prop_assert!((h[i] - expected).abs() <= 1e-8 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn index_form_is_symmetric(w in concave_weight(), a in prop::collection::vec(-1.0..1.0f64, 3), b in prop::collection::vec(-1.0..1.0f64, 3)) {
        let d = Density::new(w, 0.5, 2, Slab::new(0.0, 1.0).unwrap()).unwrap();
        let line = DiscreteCurve::segment([0.3, 0.0], [0.3, 1.0], 201, [true, true]).unwrap();
        let eval = |k: &[f64]| -> Vec<f64> {
            line.points.iter().map(|p| k[0] + k[1] * p[1] + k[2] * (PI * p[1]).cos()).collect()
        };
        let (u, v) = (eval(&a), eval(&b));
        let uv = index_form(&d, &line, &u, &v).unwrap().value;
        let vu = index_form(&d, &line, &v, &u).unwrap().value;
        prop_assert!((uv - vu).abs() <= 1e-12 * (1.0 + uv.abs()));
    }

    #[test]
    fn rayleigh_quotient_bounds_the_gap(w in concave_weight(), coeffs in prop::collection::vec(-1.0..1.0f64, 4)) {
        let d = Density::new(w, 0.5, 2, Slab::new(-1.0, 1.0).unwrap()).unwrap();
        let problem = SpectralProblem::new(&d, (-1.0, 1.0), 200).unwrap();
        let gap = spectral_gap_1d(&problem).unwrap();
        let u: Vec<f64> = problem
            .nodes
            .iter()
            .map(|&t| coeffs.iter().enumerate().map(|(k, a)| a * (t * (k + 1) as f64).sin()).sum())
            .collect();
        if let Ok(q) = rayleigh_quotient(&problem, &u) {
            prop_assert!(q >= gap.lambda * (1.0 - 1e-10));
        }
        let q = rayleigh_quotient(&problem, &gap.eigenvector).unwrap();
        prop_assert!((q - gap.lambda).abs() <= 1e-8 * gap.lambda);
    }

    #[test]
    fn restored_chords_are_no_shorter_than_perpendicular(coeffs in prop::collection::vec(-1.5..1.5f64, 8)) {
        let d = Density::new(Weight1D::Zero, 0.5, 2, Slab::new(-1.0, 1.0).unwrap()).unwrap();
        let total = planar_total_area(&d).unwrap();
        let chord = ChordSpline::new(-1.0, 1.0, coeffs).unwrap();
        let restored = restore_area(&d, &chord, 0.5 * total).unwrap();
        prop_assert!((enclosed_area(&d, &restored).unwrap() - 0.5 * total).abs() <= 1e-10 * total);
        let g = 2.0 * (PI / 2.0).sqrt() * libm::erf(1.0 / 2f64.sqrt());
        prop_assert!(weighted_length(&d, &restored).unwrap() >= g - 1e-6);
    }

    #[test]
    fn area_grows_with_translation(coeffs in prop::collection::vec(-1.0..1.0f64, 6), shift in 0.01..1.0f64) {
        let d = Density::new(Weight1D::quadratic(0.5, 0.0, 0.0), 0.5, 2, Slab::new(-1.0, 1.0).unwrap()).unwrap();
        let chord = ChordSpline::new(-1.0, 1.0, coeffs).unwrap();
        let before = enclosed_area(&d, &chord).unwrap();
        let after = enclosed_area(&d, &chord.translated(shift)).unwrap();
        prop_assert!(after > before);
    }
}
