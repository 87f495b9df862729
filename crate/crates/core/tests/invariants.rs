//! Property tests of the structural invariants.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use scorelab::densities::{holder_perturbed_quadratic, GaussianMixture, TargetDensity};
use scorelab::dynamics::lipschitz_estimate;
use scorelab::linalg::sym_eigs;
use scorelab::score::{score_jacobian, score_jacobian_via, score_via, Route};
use scorelab::spectral::concentration_set;
use scorelab::tilted::QuadratureSpec;
use scorelab::verify::{fit_time_exponent, holder_norm_estimate, wasserstein2_1d};

fn mixture(w: f64, m0: f64, m1: f64, v0: f64, v1: f64) -> TargetDensity {
    GaussianMixture::new(
        vec![w, 1.0 - w],
        vec![DVector::from_element(1, m0), DVector::from_element(1, m1)],
        vec![DMatrix::from_element(1, 1, v0), DMatrix::from_element(1, 1, v1)],
    )
    .unwrap()
    .into()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn power_law_slope_is_exact(p in -3.0f64..3.0, c in 0.01f64..100.0) {
        let series: Vec<(f64, f64)> = (0..30).map(|i| {
            let t = 1e-4 * 10f64.powf(i as f64 / 15.0);
            (t, c * t.powf(p))
        }).collect();
        let fit = fit_time_exponent(&series, (1e-4, 1e-2), p, 0.15).unwrap();
        prop_assert!((fit.fitted_slope - p).abs() < 1e-10);
        prop_assert!(fit.verdict.ok());
    }

    #[test]
    fn w2_triangle_inequality(a in prop::collection::vec(-5.0f64..5.0, 1..40),
                              b in prop::collection::vec(-5.0f64..5.0, 1..40),
                              c in prop::collection::vec(-5.0f64..5.0, 1..40)) {
        let ab = wasserstein2_1d(&a, &b).unwrap().value;
        let bc = wasserstein2_1d(&b, &c).unwrap().value;
        let ac = wasserstein2_1d(&a, &c).unwrap().value;
        prop_assert!(ac <= ab + bc + 1e-9, "{ac} > {ab} + {bc}");
        prop_assert!(wasserstein2_1d(&a, &a).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn mixture_routes_agree(w in 0.1f64..0.9, m0 in -2.0f64..0.0, m1 in 0.0f64..2.0,
                            v0 in 0.1f64..2.0, v1 in 0.1f64..2.0,
                            lt in -6.0f64..1.5, x in -3.0f64..3.0) {
        let d = mixture(w, m0, m1, v0, v1);
        let q = QuadratureSpec::default();
        let t = lt.exp();
        let x = DVector::from_element(1, x);
        let a = score_via(&d, t, &x, &q, Route::ClosedForm).unwrap()[0];
        let b = score_via(&d, t, &x, &q, Route::Quadrature).unwrap()[0];
        prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {b}");
        let ja = score_jacobian_via(&d, t, &x, &q, Route::ClosedForm).unwrap()[(0, 0)];
        let jb = score_jacobian_via(&d, t, &x, &q, Route::Quadrature).unwrap()[(0, 0)];
        prop_assert!((ja - jb).abs() <= 1e-5 * ja.abs().max(1.0), "{ja} vs {jb}");
    }

    #[test]
    fn jacobian_is_symmetric_and_eigs_reconstruct(lt in -5.0f64..1.0, x0 in -2.0f64..2.0, x1 in -2.0f64..2.0) {
        let d: TargetDensity = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![DVector::from_vec(vec![-1.0, 0.5]), DVector::from_vec(vec![1.0, -0.5])],
            vec![DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.3]), DMatrix::from_row_slice(2, 2, &[0.4, -0.1, -0.1, 0.6])],
        ).unwrap().into();
        let j = score_jacobian(&d, lt.exp(), &DVector::from_vec(vec![x0, x1]), &QuadratureSpec::default()).unwrap();
        prop_assert!((j[(0, 1)] - j[(1, 0)]).abs() < 1e-12);
        let e = sym_eigs(&j).unwrap();
        let back = &e.vectors * DMatrix::from_diagonal(&DVector::from_vec(e.values.clone())) * e.vectors.transpose();
        prop_assert!((back - &j).amax() < 1e-9 * j.amax().max(1.0));
        prop_assert!(e.values[0] <= e.values[1]);
    }

    #[test]
    fn lipschitz_dominates_every_pair(ys in prop::collection::vec(-3.0f64..3.0, 3..30)) {
        let pairs: Vec<(DVector<f64>, DVector<f64>)> = ys.iter().enumerate()
            .map(|(i, &y)| (DVector::from_element(1, i as f64 * 0.1), DVector::from_element(1, y))).collect();
        let l = lipschitz_estimate(&pairs).unwrap().value;
        for i in 0..pairs.len() {
            for j in 0..i {
                let q = (pairs[i].1[0] - pairs[j].1[0]).abs() / (pairs[i].0[0] - pairs[j].0[0]).abs();
                prop_assert!(q <= l * (1.0 + 1e-12));
            }
        }
    }
}

#[test]
fn holder_estimate_is_monotone_under_refinement() {
    let d = holder_perturbed_quadratic(2.0, 0.5, 0.5, 1).unwrap();
    let q = QuadratureSpec::default();
    let t = 1e-3;
    let set = concentration_set(&d, t, 0.05, 20_000, 1).unwrap();
    let mut prev = 0.0;
    for (np, pairs) in [(8, 8), (16, 16), (32, 32), (64, 64)] {
        let h = holder_norm_estimate(&d, t, &set, 1.0, np, pairs, 1, &q).unwrap();
        assert!(h.norm >= prev - 1e-12, "{} < {prev}", h.norm);
        prev = h.norm;
    }
}
