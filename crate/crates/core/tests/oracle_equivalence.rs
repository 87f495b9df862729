use nalgebra::{DMatrix, DVector};
use rand::Rng;
use scorelab::densities::{GaussianMixture, TargetDensity};
use scorelab::rng::stream;
use scorelab::score::{score_and_jacobian, Route};
use scorelab::tilted::QuadratureSpec;

pub fn mixture_1d() -> TargetDensity {
    GaussianMixture::new(
        vec![0.4, 0.6],
        vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
        vec![DMatrix::from_element(1, 1, 0.25), DMatrix::from_element(1, 1, 0.5)],
    )
    .unwrap()
    .into()
}

pub fn mixture_2d() -> TargetDensity {
    GaussianMixture::new(
        vec![0.3, 0.7],
        vec![DVector::from_vec(vec![1.0, 0.5]), DVector::from_vec(vec![-0.5, -1.0])],
        vec![
            DMatrix::from_row_slice(2, 2, &[0.4, 0.1, 0.1, 0.3]),
            DMatrix::from_row_slice(2, 2, &[0.6, -0.2, -0.2, 0.5]),
        ],
    )
    .unwrap()
    .into()
}

fn worst_deviation(density: &TargetDensity, seed: u64) -> (f64, f64) {
    let spec = QuadratureSpec::default();
    let mut rng = stream(seed, &[0]);
    let d = density.dim();
    let mut worst = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let t = 10f64.powf(rng.gen_range(-3.0..5f64.log10()));
        let x = DVector::from_fn(d, |_, _| rng.gen_range(-2.5..2.5));
        let (va, ja, _) = score_and_jacobian(density, t, &x, &spec, Route::ClosedForm).unwrap();
        let (vb, jb, _) = score_and_jacobian(density, t, &x, &spec, Route::Quadrature).unwrap();
        let dv = (&va - &vb).norm() / va.norm();
        let dj = (&ja - &jb).norm() / ja.norm();
        if dv > worst.0 || dj > worst.1 {
            eprintln!("t={t:.3e} x={:?} dv={dv:.2e} dj={dj:.2e}", x.as_slice());
        }
        worst = (worst.0.max(dv), worst.1.max(dj));
    }
    worst
}

#[test]
fn closed_form_and_quadrature_agree_1d() {
    let (dv, dj) = worst_deviation(&mixture_1d(), 1);
    assert!(dv <= 1e-6 && dj <= 1e-5, "value {dv:e}, jacobian {dj:e}");
}

#[test]
fn closed_form_and_quadrature_agree_2d() {
    let (dv, dj) = worst_deviation(&mixture_2d(), 2);
    assert!(dv <= 1e-6 && dj <= 1e-5, "value {dv:e}, jacobian {dj:e}");
}
