//! Semigroup property of the OU marginals and Kolmogorov–Smirnov checks of
//! the samplers against closed-form CDFs.

use nalgebra::{DMatrix, DVector};

use scorelab::densities::{parse_density_spec, GaussianMixture, TargetDensity};
use scorelab::forward::{marginal_mixture, sample_normalized_marginal};
use scorelab::rng::stream;
use scorelab::score::score;
use scorelab::tilted::QuadratureSpec;

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

// 1% critical value of the one-sample KS statistic.
fn ks_critical(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

fn mix2() -> GaussianMixture {
    GaussianMixture::new(
        vec![0.4, 0.6],
        vec![DVector::from_element(1, -1.0), DVector::from_element(1, 1.0)],
        vec![DMatrix::from_element(1, 1, 0.25), DMatrix::from_element(1, 1, 0.5)],
    )
    .unwrap()
}

#[test]
fn mixture_marginals_compose() {
    let m = mix2();
    for (s, tau) in [(0.1, 0.3), (0.01, 2.0), (1.5, 0.5)] {
        let two = marginal_mixture(&marginal_mixture(&m, s).unwrap(), tau).unwrap();
        let one = marginal_mixture(&m, s + tau).unwrap();
        for k in 0..2 {
            assert!((two.means()[k][0] - one.means()[k][0]).abs() < 1e-14);
            assert!((two.covariances()[k][(0, 0)] - one.covariances()[k][(0, 0)]).abs() < 1e-14);
        }
        for x in [-2.0, -0.3, 0.7, 2.5] {
            let x = DVector::from_element(1, x);
            assert!((two.grad_log_pdf(&x)[0] - one.grad_log_pdf(&x)[0]).abs() < 1e-12);
        }
    }
}

#[test]
fn quadrature_score_composes_for_gaussian_data() {
    // N(0, 2) is closed under the semigroup: its time-s marginal is again
    // Gaussian, so the quadrature score of the marginal must match.
    let q = QuadratureSpec::default();
    let g = |var: f64| -> TargetDensity {
        parse_density_spec(&format!(
            "family = \"perturbed\"\ndim = 1\n[potential]\nkind = \"quadratic\"\nalpha = {}\n[assumptions]\nalpha = {}\nbeta = 1.0\nholder_K = 1.0\nsupport = \"full\"\ncondition2 = \"bounded_a\"\n",
            1.0 / var,
            1.0 / var
        ))
        .unwrap()
    };
    let s: f64 = 0.4;
    let c = (-s).exp();
    let var_s = 2.0 * c * c + 1.0 - c * c;
    for tau in [0.05, 0.5] {
        for x in [-1.3, 0.2, 2.1] {
            let x = DVector::from_element(1, x);
            let direct = score(&g(2.0), s + tau, &x, &q).unwrap()[0];
            let composed = score(&g(var_s), tau, &x, &q).unwrap()[0];
            assert!((direct - composed).abs() < 1e-8, "{direct} vs {composed}");
        }
    }
}

#[test]
fn mixture_marginal_samples_pass_ks() {
    let m = mix2();
    let d: TargetDensity = m.clone().into();
    for (k, tau) in [0.0, 0.2, 1.0].into_iter().enumerate() {
        let mt = marginal_mixture(&m, tau).unwrap();
        let xs: Vec<f64> = sample_normalized_marginal(&d, tau, &mut stream(5, &[k as u64]), 5000).unwrap().iter().map(|v| v[0]).collect();
        let cdf = |x: f64| {
            (0..2).map(|j| mt.weights()[j] * normal_cdf((x - mt.means()[j][0]) / mt.covariances()[j][(0, 0)].sqrt())).sum::<f64>()
        };
        let ks = ks_statistic(xs, cdf);
        assert!(ks < ks_critical(5000), "tau {tau}: KS {ks}");
    }
}

#[test]
fn uniform_marginal_samples_pass_ks() {
    let d = TargetDensity::uniform_interval(-1.0, 1.0).unwrap();
    let tau: f64 = 0.3;
    let (c, sd) = ((-tau).exp(), (1.0 - (-2.0 * tau).exp()).sqrt());
    // c·U + sd·Z with U uniform on [−1, 1]: integrate the normal CDF over U.
    let cdf = |x: f64| {
        let n = 2000;
        (0..n).map(|i| normal_cdf((x - c * (-1.0 + 2.0 * (i as f64 + 0.5) / n as f64)) / sd)).sum::<f64>() / n as f64
    };
    let xs: Vec<f64> = sample_normalized_marginal(&d, tau, &mut stream(6, &[]), 4000).unwrap().iter().map(|v| v[0]).collect();
    let ks = ks_statistic(xs, cdf);
    assert!(ks < ks_critical(4000), "KS {ks}");
}

#[test]
fn tabulated_sampler_passes_ks_on_gaussian_potential() {
    let d = parse_density_spec(
        "family = \"perturbed\"\ndim = 1\n[potential]\nkind = \"quadratic\"\nalpha = 2.0\n[assumptions]\nalpha = 2.0\nbeta = 1.0\nholder_K = 1.0\nsupport = \"full\"\ncondition2 = \"bounded_a\"\n",
    )
    .unwrap();
    let xs: Vec<f64> = sample_normalized_marginal(&d, 0.0, &mut stream(7, &[]), 5000).unwrap().iter().map(|v| v[0]).collect();
    let ks = ks_statistic(xs, |x| normal_cdf(x * 2f64.sqrt()));
    assert!(ks < ks_critical(5000), "KS {ks}");
}
