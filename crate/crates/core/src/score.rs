//! Score s(t,x) = ∇ log p_t(x), its Jacobian and higher derivatives.
//!
//! With c = e^{−t} and v = 1 − e^{−2t}, log Q_t r is a cumulant generating
//! function of the tilted measure in the variable c·x/v, so
//!
//! * s = −x + (c/v)(mean − c x),
//! * ∇s = −Id + (c/v)² Cov − (c²/v) Id,
//! * ∇^j(s + Id) = (c/v)^{j+1} κ_{j+1} for j ≥ 2.
//!
//! Mixtures additionally get the closed-form marginal for s and ∇s, and a
//! Hermite route for higher derivatives: ∇^l Q_t r / Q_t r equals
//! (c/√v)^l E[He_l(w)] with w = (y − c x)/√v, and the derivatives of log Q_t r
//! follow from the moment-to-cumulant partition sum.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::densities::TargetDensity;
use crate::error::{unsupported, Result};
use crate::forward::marginal_mixture;
use crate::linalg::{cumulant_from_moments, Tensor};
use crate::tilted::{mixture_tilt, ou_factors, quadrature_moments, QuadratureSpec, TiltedMeasure};

pub const MAX_HIGHER_ORDER: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMethod {
    ClosedForm,
    TiltedQuadrature,
    FiniteDifference,
}

/// Which pipeline to use. `Auto` takes the closed form when available.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    #[default]
    Auto,
    ClosedForm,
    Quadrature,
}

impl Route {
    fn method(self, density: &TargetDensity) -> Result<ScoreMethod> {
        match (self, density) {
            (Route::Auto, TargetDensity::Mixture(_)) | (Route::ClosedForm, TargetDensity::Mixture(_)) => Ok(ScoreMethod::ClosedForm),
            (Route::ClosedForm, other) => unsupported(format!("no closed form for {}", other.label())),
            _ => Ok(ScoreMethod::TiltedQuadrature),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScoreEvaluation {
    pub t: f64,
    pub x: Vec<f64>,
    pub value: Vec<f64>,
    /// Row-major d×d.
    pub jacobian: Vec<Vec<f64>>,
    /// ∇^j(s + Id) for j = 2..=k, each flattened row-major with order j + 1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub higher: Option<Vec<Vec<f64>>>,
    pub method: ScoreMethod,
    pub err_estimate: f64,
}

impl ScoreEvaluation {
    pub fn jacobian_matrix(&self) -> DMatrix<f64> {
        let d = self.x.len();
        DMatrix::from_fn(d, d, |i, j| self.jacobian[i][j])
    }
}

fn value_from_tilt(m: &TiltedMeasure, t: f64) -> DVector<f64> {
    let (c, v) = (((-t).exp()), -(-2.0 * t).exp_m1());
    -&m.x + &m.mean_offset * (c / v)
}

fn jacobian_from_tilt(m: &TiltedMeasure, t: f64) -> DMatrix<f64> {
    let (c, v) = (((-t).exp()), -(-2.0 * t).exp_m1());
    let d = m.x.len();
    let j = m.covariance() * (c * c / (v * v)) - DMatrix::identity(d, d) * (1.0 + c * c / v);
    (&j + j.transpose()) * 0.5
}

pub fn score(density: &TargetDensity, t: f64, x: &DVector<f64>, spec: &QuadratureSpec) -> Result<DVector<f64>> {
    score_via(density, t, x, spec, Route::Auto)
}

pub fn score_via(density: &TargetDensity, t: f64, x: &DVector<f64>, spec: &QuadratureSpec, route: Route) -> Result<DVector<f64>> {
    ou_factors(t)?;
    match (route.method(density)?, density) {
        (ScoreMethod::ClosedForm, TargetDensity::Mixture(m)) => {
            check_dim(density, x)?;
            Ok(marginal_mixture(m, t)?.grad_log_pdf(x))
        }
        _ => Ok(value_from_tilt(&quadrature_moments(density, t, x, 1, spec)?, t)),
    }
}

pub fn score_jacobian(density: &TargetDensity, t: f64, x: &DVector<f64>, spec: &QuadratureSpec) -> Result<DMatrix<f64>> {
    score_jacobian_via(density, t, x, spec, Route::Auto)
}

pub fn score_jacobian_via(density: &TargetDensity, t: f64, x: &DVector<f64>, spec: &QuadratureSpec, route: Route) -> Result<DMatrix<f64>> {
    ou_factors(t)?;
    match (route.method(density)?, density) {
        (ScoreMethod::ClosedForm, TargetDensity::Mixture(m)) => {
            check_dim(density, x)?;
            Ok(marginal_mixture(m, t)?.hessian_log_pdf(x))
        }
        _ => Ok(jacobian_from_tilt(&quadrature_moments(density, t, x, 2, spec)?, t)),
    }
}

/// Score and Jacobian from one tilted-moment evaluation.
pub fn score_and_jacobian(density: &TargetDensity, t: f64, x: &DVector<f64>, spec: &QuadratureSpec, route: Route) -> Result<(DVector<f64>, DMatrix<f64>, ScoreMethod)> {
    ou_factors(t)?;
    let method = route.method(density)?;
    match (method, density) {
        (ScoreMethod::ClosedForm, TargetDensity::Mixture(m)) => {
            check_dim(density, x)?;
            let pt = marginal_mixture(m, t)?;
            Ok((pt.grad_log_pdf(x), pt.hessian_log_pdf(x), method))
        }
        _ => {
            let tilt = quadrature_moments(density, t, x, 2, spec)?;
            Ok((value_from_tilt(&tilt, t), jacobian_from_tilt(&tilt, t), method))
        }
    }
}

fn check_dim(density: &TargetDensity, x: &DVector<f64>) -> Result<()> {
    if x.len() != density.dim() || x.iter().any(|v| !v.is_finite()) {
        return crate::error::input(format!("point must be a finite {}-vector", density.dim()));
    }
    Ok(())
}

/// ∇^j(s + Id) for j = 2..=k (tensor order j + 1). Mixtures use the Hermite
/// partition route, other densities the tilted-cumulant route.
pub fn score_higher(density: &TargetDensity, t: f64, x: &DVector<f64>, k: usize, spec: &QuadratureSpec) -> Result<Vec<Tensor>> {
    score_higher_via(density, t, x, k, spec, Route::Auto)
}

pub fn score_higher_via(density: &TargetDensity, t: f64, x: &DVector<f64>, k: usize, spec: &QuadratureSpec, route: Route) -> Result<Vec<Tensor>> {
    let (c, v) = ou_factors(t)?;
    if !(2..=MAX_HIGHER_ORDER).contains(&k) {
        return unsupported(format!("higher score derivatives need 2 <= k <= {MAX_HIGHER_ORDER}, got {k}"));
    }
    check_dim(density, x)?;
    match (route.method(density)?, density) {
        (ScoreMethod::ClosedForm, TargetDensity::Mixture(m)) => {
            let herm = mixture_tilt(m, t, x).hermite_moments(t, x, k + 1);
            let ratio = c / v.sqrt();
            let g: Vec<Tensor> = herm.into_iter().enumerate().map(|(l, h)| h.scale(ratio.powi(l as i32))).collect();
            Ok((2..=k).map(|j| cumulant_from_moments(j + 1, &g, false)).collect())
        }
        _ => {
            let tilt = quadrature_moments(density, t, x, k + 1, spec)?;
            let ratio = c / v;
            Ok((2..=k)
                .map(|j| cumulant_from_moments(j + 1, &tilt.centered_moments, true).scale(ratio.powi(j as i32 + 1)))
                .collect())
        }
    }
}

/// Central-difference step scaled to the smoothing length.
pub fn default_fd_step(t: f64) -> f64 {
    let v = -(-2.0 * t).exp_m1();
    (1e-4 * v.sqrt()).max(1e-6)
}

/// Full evaluation with an error estimate: the closed form reports rounding
/// level, quadrature the change under a 4× finer rule.
pub fn evaluate(density: &TargetDensity, t: f64, x: &DVector<f64>, order: Option<usize>, spec: &QuadratureSpec, route: Route) -> Result<ScoreEvaluation> {
    let (value, jac, method) = score_and_jacobian(density, t, x, spec, route)?;
    let err_estimate = match method {
        ScoreMethod::ClosedForm => f64::EPSILON * 16.0 * jac.amax().max(value.amax()).max(1.0),
        _ => {
            let fine = QuadratureSpec { nodes_per_axis: spec.nodes_per_axis * 4, ..*spec };
            let (v2, j2, _) = score_and_jacobian(density, t, x, &fine, route)?;
            (&value - v2).amax().max((&jac - j2).amax())
        }
    };
    let higher = match order {
        Some(k) if k >= 2 => Some(score_higher_via(density, t, x, k, spec, route)?.into_iter().map(|t| t.data).collect()),
        _ => None,
    };
    let d = x.len();
    Ok(ScoreEvaluation {
        t,
        x: x.iter().copied().collect(),
        value: value.iter().copied().collect(),
        jacobian: (0..d).map(|i| (0..d).map(|j| jac[(i, j)]).collect()).collect(),
        higher,
        method,
        err_estimate,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FdReport {
    pub h: f64,
    pub max_rel_deviation: f64,
    pub fd_jacobian: Vec<Vec<f64>>,
}

/// Central-difference Jacobian from score values, compared with the
/// Jacobian of the same route. `h = None` uses [`default_fd_step`].
pub fn fd_check(density: &TargetDensity, t: f64, x: &DVector<f64>, h: Option<f64>, spec: &QuadratureSpec, route: Route) -> Result<FdReport> {
    let h = h.unwrap_or_else(|| default_fd_step(t));
    if !(h > 0.0 && h.is_finite()) {
        return crate::error::input(format!("finite-difference step must be > 0, got {h}"));
    }
    let jac = score_jacobian_via(density, t, x, spec, route)?;
    let fd = fd_jacobian(density, t, x, h, spec, route)?;
    let scale = jac.amax().max(1e-12);
    let d = x.len();
    Ok(FdReport {
        h,
        max_rel_deviation: (&fd - &jac).amax() / scale,
        fd_jacobian: (0..d).map(|i| (0..d).map(|j| fd[(i, j)]).collect()).collect(),
    })
}

pub fn fd_jacobian(density: &TargetDensity, t: f64, x: &DVector<f64>, h: f64, spec: &QuadratureSpec, route: Route) -> Result<DMatrix<f64>> {
    let d = x.len();
    let mut fd = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (score_via(density, t, &xp, spec, route)? - score_via(density, t, &xm, spec, route)?) / (2.0 * h);
        fd.set_column(j, &col);
    }
    Ok(fd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::GaussianMixture;
    use approx::assert_relative_eq;

    fn two_bumps() -> TargetDensity {
        GaussianMixture::new(
            vec![0.5, 0.5],
            vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
            vec![DMatrix::from_element(1, 1, 0.25); 2],
        )
        .unwrap()
        .into()
    }

    #[test]
    fn standard_gaussian_is_exact() {
        let g = TargetDensity::standard_gaussian(2);
        let x = DVector::from_vec(vec![0.3, -2.0]);
        let spec = QuadratureSpec::default();
        assert_eq!(score(&g, 0.2, &x, &spec).unwrap(), -&x);
        assert_relative_eq!((score_jacobian(&g, 0.2, &x, &spec).unwrap() + DMatrix::identity(2, 2)).amax(), 0.0);
        for t in score_higher(&g, 0.2, &x, 4, &spec).unwrap() {
            assert!(t.max_abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_variance_two_examples() {
        let g: TargetDensity = GaussianMixture::gaussian(DVector::zeros(1), DMatrix::from_element(1, 1, 2.0)).unwrap().into();
        let spec = QuadratureSpec::default();
        let t = 2f64.ln();
        assert_relative_eq!(score(&g, t, &DVector::from_element(1, 1.0), &spec).unwrap()[0], -0.8, epsilon = 1e-14);
        assert_relative_eq!(score_jacobian(&g, t, &DVector::from_element(1, 3.0), &spec).unwrap()[(0, 0)], -0.8, epsilon = 1e-14);
        let third = &score_higher(&g, t, &DVector::from_element(1, 0.5), 2, &spec).unwrap()[0];
        assert!(third.max_abs() < 1e-12);
    }

    #[test]
    fn hermite_route_matches_finite_differences() {
        let m = two_bumps();
        let spec = QuadratureSpec::default();
        let (t, x) = (0.5, DVector::zeros(1));
        let h = 1e-4;
        let jp = score_jacobian(&m, t, &DVector::from_element(1, h), &spec).unwrap()[(0, 0)];
        let jm = score_jacobian(&m, t, &DVector::from_element(1, -h), &spec).unwrap()[(0, 0)];
        let second = score_higher(&m, t, &x, 2, &spec).unwrap()[0].data[0];
        let fd = (jp - jm) / (2.0 * h);
        // Symmetric target: the exact value is 0, compare off-center too.
        assert!((second - fd).abs() < 1e-6, "{second} vs {fd}");
        let x = DVector::from_element(1, 0.4);
        let jp = score_jacobian(&m, t, &DVector::from_element(1, 0.4 + h), &spec).unwrap()[(0, 0)];
        let jm = score_jacobian(&m, t, &DVector::from_element(1, 0.4 - h), &spec).unwrap()[(0, 0)];
        let second = score_higher(&m, t, &x, 2, &spec).unwrap()[0].data[0];
        assert_relative_eq!(second, (jp - jm) / (2.0 * h), max_relative = 1e-5);
    }

    #[test]
    fn cumulant_route_matches_hermite_route() {
        let m = two_bumps();
        let spec = QuadratureSpec::default();
        for &(t, x) in &[(0.5, 0.4), (0.1, -0.8), (1.5, 1.2)] {
            let x = DVector::from_element(1, x);
            let a = score_higher_via(&m, t, &x, 4, &spec, Route::ClosedForm).unwrap();
            let b = score_higher_via(&m, t, &x, 4, &spec, Route::Quadrature).unwrap();
            for (ta, tb) in a.iter().zip(&b) {
                assert_relative_eq!(ta.data[0], tb.data[0], max_relative = 1e-6, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn fd_check_gaussian_and_mixture() {
        let spec = QuadratureSpec::default();
        let g = TargetDensity::standard_gaussian(1);
        let r = fd_check(&g, 0.3, &DVector::from_element(1, 0.7), Some(1e-5), &spec, Route::Auto).unwrap();
        assert!(r.max_rel_deviation <= 1e-9);
        let r = fd_check(&two_bumps(), 0.5, &DVector::from_element(1, 0.2), None, &spec, Route::Auto).unwrap();
        assert!(r.max_rel_deviation <= 1e-5, "{}", r.max_rel_deviation);
    }

    #[test]
    fn rejects_order_and_time() {
        let g = TargetDensity::standard_gaussian(1);
        let spec = QuadratureSpec::default();
        let x = DVector::zeros(1);
        assert!(score(&g, 0.0, &x, &spec).is_err());
        assert!(score_higher(&g, 0.1, &x, 5, &spec).is_err());
        assert!(score_jacobian_via(&crate::densities::TargetDensity::uniform_interval(-1.0, 1.0).unwrap(), 0.1, &x, &spec, Route::ClosedForm).is_err());
    }

    #[test]
    fn uniform_blows_up_outside() {
        let u = TargetDensity::uniform_interval(-1.0, 1.0).unwrap();
        let s = score(&u, 0.01, &DVector::from_element(1, 2.0), &QuadratureSpec::default()).unwrap()[0];
        assert!(s <= -40.0, "{s}");
        let lead = -(2.0 * (-0.01f64).exp() - 1.0) * (-0.01f64).exp() / (1.0 - (-0.02f64).exp()) - 2.0;
        assert_relative_eq!(s, lead, max_relative = 0.05);
    }
}
