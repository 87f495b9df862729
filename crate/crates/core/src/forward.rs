//! Forward noising schedules, their closed-form marginals, and the map onto
//! the normalized Ornstein–Uhlenbeck process dX = −X dt + √2 dB.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::densities::{
    AssumptionProfile, CompactDensity, ConvexSet, GaussianMixture, Perturbation, PerturbedLogConcave, Potential, TargetDensity,
};
use crate::error::{input, Result};
use crate::quadrature::adaptive_simpson;
use crate::rng::{standard_normal, StreamRng};

/// Nonnegative function of time, used for γ_t and b_t.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    Constant { value: f64 },
    /// intercept + slope · t
    Linear { intercept: f64, slope: f64 },
    /// Linear interpolation between knots, constant beyond the ends.
    Table { times: Vec<f64>, values: Vec<f64> },
}

impl Schedule {
    pub fn constant(value: f64) -> Self {
        Schedule::Constant { value }
    }

    pub fn check(&self) -> Result<()> {
        match self {
            Schedule::Constant { value } if !(value.is_finite() && *value >= 0.0) => input(format!("constant schedule {value} must be >= 0")),
            Schedule::Linear { intercept, slope } if !(intercept.is_finite() && slope.is_finite() && *intercept >= 0.0 && *slope >= 0.0) => {
                input("linear schedule needs intercept >= 0 and slope >= 0 to stay nonnegative")
            }
            Schedule::Table { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return input("table schedule needs equally many times and values");
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return input("table schedule times must be strictly increasing");
                }
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return input("table schedule values must be finite and >= 0");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Schedule::Constant { value } => *value,
            Schedule::Linear { intercept, slope } => intercept + slope * t,
            Schedule::Table { times, values } => {
                if t <= times[0] {
                    return values[0];
                }
                let k = times.partition_point(|&s| s <= t);
                if k >= times.len() {
                    return values[values.len() - 1];
                }
                let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
                values[k - 1] + w * (values[k] - values[k - 1])
            }
        }
    }

    /// ∫ₐᵇ value(s) ds: exact for constants, adaptive Simpson (tol 1e−10)
    /// otherwise, split at table knots.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        const TOL: f64 = 1e-10;
        match self {
            Schedule::Constant { value } => value * (b - a),
            Schedule::Linear { .. } => adaptive_simpson(&|s| self.value(s), a, b, TOL),
            Schedule::Table { times, .. } => {
                let mut cuts = vec![a];
                cuts.extend(times.iter().copied().filter(|&s| s > a && s < b));
                cuts.push(b);
                cuts.windows(2).map(|w| adaptive_simpson(&|s| self.value(s), w[0], w[1], TOL)).sum()
            }
        }
    }
}

/// Noising schedule (λ, σ, γ, b) on [0, T].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardSchedule {
    pub lambda: f64,
    pub sigma: f64,
    pub gamma: Schedule,
    /// Backward diffusion schedule b_t.
    pub b: Schedule,
    #[serde(rename = "T", alias = "horizon")]
    pub horizon: f64,
}

impl ForwardSchedule {
    pub fn new(lambda: f64, sigma: f64, gamma: Schedule, b: Schedule, horizon: f64) -> Result<Self> {
        let s = Self { lambda, sigma, gamma, b, horizon };
        s.check()?;
        Ok(s)
    }

    /// λ = γ = σ = 1 with DDPM backward diffusion b = σ.
    pub fn normalized(horizon: f64) -> Self {
        Self { lambda: 1.0, sigma: 1.0, gamma: Schedule::constant(1.0), b: Schedule::constant(1.0), horizon }
    }

    pub fn with_b(mut self, b: Schedule) -> Self {
        self.b = b;
        self
    }

    pub fn check(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return input(format!("lambda must be > 0, got {}", self.lambda));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return input(format!("sigma must be > 0, got {}", self.sigma));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return input(format!("horizon T must be > 0, got {}", self.horizon));
        }
        self.gamma.check()?;
        self.b.check()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !t.is_finite() || t < 0.0 {
            return input(format!("time must be >= 0, got {t}"));
        }
        if t > self.horizon * (1.0 + 1e-12) {
            return input(format!("time {t} exceeds the horizon {}", self.horizon));
        }
        Ok(())
    }

    /// (u_t, σ_t) with u_t = ∫₀ᵗ γ and σ_t² = (σ²/λ)(1 − e^{−2λu_t}).
    pub fn accumulate(&self, t: f64) -> Result<(f64, f64)> {
        self.check_time(t)?;
        let u = self.gamma.integral(0.0, t);
        let var = self.sigma * self.sigma / self.lambda * (-(-2.0 * self.lambda * u).exp_m1());
        Ok((u, var.max(0.0).sqrt()))
    }

    /// (τ, c): the process at time t has the law of c·X_τ, where X is the
    /// normalized process started from the law of X₀/c.
    pub fn normalize_time(&self, t: f64) -> Result<(f64, f64)> {
        let (u, _) = self.accumulate(t)?;
        Ok((self.lambda * u, self.space_scale()))
    }

    pub fn space_scale(&self) -> f64 {
        self.sigma / self.lambda.sqrt()
    }

    pub fn is_normalized(&self) -> bool {
        self.lambda == 1.0 && self.sigma == 1.0 && self.gamma == Schedule::constant(1.0)
    }
}

/// Law of e^{−τ}X₀ + √(1 − e^{−2τ}) Z for a Gaussian mixture X₀.
pub fn marginal_mixture(density: &GaussianMixture, tau: f64) -> Result<GaussianMixture> {
    if !(tau.is_finite() && tau >= 0.0) {
        return input(format!("tau must be >= 0, got {tau}"));
    }
    let d = density.dim();
    let decay = (-tau).exp();
    let v = -(-2.0 * tau).exp_m1();
    let means = density.means().iter().map(|m| m * decay).collect();
    let covs = density.covariances().iter().map(|c| c * (decay * decay) + DMatrix::identity(d, d) * v).collect();
    GaussianMixture::new(density.weights().to_vec(), means, covs)
}

/// Marginal of the scheduled process at time t.
#[derive(Clone, Debug)]
pub enum MarginalLaw {
    /// Closed form in the original coordinates.
    Mixture(GaussianMixture),
    /// `scale · X_tau` for the normalized process started from `density`
    /// (the target dilated by 1/scale).
    General { density: TargetDensity, tau: f64, scale: f64 },
}

pub fn marginal(density: &TargetDensity, schedule: &ForwardSchedule, t: f64) -> Result<MarginalLaw> {
    let (tau, scale) = schedule.normalize_time(t)?;
    match density {
        TargetDensity::Mixture(m) => {
            let inner = marginal_mixture(&dilate_mixture(m, 1.0 / scale)?, tau)?;
            Ok(MarginalLaw::Mixture(dilate_mixture(&inner, scale)?))
        }
        other => Ok(MarginalLaw::General { density: dilate(other, 1.0 / scale)?, tau, scale }),
    }
}

/// Law of c·X for a mixture X.
pub fn dilate_mixture(m: &GaussianMixture, c: f64) -> Result<GaussianMixture> {
    if c == 1.0 {
        return Ok(m.clone());
    }
    GaussianMixture::new(
        m.weights().to_vec(),
        m.means().iter().map(|v| v * c).collect(),
        m.covariances().iter().map(|s| s * (c * c)).collect(),
    )
}

#[derive(Debug)]
struct DilatedPotential {
    inner: Arc<dyn Potential>,
    inv: f64,
}

impl Potential for DilatedPotential {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.inner.value(&(x * self.inv))
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.inner.gradient(&(x * self.inv)) * self.inv
    }
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.inner.hessian(&(x * self.inv)) * (self.inv * self.inv)
    }
    fn minimizer(&self) -> DVector<f64> {
        self.inner.minimizer() / self.inv
    }
    fn label(&self) -> String {
        format!("{} dilated by {}", self.inner.label(), 1.0 / self.inv)
    }
}

#[derive(Debug)]
struct DilatedPerturbation {
    inner: Arc<dyn Perturbation>,
    inv: f64,
}

impl Perturbation for DilatedPerturbation {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.inner.value(&(x * self.inv))
    }
    fn breakpoints(&self, axis: usize) -> Vec<f64> {
        self.inner.breakpoints(axis).into_iter().map(|b| b / self.inv).collect()
    }
    fn is_zero(&self) -> bool {
        self.inner.is_zero()
    }
    fn label(&self) -> String {
        format!("{} dilated by {}", self.inner.label(), 1.0 / self.inv)
    }
}

fn dilate_profile(p: &AssumptionProfile, c: f64) -> AssumptionProfile {
    let mut q = p.clone();
    q.alpha = p.alpha / (c * c);
    q.curvature_a = p.curvature_a.map(|a| a / (c * c));
    q.holder_k = (p.holder_k * c.powf(-p.beta)).max(1.0);
    q
}

/// Density of c·X when X has density `density`.
pub fn dilate(density: &TargetDensity, c: f64) -> Result<TargetDensity> {
    if !(c.is_finite() && c > 0.0) {
        return input(format!("dilation factor must be > 0, got {c}"));
    }
    if c == 1.0 {
        return Ok(density.clone());
    }
    let inv = 1.0 / c;
    Ok(match density {
        TargetDensity::Mixture(m) => TargetDensity::Mixture(dilate_mixture(m, c)?),
        TargetDensity::Perturbed(p) => TargetDensity::Perturbed(PerturbedLogConcave {
            potential: Arc::new(DilatedPotential { inner: p.potential.clone(), inv }),
            perturbation: Arc::new(DilatedPerturbation { inner: p.perturbation.clone(), inv }),
            profile: dilate_profile(&p.profile, c),
        }),
        TargetDensity::Compact(k) => {
            let support = match &k.support {
                ConvexSet::Box { center, half_widths } => {
                    ConvexSet::new_box(center.iter().map(|v| v * c).collect(), half_widths.iter().map(|v| v * c).collect())?
                }
                ConvexSet::Ball { center, radius } => ConvexSet::new_ball(center.iter().map(|v| v * c).collect(), radius * c)?,
            };
            TargetDensity::Compact(CompactDensity {
                support,
                interior: Arc::new(DilatedPerturbation { inner: k.interior.clone(), inv }),
                profile: k.profile.as_ref().map(|p| dilate_profile(p, c)),
            })
        }
    })
}

/// Draws of the normalized marginal e^{−τ}X₀ + √(1 − e^{−2τ}) Z.
pub fn sample_normalized_marginal(density: &TargetDensity, tau: f64, rng: &mut StreamRng, n: usize) -> Result<Vec<DVector<f64>>> {
    let sampler = density.sampler()?;
    let decay = (-tau).exp();
    let sd = (-(-2.0 * tau).exp_m1()).sqrt();
    Ok((0..n)
        .map(|_| {
            let x0 = sampler.sample(rng);
            x0 * decay + standard_normal(rng, density.dim()) * sd
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn accumulate_examples() {
        let s = ForwardSchedule::normalized(10.0);
        let (u, sd) = s.accumulate(2f64.ln()).unwrap();
        assert_relative_eq!(u, 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(sd, 3f64.sqrt() / 2.0, epsilon = 1e-15);
        assert_eq!(s.accumulate(0.0).unwrap(), (0.0, 0.0));
        assert!(s.accumulate(-1.0).is_err());

        let lin = ForwardSchedule::new(1.0, 1.0, Schedule::Linear { intercept: 0.0, slope: 2.0 }, Schedule::constant(1.0), 2.0).unwrap();
        let (u, sd) = lin.accumulate(1.0).unwrap();
        assert_relative_eq!(u, 1.0, epsilon = 1e-10);
        assert_relative_eq!(sd, (1.0 - (-2f64).exp()).sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn table_schedule_integral() {
        let s = Schedule::Table { times: vec![0.0, 1.0, 2.0], values: vec![1.0, 3.0, 1.0] };
        assert_relative_eq!(s.integral(0.0, 2.0), 4.0, epsilon = 1e-10);
        assert_relative_eq!(s.integral(0.0, 3.0), 5.0, epsilon = 1e-10);
        assert_eq!(s.value(0.5), 2.0);
    }

    #[test]
    fn identity_schedule_normalizes_trivially() {
        let s = ForwardSchedule::normalized(1.0);
        assert_eq!(s.normalize_time(0.3).unwrap(), (0.3, 1.0));
    }

    #[test]
    fn normalization_matches_gaussian_marginal() {
        // 1D N(0, s0²) target under λ = 2: compare mean decay and variance.
        let s = ForwardSchedule::new(2.0, 1.0, Schedule::constant(1.0), Schedule::constant(1.0), 5.0).unwrap();
        let s0: f64 = 1.7;
        let t = 0.4;
        let (tau, c) = s.normalize_time(t).unwrap();
        assert_relative_eq!((-tau).exp(), (-2.0 * t).exp(), epsilon = 1e-15);
        let (u, sd) = s.accumulate(t).unwrap();
        let direct = (-2.0 * s.lambda * u).exp() * s0 * s0 + sd * sd;
        let v = -(-2.0 * tau).exp_m1();
        let via = c * c * ((-2.0 * tau).exp() * (s0 / c).powi(2) + v);
        assert_relative_eq!(direct, via, epsilon = 1e-14);
    }

    #[test]
    fn mixture_marginal_gaussian_convolution() {
        let g = GaussianMixture::gaussian(DVector::zeros(1), DMatrix::from_element(1, 1, 2.0)).unwrap();
        let m = marginal_mixture(&g, 2f64.ln()).unwrap();
        assert_relative_eq!(m.covariances()[0][(0, 0)], 1.25, epsilon = 1e-15);
        let std = GaussianMixture::standard(2);
        let m = marginal_mixture(&std, 0.7).unwrap();
        assert_relative_eq!((&m.covariances()[0] - DMatrix::identity(2, 2)).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn mixture_marginal_large_time_limit() {
        let mix = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
            vec![DMatrix::from_element(1, 1, 0.01); 2],
        )
        .unwrap();
        let m = marginal_mixture(&mix, 40.0).unwrap();
        for i in 0..2 {
            assert!(m.means()[i][0].abs() < 1e-15);
            assert_relative_eq!(m.covariances()[i][(0, 0)], 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn dilated_target_matches_scaled_density() {
        let p = crate::densities::holder_perturbed_quadratic(2.0, 0.5, 0.5, 1).unwrap();
        let c = 0.5;
        let q = dilate(&p, c).unwrap();
        let y = DVector::from_element(1, 0.3);
        assert_relative_eq!(q.log_r(&y).to_f64() - 0.5 * 0.09, p.log_r(&(&y / c)).to_f64() - 0.5 * 0.36, epsilon = 1e-14);
        assert_eq!(q.breakpoints(0), vec![-0.5, 0.0, 0.5]);
    }
}
