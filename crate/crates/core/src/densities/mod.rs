//! Target densities p(x) = exp(−u(x) + a(x)) and their assumption metadata.

mod families;
mod mixture;
mod spec_file;
mod support;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use families::{ClampedHolder, Cosine, Perturbation, Potential, QuadraticQuartic, Quadratic, QuarticRatio, ZeroPerturbation};
pub use mixture::GaussianMixture;
pub use spec_file::{parse_density_spec, read_density_spec};
pub use support::ConvexSet;

use crate::error::{input, unsupported, Result};
use crate::linalg::sym_eigs;
use crate::rng::{self, StreamRng};

/// Log-density value with an explicit tag for points outside the support.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LogDensity {
    Finite(f64),
    NegInfinity,
}

impl LogDensity {
    pub fn is_finite(self) -> bool {
        matches!(self, LogDensity::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            LogDensity::Finite(v) => Some(v),
            LogDensity::NegInfinity => None,
        }
    }

    /// The value as a float, −∞ outside the support.
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportKind {
    Full,
    CompactConvex,
}

/// Which branch of the second regularity assumption the density satisfies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition2 {
    Compact,
    BoundedCurvature,
    BoundedA,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumptionProfile {
    /// Strong-convexity lower bound on ∇²u.
    pub alpha: f64,
    /// Hölder exponent of a.
    pub beta: f64,
    /// Hölder constant of a.
    #[serde(rename = "holder_K", alias = "holder_k")]
    pub holder_k: f64,
    /// Upper bound on ∇²u, when known.
    #[serde(rename = "curvature_A", alias = "curvature_a", default, skip_serializing_if = "Option::is_none")]
    pub curvature_a: Option<f64>,
    pub support: SupportKind,
    pub condition2: Condition2,
}

impl AssumptionProfile {
    pub fn check(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return input(format!("alpha must be > 0, got {}", self.alpha));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return input(format!("beta must be > 0, got {}", self.beta));
        }
        if !(self.holder_k.is_finite() && self.holder_k >= 1.0) {
            return input(format!("holder_K must be >= 1, got {}", self.holder_k));
        }
        if let Some(a) = self.curvature_a {
            if !(a.is_finite() && a >= self.alpha) {
                return input(format!("curvature_A = {a} must be >= alpha = {}", self.alpha));
            }
        }
        if self.condition2 == Condition2::BoundedCurvature && self.curvature_a.is_none() {
            return input("condition2 = bounded_curvature requires curvature_A");
        }
        if (self.condition2 == Condition2::Compact) != (self.support == SupportKind::CompactConvex) {
            return input("condition2 = compact must coincide with support = compact_convex");
        }
        Ok(())
    }
}

/// exp(−u + a) with u strongly convex.
#[derive(Clone, Debug)]
pub struct PerturbedLogConcave {
    pub potential: Arc<dyn Potential>,
    pub perturbation: Arc<dyn Perturbation>,
    pub profile: AssumptionProfile,
}

impl PerturbedLogConcave {
    pub fn new(potential: Arc<dyn Potential>, perturbation: Arc<dyn Perturbation>, profile: AssumptionProfile) -> Result<Self> {
        profile.check()?;
        if profile.support != SupportKind::Full {
            return input("perturbed log-concave densities have full support");
        }
        Ok(Self { potential, perturbation, profile })
    }

    pub fn dim(&self) -> usize {
        self.potential.dim()
    }
}

/// Density supported on a box or ball, with an interior log-density.
#[derive(Clone, Debug)]
pub struct CompactDensity {
    pub support: ConvexSet,
    /// Interior log-density up to a constant (zero for the uniform law).
    pub interior: Arc<dyn Perturbation>,
    pub profile: Option<AssumptionProfile>,
}

impl CompactDensity {
    pub fn uniform(support: ConvexSet) -> Self {
        Self { support, interior: Arc::new(ZeroPerturbation), profile: None }
    }

    pub fn diameter(&self) -> f64 {
        self.support.diameter()
    }

    pub fn is_uniform(&self) -> bool {
        self.interior.is_zero()
    }
}

#[derive(Clone, Debug)]
pub enum TargetDensity {
    Mixture(GaussianMixture),
    Perturbed(PerturbedLogConcave),
    Compact(CompactDensity),
}

impl From<GaussianMixture> for TargetDensity {
    fn from(m: GaussianMixture) -> Self {
        TargetDensity::Mixture(m)
    }
}

impl From<PerturbedLogConcave> for TargetDensity {
    fn from(p: PerturbedLogConcave) -> Self {
        TargetDensity::Perturbed(p)
    }
}

impl From<CompactDensity> for TargetDensity {
    fn from(c: CompactDensity) -> Self {
        TargetDensity::Compact(c)
    }
}

impl fmt::Display for TargetDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl TargetDensity {
    pub fn standard_gaussian(dim: usize) -> Self {
        GaussianMixture::standard(dim).into()
    }

    pub fn uniform_interval(lo: f64, hi: f64) -> Result<Self> {
        let set = ConvexSet::new_box(vec![0.5 * (lo + hi)], vec![0.5 * (hi - lo)])?;
        Ok(CompactDensity::uniform(set).into())
    }

    pub fn dim(&self) -> usize {
        match self {
            TargetDensity::Mixture(m) => m.dim(),
            TargetDensity::Perturbed(p) => p.dim(),
            TargetDensity::Compact(c) => c.support.dim(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            TargetDensity::Mixture(m) => format!("mixture(components={}, dim={})", m.len(), m.dim()),
            TargetDensity::Perturbed(p) => {
                format!("perturbed(u={}, a={}, dim={})", p.potential.label(), p.perturbation.label(), p.dim())
            }
            TargetDensity::Compact(c) => {
                let shape = match &c.support {
                    ConvexSet::Box { .. } => "box",
                    ConvexSet::Ball { .. } => "ball",
                };
                format!("compact(support={shape}, interior={}, dim={})", c.interior.label(), c.support.dim())
            }
        }
    }

    pub fn profile(&self) -> Option<&AssumptionProfile> {
        match self {
            TargetDensity::Mixture(_) => None,
            TargetDensity::Perturbed(p) => Some(&p.profile),
            TargetDensity::Compact(c) => c.profile.as_ref(),
        }
    }

    pub fn as_mixture(&self) -> Option<&GaussianMixture> {
        match self {
            TargetDensity::Mixture(m) => Some(m),
            _ => None,
        }
    }

    pub fn support(&self) -> Option<&ConvexSet> {
        match self {
            TargetDensity::Compact(c) => Some(&c.support),
            _ => None,
        }
    }

    /// True when the density is smooth with full support, so plain
    /// Gauss–Hermite quadrature of the tilt is adequate.
    pub fn is_smooth_full_support(&self) -> bool {
        match self {
            TargetDensity::Mixture(_) => true,
            TargetDensity::Perturbed(p) => (0..p.dim()).all(|k| p.perturbation.breakpoints(k).is_empty()),
            TargetDensity::Compact(_) => false,
        }
    }

    /// Points along `axis` where the log-density is not smooth.
    pub fn breakpoints(&self, axis: usize) -> Vec<f64> {
        match self {
            TargetDensity::Mixture(_) => Vec::new(),
            TargetDensity::Perturbed(p) => p.perturbation.breakpoints(axis),
            TargetDensity::Compact(c) => {
                let (lo, hi) = c.support.axis_bounds(axis);
                let mut b = vec![lo, hi];
                b.extend(c.interior.breakpoints(axis).into_iter().filter(|v| *v > lo && *v < hi));
                b
            }
        }
    }

    /// −u(x) + a(x) up to a density-wide constant (mixtures: the normalized
    /// log-density), or the tagged −∞ outside a compact support.
    pub fn log_density_unnormalized(&self, x: &DVector<f64>) -> Result<LogDensity> {
        if x.len() != self.dim() {
            return input(format!("point has dimension {}, density has {}", x.len(), self.dim()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return input("point has non-finite coordinates");
        }
        Ok(self.log_density_tagged(x))
    }

    pub(crate) fn log_density_tagged(&self, x: &DVector<f64>) -> LogDensity {
        match self {
            TargetDensity::Mixture(m) => LogDensity::Finite(m.log_pdf(x)),
            TargetDensity::Perturbed(p) => LogDensity::Finite(-p.potential.value(x) + p.perturbation.value(x)),
            TargetDensity::Compact(c) => {
                if c.support.contains(x) {
                    LogDensity::Finite(c.interior.value(x))
                } else {
                    LogDensity::NegInfinity
                }
            }
        }
    }

    /// log r(y) = log p(y) − log γ_d(y), the log-ratio to the standard
    /// Gaussian (up to the same additive constant as the log-density; exact
    /// for mixtures).
    pub fn log_r(&self, y: &DVector<f64>) -> LogDensity {
        match self.log_density_tagged(y) {
            LogDensity::Finite(v) => LogDensity::Finite(v + log_gaussian_normalizer(y)),
            LogDensity::NegInfinity => LogDensity::NegInfinity,
        }
    }

    /// A convex function whose sublevel sets carry the bulk of the mass:
    /// u itself for perturbed densities, half the squared distance to the
    /// mean for mixtures and the Minkowski gauge for compact supports.
    pub fn sublevel_function(&self, y: &DVector<f64>) -> f64 {
        match self {
            TargetDensity::Mixture(m) => 0.5 * (y - m.mean()).norm_squared(),
            TargetDensity::Perturbed(p) => p.potential.value(y),
            TargetDensity::Compact(c) => c.support.gauge(y),
        }
    }

    /// Minimizer of `sublevel_function`.
    pub fn center(&self) -> DVector<f64> {
        match self {
            TargetDensity::Mixture(m) => m.mean(),
            TargetDensity::Perturbed(p) => p.potential.minimizer(),
            TargetDensity::Compact(c) => c.support.center_vector(),
        }
    }

    /// Exact sampler for targets that admit one.
    pub fn sampler(&self) -> Result<TargetSampler> {
        match self {
            TargetDensity::Mixture(m) => Ok(TargetSampler::Mixture(m.clone())),
            TargetDensity::Compact(c) if c.is_uniform() => Ok(TargetSampler::Uniform(c.support.clone())),
            TargetDensity::Compact(c) if c.support.dim() == 1 => {
                let (lo, hi) = c.support.axis_bounds(0);
                Ok(TargetSampler::Tabulated(Tabulated1d::new(self, lo, hi)))
            }
            TargetDensity::Perturbed(p) if p.dim() == 1 => {
                let (lo, hi) = mass_window_1d(self, p.potential.minimizer()[0]);
                Ok(TargetSampler::Tabulated(Tabulated1d::new(self, lo, hi)))
            }
            _ => unsupported(format!("no sampler for {} in dimension {}", self.label(), self.dim())),
        }
    }
}

/// −log γ_d(y) = ‖y‖²/2 + (d/2) log 2π.
pub(crate) fn log_gaussian_normalizer(y: &DVector<f64>) -> f64 {
    0.5 * y.norm_squared() + 0.5 * y.len() as f64 * (2.0 * std::f64::consts::PI).ln()
}

// Interval around `mode` outside which the density is below e^{-60} of its peak.
fn mass_window_1d(density: &TargetDensity, mode: f64) -> (f64, f64) {
    let at = |y: f64| density.log_density_tagged(&DVector::from_element(1, y)).to_f64();
    let peak = at(mode);
    let mut reach = [1.0f64, 1.0];
    for (k, sign) in [-1.0, 1.0].into_iter().enumerate() {
        while at(mode + sign * reach[k]) > peak - 60.0 && reach[k] < 1e6 {
            reach[k] *= 2.0;
        }
    }
    (mode - reach[0], mode + reach[1])
}

/// Inverse-CDF sampler from a fine tabulation of a 1D density.
#[derive(Clone, Debug)]
pub struct Tabulated1d {
    grid: Vec<f64>,
    cdf: Vec<f64>,
}

impl Tabulated1d {
    const CELLS: usize = 1 << 16;

    fn new(density: &TargetDensity, lo: f64, hi: f64) -> Self {
        let n = Self::CELLS;
        let h = (hi - lo) / n as f64;
        let grid: Vec<f64> = (0..=n).map(|i| lo + h * i as f64).collect();
        // Sample cell midpoints so a support boundary at the grid ends is
        // never evaluated.
        let logs: Vec<f64> =
            (0..n).map(|i| density.log_density_tagged(&DVector::from_element(1, lo + h * (i as f64 + 0.5))).to_f64()).collect();
        let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut cdf = Vec::with_capacity(n + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        for l in &logs {
            acc += (l - peak).exp();
            cdf.push(acc);
        }
        for c in cdf.iter_mut() {
            *c /= acc;
        }
        Self { grid, cdf }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let k = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.grid[k - 1] + frac * (self.grid[k] - self.grid[k - 1])
    }
}

#[derive(Clone, Debug)]
pub enum TargetSampler {
    Mixture(GaussianMixture),
    Uniform(ConvexSet),
    Tabulated(Tabulated1d),
}

impl TargetSampler {
    pub fn sample(&self, rng: &mut StreamRng) -> DVector<f64> {
        match self {
            TargetSampler::Mixture(m) => m.sample(rng),
            TargetSampler::Uniform(s) => s.sample_uniform(rng),
            TargetSampler::Tabulated(t) => DVector::from_element(1, t.quantile(rng.gen())),
        }
    }

    pub fn is_exact(&self) -> bool {
        !matches!(self, TargetSampler::Tabulated(_))
    }
}

pub const DEFAULT_VALIDATION_PROBES: usize = 10_000;
pub const VALIDATION_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub n_probes: usize,
    pub n_pairs: usize,
    pub skipped_outside_support: usize,
    /// min over probes of λ_min(∇²u), when curvature checks apply.
    pub min_hessian_eigenvalue: Option<f64>,
    pub min_hessian_probe: Option<Vec<f64>>,
    pub max_hessian_eigenvalue: Option<f64>,
    pub max_holder_quotient: Option<f64>,
    pub support_diameter: Option<f64>,
    pub convexity_ok: Option<bool>,
    pub curvature_ok: Option<bool>,
    pub holder_ok: Option<bool>,
    pub passed: bool,
}

fn holder_quotient(a: &dyn Perturbation, pairs: &[(DVector<f64>, DVector<f64>)], beta: f64) -> f64 {
    pairs
        .iter()
        .filter_map(|(x, y)| {
            let d = (x - y).norm();
            (d > 0.0).then(|| (a.value(x) - a.value(y)).abs() / d.powf(beta))
        })
        .fold(0.0, f64::max)
}

/// Sampling-based check of the declared assumption profile.
pub fn validate_assumptions(
    density: &TargetDensity,
    probes: &[DVector<f64>],
    pairs: &[(DVector<f64>, DVector<f64>)],
) -> Result<ValidationReport> {
    if probes.is_empty() {
        return input("validate_assumptions needs at least one probe");
    }
    let mut report = ValidationReport {
        n_probes: probes.len(),
        n_pairs: pairs.len(),
        skipped_outside_support: 0,
        min_hessian_eigenvalue: None,
        min_hessian_probe: None,
        max_hessian_eigenvalue: None,
        max_holder_quotient: None,
        support_diameter: None,
        convexity_ok: None,
        curvature_ok: None,
        holder_ok: None,
        passed: true,
    };
    let hessian_scan = |hess: &dyn Fn(&DVector<f64>) -> DMatrix<f64>| -> Result<(f64, Vec<f64>, f64)> {
        let mut lo = (f64::INFINITY, Vec::new());
        let mut hi = f64::NEG_INFINITY;
        for p in probes {
            let e = sym_eigs(&hess(p))?;
            if e.min() < lo.0 {
                lo = (e.min(), p.iter().copied().collect());
            }
            hi = hi.max(e.max());
        }
        Ok((lo.0, lo.1, hi))
    };
    match density {
        TargetDensity::Mixture(m) => {
            // No declared split: report the spectrum of −∇² log p.
            let (lo, at, hi) = hessian_scan(&|x| -m.hessian_log_pdf(x))?;
            report.min_hessian_eigenvalue = Some(lo);
            report.min_hessian_probe = Some(at);
            report.max_hessian_eigenvalue = Some(hi);
        }
        TargetDensity::Perturbed(p) => {
            let (lo, at, hi) = hessian_scan(&|x| p.potential.hessian(x))?;
            report.min_hessian_eigenvalue = Some(lo);
            report.min_hessian_probe = Some(at);
            report.max_hessian_eigenvalue = Some(hi);
            let convex = lo >= p.profile.alpha - VALIDATION_TOL;
            report.convexity_ok = Some(convex);
            report.passed &= convex;
            if let Some(a) = p.profile.curvature_a {
                let ok = hi <= a + VALIDATION_TOL;
                report.curvature_ok = Some(ok);
                report.passed &= ok;
            }
            if !pairs.is_empty() {
                let q = holder_quotient(p.perturbation.as_ref(), pairs, p.profile.beta);
                let ok = q <= p.profile.holder_k + VALIDATION_TOL;
                report.max_holder_quotient = Some(q);
                report.holder_ok = Some(ok);
                report.passed &= ok;
            }
        }
        TargetDensity::Compact(c) => {
            report.support_diameter = Some(c.diameter());
            report.skipped_outside_support = probes.iter().filter(|p| !c.support.contains(p)).count();
            let inside: Vec<_> = pairs.iter().filter(|(x, y)| c.support.contains(x) && c.support.contains(y)).cloned().collect();
            if let (Some(profile), false) = (&c.profile, inside.is_empty()) {
                let q = holder_quotient(c.interior.as_ref(), &inside, profile.beta);
                let ok = q <= profile.holder_k + VALIDATION_TOL;
                report.max_holder_quotient = Some(q);
                report.holder_ok = Some(ok);
                report.passed &= ok;
            }
        }
    }
    Ok(report)
}

/// Deterministic probe points and close pairs (separation ≤ 1) for
/// `validate_assumptions`: uniform in a box around the bulk of the density.
pub fn default_validation_probes(
    density: &TargetDensity,
    n: usize,
    seed: u64,
) -> (Vec<DVector<f64>>, Vec<(DVector<f64>, DVector<f64>)>) {
    let d = density.dim();
    let center = density.center();
    let half: Vec<f64> = match density {
        TargetDensity::Compact(c) => (0..d).map(|k| 0.5 * (c.support.axis_bounds(k).1 - c.support.axis_bounds(k).0)).collect(),
        _ => vec![4.0; d],
    };
    let mut rng = rng::stream(seed, &[rng::tag::VALIDATION]);
    let mut probes = Vec::with_capacity(n);
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let x = DVector::from_fn(d, |k, _| center[k] + half[k] * (2.0 * rng.gen::<f64>() - 1.0));
        let dir = rng::standard_normal(&mut rng, d).normalize();
        let sep: f64 = 10f64.powf(-4.0 * rng.gen::<f64>());
        let mut y = &x + dir * sep;
        if let TargetDensity::Compact(c) = density {
            y = c.support.project(&y);
        }
        probes.push(x.clone());
        pairs.push((x, y));
    }
    (probes, pairs)
}

/// Evaluator for the log-concave counterpart q = r·e^{−a} = exp(−u + ‖y‖²/2).
#[derive(Clone, Debug)]
pub struct LogConcaveCounterpart {
    pub potential: Arc<dyn Potential>,
    pub alpha: f64,
}

impl LogConcaveCounterpart {
    /// log q(y) with the same constant convention as `TargetDensity::log_r`.
    pub fn log_q(&self, y: &DVector<f64>) -> f64 {
        -self.potential.value(y) + log_gaussian_normalizer(y)
    }

    /// The density exp(−u) whose ratio to the Gaussian is q.
    pub fn as_target(&self) -> TargetDensity {
        TargetDensity::Perturbed(PerturbedLogConcave {
            potential: self.potential.clone(),
            perturbation: Arc::new(ZeroPerturbation),
            profile: AssumptionProfile {
                alpha: self.alpha,
                beta: 1.0,
                holder_k: 1.0,
                curvature_a: None,
                support: SupportKind::Full,
                condition2: Condition2::BoundedA,
            },
        })
    }
}

pub fn log_concave_counterpart(density: &TargetDensity) -> Result<LogConcaveCounterpart> {
    match density {
        TargetDensity::Perturbed(p) => Ok(LogConcaveCounterpart { potential: p.potential.clone(), alpha: p.profile.alpha }),
        other => unsupported(format!("{} exposes no log-concave split u, a", other.label())),
    }
}

/// Common profile for a full-support perturbed density.
pub fn full_support_profile(alpha: f64, beta: f64, holder_k: f64, curvature_a: Option<f64>) -> AssumptionProfile {
    AssumptionProfile {
        alpha,
        beta,
        holder_k,
        curvature_a,
        support: SupportKind::Full,
        condition2: if curvature_a.is_some() { Condition2::BoundedCurvature } else { Condition2::BoundedA },
    }
}

/// u = (α/2)x², a = coef·min(1, |x₁|)^β in dimension `dim`.
pub fn holder_perturbed_quadratic(alpha: f64, coef: f64, beta: f64, dim: usize) -> Result<TargetDensity> {
    let profile = full_support_profile(alpha, beta, coef.abs().max(1.0), Some(alpha));
    let p = PerturbedLogConcave::new(
        Arc::new(Quadratic { alpha, center: DVector::zeros(dim) }),
        Arc::new(ClampedHolder { coef, beta }),
        profile,
    )?;
    Ok(p.into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::log_sum_exp;
    use crate::rng::stream;
    use nalgebra::DMatrix;

    #[test]
    fn standard_gaussian_at_mode() {
        for d in 1..=3 {
            let g = TargetDensity::standard_gaussian(d);
            let v = g.log_density_unnormalized(&DVector::zeros(d)).unwrap();
            assert!((v.to_f64() - (-(d as f64) / 2.0 * (2.0 * std::f64::consts::PI).ln())).abs() < 1e-14);
        }
    }

    #[test]
    fn uniform_outside_support_is_tagged() {
        let u = TargetDensity::uniform_interval(-1.0, 1.0).unwrap();
        assert_eq!(u.log_density_unnormalized(&DVector::from_element(1, 2.0)).unwrap(), LogDensity::NegInfinity);
        assert_eq!(u.log_density_unnormalized(&DVector::from_element(1, 0.3)).unwrap(), LogDensity::Finite(0.0));
    }

    #[test]
    fn perturbed_direct_formula() {
        let p = holder_perturbed_quadratic(1.0, 0.5, 0.5, 1).unwrap();
        let v = p.log_density_unnormalized(&DVector::from_element(1, 4.0)).unwrap();
        assert_eq!(v, LogDensity::Finite(-7.5));
    }

    #[test]
    fn non_finite_point_rejected() {
        let g = TargetDensity::standard_gaussian(1);
        assert!(g.log_density_unnormalized(&DVector::from_element(1, f64::NAN)).is_err());
    }

    #[test]
    fn mixture_matches_direct_log_sum_exp() {
        let mix = GaussianMixture::new(
            vec![0.25, 0.75],
            vec![DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![-1.0, 2.0])],
            vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]), DMatrix::identity(2, 2) * 0.3],
        )
        .unwrap();
        let target = TargetDensity::Mixture(mix.clone());
        let mut rng = stream(5, &[0]);
        for _ in 0..1000 {
            let x = rng::standard_normal(&mut rng, 2) * 2.0;
            let terms: Vec<f64> = (0..2)
                .map(|i| {
                    let c = &mix.covariances()[i];
                    let dx = &x - &mix.means()[i];
                    let q = dx.dot(&(c.clone().try_inverse().unwrap() * &dx));
                    mix.weights()[i].ln() - (2.0 * std::f64::consts::PI).ln() - 0.5 * c.determinant().ln() - 0.5 * q
                })
                .collect();
            let v = target.log_density_unnormalized(&x).unwrap().to_f64();
            assert!((v - log_sum_exp(&terms)).abs() < 1e-12);
        }
    }

    #[test]
    fn validation_reports_constant_hessian() {
        let p: TargetDensity = PerturbedLogConcave::new(
            Arc::new(Quadratic { alpha: 2.0, center: DVector::zeros(2) }),
            Arc::new(ZeroPerturbation),
            full_support_profile(2.0, 1.0, 1.0, None),
        )
        .unwrap()
        .into();
        let (probes, pairs) = default_validation_probes(&p, 200, 1);
        let r = validate_assumptions(&p, &probes, &pairs).unwrap();
        assert!((r.min_hessian_eigenvalue.unwrap() - 2.0).abs() < 1e-12);
        assert!(r.passed);
    }

    #[test]
    fn validation_holder_quotient_within_constant() {
        let p = holder_perturbed_quadratic(1.0, 1.0, 0.5, 1).unwrap();
        let (probes, pairs) = default_validation_probes(&p, DEFAULT_VALIDATION_PROBES, 2);
        let r = validate_assumptions(&p, &probes, &pairs).unwrap();
        assert!(r.max_holder_quotient.unwrap() <= 1.0 + 1e-12);
        assert!(r.passed);
    }

    #[test]
    fn validation_detects_weak_convexity() {
        let p: TargetDensity = PerturbedLogConcave {
            potential: Arc::new(Quadratic { alpha: 0.5, center: DVector::zeros(1) }),
            perturbation: Arc::new(ZeroPerturbation),
            profile: full_support_profile(1.0, 1.0, 1.0, None),
        }
        .into();
        let probes = vec![DVector::from_element(1, 0.7)];
        let r = validate_assumptions(&p, &probes, &[]).unwrap();
        assert!(!r.passed);
        assert_eq!(r.min_hessian_probe.unwrap(), vec![0.7]);
    }

    #[test]
    fn compact_reports_diameter_and_skips_curvature() {
        let mut c = CompactDensity::uniform(ConvexSet::new_box(vec![0.0], vec![1.0]).unwrap());
        c.profile = Some(AssumptionProfile {
            alpha: 1.0,
            beta: 1.0,
            holder_k: 1.0,
            curvature_a: None,
            support: SupportKind::CompactConvex,
            condition2: Condition2::Compact,
        });
        let c: TargetDensity = c.into();
        let r = validate_assumptions(&c, &[DVector::zeros(1)], &[]).unwrap();
        assert_eq!(r.support_diameter, Some(2.0));
        assert!(r.min_hessian_eigenvalue.is_none() && r.curvature_ok.is_none());
        assert!(validate_assumptions(&c, &[], &[]).is_err());
    }

    #[test]
    fn counterpart_restores_ratio() {
        let p = holder_perturbed_quadratic(2.0, 1.0, 0.5, 1).unwrap();
        let q = log_concave_counterpart(&p).unwrap();
        let TargetDensity::Perturbed(inner) = &p else { unreachable!() };
        let mut rng = stream(9, &[0]);
        for _ in 0..1000 {
            let y = rng::standard_normal(&mut rng, 1) * 3.0;
            let lhs = q.log_q(&y) + inner.perturbation.value(&y);
            assert!((lhs - p.log_r(&y).to_f64()).abs() < 1e-12);
        }
        assert!(log_concave_counterpart(&TargetDensity::standard_gaussian(1)).is_err());
    }

    #[test]
    fn profile_invariants() {
        let mut p = full_support_profile(1.0, 0.5, 1.0, Some(2.0));
        assert!(p.check().is_ok());
        p.curvature_a = Some(0.5);
        assert!(p.check().is_err());
        p.curvature_a = Some(2.0);
        p.holder_k = 0.5;
        assert!(p.check().is_err());
    }

    #[test]
    fn tabulated_sampler_matches_gaussian_quantiles() {
        let p = holder_perturbed_quadratic(1.0, 0.0, 0.5, 1).unwrap();
        let TargetSampler::Tabulated(t) = p.sampler().unwrap() else { panic!("expected tabulated") };
        assert!(t.quantile(0.5).abs() < 1e-3);
        assert!((t.quantile(0.975) - 1.959964).abs() < 1e-3);
    }
}
