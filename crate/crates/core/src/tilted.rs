//! The Gaussian ratio r = p/γ_d, its heat-semigroup smoothing Q_t r, and the
//! tilted measure p^{t,x}(dy) ∝ r(y) N(y; e^{−t}x, (1 − e^{−2t}) Id) dy with
//! its centered moments.
//!
//! Gaussian mixtures tilt to Gaussian mixtures, so everything is closed form
//! there. Other densities go through tensor quadrature in dimension ≤ 3:
//! Gauss–Hermite on smooth axes, and composite Gauss–Legendre graded toward
//! kinks and support boundaries on the others.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::densities::{GaussianMixture, TargetDensity};
use crate::error::{domain, input, unsupported, Error, Result};
use crate::forward::marginal_mixture;
use crate::linalg::{gaussian_moment_tensor, log_sum_exp, Tensor};
use crate::quadrature::{gauss_hermite, graded_rule, GradedEnds};

pub use crate::densities::{log_concave_counterpart, LogConcaveCounterpart};

pub const MAX_TILT_ORDER: usize = 6;
const MIN_INSIDE_NODES: usize = 8;
const PANEL_ORDER: usize = 16;
const MAX_RECENTER_PASSES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    pub nodes_per_axis: usize,
    /// Half-width of the integration window in units of √(1 − e^{−2t}).
    pub truncation_radius: f64,
    pub dimension_cap: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { nodes_per_axis: 64, truncation_radius: 12.0, dimension_cap: 3 }
    }
}

impl QuadratureSpec {
    pub fn new(nodes_per_axis: usize, truncation_radius: f64, dimension_cap: usize) -> Result<Self> {
        let s = Self { nodes_per_axis, truncation_radius, dimension_cap };
        s.check()?;
        Ok(s)
    }

    pub fn check(&self) -> Result<()> {
        if self.nodes_per_axis < 8 {
            return input(format!("nodes_per_axis must be >= 8, got {}", self.nodes_per_axis));
        }
        if !(self.truncation_radius >= 6.0 && self.truncation_radius.is_finite()) {
            return input(format!("truncation_radius must be >= 6, got {}", self.truncation_radius));
        }
        if self.dimension_cap == 0 {
            return input("dimension_cap must be positive");
        }
        Ok(())
    }

    fn escalated(&self) -> Self {
        Self { nodes_per_axis: self.nodes_per_axis * 4, ..*self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TiltBase {
    /// p^{t,x}, the tilt of r.
    #[serde(rename = "p_tilt")]
    P,
    /// ν^{t,x}, the tilt of the log-concave counterpart q = r e^{−a}.
    #[serde(rename = "nu_tilt")]
    Nu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiltMethod {
    ClosedForm,
    Quadrature,
}

#[derive(Clone, Debug)]
pub struct TiltedMeasure {
    pub base: TiltBase,
    pub t: f64,
    pub x: DVector<f64>,
    pub mean: DVector<f64>,
    /// mean − e^{−t}x, computed without cancellation.
    pub mean_offset: DVector<f64>,
    /// `centered_moments[k]` is the order-k centered moment tensor, k ≤ order
    /// (entry 0 is the scalar 1 and entry 1 is zero).
    pub centered_moments: Vec<Tensor>,
    /// log Q_t r(x) (or log Q_t q(x)).
    pub log_mass: f64,
    pub method: TiltMethod,
    /// Quadrature nodes with nonzero weight (0 for closed form).
    pub nodes_used: usize,
}

impl TiltedMeasure {
    pub fn order(&self) -> usize {
        self.centered_moments.len() - 1
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.centered_moments[2].to_matrix()
    }
}

/// (e^{−t}, 1 − e^{−2t}); errors for t ≤ 0.
pub fn ou_factors(t: f64) -> Result<(f64, f64)> {
    if !(t.is_finite() && t > 0.0) {
        return domain(format!("time must be > 0, got {t}"));
    }
    Ok(((-t).exp(), -(-2.0 * t).exp_m1()))
}

fn check_point(density: &TargetDensity, x: &DVector<f64>) -> Result<()> {
    if x.len() != density.dim() {
        return input(format!("point has dimension {}, density has {}", x.len(), density.dim()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return input("point has non-finite coordinates");
    }
    Ok(())
}

/// log Q_t r(x) = log ∫ r(e^{−t}x + √(1 − e^{−2t}) z) γ_d(dz).
pub fn qtr(density: &TargetDensity, t: f64, x: &DVector<f64>, spec: &QuadratureSpec) -> Result<f64> {
    ou_factors(t)?;
    check_point(density, x)?;
    match density {
        TargetDensity::Mixture(m) => Ok(mixture_log_qtr(m, t, x)),
        _ => Ok(quadrature_tilt(density, TiltBase::P, t, x, 1, spec)?.log_mass),
    }
}

fn mixture_log_qtr(m: &GaussianMixture, t: f64, x: &DVector<f64>) -> f64 {
    let pt = marginal_mixture(m, t).expect("t > 0 checked");
    pt.log_pdf(x) + crate::densities::log_gaussian_normalizer(x)
}

/// Mean and centered moments (orders ≤ `order`) of p^{t,x} or ν^{t,x}.
pub fn tilted_moments(
    density: &TargetDensity,
    base: TiltBase,
    t: f64,
    x: &DVector<f64>,
    order: usize,
    spec: &QuadratureSpec,
) -> Result<TiltedMeasure> {
    ou_factors(t)?;
    check_point(density, x)?;
    if order > MAX_TILT_ORDER {
        return unsupported(format!("tilted moments of order {order} (max {MAX_TILT_ORDER})"));
    }
    let order = order.max(1);
    match (density, base) {
        (TargetDensity::Mixture(m), TiltBase::P) => Ok(mixture_tilt(m, t, x).moments(t, x, order)),
        (TargetDensity::Mixture(_), TiltBase::Nu) => unsupported("mixtures declare no log-concave split"),
        (_, TiltBase::P) => quadrature_tilt(density, base, t, x, order, spec),
        (_, TiltBase::Nu) => {
            let q = log_concave_counterpart(density)?.as_target();
            quadrature_tilt(&q, base, t, x, order, spec)
        }
    }
}

/// Tilted moments of p^{t,x} by quadrature for any density, including
/// mixtures (used to cross-validate the closed form).
pub fn quadrature_moments(density: &TargetDensity, t: f64, x: &DVector<f64>, order: usize, spec: &QuadratureSpec) -> Result<TiltedMeasure> {
    ou_factors(t)?;
    check_point(density, x)?;
    if order > MAX_TILT_ORDER {
        return unsupported(format!("tilted moments of order {order} (max {MAX_TILT_ORDER})"));
    }
    quadrature_tilt(density, TiltBase::P, t, x, order.max(1), spec)
}

/// The tilt of a mixture: Gaussian components with weights, means and
/// covariances.
#[derive(Clone, Debug)]
pub struct MixtureTilt {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    pub log_mass: f64,
}

/// Component i of p^{t,x} has precision Σ_i⁻¹ + (e^{−2t}/v) Id, mean
/// S_i(Σ_i⁻¹μ_i + e^{−t}x/v), and weight ∝ w_i N(x; e^{−t}μ_i, e^{−2t}Σ_i + v Id).
pub fn mixture_tilt(m: &GaussianMixture, t: f64, x: &DVector<f64>) -> MixtureTilt {
    let d = m.dim();
    let decay = (-t).exp();
    let v = -(-2.0 * t).exp_m1();
    let pt = marginal_mixture(m, t).expect("t > 0");
    let logs = pt.component_logs(x);
    let lse = log_sum_exp(&logs);
    let weights = logs.iter().map(|l| (l - lse).exp()).collect();
    let c = x * decay;
    let k = decay * decay / v;
    let mut means = Vec::with_capacity(m.len());
    let mut covariances = Vec::with_capacity(m.len());
    for i in 0..m.len() {
        let prec = &m.precisions()[i] + DMatrix::identity(d, d) * k;
        let s = Cholesky::<f64, Dyn>::new(prec).expect("tilted precision is positive definite").inverse();
        let lin = &m.precisions()[i] * &m.means()[i] + &c / v;
        means.push(&s * lin);
        covariances.push((&s + s.transpose()) * 0.5);
    }
    MixtureTilt { weights, means, covariances, log_mass: lse + crate::densities::log_gaussian_normalizer(x) }
}

impl MixtureTilt {
    pub fn mean(&self) -> DVector<f64> {
        self.weights.iter().zip(&self.means).fold(DVector::zeros(self.means[0].len()), |acc, (w, m)| acc + m * *w)
    }

    fn moments(&self, t: f64, x: &DVector<f64>, order: usize) -> TiltedMeasure {
        let d = x.len();
        let c = x * (-t).exp();
        let mean_offset = self.weights.iter().zip(&self.means).fold(DVector::zeros(d), |acc, (w, m)| acc + (m - &c) * *w);
        let mean = &c + &mean_offset;
        let mut centered = vec![Tensor { order: 0, dim: d, data: vec![1.0] }, Tensor::zeros(1, d)];
        for k in 2..=order {
            let mut acc = Tensor::zeros(k, d);
            for i in 0..self.weights.len() {
                let shift = (&self.means[i] - &c) - &mean_offset;
                let g = gaussian_moment_tensor(k, &shift, &self.covariances[i]);
                for (a, b) in acc.data.iter_mut().zip(&g.data) {
                    *a += self.weights[i] * b;
                }
            }
            centered.push(acc);
        }
        TiltedMeasure {
            base: TiltBase::P,
            t,
            x: x.clone(),
            mean,
            mean_offset,
            centered_moments: centered,
            log_mass: self.log_mass,
            method: TiltMethod::ClosedForm,
            nodes_used: 0,
        }
    }

    /// E[He_I(w)] with w = (y − e^{−t}x)/√v under the tilt, for all index
    /// tuples of orders 0..=order.
    pub fn hermite_moments(&self, t: f64, x: &DVector<f64>, order: usize) -> Vec<Tensor> {
        let d = x.len();
        let v = -(-2.0 * t).exp_m1();
        let sv = v.sqrt();
        let c = x * (-t).exp();
        let comps: Vec<(DVector<f64>, DMatrix<f64>)> = self
            .means
            .iter()
            .zip(&self.covariances)
            .map(|(m, s)| ((m - &c) / sv, s / v - DMatrix::identity(d, d)))
            .collect();
        (0..=order)
            .map(|k| {
                let mut acc = Tensor::zeros(k, d);
                for (w, (mu, cov)) in self.weights.iter().zip(&comps) {
                    let g = gaussian_moment_tensor(k, mu, cov);
                    for (a, b) in acc.data.iter_mut().zip(&g.data) {
                        *a += w * b;
                    }
                }
                acc
            })
            .collect()
    }
}

/// 1D rule in log-weight form: Σ exp(log_w_j) f(y_j) ≈ ∫ f(y) φ(y) dy with φ
/// the 1D factor of the untilted Gaussian kernel.
struct AxisRule {
    nodes: Vec<f64>,
    log_w: Vec<f64>,
    window: (f64, f64),
}

#[derive(Clone, Copy, Debug)]
struct Frame {
    center: f64,
    scale: f64,
}

fn log_phi(y: f64, c: f64, v: f64) -> f64 {
    -0.5 * (y - c).powi(2) / v - 0.5 * (2.0 * PI * v).ln()
}

fn axis_rule(density: &TargetDensity, axis: usize, c: f64, v: f64, frame: Frame, spec: &QuadratureSpec) -> AxisRule {
    let breaks = density.breakpoints(axis);
    let reach = spec.truncation_radius * frame.scale;
    if breaks.is_empty() && density.support().is_none() {
        let gh = gauss_hermite(spec.nodes_per_axis);
        let log_psi_norm = -0.5 * (2.0 * PI * frame.scale * frame.scale).ln();
        let mut nodes = Vec::with_capacity(gh.len());
        let mut log_w = Vec::with_capacity(gh.len());
        for (&z, &w) in gh.nodes.iter().zip(&gh.weights) {
            let y = frame.center + frame.scale * z;
            nodes.push(y);
            log_w.push(w.ln() + log_phi(y, c, v) - (-0.5 * z * z + log_psi_norm));
        }
        return AxisRule { nodes, log_w, window: (frame.center - reach, frame.center + reach) };
    }
    let (mut lo, mut hi) = (frame.center - reach, frame.center + reach);
    let mut ends = GradedEnds::default();
    if let Some(set) = density.support() {
        let (slo, shi) = set.axis_bounds(axis);
        if hi < slo {
            (lo, hi) = (slo, shi.min(slo + reach));
        } else if lo > shi {
            (lo, hi) = (slo.max(shi - reach), shi);
        } else {
            (lo, hi) = (lo.max(slo), hi.min(shi));
        }
        ends = GradedEnds { lo: lo == slo, hi: hi == shi };
    }
    let max_width = frame.scale * 64.0 / spec.nodes_per_axis as f64;
    let rule = graded_rule(lo, hi, &breaks, ends, 1e-7 * frame.scale, max_width, PANEL_ORDER);
    let log_w = rule.nodes.iter().zip(&rule.weights).map(|(&y, &w)| w.ln() + log_phi(y, c, v)).collect();
    AxisRule { nodes: rule.nodes, log_w, window: (lo, hi) }
}

struct NodeCloud {
    dim: usize,
    points: Vec<f64>,
    log_w: Vec<f64>,
    windows: Vec<(f64, f64)>,
}

fn tilt_nodes(density: &TargetDensity, c: &DVector<f64>, v: f64, frames: &[Frame], spec: &QuadratureSpec) -> NodeCloud {
    let d = c.len();
    let rules: Vec<AxisRule> = (0..d).map(|k| axis_rule(density, k, c[k], v, frames[k], spec)).collect();
    let total: usize = rules.iter().map(|r| r.nodes.len()).product();
    let mut cloud = NodeCloud {
        dim: d,
        points: Vec::with_capacity(total * d),
        log_w: Vec::with_capacity(total),
        windows: rules.iter().map(|r| r.window).collect(),
    };
    let mut idx = vec![0usize; d];
    let mut y = DVector::zeros(d);
    'outer: loop {
        let mut lw = 0.0;
        for k in 0..d {
            y[k] = rules[k].nodes[idx[k]];
            lw += rules[k].log_w[idx[k]];
        }
        if let Some(lr) = density.log_r(&y).finite() {
            let total = lw + lr;
            if total > f64::NEG_INFINITY {
                cloud.points.extend(y.iter());
                cloud.log_w.push(total);
            }
        }
        let mut k = d;
        loop {
            if k == 0 {
                break 'outer;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < rules[k].nodes.len() {
                break;
            }
            idx[k] = 0;
        }
    }
    cloud
}

fn quadrature_tilt(
    density: &TargetDensity,
    base: TiltBase,
    t: f64,
    x: &DVector<f64>,
    order: usize,
    spec: &QuadratureSpec,
) -> Result<TiltedMeasure> {
    spec.check()?;
    let d = density.dim();
    if d > spec.dimension_cap {
        return unsupported(format!("quadrature in dimension {d} exceeds the cap {}", spec.dimension_cap));
    }
    let (decay, v) = ou_factors(t)?;
    let c = x * decay;
    let sv = v.sqrt();
    let mut frames: Vec<Frame> = (0..d).map(|k| Frame { center: c[k], scale: sv }).collect();
    let mut spec = *spec;
    let mut escalated = false;
    let mut pass = 0;
    loop {
        let cloud = tilt_nodes(density, &c, v, &frames, &spec);
        if cloud.log_w.len() < MIN_INSIDE_NODES {
            if !escalated {
                escalated = true;
                spec = spec.escalated();
                continue;
            }
            let windows: Vec<String> = cloud.windows.iter().map(|(a, b)| format!("[{a:.6e}, {b:.6e}]")).collect();
            return Err(Error::Quadrature(format!(
                "only {} quadrature nodes carry mass at t = {t}, x = {:?}; truncation window {}",
                cloud.log_w.len(),
                x.as_slice(),
                windows.join(" x ")
            )));
        }
        let measure = cloud_moments(&cloud, base, t, x, &c, order.max(2));
        // Re-frame axes where the tilt is much narrower, wider or displaced
        // relative to the kernel frame, so nodes follow the actual mass.
        let cov = &measure.centered_moments[2];
        let mut moved = false;
        if pass < MAX_RECENTER_PASSES {
            for k in 0..d {
                let sd = cov.get(&[k, k]).max(0.0).sqrt();
                let f = frames[k];
                let ratio = sd / f.scale;
                let shift = (measure.mean[k] - f.center).abs() / f.scale;
                if ratio < 0.25 || ratio > 2.0 || shift > 3.0 {
                    frames[k] = Frame { center: measure.mean[k], scale: (2.0 * sd).max(1e-12 * sv) };
                    moved = true;
                }
            }
        }
        if !moved {
            return Ok(measure);
        }
        pass += 1;
    }
}

fn cloud_moments(cloud: &NodeCloud, base: TiltBase, t: f64, x: &DVector<f64>, c: &DVector<f64>, order: usize) -> TiltedMeasure {
    let d = cloud.dim;
    let log_mass = log_sum_exp(&cloud.log_w);
    let weights: Vec<f64> = cloud.log_w.iter().map(|l| (l - log_mass).exp()).collect();
    let mut offset = DVector::zeros(d);
    for (j, w) in weights.iter().enumerate() {
        for k in 0..d {
            offset[k] += w * (cloud.points[j * d + k] - c[k]);
        }
    }
    let mean = c + &offset;
    let mut centered: Vec<Tensor> = (0..=order).map(|k| Tensor::zeros(k, d)).collect();
    centered[0].data[0] = 1.0;
    let mut delta = vec![0.0; d];
    let mut power: Vec<f64> = Vec::new();
    let mut next: Vec<f64> = Vec::new();
    for (j, w) in weights.iter().enumerate() {
        for k in 0..d {
            delta[k] = (cloud.points[j * d + k] - c[k]) - offset[k];
        }
        power.clear();
        power.extend_from_slice(&delta);
        for tensor in centered.iter_mut().skip(2) {
            next.clear();
            for p in &power {
                next.extend(delta.iter().map(|q| p * q));
            }
            std::mem::swap(&mut power, &mut next);
            for (a, p) in tensor.data.iter_mut().zip(&power) {
                *a += w * p;
            }
        }
    }
    if order >= 2 {
        // Exact symmetry for the covariance.
        let m = centered[2].to_matrix();
        centered[2] = Tensor::from_matrix(&((&m + m.transpose()) * 0.5));
    }
    TiltedMeasure {
        base,
        t,
        x: x.clone(),
        mean,
        mean_offset: offset,
        centered_moments: centered,
        log_mass,
        method: TiltMethod::Quadrature,
        nodes_used: cloud.log_w.len(),
    }
}

/// Cov(p^{t,x}) − Cov(ν^{t,x}).
pub fn covariance_gap(density: &TargetDensity, t: f64, x: &DVector<f64>, spec: &QuadratureSpec) -> Result<DMatrix<f64>> {
    if !matches!(density, TargetDensity::Perturbed(_)) {
        return unsupported(format!("covariance gap needs a perturbed log-concave density, got {}", density.label()));
    }
    let p = tilted_moments(density, TiltBase::P, t, x, 2, spec)?;
    let nu = tilted_moments(density, TiltBase::Nu, t, x, 2, spec)?;
    Ok(p.covariance() - nu.covariance())
}
