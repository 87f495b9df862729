//! Exponent fits, Hölder and time-regularity estimates, 1D Wasserstein
//! distances and quadrature probes of the concentration inequalities.
//!
//! Verdicts compare exponents, never constants.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::densities::{Potential, TargetDensity};
use crate::error::{input, Result};
use crate::linalg::sym_eigs;
use crate::quadrature::{for_each_tensor_node, graded_rule, GradedEnds, Rule};
use crate::rng::{stream, tag};
use crate::score::{score, score_and_jacobian, score_higher, Route};
use crate::spectral::{probe_points, ConcentrationSet};
use crate::tilted::{covariance_gap, ou_factors, QuadratureSpec};

pub const DEFAULT_SLOPE_TOL: f64 = 0.15;
pub const MIN_FIT_POINTS: usize = 8;
/// Series whose largest magnitude is below this are reported as degenerate.
pub const ZERO_SERIES_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Degenerate(String),
}

impl Verdict {
    /// Degenerate series do not count as failures.
    pub fn ok(&self) -> bool {
        !matches!(self, Verdict::Fail)
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Pass => f.write_str("pass"),
            Verdict::Fail => f.write_str("fail"),
            Verdict::Degenerate(why) => write!(f, "degenerate: {why}"),
        }
    }
}

impl Serialize for Verdict {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Least-squares fit of log(value) against log(abscissa).
#[derive(Clone, Debug, Serialize)]
pub struct ExponentFit {
    pub t_window: (f64, f64),
    /// "t" or "1-exp(-2t)".
    pub abscissa: &'static str,
    pub n_points: usize,
    pub fitted_slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub residual_max: f64,
    pub target_slope: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

pub(crate) fn least_squares(pts: &[(f64, f64)]) -> (f64, f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual_max = pts.iter().map(|p| (p.1 - intercept - slope * p.0).abs()).fold(0.0, f64::max);
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2, residual_max)
}

fn fit_impl(
    series: &[(f64, f64)],
    window: (f64, f64),
    target: f64,
    tol: f64,
    abscissa: &'static str,
    map: impl Fn(f64) -> f64,
) -> Result<ExponentFit> {
    let inside: Vec<(f64, f64)> = series.iter().copied().filter(|&(t, _)| t >= window.0 && t <= window.1).collect();
    if inside.len() < MIN_FIT_POINTS {
        return input(format!(
            "{} points in window [{:e}, {:e}], need at least {MIN_FIT_POINTS}",
            inside.len(),
            window.0,
            window.1
        ));
    }
    let mut fit = ExponentFit {
        t_window: window,
        abscissa,
        n_points: inside.len(),
        fitted_slope: f64::NAN,
        intercept: f64::NAN,
        r_squared: f64::NAN,
        residual_max: f64::NAN,
        target_slope: target,
        tolerance: tol,
        verdict: Verdict::Fail,
    };
    if inside.iter().all(|p| p.1.abs() <= ZERO_SERIES_TOL) {
        fit.verdict = Verdict::Degenerate("zero series".into());
        return Ok(fit);
    }
    let bad: Vec<String> = inside.iter().filter(|p| !(p.1 > 0.0)).map(|p| format!("{:e}", p.0)).collect();
    if !bad.is_empty() {
        return input(format!("nonpositive values at t = {}", bad.join(", ")));
    }
    let logs: Vec<(f64, f64)> = inside.iter().map(|&(t, v)| (map(t).ln(), v.ln())).collect();
    let (slope, intercept, r2, res) = least_squares(&logs);
    fit.fitted_slope = slope;
    fit.intercept = intercept;
    fit.r_squared = r2;
    fit.residual_max = res;
    fit.verdict = if (slope - target).abs() <= tol { Verdict::Pass } else { Verdict::Fail };
    Ok(fit)
}

/// Slope of log(value) against log(t) over the window.
pub fn fit_time_exponent(series: &[(f64, f64)], window: (f64, f64), target: f64, tol: f64) -> Result<ExponentFit> {
    fit_impl(series, window, target, tol, "t", |t| t)
}

/// As `fit_time_exponent` with the verdict replaced by `slope >= floor`,
/// for quantities that should stay bounded.
pub fn fit_bounded(series: &[(f64, f64)], window: (f64, f64), floor: f64) -> Result<ExponentFit> {
    let mut fit = fit_impl(series, window, 0.0, -floor, "t", |t| t)?;
    if !matches!(fit.verdict, Verdict::Degenerate(_)) {
        fit.verdict = if fit.fitted_slope >= floor { Verdict::Pass } else { Verdict::Fail };
    }
    Ok(fit)
}

#[derive(Clone, Debug, Serialize)]
pub struct HolderEstimate {
    pub t: f64,
    pub gamma: f64,
    /// Per derivative order k ≤ ⌊γ⌋: max over output components of the sum
    /// over multi-indices of sup |∂^ν f_j|.
    pub derivative_sups: Vec<f64>,
    /// Top-order quotient with exponent γ − ⌊γ⌋ (an oscillation when γ is
    /// an integer).
    pub holder_quotient: f64,
    pub norm: f64,
    pub n_points: usize,
    pub n_pairs: usize,
    pub skipped_outside: usize,
    pub set: ConcentrationSet,
}

// Multi-index representatives: nondecreasing index tuples.
fn sorted_tuples(order: usize, dim: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..order {
        let mut next = Vec::new();
        for t in &out {
            let start = t.last().copied().unwrap_or(0);
            for i in start..dim {
                let mut u = t.clone();
                u.push(i);
                next.push(u);
            }
        }
        out = next;
    }
    out
}

// Derivatives of f = s + Id up to `order`: entry [k][j][ν] = ∂^ν f_j.
fn derivative_entries(density: &TargetDensity, t: f64, x: &DVector<f64>, order: usize, spec: &QuadratureSpec) -> Result<Vec<Vec<Vec<f64>>>> {
    let d = density.dim();
    let mut out = Vec::with_capacity(order + 1);
    let (value, jac, _) = score_and_jacobian(density, t, x, spec, Route::Auto)?;
    out.push((0..d).map(|j| vec![value[j] + x[j]]).collect());
    if order >= 1 {
        out.push((0..d).map(|j| (0..d).map(|i| jac[(j, i)] + if i == j { 1.0 } else { 0.0 }).collect()).collect());
    }
    if order >= 2 {
        for tensor in score_higher(density, t, x, order, spec)? {
            let k = tensor.order - 1;
            let tuples = sorted_tuples(k, d);
            out.push(
                (0..d)
                    .map(|j| {
                        tuples
                            .iter()
                            .map(|nu| {
                                let mut idx = vec![j];
                                idx.extend_from_slice(nu);
                                tensor.get(&idx)
                            })
                            .collect()
                    })
                    .collect(),
            );
        }
    }
    Ok(out)
}

/// Hölder norm of s(t,·) + Id over a concentration set, as maxima over a
/// recorded, seeded sample of points and pairs.
#[allow(clippy::too_many_arguments)]
pub fn holder_norm_estimate(
    density: &TargetDensity,
    t: f64,
    set: &ConcentrationSet,
    gamma: f64,
    n_points: usize,
    n_pairs: usize,
    seed: u64,
    spec: &QuadratureSpec,
) -> Result<HolderEstimate> {
    if !(0.0..=4.0).contains(&gamma) {
        return input(format!("gamma = {gamma} outside [0, 4]"));
    }
    if n_points == 0 {
        return input("n_points must be positive");
    }
    let top = gamma.floor() as usize;
    let eta = gamma - top as f64;
    let d = density.dim();
    let raw = probe_points(density, t, &set.bounding_box, n_points, seed, 0)?;
    let total = raw.len();
    let points: Vec<DVector<f64>> = raw.into_iter().filter(|x| set.contains(density, x)).collect();
    let mut skipped = total - points.len();
    if points.is_empty() {
        return input("no sample point falls inside the set");
    }
    let evals: Vec<Vec<Vec<Vec<f64>>>> =
        points.par_iter().map(|x| derivative_entries(density, t, x, top, spec)).collect::<Result<_>>()?;

    // sup over points per (k, j, ν), then sum over ν and max over j.
    let mut derivative_sups = vec![0.0; top + 1];
    for (k, slot) in derivative_sups.iter_mut().enumerate() {
        let n_nu = evals[0][k][0].len();
        *slot = (0..d)
            .map(|j| (0..n_nu).map(|nu| evals.iter().map(|e| e[k][j][nu].abs()).fold(0.0, f64::max)).sum::<f64>())
            .fold(0.0, f64::max);
    }

    let diam = set.diameter().max(f64::MIN_POSITIVE);
    // Pair i depends only on (seed, i), so more pairs refine the sample.
    let pairs: Vec<Option<(DVector<f64>, DVector<f64>)>> = (0..n_pairs)
        .map(|i| {
            let mut rng = stream(seed, &[tag::PAIRS, i as u64]);
            let x = DVector::from_fn(d, |k, _| {
                let (lo, hi) = set.bounding_box[k];
                lo + (hi - lo) * rng.gen::<f64>()
            });
            let sep = diam * 10f64.powf(-4.0 * rng.gen::<f64>());
            let mut dir = crate::rng::standard_normal(&mut rng, d);
            let norm = dir.norm();
            if norm == 0.0 {
                return None;
            }
            dir /= norm;
            let y = &x + dir * sep;
            (set.contains(density, &x) && set.contains(density, &y)).then_some((x, y))
        })
        .collect();
    skipped += pairs.iter().filter(|p| p.is_none()).count();
    let pairs: Vec<(DVector<f64>, DVector<f64>)> = pairs.into_iter().flatten().collect();
    let pair_evals: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = pairs
        .par_iter()
        .map(|(x, y)| {
            let fx = derivative_entries(density, t, x, top, spec)?.swap_remove(top);
            let fy = derivative_entries(density, t, y, top, spec)?.swap_remove(top);
            Ok((fx, fy))
        })
        .collect::<Result<_>>()?;
    let mut holder_quotient = 0.0f64;
    for j in 0..d {
        let n_nu = evals[0][top][0].len();
        let mut sum = 0.0;
        for nu in 0..n_nu {
            let mut best = 0.0f64;
            for ((x, y), (fx, fy)) in pairs.iter().zip(&pair_evals) {
                let diff = (fx[j][nu] - fy[j][nu]).abs();
                best = best.max(diff / (y - x).norm().powf(eta));
            }
            sum += best;
        }
        holder_quotient = holder_quotient.max(sum);
    }
    let norm = (0..d)
        .map(|j| {
            let mut s = 0.0;
            for k in 0..=top {
                let n_nu = evals[0][k][0].len();
                s += (0..n_nu).map(|nu| evals.iter().map(|e| e[k][j][nu].abs()).fold(0.0, f64::max)).sum::<f64>();
            }
            s
        })
        .fold(0.0, f64::max)
        + holder_quotient;
    Ok(HolderEstimate {
        t,
        gamma,
        derivative_sups,
        holder_quotient,
        norm,
        n_points: points.len(),
        n_pairs: pairs.len(),
        skipped_outside: skipped,
        set: set.clone(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TimeDerivative {
    pub t: f64,
    pub derivative: Vec<f64>,
    pub norm: f64,
    /// Right side of the Fokker–Planck identity for ∂_t s (k = 1 only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fokker_planck: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_deviation: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TimeRegularity {
    pub k: usize,
    pub x: Vec<f64>,
    pub rows: Vec<TimeDerivative>,
    pub max_rel_deviation: Option<f64>,
}

/// Relative step of the central differences.
pub const TIME_STEP_FRACTION: f64 = 1.0 / 20.0;

fn central_difference(f: &dyn Fn(f64) -> Result<DVector<f64>>, t: f64, h: f64, k: usize) -> Result<DVector<f64>> {
    Ok(match k {
        1 => (f(t + h)? - f(t - h)?) / (2.0 * h),
        2 => (f(t + h)? - f(t)? * 2.0 + f(t - h)?) / (h * h),
        _ => (f(t + 2.0 * h)? - f(t + h)? * 2.0 + f(t - h)? * 2.0 - f(t - 2.0 * h)?) / (2.0 * h.powi(3)),
    })
}

/// ∂_t s written through spatial derivatives: with g = s + x, H = ∇s + Id
/// and T = ∇²s, ∂_t s = ∇(tr ∇s) + 2Hg − g − Hx.
pub fn fokker_planck_rhs(density: &TargetDensity, t: f64, x: &DVector<f64>, spec: &QuadratureSpec) -> Result<DVector<f64>> {
    let d = density.dim();
    let (value, jac, _) = score_and_jacobian(density, t, x, spec, Route::Auto)?;
    let tensors = score_higher(density, t, x, 2, spec)?;
    let third = &tensors[0];
    let g = &value + x;
    let h = jac + DMatrix::identity(d, d);
    let trace_grad = DVector::from_fn(d, |i, _| (0..d).map(|j| third.get(&[i, j, j])).sum());
    Ok(trace_grad + &h * &g * 2.0 - &g - &h * x)
}

/// ∂_t^k s(t, x) by Richardson-extrapolated central differences with base
/// step t/20.
pub fn time_derivative(density: &TargetDensity, t: f64, x: &DVector<f64>, k: usize, spec: &QuadratureSpec) -> Result<DVector<f64>> {
    if !(1..=3).contains(&k) {
        return input(format!("k = {k} outside 1..=3"));
    }
    let f = |s: f64| score(density, s, x, spec);
    let h = t * TIME_STEP_FRACTION;
    let coarse = central_difference(&f, t, h, k)?;
    let fine = central_difference(&f, t, 0.5 * h, k)?;
    Ok((&fine * 4.0 - coarse) / 3.0)
}

/// k-th time derivative of s(·, x) on a grid by Richardson-extrapolated
/// central differences with base step t/20.
pub fn time_regularity_estimate(density: &TargetDensity, x: &DVector<f64>, t_grid: &[f64], k: usize, spec: &QuadratureSpec) -> Result<TimeRegularity> {
    if !(1..=3).contains(&k) {
        return input(format!("k = {k} outside 1..=3"));
    }
    if t_grid.len() < 2 || t_grid.windows(2).any(|w| !(w[1] > w[0])) || !(t_grid[0] > 0.0) {
        return input("time grid needs at least two increasing positive times");
    }
    let rows: Vec<TimeDerivative> = t_grid
        .par_iter()
        .map(|&t| {
            let derivative = time_derivative(density, t, x, k, spec)?;
            let (fokker_planck, rel_deviation) = if k == 1 {
                let fp = fokker_planck_rhs(density, t, x, spec)?;
                let scale = fp.norm().max(derivative.norm());
                let dev = if scale > 0.0 { (&fp - &derivative).norm() / scale } else { 0.0 };
                (Some(fp.as_slice().to_vec()), Some(dev))
            } else {
                (None, None)
            };
            Ok(TimeDerivative { t, norm: derivative.norm(), derivative: derivative.as_slice().to_vec(), fokker_planck, rel_deviation })
        })
        .collect::<Result<_>>()?;
    let max_rel_deviation = if k == 1 { rows.iter().filter_map(|r| r.rel_deviation).reduce(f64::max) } else { None };
    Ok(TimeRegularity { k, x: x.as_slice().to_vec(), rows, max_rel_deviation })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct W2 {
    pub value: f64,
    /// True when the sample sizes differ; the merged-quantile coupling is
    /// then used instead of sorted pairing.
    pub unequal_sizes: bool,
}

/// Exact W₂ between two 1D empirical measures via their quantile functions.
pub fn wasserstein2_1d(a: &[f64], b: &[f64]) -> Result<W2> {
    if a.is_empty() || b.is_empty() {
        return input("empty sample");
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return input("non-finite sample");
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    if n == m {
        let s: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
        return Ok(W2 { value: (s / n as f64).sqrt(), unequal_sizes: false });
    }
    // Walk the merged breakpoints i/n and j/m of both quantile functions.
    let (mut i, mut j) = (0usize, 0usize);
    let mut u = 0.0;
    let mut s = 0.0;
    while i < n && j < m {
        let next_a = (i + 1) as f64 / n as f64;
        let next_b = (j + 1) as f64 / m as f64;
        let next = next_a.min(next_b);
        s += (next - u) * (a[i] - b[j]).powi(2);
        u = next;
        if next_a <= next {
            i += 1;
        }
        if next_b <= next {
            j += 1;
        }
    }
    Ok(W2 { value: s.sqrt(), unequal_sizes: true })
}

/// Smooth test function with its gradient.
pub trait TestFunction: Sync {
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
}

/// S(x) = ⟨w, x⟩ + Σ_k amp_k sin(⟨freq_k, x⟩ + phase_k).
#[derive(Clone, Debug)]
pub struct TrigTest {
    pub linear: DVector<f64>,
    pub waves: Vec<(f64, DVector<f64>, f64)>,
}

impl TrigTest {
    pub fn linear(w: DVector<f64>) -> Self {
        TrigTest { linear: w, waves: Vec::new() }
    }

    pub fn sine_1d() -> Self {
        TrigTest { linear: DVector::zeros(1), waves: vec![(1.0, DVector::from_element(1, 1.0), 0.0)] }
    }
}

impl TestFunction for TrigTest {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.linear.dot(x) + self.waves.iter().map(|(a, f, p)| a * (f.dot(x) + p).sin()).sum::<f64>()
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = self.linear.clone();
        for (a, f, p) in &self.waves {
            g += f * (a * (f.dot(x) + p).cos());
        }
        g
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BrascampLieb {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub holds: bool,
    pub n_nodes: usize,
}

pub const BL_TOL: f64 = 1e-9;

// Window along each axis through the minimizer where φ rises by 60.
fn potential_window(phi: &dyn Potential, axis: usize) -> (f64, f64) {
    let mode = phi.minimizer();
    let base = phi.value(&mode);
    let reach = |sign: f64| {
        let mut r = 0.125;
        loop {
            let mut y = mode.clone();
            y[axis] += sign * r;
            if phi.value(&y) - base > 60.0 || r > 1e6 {
                return r;
            }
            r *= 1.5;
        }
    };
    (mode[axis] - reach(-1.0), mode[axis] + reach(1.0))
}

/// Var_q(S) against ∫ (∇²φ)^{-1}(∇S, ∇S) dq for q ∝ e^{−φ} in one or two
/// dimensions, both by tensor Gauss–Legendre quadrature.
pub fn brascamp_lieb_probe(phi: &dyn Potential, test: &dyn TestFunction, panels_per_axis: usize) -> Result<BrascampLieb> {
    let d = phi.dim();
    if !(1..=2).contains(&d) {
        return input(format!("Brascamp–Lieb probe supports d = 1, 2; got {d}"));
    }
    let mode = phi.minimizer();
    let rules: Vec<Rule> = (0..d)
        .map(|k| {
            let (lo, hi) = potential_window(phi, k);
            let w = (hi - lo) / panels_per_axis.max(1) as f64;
            graded_rule(lo, hi, &[mode[k]], GradedEnds::default(), w, w, 16)
        })
        .collect();
    let base = phi.value(&mode);
    let mut nodes: Vec<(DVector<f64>, f64)> = Vec::new();
    for_each_tensor_node(&rules, |p, w| nodes.push((DVector::from_column_slice(p), w)));
    let (mut z, mut m1, mut m2, mut rhs) = (0.0, 0.0, 0.0, 0.0);
    for (x, w) in &nodes {
        let h = phi.hessian(x);
        let e = sym_eigs(&h)?;
        if e.min() < -1e-10 {
            return input(format!("potential not convex at probe {:?} (min eigenvalue {:e})", x.as_slice(), e.min()));
        }
        let q = w * (base - phi.value(x)).exp();
        let s = test.value(x);
        let g = test.gradient(x);
        let quad = match h.clone().try_inverse() {
            Some(inv) if e.min() > 0.0 => (g.transpose() * inv * &g)[(0, 0)],
            _ if g.norm() == 0.0 => 0.0,
            _ => f64::INFINITY,
        };
        z += q;
        m1 += q * s;
        m2 += q * s * s;
        rhs += q * quad;
    }
    let mean = m1 / z;
    let lhs = (m2 / z - mean * mean).max(0.0);
    let rhs = rhs / z;
    Ok(BrascampLieb { lhs, rhs, margin: rhs - lhs, holds: lhs <= rhs + BL_TOL, n_nodes: nodes.len() })
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentFit {
    /// "gaussian" or "quartic".
    pub family: &'static str,
    pub gamma: f64,
    pub thetas: Vec<f64>,
    pub moments: Vec<f64>,
    pub slope: f64,
    pub bound: f64,
    pub verdict: Verdict,
}

/// ∫ |f − E f|^γ dμ_θ for μ_θ ∝ exp(−θx²/2 − quartic·x⁴).
pub fn centered_moment_1d(theta: f64, quartic: f64, gamma: f64, f: &dyn Fn(f64) -> f64) -> f64 {
    let reach = {
        let mut r = 0.5;
        while 0.5 * theta * r * r + quartic * r.powi(4) < 60.0 {
            r *= 1.25;
        }
        r
    };
    let w = reach / 64.0;
    let rule = graded_rule(-reach, reach, &[0.0], GradedEnds::default(), w, w, 16);
    let dens = |x: f64| (-0.5 * theta * x * x - quartic * x.powi(4)).exp();
    let z = rule.integrate(dens);
    let mean = rule.integrate(|x| dens(x) * f(x)) / z;
    rule.integrate(|x| dens(x) * (f(x) - mean).abs().powf(gamma)) / z
}

/// Slopes of log ∫|f − E f|^γ dμ_θ against log θ, for Gaussian μ_θ and a
/// θ-strongly convex quartic perturbation; passes when slope ≤ −γ/2 + 0.1.
pub fn moment_scaling_probe(theta_grid: &[f64], gamma_list: &[f64], f: &(dyn Fn(f64) -> f64 + Sync)) -> Result<Vec<MomentFit>> {
    if theta_grid.len() < 2 || theta_grid.iter().any(|t| !(*t > 0.0)) {
        return input("theta grid needs at least two positive values");
    }
    let lo = theta_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = theta_grid.iter().copied().fold(0.0, f64::max);
    if hi / lo < 100.0 * (1.0 - 1e-12) {
        return input(format!("theta grid spans [{lo}, {hi}], need at least two decades"));
    }
    let mut out = Vec::new();
    for &gamma in gamma_list {
        for (family, quartic) in [("gaussian", 0.0), ("quartic", 1.0)] {
            let moments: Vec<f64> = theta_grid.iter().map(|&th| centered_moment_1d(th, quartic, gamma, f)).collect();
            let pts: Vec<(f64, f64)> = theta_grid.iter().zip(&moments).map(|(t, m)| (t.ln(), m.ln())).collect();
            let (slope, ..) = least_squares(&pts);
            let bound = -gamma / 2.0 + 0.1;
            out.push(MomentFit {
                family,
                gamma,
                thetas: theta_grid.to_vec(),
                moments,
                slope,
                bound,
                verdict: if slope <= bound { Verdict::Pass } else { Verdict::Fail },
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct CovarianceGapSeries {
    pub series: Vec<(f64, f64)>,
    pub fit: ExponentFit,
}

/// Operator norm of the tilt covariance gap per t, fitted against
/// log(1 − e^{−2t}) with target 1 + β/2.
pub fn covariance_gap_scaling(
    density: &TargetDensity,
    t_grid: &[f64],
    x: &DVector<f64>,
    window: (f64, f64),
    tol: f64,
    spec: &QuadratureSpec,
) -> Result<CovarianceGapSeries> {
    let beta = match density {
        TargetDensity::Perturbed(p) => p.profile.beta,
        _ => return crate::error::unsupported("covariance gap scaling needs a perturbed log-concave density"),
    };
    let series: Vec<(f64, f64)> = t_grid
        .par_iter()
        .map(|&t| {
            let gap = covariance_gap(density, t, x, spec)?;
            Ok((t, sym_eigs(&gap)?.op_norm()))
        })
        .collect::<Result<_>>()?;
    let fit = fit_impl(&series, window, 1.0 + beta / 2.0, tol, "1-exp(-2t)", |t| ou_factors(t).map(|f| f.1).unwrap_or(f64::NAN))?;
    Ok(CovarianceGapSeries { series, fit })
}
