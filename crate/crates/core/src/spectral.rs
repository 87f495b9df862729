//! Spectral quantities of the score Jacobian: concentration sets, probe
//! suprema over space and time, and the time-integrability functional.
//!
//! Suprema over ℝ^d are taken over a documented probe family (a lattice
//! over a bounding box, shifted Halton points, and offsets from kinks and
//! support boundaries), optionally polished by local coordinate ascent.
//! They are lower bounds on the true suprema.

use std::io::Write;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::densities::TargetDensity;
use crate::error::{input, Error, Result};
use crate::forward::sample_normalized_marginal;
use crate::rng::{halton, stream, tag};
use crate::score::score_jacobian;
use crate::tilted::{ou_factors, QuadratureSpec};

pub use crate::linalg::{sym_eigs, SymEigen};

pub const DEFAULT_SET_SAMPLES: usize = 100_000;
pub const SET_INFLATION: f64 = 1.05;
pub const SPARSE_PROBES: usize = 64;
pub const REFINE_STEPS: usize = 20;
pub const DEFAULT_PER_DECADE: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    SmallTime,
    LargeTime,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetDescriptor {
    /// {y : f(y) ≤ threshold} for the density's sublevel function f.
    Sublevel { threshold: f64 },
    Ball { center: Vec<f64>, radius: f64 },
}

/// Convex set carrying p_t-mass at least 1 − ε, calibrated from samples.
#[derive(Clone, Debug, Serialize)]
pub struct ConcentrationSet {
    pub epsilon: f64,
    pub t: f64,
    pub regime: Regime,
    pub descriptor: SetDescriptor,
    pub empirical_mass: f64,
    pub mass_std_error: f64,
    pub n_samples: usize,
    /// Per-axis bounds of the calibration samples that fall in the set.
    pub bounding_box: Vec<(f64, f64)>,
    /// Constants are calibrated by empirical quantiles.
    pub calibration: &'static str,
}

impl ConcentrationSet {
    pub fn contains(&self, density: &TargetDensity, y: &DVector<f64>) -> bool {
        match &self.descriptor {
            SetDescriptor::Sublevel { threshold } => density.sublevel_function(y) <= *threshold,
            SetDescriptor::Ball { center, radius } => {
                let c = DVector::from_column_slice(center);
                (y - c).norm() <= *radius
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        match &self.descriptor {
            SetDescriptor::Ball { radius, .. } => 2.0 * radius,
            SetDescriptor::Sublevel { .. } => self.bounding_box.iter().map(|(lo, hi)| (hi - lo).powi(2)).sum::<f64>().sqrt(),
        }
    }
}

/// Default switch between the small- and large-time sets: 1/log(1/ε).
pub fn default_regime_switch(epsilon: f64) -> f64 {
    1.0 / (1.0 / epsilon).ln()
}

pub fn concentration_set(density: &TargetDensity, t: f64, epsilon: f64, n_samples: usize, seed: u64) -> Result<ConcentrationSet> {
    concentration_set_with(density, t, epsilon, n_samples, seed, default_regime_switch(epsilon))
}

fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let k = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

pub fn concentration_set_with(
    density: &TargetDensity,
    t: f64,
    epsilon: f64,
    n_samples: usize,
    seed: u64,
    regime_switch: f64,
) -> Result<ConcentrationSet> {
    if !(epsilon > 0.0 && epsilon < 0.25) {
        return input(format!("epsilon = {epsilon} outside (0, 1/4)"));
    }
    if !(t > 0.0) {
        return input(format!("t = {t} must be positive"));
    }
    if n_samples < 2 {
        return input("need at least two samples to calibrate a set");
    }
    let mut rng = stream(seed, &[tag::SET_SAMPLES]);
    let samples = sample_normalized_marginal(density, t, &mut rng, n_samples)?;
    let regime = if t < regime_switch { Regime::SmallTime } else { Regime::LargeTime };
    let descriptor = match regime {
        Regime::SmallTime => {
            let base = density.sublevel_function(&density.center());
            let mut f: Vec<f64> = samples.iter().map(|y| density.sublevel_function(y)).collect();
            f.sort_by(f64::total_cmp);
            let q = empirical_quantile(&f, 1.0 - epsilon);
            SetDescriptor::Sublevel { threshold: base + SET_INFLATION * (q - base) }
        }
        Regime::LargeTime => {
            let center = density.center();
            let mut r: Vec<f64> = samples.iter().map(|y| (y - &center).norm()).collect();
            r.sort_by(f64::total_cmp);
            SetDescriptor::Ball { center: center.as_slice().to_vec(), radius: SET_INFLATION * empirical_quantile(&r, 1.0 - epsilon) }
        }
    };
    let mut set = ConcentrationSet {
        epsilon,
        t,
        regime,
        descriptor,
        empirical_mass: 0.0,
        mass_std_error: 0.0,
        n_samples,
        bounding_box: vec![(f64::INFINITY, f64::NEG_INFINITY); density.dim()],
        calibration: "empirical quantile",
    };
    let mut inside = 0usize;
    for y in &samples {
        if set.contains(density, y) {
            inside += 1;
            for (k, b) in set.bounding_box.iter_mut().enumerate() {
                b.0 = b.0.min(y[k]);
                b.1 = b.1.max(y[k]);
            }
        }
    }
    let p = inside as f64 / n_samples as f64;
    set.empirical_mass = p;
    set.mass_std_error = (p * (1.0 - p) / n_samples as f64).sqrt();
    Ok(set)
}

/// Fresh Monte Carlo estimate of p_t(set) with its binomial standard error.
pub fn estimate_mass(density: &TargetDensity, set: &ConcentrationSet, n_samples: usize, seed: u64) -> Result<(f64, f64)> {
    if n_samples == 0 {
        return input("n_samples must be positive");
    }
    let mut rng = stream(seed, &[tag::SET_SAMPLES, 1]);
    let samples = sample_normalized_marginal(density, set.t, &mut rng, n_samples)?;
    let inside = samples.iter().filter(|y| set.contains(density, y)).count();
    let p = inside as f64 / n_samples as f64;
    Ok((p, (p * (1.0 - p) / n_samples as f64).sqrt()))
}

/// `per_decade` log-spaced points per decade on [tmin, tmax).
pub fn log_time_grid(tmin: f64, tmax: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(tmin > 0.0 && tmax > tmin && tmax.is_finite()) {
        return input(format!("need 0 < tmin < tmax, got [{tmin}, {tmax}]"));
    }
    if per_decade == 0 {
        return input("per_decade must be positive");
    }
    let n = (per_decade as f64 * (tmax / tmin).log10()).round().max(1.0) as usize;
    Ok((0..n).map(|i| tmin * 10f64.powf(i as f64 / per_decade as f64)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetSource {
    Global,
    Concentration { epsilon: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanOptions {
    pub set_source: SetSource,
    pub probes_per_time: usize,
    pub refine: bool,
    pub seed: u64,
    pub quadrature: QuadratureSpec,
    /// Keep every probe evaluation in the report.
    pub record_probes: bool,
    pub set_samples: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            set_source: SetSource::Global,
            probes_per_time: 128,
            refine: true,
            seed: 0,
            quadrature: QuadratureSpec::default(),
            record_probes: false,
            set_samples: DEFAULT_SET_SAMPLES,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeRecord {
    pub x: Vec<f64>,
    pub lmax_plus_id: f64,
    pub lmin: f64,
    pub opnorm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    pub t: f64,
    pub sup_lmax_plus_id: f64,
    pub inf_lmin: f64,
    pub sup_opnorm: f64,
    pub argmax: Vec<f64>,
    pub n_probes: usize,
    pub n_failed: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub set: Option<SetDescriptor>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<ProbeRecord>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanReport {
    pub density: String,
    pub dim: usize,
    pub options: ScanOptions,
    pub rows: Vec<ScanRow>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    LmaxPlusId,
    OpNorm,
}

impl ScanReport {
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn series(&self, q: Quantity) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .map(|r| {
                let v = match q {
                    Quantity::LmaxPlusId => r.sup_lmax_plus_id,
                    Quantity::OpNorm => r.sup_opnorm,
                };
                (r.t, v)
            })
            .collect()
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let mut header = vec!["t".to_string(), "sup_lmax_plus_id".into(), "inf_lmin".into(), "sup_opnorm".into()];
        header.extend((1..=self.dim).map(|k| format!("argmax_x{k}")));
        header.push("n_probes".into());
        writeln!(w, "{}", header.join(","))?;
        for r in &self.rows {
            let mut cells = vec![format!("{:e}", r.t), format!("{:e}", r.sup_lmax_plus_id), format!("{:e}", r.inf_lmin), format!("{:e}", r.sup_opnorm)];
            cells.extend(r.argmax.iter().map(|v| format!("{v:e}")));
            cells.push(r.n_probes.to_string());
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

// Per-axis box holding the bulk of the target, before smoothing.
fn target_box(density: &TargetDensity) -> Vec<(f64, f64)> {
    let d = density.dim();
    match density {
        TargetDensity::Mixture(m) => (0..d)
            .map(|k| {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for (mu, cov) in m.means().iter().zip(m.covariances()) {
                    let sd = cov[(k, k)].sqrt();
                    lo = lo.min(mu[k] - 6.0 * sd);
                    hi = hi.max(mu[k] + 6.0 * sd);
                }
                (lo, hi)
            })
            .collect(),
        TargetDensity::Perturbed(p) => {
            let center = p.potential.minimizer();
            let reach = 6.0 / p.profile.alpha.sqrt();
            (0..d)
                .map(|k| {
                    let mut lo = center[k] - reach;
                    let mut hi = center[k] + reach;
                    for b in density.breakpoints(k) {
                        lo = lo.min(b - 1.0);
                        hi = hi.max(b + 1.0);
                    }
                    (lo, hi)
                })
                .collect()
        }
        TargetDensity::Compact(c) => (0..d).map(|k| c.support.axis_bounds(k)).collect(),
    }
}

/// Probe box at time t: the image of the target box widened by 6√v.
pub fn global_box(density: &TargetDensity, t: f64) -> Result<Vec<(f64, f64)>> {
    let (c, v) = ou_factors(t)?;
    let w = 6.0 * v.sqrt();
    Ok(target_box(density).into_iter().map(|(lo, hi)| (c * lo - w, c * hi + w)).collect())
}

/// Probe family at time t.
///
/// Up to half the budget goes to a nested tensor lattice over `bbox`, the rest to
/// Halton points with a seeded random shift. Each kink or support boundary
/// b on an axis adds points at c·b ± 2^{-j}√t for j = −3..=12.
pub fn probe_points(density: &TargetDensity, t: f64, bbox: &[(f64, f64)], n: usize, seed: u64, t_index: u64) -> Result<Vec<DVector<f64>>> {
    let (c, _) = ou_factors(t)?;
    let d = density.dim();
    let mut out = Vec::with_capacity(n + 64);
    // 2^k + 1 points per axis so that doubling the budget nests the lattice.
    let mut per_axis = 1usize;
    let mut next = 2usize;
    while next.pow(d as u32) <= n / 2 {
        per_axis = next;
        next = 2 * next - 1 + usize::from(next == 2);
    }
    let lattice = per_axis.pow(d as u32);
    let mut idx = vec![0usize; d];
    for _ in 0..lattice {
        out.push(DVector::from_fn(d, |k, _| {
            let (lo, hi) = bbox[k];
            if per_axis == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * idx[k] as f64 / (per_axis - 1) as f64
            }
        }));
        for k in 0..d {
            idx[k] += 1;
            if idx[k] < per_axis {
                break;
            }
            idx[k] = 0;
        }
    }
    let mut rng = stream(seed, &[tag::PROBES, t_index]);
    let shift: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
    for i in 0..n.saturating_sub(lattice) {
        let h = halton(i as u64, d);
        out.push(DVector::from_fn(d, |k, _| {
            let u = (h[k] + shift[k]).fract();
            bbox[k].0 + u * (bbox[k].1 - bbox[k].0)
        }));
    }
    let center = density.center() * c;
    let root_t = t.sqrt();
    for k in 0..d {
        for b in density.breakpoints(k) {
            for j in -3..=12 {
                let off = root_t * 2f64.powi(-j);
                for sign in [-1.0, 1.0] {
                    let mut x = center.clone();
                    x[k] = c * b + sign * off;
                    out.push(x);
                }
            }
            let mut x = center.clone();
            x[k] = c * b;
            out.push(x);
        }
    }
    if let TargetDensity::Compact(cd) = density {
        if let crate::densities::ConvexSet::Ball { center: bc, radius } = &cd.support {
            // Radial offsets along each coordinate direction.
            for k in 0..d {
                for j in -3..=12 {
                    let off = root_t * 2f64.powi(-j);
                    for sign in [-1.0, 1.0] {
                        for inward in [-1.0, 1.0] {
                            let mut x = DVector::from_column_slice(bc) * c;
                            x[k] += sign * (c * radius + inward * off);
                            out.push(x);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn spectral_at(density: &TargetDensity, t: f64, x: &DVector<f64>, spec: &QuadratureSpec) -> Result<ProbeRecord> {
    let j = score_jacobian(density, t, x, spec)?;
    let e = sym_eigs(&j)?;
    Ok(ProbeRecord { x: x.as_slice().to_vec(), lmax_plus_id: e.max() + 1.0, lmin: e.min(), opnorm: e.op_norm() })
}

// Coordinate ascent on λ_max(∇s + Id), step halving on failure.
fn refine_probe(density: &TargetDensity, t: f64, start: &ProbeRecord, spec: &QuadratureSpec, keep: &dyn Fn(&DVector<f64>) -> bool) -> Vec<ProbeRecord> {
    let (_, v) = match ou_factors(t) {
        Ok(f) => f,
        Err(_) => return Vec::new(),
    };
    let mut best = start.clone();
    let mut h = 0.25 * v.sqrt();
    let mut visited = Vec::new();
    for _ in 0..REFINE_STEPS {
        let mut improved = false;
        for k in 0..best.x.len() {
            for sign in [-1.0, 1.0] {
                let mut x = DVector::from_column_slice(&best.x);
                x[k] += sign * h;
                if !keep(&x) {
                    continue;
                }
                if let Ok(rec) = spectral_at(density, t, &x, spec) {
                    visited.push(rec.clone());
                    if rec.lmax_plus_id > best.lmax_plus_id {
                        best = rec;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    visited
}

pub fn sup_scan(density: &TargetDensity, time_grid: &[f64], options: &ScanOptions) -> Result<ScanReport> {
    if time_grid.is_empty() {
        return input("empty time grid");
    }
    if let Some(t) = time_grid.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
        return input(format!("time grid must be strictly positive, found {t}"));
    }
    options.quadrature.check()?;
    let mut warnings = Vec::new();
    if options.probes_per_time < SPARSE_PROBES {
        warnings.push(format!("sparse probes: {} per time (< {SPARSE_PROBES})", options.probes_per_time));
    }
    let rows: Vec<Result<ScanRow>> = time_grid
        .par_iter()
        .enumerate()
        .map(|(ti, &t)| scan_time(density, t, ti as u64, options))
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    for r in &rows {
        if r.n_failed > 0 {
            warnings.push(format!("t = {:e}: {} probe evaluations failed", r.t, r.n_failed));
        }
    }
    Ok(ScanReport { density: density.label(), dim: density.dim(), options: options.clone(), rows, warnings })
}

fn scan_time(density: &TargetDensity, t: f64, ti: u64, options: &ScanOptions) -> Result<ScanRow> {
    let spec = &options.quadrature;
    let (bbox, set) = match options.set_source {
        SetSource::Global => (global_box(density, t)?, None),
        SetSource::Concentration { epsilon } => {
            let set = concentration_set(density, t, epsilon, options.set_samples, options.seed ^ ti.wrapping_mul(0x9E37_79B9))?;
            (set.bounding_box.clone(), Some(set))
        }
    };
    if bbox.iter().any(|(lo, hi)| !(lo <= hi)) {
        return Err(Error::Domain(format!("empty probe box at t = {t:e}")));
    }
    let keep = |x: &DVector<f64>| set.as_ref().map_or(true, |s| s.contains(density, x));
    let probes: Vec<DVector<f64>> =
        probe_points(density, t, &bbox, options.probes_per_time, options.seed, ti)?.into_iter().filter(|x| keep(x)).collect();
    let evals: Vec<Result<ProbeRecord>> = probes.par_iter().map(|x| spectral_at(density, t, x, spec)).collect();
    let mut n_failed = 0;
    let mut records: Vec<ProbeRecord> = Vec::with_capacity(evals.len());
    for e in evals {
        match e {
            Ok(r) => records.push(r),
            Err(Error::Input(m)) => return Err(Error::Input(m)),
            Err(_) => n_failed += 1,
        }
    }
    if options.refine {
        if let Some(best) = records.iter().max_by(|a, b| a.lmax_plus_id.total_cmp(&b.lmax_plus_id)).cloned() {
            records.extend(refine_probe(density, t, &best, spec, &keep));
        }
    }
    let mut row = ScanRow {
        t,
        sup_lmax_plus_id: f64::NEG_INFINITY,
        inf_lmin: f64::INFINITY,
        sup_opnorm: 0.0,
        argmax: vec![f64::NAN; density.dim()],
        n_probes: records.len(),
        n_failed,
        set: set.map(|s| s.descriptor),
        probes: Vec::new(),
    };
    for r in &records {
        if r.lmax_plus_id > row.sup_lmax_plus_id {
            row.sup_lmax_plus_id = r.lmax_plus_id;
            row.argmax = r.x.clone();
        }
        row.inf_lmin = row.inf_lmin.min(r.lmin);
        row.sup_opnorm = row.sup_opnorm.max(r.opnorm);
    }
    if options.record_probes {
        row.probes = records;
    }
    Ok(row)
}

/// ∫ max(q(t), 0) dt over the scan with power-law / exponential tail estimates.
#[derive(Clone, Debug, Serialize)]
pub struct Integrability {
    pub quantity: Quantity,
    pub t_lo: f64,
    pub t_hi: f64,
    pub integral: f64,
    /// Fitted exponent p of q ≈ C t^p on the first decade-fraction of points.
    pub small_t_exponent: Option<f64>,
    /// ∫₀^{t_lo} of the fitted power law; None when p ≤ −1 (divergent).
    pub small_t_tail: Option<f64>,
    /// ∫_{t_hi}^∞ of a fitted exponential decay; None when not decaying.
    pub large_t_tail: Option<f64>,
}

pub const INTEGRABILITY_T_LO: f64 = 1e-5;
pub const INTEGRABILITY_T_HI: f64 = 5.0;

pub fn integrability(scan: &ScanReport) -> Result<Integrability> {
    integrability_of(scan, Quantity::LmaxPlusId)
}

pub fn integrability_of(scan: &ScanReport, quantity: Quantity) -> Result<Integrability> {
    let series = scan.series(quantity);
    if series.len() < 2 {
        return input("scan needs at least two times");
    }
    let t_lo = series[0].0;
    let t_hi = series[series.len() - 1].0;
    if t_lo > INTEGRABILITY_T_LO * (1.0 + 1e-9) || t_hi < INTEGRABILITY_T_HI * (1.0 - 1e-9) {
        return input(format!(
            "scan covers [{t_lo:e}, {t_hi:e}]; integrability needs t_lo <= {INTEGRABILITY_T_LO:e} and t_hi >= {INTEGRABILITY_T_HI}"
        ));
    }
    let pos: Vec<(f64, f64)> = series.iter().map(|&(t, q)| (t, q.max(0.0))).collect();
    let integral = trapezoid_dt(&pos);
    let head = &pos[..8.min(pos.len())];
    let small_t_exponent = log_log_slope(head);
    let small_t_tail = small_t_exponent.and_then(|p| (p > -1.0).then(|| head[0].1 * head[0].0 / (p + 1.0)));
    let tail = &pos[pos.len().saturating_sub(8)..];
    let large_t_tail = if tail.iter().all(|p| p.1 > 0.0) {
        let pts: Vec<(f64, f64)> = tail.iter().map(|&(t, q)| (t, q.ln())).collect();
        let (slope, _) = least_squares(&pts);
        (slope < 0.0).then(|| tail[tail.len() - 1].1 / -slope)
    } else if tail.iter().all(|p| p.1 == 0.0) {
        Some(0.0)
    } else {
        None
    };
    Ok(Integrability { quantity, t_lo, t_hi, integral, small_t_exponent, small_t_tail, large_t_tail })
}

/// Trapezoid rule of ∫ q dt written as ∫ t q d(log t).
fn trapezoid_dt(pts: &[(f64, f64)]) -> f64 {
    pts.windows(2)
        .map(|w| {
            let (t0, q0) = w[0];
            let (t1, q1) = w[1];
            0.5 * (t0 * q0 + t1 * q1) * (t1 / t0).ln()
        })
        .sum()
}

fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn log_log_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 || pts.iter().any(|p| !(p.1 > 0.0)) {
        return None;
    }
    let logs: Vec<(f64, f64)> = pts.iter().map(|&(t, q)| (t.ln(), q.ln())).collect();
    Some(least_squares(&logs).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::GaussianMixture;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn n02() -> TargetDensity {
        GaussianMixture::gaussian(DVector::zeros(1), DMatrix::from_element(1, 1, 2.0)).unwrap().into()
    }

    fn quick() -> ScanOptions {
        ScanOptions { probes_per_time: 64, ..ScanOptions::default() }
    }

    #[test]
    fn eigen_examples() {
        let e = sym_eigs(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0])).unwrap();
        assert_eq!((e.min(), e.max()), (-2.0, 1.0));
        let e = sym_eigs(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert_relative_eq!(e.min(), -1.0, epsilon = 1e-14);
        assert_relative_eq!(e.max(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn eigen_matches_cubic_roots() {
        // Trigonometric solution of the characteristic cubic.
        let m: DMatrix<f64> = DMatrix::from_row_slice(3, 3, &[2.0, -0.7, 0.3, -0.7, 1.0, 0.45, 0.3, 0.45, -1.5]);
        let p1 = m[(0, 1)].powi(2) + m[(0, 2)].powi(2) + m[(1, 2)].powi(2);
        let q = m.trace() / 3.0;
        let p2 = (0..3).map(|i| (m[(i, i)] - q).powi(2)).sum::<f64>() + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let b = (&m - DMatrix::identity(3, 3) * q) / p;
        let phi = (b.determinant() / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
        let top = q + 2.0 * p * phi.cos();
        let bottom = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let e = sym_eigs(&m).unwrap();
        assert_relative_eq!(e.max(), top, epsilon = 1e-10);
        assert_relative_eq!(e.min(), bottom, epsilon = 1e-10);
    }

    #[test]
    fn gaussian_ball_radius() {
        let g = TargetDensity::standard_gaussian(1);
        let set = concentration_set(&g, 2.0, 0.05, DEFAULT_SET_SAMPLES, 3).unwrap();
        assert_eq!(set.regime, Regime::LargeTime);
        match &set.descriptor {
            SetDescriptor::Ball { radius, .. } => assert!((radius / 1.05 - 1.959_964).abs() < 0.03, "{radius}"),
            other => panic!("{other:?}"),
        }
        assert!(set.empirical_mass >= 0.95);
        let (mass, se) = estimate_mass(&g, &set, DEFAULT_SET_SAMPLES, 99).unwrap();
        assert!(mass >= 0.95 - 3.0 * se);
    }

    #[test]
    fn uniform_small_time_set() {
        let u = TargetDensity::uniform_interval(-1.0, 1.0).unwrap();
        let set = concentration_set(&u, 1e-3, 0.1, 20_000, 1).unwrap();
        assert_eq!(set.regime, Regime::SmallTime);
        assert!(set.bounding_box[0].0 >= -1.05 && set.bounding_box[0].1 <= 1.05);
        assert!(set.empirical_mass >= 0.9);
        assert!(concentration_set(&u, 1e-3, 0.3, 100, 1).is_err());
    }

    #[test]
    fn grid_is_half_open() {
        let g = log_time_grid(1e-4, 10.0, 40).unwrap();
        assert_eq!(g.len(), 200);
        assert!(g.last().unwrap() < &10.0);
        assert_relative_eq!(g[40], 1e-3, max_relative = 1e-12);
    }

    #[test]
    fn gaussian_scans() {
        let g = TargetDensity::standard_gaussian(2);
        let rep = sup_scan(&g, &[0.01, 0.5, 3.0], &quick()).unwrap();
        for r in &rep.rows {
            assert!(r.sup_lmax_plus_id.abs() < 1e-10);
        }
        let rep = sup_scan(&n02(), &[2f64.ln()], &quick()).unwrap();
        assert_relative_eq!(rep.rows[0].sup_lmax_plus_id, 0.2, epsilon = 1e-10);
    }

    #[test]
    fn uniform_blow_up_lower_bound() {
        let u = TargetDensity::uniform_interval(-1.0, 1.0).unwrap();
        let t = 0.01;
        let rep = sup_scan(&u, &[t], &quick()).unwrap();
        let (c, v) = ou_factors(t).unwrap();
        assert!(rep.rows[0].sup_opnorm >= 0.25 * (1.0 + 1.0 / t));
        assert!(rep.rows[0].sup_opnorm >= (1.0 + c * c / v) * 0.9);
    }

    #[test]
    fn recorded_probes_below_sup() {
        let opts = ScanOptions { record_probes: true, ..quick() };
        let rep = sup_scan(&n02(), &[0.1, 1.0], &opts).unwrap();
        for r in &rep.rows {
            assert!(r.probes.iter().all(|p| p.lmax_plus_id <= r.sup_lmax_plus_id));
        }
    }

    #[test]
    fn integrability_examples() {
        let grid = log_time_grid(1e-5, 10.0, 40).unwrap();
        let opts = ScanOptions { probes_per_time: 8, refine: false, ..ScanOptions::default() };
        let g = sup_scan(&TargetDensity::standard_gaussian(1), &grid, &opts).unwrap();
        assert!(integrability(&g).unwrap().integral.abs() < 1e-9);

        let rep = sup_scan(&n02(), &grid, &opts).unwrap();
        let got = integrability(&rep).unwrap();
        // Closed form of ∫ (1 − 1/(1 + e^{−2t})) dt over the grid range.
        let prim = |t: f64| -0.5 * (1.0 + (-2.0 * t).exp()).ln();
        let exact = prim(*grid.last().unwrap()) - prim(grid[0]);
        assert!((got.integral - exact).abs() < 1e-4, "{} vs {exact}", got.integral);
        assert!(got.large_t_tail.unwrap() > 0.0);

        let short = sup_scan(&n02(), &log_time_grid(1e-3, 10.0, 4).unwrap(), &opts).unwrap();
        assert!(matches!(integrability(&short), Err(Error::Input(_))));
    }

    #[test]
    fn more_probes_never_lower_the_sup() {
        let d = crate::densities::holder_perturbed_quadratic(2.0, 0.5, 0.5, 1).unwrap();
        let few = sup_scan(&d, &[1e-3], &ScanOptions { probes_per_time: 64, refine: false, ..ScanOptions::default() }).unwrap();
        let many = sup_scan(&d, &[1e-3], &ScanOptions { probes_per_time: 128, refine: false, ..ScanOptions::default() }).unwrap();
        assert!(many.rows[0].sup_lmax_plus_id >= few.rows[0].sup_lmax_plus_id - 1e-12);
    }
}
