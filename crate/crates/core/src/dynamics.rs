//! Backward samplers, the probability-flow transport map and the
//! synchronous-coupling stability experiment.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::densities::TargetDensity;
use crate::error::{input, Error, Result};
use crate::forward::{marginal, ForwardSchedule, MarginalLaw};
use crate::rng::{standard_normal, stream, tag, StreamRng};
use crate::score::score;
use crate::tilted::QuadratureSpec;

pub const EXPLOSION_NORM: f64 = 1e8;

type Field<'a> = Box<dyn Fn(&DVector<f64>) -> Result<DVector<f64>> + Sync + 'a>;

/// Score of the forward marginal, s(t, x) = ∇log p⃗_t(x).
pub trait ScoreField: Sync {
    fn dim(&self) -> usize;
    fn score(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>>;
    /// The field at a fixed time; implementations may cache per-time work.
    fn at(&self, t: f64) -> Result<Field<'_>> {
        Ok(Box::new(move |x| self.score(t, x)))
    }
}

/// Exact score of a target under a forward schedule.
pub struct ExactScore<'a> {
    pub density: &'a TargetDensity,
    pub schedule: &'a ForwardSchedule,
    pub spec: QuadratureSpec,
}

impl<'a> ExactScore<'a> {
    pub fn new(density: &'a TargetDensity, schedule: &'a ForwardSchedule) -> Self {
        Self { density, schedule, spec: QuadratureSpec::default() }
    }
}

impl ScoreField for ExactScore<'_> {
    fn dim(&self) -> usize {
        self.density.dim()
    }
    fn score(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.at(t)?(x)
    }
    fn at(&self, t: f64) -> Result<Field<'_>> {
        if t <= 0.0 {
            return match self.density {
                TargetDensity::Mixture(m) => {
                    let m = m.clone();
                    Ok(Box::new(move |x| Ok(m.grad_log_pdf(x))))
                }
                _ => Err(Error::Domain("score at t = 0 is only available for mixtures".into())),
            };
        }
        match marginal(self.density, self.schedule, t)? {
            MarginalLaw::Mixture(m) => Ok(Box::new(move |x| Ok(m.grad_log_pdf(x)))),
            MarginalLaw::General { density, tau, scale } => {
                let spec = self.spec.clone();
                Ok(Box::new(move |x| Ok(score(&density, tau, &(x / scale), &spec)? / scale)))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    /// Euler–Maruyama with the schedule's b_t.
    Sde,
    /// Fourth-order Runge–Kutta with b_t = 0.
    Ode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialLaw {
    /// N(0, σ²/λ Id).
    Stationary,
    /// The forward marginal at T (mixtures only).
    Exact,
}

#[derive(Clone, Debug, Serialize)]
pub struct SamplerOptions {
    pub mode: SampleMode,
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub initial: InitialLaw,
    /// Treat the linear part of the drift exactly over each step.
    pub exponential_integrator: bool,
    /// Forward time at which integration stops (0 integrates to the data).
    pub t_end: f64,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self { mode: SampleMode::Sde, n_steps: 400, n_paths: 10_000, seed: 0, initial: InitialLaw::Exact, exponential_integrator: false, t_end: 0.0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Ensemble {
    /// Backward time reached.
    pub time: f64,
    pub points: Vec<Vec<f64>>,
    pub seed: u64,
    pub scheme: String,
    pub n_steps: usize,
    /// Paths dropped after a score failure or a non-finite state.
    pub excluded: usize,
}

impl Ensemble {
    pub fn coordinate(&self, k: usize) -> Vec<f64> {
        self.points.iter().map(|p| p[k]).collect()
    }

    pub fn write_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        let d = self.points.first().map_or(0, |p| p.len());
        let header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for p in &self.points {
            let row: Vec<String> = p.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn initial_points(density: Option<&TargetDensity>, schedule: &ForwardSchedule, opts: &SamplerOptions, dim: usize) -> Result<Vec<DVector<f64>>> {
    let law = match (opts.initial, density) {
        (InitialLaw::Exact, Some(dens)) => match marginal(dens, schedule, schedule.horizon)? {
            MarginalLaw::Mixture(m) => Some(m),
            _ => return crate::error::unsupported("exact initial law needs a mixture target"),
        },
        (InitialLaw::Exact, None) => return input("exact initial law needs the target density"),
        (InitialLaw::Stationary, _) => None,
    };
    let sd = schedule.space_scale();
    Ok((0..opts.n_paths)
        .map(|i| {
            let mut rng = stream(opts.seed, &[tag::INITIAL, i as u64]);
            match &law {
                Some(m) => m.sample(&mut rng),
                None => standard_normal(&mut rng, dim) * sd,
            }
        })
        .collect())
}

/// Integrates dY = (λγ_{T−t}Y + (σ²γ_{T−t} + b_t²) s_{T−t}(Y)) dt + √2 b_t dB̄
/// over backward time [0, T − t_end]. `density` is needed for the exact
/// initial law only.
pub fn backward_sample(schedule: &ForwardSchedule, score_fn: &dyn ScoreField, density: Option<&TargetDensity>, opts: &SamplerOptions) -> Result<Ensemble> {
    schedule.check()?;
    let horizon = schedule.horizon;
    if opts.n_steps == 0 || opts.n_paths == 0 {
        return input("n_steps and n_paths must be positive");
    }
    if !(opts.t_end >= 0.0 && opts.t_end < horizon) {
        return input(format!("t_end = {} must lie in [0, T)", opts.t_end));
    }
    let d = score_fn.dim();
    let mut state: Vec<Option<DVector<f64>>> = initial_points(density, schedule, opts, d)?.into_iter().map(Some).collect();
    let mut rngs: Vec<StreamRng> = (0..opts.n_paths).map(|i| stream(opts.seed, &[tag::PATHS, i as u64])).collect();
    let span = horizon - opts.t_end;
    let h = span / opts.n_steps as f64;
    let lam = schedule.lambda;
    let sig2 = schedule.sigma * schedule.sigma;
    let g = |t: f64| schedule.gamma.value(horizon - t);
    let b = |t: f64| schedule.b.value(t);

    for n in 0..opts.n_steps {
        let t0 = h * n as f64;
        match opts.mode {
            SampleMode::Sde => {
                let field = score_fn.at(horizon - t0)?;
                let (lin, coef, noise) = (lam * g(t0), sig2 * g(t0) + b(t0).powi(2), 2f64.sqrt() * b(t0));
                let (e, phi, noise_sd) = if opts.exponential_integrator && lin != 0.0 {
                    let e = (lin * h).exp();
                    (e, (e - 1.0) / lin, noise * ((e * e - 1.0) / (2.0 * lin)).sqrt())
                } else {
                    (1.0 + lin * h, h, noise * h.sqrt())
                };
                state.par_iter_mut().zip(rngs.par_iter_mut()).for_each(|(slot, rng)| {
                    let z = standard_normal(rng, d);
                    if let Some(y) = slot.as_ref() {
                        *slot = field(y).ok().map(|s| y * e + s * (coef * phi) + z * noise_sd);
                    }
                });
            }
            SampleMode::Ode => {
                let f0 = score_fn.at(horizon - t0)?;
                let fm = score_fn.at(horizon - t0 - 0.5 * h)?;
                let f1 = score_fn.at(horizon - t0 - h)?;
                let drift = |field: &Field<'_>, t: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
                    Ok(y * (lam * g(t)) + field(y)? * (sig2 * g(t)))
                };
                state.par_iter_mut().for_each(|slot| {
                    if let Some(y) = slot.as_ref() {
                        let step = || -> Result<DVector<f64>> {
                            let k1 = drift(&f0, t0, y)?;
                            let k2 = drift(&fm, t0 + 0.5 * h, &(y + &k1 * (0.5 * h)))?;
                            let k3 = drift(&fm, t0 + 0.5 * h, &(y + &k2 * (0.5 * h)))?;
                            let k4 = drift(&f1, t0 + h, &(y + &k3 * h))?;
                            Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
                        };
                        *slot = step().ok();
                    }
                });
            }
        }
        for slot in state.iter_mut() {
            if slot.as_ref().is_some_and(|y| y.iter().any(|v| !v.is_finite())) {
                *slot = None;
            }
        }
    }
    let excluded = state.iter().filter(|s| s.is_none()).count();
    let scheme = match (opts.mode, opts.exponential_integrator) {
        (SampleMode::Sde, false) => "euler_maruyama",
        (SampleMode::Sde, true) => "exponential_euler_maruyama",
        (SampleMode::Ode, _) => "rk4",
    };
    Ok(Ensemble {
        time: span,
        points: state.into_iter().flatten().map(|y| y.as_slice().to_vec()).collect(),
        seed: opts.seed,
        scheme: scheme.into(),
        n_steps: opts.n_steps,
        excluded,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowPoint {
    pub output: Vec<f64>,
    /// Set when step control underflowed or the score failed; `output` is
    /// then the last stable point.
    pub flagged: bool,
    pub reached: f64,
}

const FLOW_TOL: f64 = 1e-10;
const FLOW_MIN_STEP: f64 = 1e-12;

/// X₁(x) for ∂_t X = V(t, X), V(t, x) = (x + s(log(1/t), x)) / t, started
/// at X_{t_min} = x. Integrated in u = log t, where the field is s + x at
/// normalized time −u, by RK4 with step-doubling control.
pub fn probability_flow_map(density: &TargetDensity, x: &DVector<f64>, t_min: f64, n_steps: usize, spec: &QuadratureSpec) -> Result<FlowPoint> {
    if !(t_min > 0.0 && t_min <= 0.1) {
        return input(format!("t_min = {t_min} outside (0, 0.1]"));
    }
    if x.len() != density.dim() || x.iter().any(|v| !v.is_finite()) {
        return input("start point must be a finite vector of the target dimension");
    }
    if n_steps == 0 {
        return input("n_steps must be positive");
    }
    let field = |u: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
        let tau = -u;
        let s = if tau <= 0.0 {
            match density {
                TargetDensity::Mixture(m) => m.grad_log_pdf(y),
                _ => return Err(Error::Domain("score at t = 0".into())),
            }
        } else {
            score(density, tau, y, spec)?
        };
        Ok(s + y)
    };
    let rk4 = |u: f64, y: &DVector<f64>, h: f64| -> Result<DVector<f64>> {
        let k1 = field(u, y)?;
        let k2 = field(u + 0.5 * h, &(y + &k1 * (0.5 * h)))?;
        let k3 = field(u + 0.5 * h, &(y + &k2 * (0.5 * h)))?;
        let k4 = field(u + h, &(y + &k3 * h))?;
        Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
    };
    let u0 = t_min.ln();
    let mut u = u0;
    let mut y = x.clone();
    let base = -u0 / n_steps as f64;
    let mut h = base;
    while u < 0.0 {
        h = h.min(-u);
        let attempt = (|| -> Result<(DVector<f64>, f64)> {
            let full = rk4(u, &y, h)?;
            let half = rk4(u + 0.5 * h, &rk4(u, &y, 0.5 * h)?, 0.5 * h)?;
            // Richardson: the half-step error is (half − full)/15 for RK4.
            let diff = &half - &full;
            let err = diff.norm() / (15.0 * (1.0 + half.norm()));
            Ok((half + diff / 15.0, err))
        })();
        match attempt {
            Ok((next, err)) if err <= FLOW_TOL || h <= FLOW_MIN_STEP => {
                if err > FLOW_TOL {
                    return Ok(FlowPoint { output: y.as_slice().to_vec(), flagged: true, reached: u.exp() });
                }
                y = next;
                u += h;
                h = (h * 2.0).min(base);
            }
            Ok(_) => h *= 0.5,
            Err(Error::Input(m)) => return Err(Error::Input(m)),
            Err(_) if h > FLOW_MIN_STEP => h *= 0.5,
            Err(_) => return Ok(FlowPoint { output: y.as_slice().to_vec(), flagged: true, reached: u.exp() }),
        }
    }
    Ok(FlowPoint { output: y.as_slice().to_vec(), flagged: false, reached: 1.0 })
}

#[derive(Clone, Debug, Serialize)]
pub struct LipschitzEstimate {
    pub value: f64,
    pub n_pairs: usize,
    pub skipped_duplicates: usize,
}

/// max ‖out_i − out_j‖ / ‖in_i − in_j‖ over all pairs; in 1D the maximum
/// is attained on neighbours in input order, so only those are compared.
pub fn lipschitz_estimate(pairs: &[(DVector<f64>, DVector<f64>)]) -> Result<LipschitzEstimate> {
    if pairs.len() < 2 {
        return input("need at least two (input, output) pairs");
    }
    let mut best = 0.0f64;
    let mut skipped = 0;
    let mut used = 0;
    if pairs[0].0.len() == 1 && pairs[0].1.len() == 1 {
        let mut sorted: Vec<(f64, f64)> = pairs.iter().map(|(i, o)| (i[0], o[0])).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in sorted.windows(2) {
            let dx = w[1].0 - w[0].0;
            if dx == 0.0 {
                skipped += 1;
                continue;
            }
            used += 1;
            best = best.max((w[1].1 - w[0].1).abs() / dx);
        }
    } else {
        for i in 0..pairs.len() {
            for j in i + 1..pairs.len() {
                let dx = (&pairs[i].0 - &pairs[j].0).norm();
                if dx == 0.0 {
                    skipped += 1;
                    continue;
                }
                used += 1;
                best = best.max((&pairs[i].1 - &pairs[j].1).norm() / dx);
            }
        }
    }
    if used == 0 {
        return input("all inputs coincide");
    }
    Ok(LipschitzEstimate { value: best, n_pairs: used, skipped_duplicates: skipped })
}

/// Drift a(s, x) with a one-sided Lipschitz profile L_s ≥ sup_x λ_max(∇a).
pub struct DriftSpec<'a> {
    pub label: String,
    pub drift: Box<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Sync + 'a>,
    pub onesided_profile: Box<dyn Fn(f64) -> f64 + Sync + 'a>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub t: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    /// Mean of ‖X_t − X̄_t‖² under the synchronous coupling.
    pub lhs: f64,
    pub lhs_std_error: f64,
    /// t ∫₀ᵗ e^{2∫ₛᵗ L} E‖a_s − ā_s‖²(X̄_s) ds on the step grid.
    pub rhs: f64,
    pub rhs_std_error: f64,
    pub margin: f64,
    /// Standard error of the per-path margin.
    pub margin_std_error: f64,
    pub empirical_profile: bool,
}

/// Couples dX = a dt + √2 b dB and dX̄ = ā dt + √2 b dB with shared initial
/// points and increments (Euler–Maruyama).
#[allow(clippy::too_many_arguments)]
pub fn stability_experiment(
    a: &DriftSpec<'_>,
    abar: &DriftSpec<'_>,
    b: &(dyn Fn(f64) -> f64 + Sync),
    mu0: &(dyn Fn(&mut StreamRng) -> DVector<f64> + Sync),
    t: f64,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<StabilityReport> {
    if !(t > 0.0) || n_paths < 2 || n_steps == 0 {
        return input("need t > 0, at least two paths and one step");
    }
    let h = t / n_steps as f64;
    let grid: Vec<f64> = (0..=n_steps).map(|k| h * k as f64).collect();
    // w_k = trapezoid weight × e^{2∫_{s_k}^t L}, so rhs_i = t Σ_k w_k m_i(s_k).
    let profile: Vec<f64> = grid.iter().map(|&s| (a.onesided_profile)(s)).collect();
    let mut tail = vec![0.0; n_steps + 1];
    for k in (0..n_steps).rev() {
        tail[k] = tail[k + 1] + 0.5 * h * (profile[k] + profile[k + 1]);
    }
    let weights: Vec<f64> = (0..=n_steps)
        .map(|k| {
            let trap = if k == 0 || k == n_steps { 0.5 * h } else { h };
            trap * (2.0 * tail[k]).exp()
        })
        .collect();

    let per_path: Vec<Result<(f64, f64)>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng0 = stream(seed, &[tag::INITIAL, i as u64]);
            let mut rng = stream(seed, &[tag::PATHS, i as u64]);
            let mut x = mu0(&mut rng0);
            let mut xb = x.clone();
            let mut r = 0.0;
            for (k, &s) in grid.iter().enumerate() {
                let ab = (abar.drift)(s, &xb);
                let aa = (a.drift)(s, &xb);
                r += weights[k] * (&aa - &ab).norm_squared();
                if k == n_steps {
                    break;
                }
                let z = standard_normal(&mut rng, x.len()) * ((2.0 * h).sqrt() * b(s));
                x = &x + (a.drift)(s, &x) * h + &z;
                xb = &xb + ab * h + z;
                if x.norm() > EXPLOSION_NORM || xb.norm() > EXPLOSION_NORM || !x.iter().chain(xb.iter()).all(|v| v.is_finite()) {
                    return Err(Error::Diverged(format!("path {i} exceeded norm {EXPLOSION_NORM:e} at s = {s}")));
                }
            }
            Ok(((x - xb).norm_squared(), t * r))
        })
        .collect();
    let per_path = per_path.into_iter().collect::<Result<Vec<_>>>()?;
    let n = n_paths as f64;
    let mean = |f: &dyn Fn(&(f64, f64)) -> f64| per_path.iter().map(f).sum::<f64>() / n;
    let se = |f: &dyn Fn(&(f64, f64)) -> f64, m: f64| (per_path.iter().map(|p| (f(p) - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    let lhs = mean(&|p| p.0);
    let rhs = mean(&|p| p.1);
    Ok(StabilityReport {
        t,
        n_paths,
        n_steps,
        lhs,
        lhs_std_error: se(&|p| p.0, lhs),
        rhs,
        rhs_std_error: se(&|p| p.1, rhs),
        margin: rhs - lhs,
        margin_std_error: se(&|p| p.1 - p.0, rhs - lhs),
        empirical_profile: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::GaussianMixture;
    use crate::forward::Schedule;
    use crate::verify::wasserstein2_1d;
    use nalgebra::DMatrix;

    #[test]
    fn gaussian_is_a_fixed_point() {
        let g = TargetDensity::standard_gaussian(1);
        let sched = ForwardSchedule::normalized(2.0);
        let sf = ExactScore::new(&g, &sched);
        for mode in [SampleMode::Sde, SampleMode::Ode] {
            let opts = SamplerOptions { mode, n_steps: 50, n_paths: 4000, initial: InitialLaw::Stationary, ..Default::default() };
            let ens = backward_sample(&sched, &sf, None, &opts).unwrap();
            let pts = ens.coordinate(0);
            let var = pts.iter().map(|v| v * v).sum::<f64>() / pts.len() as f64;
            assert!((var - 1.0).abs() < 0.08, "{mode:?} {var}");
        }
    }

    #[test]
    fn ode_recovers_n02() {
        let d: TargetDensity = GaussianMixture::gaussian(DVector::zeros(1), DMatrix::from_element(1, 1, 2.0)).unwrap().into();
        let sched = ForwardSchedule::normalized(3.0).with_b(Schedule::constant(0.0));
        let sf = ExactScore::new(&d, &sched);
        let opts = SamplerOptions { mode: SampleMode::Ode, n_steps: 400, n_paths: 5000, initial: InitialLaw::Exact, ..Default::default() };
        let ens = backward_sample(&sched, &sf, Some(&d), &opts).unwrap();
        let mut rng = stream(9, &[0]);
        let target: Vec<f64> = (0..5000).map(|_| d.as_mixture().unwrap().sample(&mut rng)[0]).collect();
        assert!(wasserstein2_1d(&ens.coordinate(0), &target).unwrap().value < 0.06);
    }

    #[test]
    fn flow_map_examples() {
        let spec = QuadratureSpec::default();
        let g = TargetDensity::standard_gaussian(1);
        let x = DVector::from_element(1, 0.8);
        let out = probability_flow_map(&g, &x, 1e-3, 40, &spec).unwrap();
        assert!((out.output[0] - 0.8).abs() < 1e-10 && !out.flagged);
        let n04: TargetDensity = GaussianMixture::gaussian(DVector::zeros(1), DMatrix::from_element(1, 1, 4.0)).unwrap().into();
        let t_min = 1e-3;
        let out = probability_flow_map(&n04, &x, t_min, 40, &spec).unwrap();
        let exact = 2.0 * 0.8 / (1.0 + 3.0 * t_min * t_min).sqrt();
        assert!((out.output[0] - exact).abs() < 1e-8, "{} vs {exact}", out.output[0]);
        assert!(probability_flow_map(&g, &x, 0.5, 10, &spec).is_err());
    }

    #[test]
    fn lipschitz_of_identity() {
        let pairs: Vec<_> = (0..10).map(|i| (DVector::from_element(1, i as f64), DVector::from_element(1, i as f64))).collect();
        assert_eq!(lipschitz_estimate(&pairs).unwrap().value, 1.0);
        let mut dup = pairs.clone();
        dup.push(pairs[0].clone());
        assert_eq!(lipschitz_estimate(&dup).unwrap().skipped_duplicates, 1);
    }

    #[test]
    fn linear_stability_case() {
        let delta = 0.3;
        let a = DriftSpec { label: "a".into(), drift: Box::new(|_, x: &DVector<f64>| -x), onesided_profile: Box::new(|_| -1.0) };
        let ab = DriftSpec {
            label: "abar".into(),
            drift: Box::new(move |_, x: &DVector<f64>| x.map(|v| -v + delta)),
            onesided_profile: Box::new(|_| -1.0),
        };
        let mu0 = |rng: &mut StreamRng| standard_normal(rng, 1);
        for t in [0.5, 1.0, 2.0] {
            let rep = stability_experiment(&a, &ab, &|_| 1.0, &mu0, t, 200, 2000, 1).unwrap();
            let lhs = delta * delta * (1.0 - (-t as f64).exp()).powi(2);
            let rhs = t * delta * delta * (1.0 - (-2.0 * t as f64).exp()) / 2.0;
            assert!((rep.lhs - lhs).abs() < 2e-3 * lhs, "{} vs {lhs}", rep.lhs);
            assert!((rep.rhs - rhs).abs() < 1e-4 * rhs, "{} vs {rhs}", rep.rhs);
            assert!(rep.margin > 0.0);
        }
        let same = stability_experiment(&a, &a, &|_| 1.0, &mu0, 1.0, 10, 10, 1).unwrap();
        assert_eq!((same.lhs, same.rhs), (0.0, 0.0));
    }
}
