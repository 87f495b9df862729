//! Command-line entry point. `run` maps argv to an exit code:
//! 0 success, 2 a verdict failed (reports still written), 1 usage or
//! configuration error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::claims::{self, Claim, ClaimReport, SuiteOptions};
use crate::densities::{read_density_spec, TargetDensity};
use crate::dynamics::{backward_sample, ExactScore, InitialLaw, SampleMode, SamplerOptions};
use crate::error::{Error, Result};
use crate::forward::{ForwardSchedule, Schedule};
use crate::linalg::sym_eigs;
use crate::score::{evaluate, fd_check, Route};
use crate::spectral::{log_time_grid, sup_scan, ScanOptions, SetSource, DEFAULT_PER_DECADE};
use crate::tilted::QuadratureSpec;
use crate::verify::Verdict;

pub const REPORT_SCHEMA: &str = include_str!("../../../docs/report.schema.json");
pub const WORKERS_ENV: &str = "SCORELAB_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VERDICT: i32 = 2;

#[derive(Parser, Serialize, Debug)]
#[command(name = "scorelab", version, about = "Scores of OU-smoothed densities and checks of their regularity")]
#[command(after_long_help = concat!(
    "Worker threads: SCORELAB_WORKERS (default: all cores).\n",
    "Exit codes: 0 success, 2 verdict failure, 1 usage or config error.\n\n",
    "JSON report schema:\n",
    include_str!("../../../docs/report.schema.json")
))]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Serialize, Debug, Clone)]
pub struct QuadArgs {
    /// Gauss-Legendre nodes per axis and panel.
    #[arg(long, default_value_t = 64)]
    pub nodes: usize,
    /// Window half-width in units of sqrt(1 - e^{-2t}).
    #[arg(long = "trunc-radius", default_value_t = 12.0)]
    pub trunc_radius: f64,
}

impl QuadArgs {
    fn spec(&self) -> QuadratureSpec {
        QuadratureSpec { nodes_per_axis: self.nodes, truncation_radius: self.trunc_radius, ..QuadratureSpec::default() }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetArg {
    Global,
    Conc,
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RouteArg {
    Auto,
    ClosedForm,
    Quadrature,
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Sde,
    Ode,
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeArg {
    Bl,
    Moments,
    Covgap,
}

#[derive(Subcommand, Serialize, Debug)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Score, Jacobian and eigenvalues at one (t, x).
    ScoreEval {
        #[arg(long)]
        density: PathBuf,
        #[arg(long)]
        t: f64,
        /// Comma-separated coordinates.
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        /// Also return derivatives up to this order (2..=4).
        #[arg(long)]
        order: Option<usize>,
        /// Compare the Jacobian with central differences of the score.
        #[arg(long = "check-fd")]
        check_fd: bool,
        #[arg(long, value_enum, default_value_t = RouteArg::Auto)]
        route: RouteArg,
        #[command(flatten)]
        quad: QuadArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Probe-sup eigenvalue scan over a log time grid, written as CSV.
    Scan {
        #[arg(long)]
        density: PathBuf,
        #[arg(long, default_value_t = 1e-4)]
        tmin: f64,
        #[arg(long, default_value_t = 10.0)]
        tmax: f64,
        #[arg(long = "per-decade", default_value_t = DEFAULT_PER_DECADE)]
        per_decade: usize,
        #[arg(long, value_enum, default_value_t = SetArg::Global)]
        set: SetArg,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        #[arg(long, default_value_t = 128)]
        probes: usize,
        /// Skip coordinate-ascent refinement of the best probe.
        #[arg(long = "no-refine")]
        no_refine: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        quad: QuadArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one verification suite and write its JSON report.
    Verify {
        /// thm1, prop-compact, cor-integrability, cor-lipschitz, thm2, cor-time,
        /// prop-stability, prop-transport, samplers, probe-bl, probe-moments, probe-covgap
        claim: String,
        #[arg(long)]
        density: Option<PathBuf>,
        #[command(flatten)]
        suite: SuiteArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Backward sampler (DDPM sde or probability-flow ode), terminal points as CSV.
    Sample {
        #[arg(long, value_enum, default_value_t = ModeArg::Sde)]
        mode: ModeArg,
        #[arg(long)]
        density: PathBuf,
        #[arg(long = "T", default_value_t = 4.0)]
        horizon: f64,
        #[arg(long, default_value_t = 400)]
        steps: usize,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Start from N(0, Id) instead of the exact time-T marginal.
        #[arg(long)]
        stationary: bool,
        /// Exponential Euler for the linear part (sde mode).
        #[arg(long = "exp-integrator")]
        exp_integrator: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Probability-flow transport map of Gaussian inputs, as CSV (x, map(x)).
    Transport {
        #[arg(long)]
        density: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        tmin: f64,
        #[arg(long, default_value_t = 40)]
        steps: usize,
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        quad: QuadArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synchronous-coupling stability experiment from a TOML config.
    Stability {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Concentration-inequality probes.
    Probe {
        #[arg(value_enum)]
        which: ProbeArg,
        #[arg(long)]
        density: Option<PathBuf>,
        #[command(flatten)]
        suite: SuiteArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Serialize, Debug, Clone)]
pub struct SuiteArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "per-decade", default_value_t = DEFAULT_PER_DECADE)]
    pub per_decade: usize,
    #[arg(long, default_value_t = 128)]
    pub probes: usize,
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    /// Hölder order for thm2.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 400)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub tmin: f64,
    #[command(flatten)]
    pub quad: QuadArgs,
}

impl SuiteArgs {
    fn options(&self) -> SuiteOptions {
        SuiteOptions {
            seed: self.seed,
            per_decade: self.per_decade,
            probes_per_time: self.probes,
            epsilon: self.eps,
            gamma: self.gamma,
            n_paths: self.paths,
            n_steps: self.steps,
            t_min: self.tmin,
            quadrature: self.quad.spec(),
            ..SuiteOptions::default()
        }
    }
}

/// TOML config of the `stability` command.
#[derive(Deserialize, Serialize, Debug)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    /// Density spec path, relative to the config file.
    pub density: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_paths() -> usize {
    10_000
}

fn default_steps() -> usize {
    400
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn envelope(config: &Value, density: Option<&TargetDensity>, result: Value) -> Value {
    json!({
        "tool": "scorelab",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "density": density.map(|d| d.label()),
        "timestamp": std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        "result": result,
    })
}

fn write_json(path: &Option<PathBuf>, value: &Value) -> Result<()> {
    let mut w = open_out(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

// CSV outputs carry their config in a JSON file next to them.
fn write_sidecar(out: &Option<PathBuf>, value: &Value) -> Result<()> {
    if let Some(p) = out {
        let mut s = p.clone().into_os_string();
        s.push(".json");
        write_json(&Some(PathBuf::from(s)), value)?;
    }
    Ok(())
}

fn parse_point(text: &str, dim: usize) -> Result<DVector<f64>> {
    let v: std::result::Result<Vec<f64>, _> = text.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match v {
        Ok(v) if v.len() == dim => Ok(DVector::from_vec(v)),
        Ok(v) => Err(Error::Input(format!("--x has {} coordinates, density has dimension {dim}", v.len()))),
        Err(e) => Err(Error::Input(format!("--x: {e}"))),
    }
}

fn claim_code(r: &ClaimReport) -> i32 {
    if r.verdict == Verdict::Fail {
        EXIT_VERDICT
    } else {
        EXIT_OK
    }
}

fn run_suite(claim: Claim, density: &Option<PathBuf>, suite: &SuiteArgs, out: &Option<PathBuf>, config: &Value) -> Result<i32> {
    let d = match density {
        Some(p) => Some(read_density_spec(p)?),
        None if claim.needs_density() => return Err(Error::Input(format!("{} needs --density", claim.id()))),
        None => None,
    };
    let report = claims::run_claim(claim, d.as_ref(), &suite.options())?;
    write_json(out, &envelope(config, d.as_ref(), serde_json::to_value(&report)?))?;
    Ok(claim_code(&report))
}

fn execute(cli: &Cli) -> Result<i32> {
    let config = serde_json::to_value(cli)?;
    match &cli.command {
        Command::ScoreEval { density, t, x, order, check_fd, route, quad, out } => {
            let d = read_density_spec(density)?;
            let x = parse_point(x, d.dim())?;
            let route = match route {
                RouteArg::Auto => Route::Auto,
                RouteArg::ClosedForm => Route::ClosedForm,
                RouteArg::Quadrature => Route::Quadrature,
            };
            let spec = quad.spec();
            let eval = evaluate(&d, *t, &x, *order, &spec, route)?;
            let eig = sym_eigs(&eval.jacobian_matrix())?;
            let mut result = serde_json::to_value(&eval)?;
            result["eigenvalues"] = json!(eig.values);
            if *check_fd {
                result["fd_check"] = serde_json::to_value(fd_check(&d, *t, &x, None, &spec, route)?)?;
            }
            write_json(out, &envelope(&config, Some(&d), result))?;
            Ok(EXIT_OK)
        }
        Command::Scan { density, tmin, tmax, per_decade, set, eps, probes, no_refine, seed, quad, out } => {
            let d = read_density_spec(density)?;
            let grid = log_time_grid(*tmin, *tmax, *per_decade)?;
            let set_source = match set {
                SetArg::Global => SetSource::Global,
                SetArg::Conc => SetSource::Concentration { epsilon: *eps },
            };
            let opts = ScanOptions { set_source, probes_per_time: *probes, refine: !no_refine, seed: *seed, quadrature: quad.spec(), ..ScanOptions::default() };
            let report = sup_scan(&d, &grid, &opts)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            let mut w = open_out(out)?;
            report.write_csv(&mut w)?;
            w.flush()?;
            write_sidecar(out, &envelope(&config, Some(&d), json!({ "rows": report.rows.len(), "warnings": report.warnings })))?;
            Ok(EXIT_OK)
        }
        Command::Verify { claim, density, suite, out } => {
            let c = Claim::parse(claim).ok_or_else(|| Error::Input(format!("unknown claim `{claim}`")))?;
            run_suite(c, density, suite, out, &config)
        }
        Command::Probe { which, density, suite, out } => {
            let c = match which {
                ProbeArg::Bl => Claim::ProbeBl,
                ProbeArg::Moments => Claim::ProbeMoments,
                ProbeArg::Covgap => Claim::ProbeCovgap,
            };
            run_suite(c, density, suite, out, &config)
        }
        Command::Sample { mode, density, horizon, steps, paths, seed, stationary, exp_integrator, out } => {
            let d = read_density_spec(density)?;
            let (b, mode) = match mode {
                ModeArg::Sde => (1.0, SampleMode::Sde),
                ModeArg::Ode => (0.0, SampleMode::Ode),
            };
            let sched = ForwardSchedule::normalized(*horizon).with_b(Schedule::constant(b));
            let sf = ExactScore::new(&d, &sched);
            let opts = SamplerOptions {
                mode,
                n_steps: *steps,
                n_paths: *paths,
                seed: *seed,
                initial: if *stationary { InitialLaw::Stationary } else { InitialLaw::Exact },
                exponential_integrator: *exp_integrator,
                ..SamplerOptions::default()
            };
            let ens = backward_sample(&sched, &sf, Some(&d), &opts)?;
            let mut w = open_out(out)?;
            ens.write_csv(&mut w)?;
            w.flush()?;
            write_sidecar(out, &envelope(&config, Some(&d), json!({ "paths": ens.points.len(), "excluded": ens.excluded, "scheme": ens.scheme })))?;
            Ok(EXIT_OK)
        }
        Command::Transport { density, tmin, steps, pairs, seed, quad, out } => {
            let d = read_density_spec(density)?;
            let xs = claims::gaussian_inputs(*pairs, d.dim(), *seed);
            let run = claims::transport_run(&d, &xs, *tmin, *steps, &quad.spec())?;
            let mut w = open_out(out)?;
            let dim = d.dim();
            let mut header: Vec<String> = (1..=dim).map(|k| format!("x{k}")).collect();
            header.extend((1..=dim).map(|k| format!("y{k}")));
            writeln!(w, "{}", header.join(","))?;
            for (x, y) in &run.pairs {
                let row: Vec<String> = x.iter().chain(y.iter()).map(|v| format!("{v:e}")).collect();
                writeln!(w, "{}", row.join(","))?;
            }
            w.flush()?;
            write_sidecar(out, &envelope(&config, Some(&d), serde_json::to_value(&run)?))?;
            Ok(EXIT_OK)
        }
        Command::Stability { config: path, out } => {
            let text = std::fs::read_to_string(path)?;
            let cfg: StabilityConfig = toml::from_str(&text).map_err(|e| Error::Config {
                line: e.span().map(|s| text[..s.start].lines().count().max(1)).unwrap_or(0),
                key: String::new(),
                message: e.message().to_string(),
            })?;
            let base = path.parent().unwrap_or(Path::new("."));
            let d = read_density_spec(base.join(&cfg.density))?;
            let opts = SuiteOptions { seed: cfg.seed, n_paths: cfg.paths, n_steps: cfg.steps, ..SuiteOptions::default() };
            let report = claims::prop_stability(&d, &opts)?;
            let mut config = config;
            config["stability"] = serde_json::to_value(&cfg)?;
            write_json(out, &envelope(&config, Some(&d), serde_json::to_value(&report)?))?;
            Ok(claim_code(&report))
        }
    }
}

fn init_workers() -> std::result::Result<(), String> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v.parse().map_err(|_| format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))?;
        if n == 0 {
            return Err(format!("{WORKERS_ENV} must be positive"));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Err(m) = init_workers() {
        eprintln!("error: {m}");
        return EXIT_ERROR;
    }
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
