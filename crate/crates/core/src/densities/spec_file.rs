//! Density specification files (TOML).
//!
//! ```toml
//! family = "perturbed"
//! dim = 1
//!
//! [potential]
//! kind = "quadratic"        # quadratic | quartic_ratio | quadratic_quartic
//! alpha = 2.0
//!
//! [perturbation]
//! kind = "clamped_holder"   # zero | clamped_holder | cosine
//! coef = 0.5
//! beta = 0.5
//!
//! [assumptions]
//! alpha = 2.0
//! beta = 0.5
//! holder_K = 1.0
//! curvature_A = 2.0
//! support = "full"
//! condition2 = "bounded_curvature"
//! ```
//!
//! Mixtures use `family = "mixture"` and a `[[components]]` array with
//! `weight`, `mean` and either `covariance` (rows) or scalar `variance`.
//! Compact densities use `family = "compact"` with a `[support]` table
//! (`kind = "box"` with `center`, `half_widths`, or `kind = "ball"` with
//! `center`, `radius`) and an optional `[interior]` perturbation table.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use super::{
    AssumptionProfile, ClampedHolder, CompactDensity, ConvexSet, Cosine, GaussianMixture, Perturbation, PerturbedLogConcave,
    Potential, QuadraticQuartic, Quadratic, QuarticRatio, SupportKind, TargetDensity, ZeroPerturbation,
};
use crate::error::{Error, Result};

#[derive(Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
enum SpecFile {
    Mixture {
        components: Vec<ComponentSpec>,
        assumptions: Option<AssumptionProfile>,
    },
    Perturbed {
        dim: usize,
        potential: PotentialSpec,
        #[serde(default)]
        perturbation: PerturbationSpec,
        assumptions: AssumptionProfile,
    },
    Compact {
        support: SupportSpec,
        #[serde(default)]
        interior: PerturbationSpec,
        assumptions: Option<AssumptionProfile>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentSpec {
    weight: f64,
    mean: Vec<f64>,
    covariance: Option<Vec<Vec<f64>>>,
    variance: Option<f64>,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum PotentialSpec {
    Quadratic {
        alpha: f64,
        center: Option<Vec<f64>>,
    },
    QuarticRatio {
        #[serde(default = "one")]
        alpha: f64,
        #[serde(default = "one")]
        coef: f64,
    },
    QuadraticQuartic {
        theta: f64,
        #[serde(default = "one")]
        quartic: f64,
    },
}

#[derive(Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum PerturbationSpec {
    #[default]
    Zero,
    ClampedHolder {
        coef: f64,
        beta: f64,
    },
    Cosine {
        coef: f64,
        #[serde(default = "one")]
        freq: f64,
    },
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum SupportSpec {
    Box { center: Vec<f64>, half_widths: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

fn one() -> f64 {
    1.0
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

// First line whose key (before `=` or a table header) is `key`.
fn line_of_key(text: &str, key: &str) -> usize {
    for (i, line) in text.lines().enumerate() {
        let t = line.trim_start();
        let head = t.split(['=', ']']).next().unwrap_or("").trim().trim_start_matches('[');
        if head == key || head.ends_with(&format!(".{key}")) {
            return i + 1;
        }
    }
    0
}

fn config_error(text: &str, key: &str, message: impl Into<String>) -> Error {
    Error::Config { line: line_of_key(text, key), key: key.to_string(), message: message.into() }
}

fn backticked(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let end = message[start..].find('`')? + start;
    Some(message[start..end].to_string())
}

fn perturbation(spec: PerturbationSpec) -> Arc<dyn Perturbation> {
    match spec {
        PerturbationSpec::Zero => Arc::new(ZeroPerturbation),
        PerturbationSpec::ClampedHolder { coef, beta } => Arc::new(ClampedHolder { coef, beta }),
        PerturbationSpec::Cosine { coef, freq } => Arc::new(Cosine { coef, freq }),
    }
}

fn check_profile(text: &str, profile: &AssumptionProfile) -> Result<()> {
    profile.check().map_err(|e| {
        let message = e.to_string();
        let key = ["curvature_A", "holder_K", "condition2", "alpha", "beta"]
            .into_iter()
            .find(|k| message.contains(k))
            .unwrap_or("assumptions");
        config_error(text, key, message)
    })
}

/// Parse a density specification from TOML text.
pub fn parse_density_spec(text: &str) -> Result<TargetDensity> {
    let spec: SpecFile = toml::from_str(text).map_err(|e| {
        let message = e.message().to_string();
        let key = backticked(&message).unwrap_or_default();
        // Tagged enums lose spans; fall back to locating the key.
        let line = match e.span() {
            Some(s) => line_of_offset(text, s.start),
            None => line_of_key(text, &key),
        };
        Error::Config { line, key, message }
    })?;
    match spec {
        SpecFile::Mixture { components, assumptions } => {
            if let Some(p) = &assumptions {
                check_profile(text, p)?;
            }
            let mut weights = Vec::new();
            let mut means = Vec::new();
            let mut covs = Vec::new();
            for (i, c) in components.into_iter().enumerate() {
                let d = c.mean.len();
                let cov = match (c.covariance, c.variance) {
                    (Some(rows), None) => {
                        if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                            return Err(config_error(text, "covariance", format!("component {i}: covariance must be {d}x{d}")));
                        }
                        DMatrix::from_fn(d, d, |r, k| rows[r][k])
                    }
                    (None, Some(v)) => DMatrix::identity(d, d) * v,
                    _ => {
                        return Err(config_error(text, "components", format!("component {i}: give exactly one of covariance, variance")))
                    }
                };
                weights.push(c.weight);
                means.push(DVector::from_vec(c.mean));
                covs.push(cov);
            }
            let mix = GaussianMixture::new(weights, means, covs).map_err(|e| config_error(text, "components", e.to_string()))?;
            Ok(TargetDensity::Mixture(mix))
        }
        SpecFile::Perturbed { dim, potential, perturbation: pert, assumptions } => {
            check_profile(text, &assumptions)?;
            if assumptions.support != SupportKind::Full {
                return Err(config_error(text, "support", "perturbed densities have support = \"full\""));
            }
            if dim == 0 {
                return Err(config_error(text, "dim", "dim must be positive"));
            }
            let u: Arc<dyn Potential> = match potential {
                PotentialSpec::Quadratic { alpha, center } => {
                    let center = center.unwrap_or_else(|| vec![0.0; dim]);
                    if center.len() != dim {
                        return Err(config_error(text, "center", format!("center must have {dim} entries")));
                    }
                    Arc::new(Quadratic { alpha, center: DVector::from_vec(center) })
                }
                PotentialSpec::QuarticRatio { alpha, coef } => Arc::new(QuarticRatio { alpha, coef, dim }),
                PotentialSpec::QuadraticQuartic { theta, quartic } => Arc::new(QuadraticQuartic { theta, quartic, dim }),
            };
            let p = PerturbedLogConcave::new(u, perturbation(pert), assumptions).map_err(|e| config_error(text, "assumptions", e.to_string()))?;
            Ok(TargetDensity::Perturbed(p))
        }
        SpecFile::Compact { support, interior, assumptions } => {
            if let Some(p) = &assumptions {
                check_profile(text, p)?;
                if p.support != SupportKind::CompactConvex {
                    return Err(config_error(text, "support", "compact densities need support = \"compact_convex\""));
                }
            }
            let set = match support {
                SupportSpec::Box { center, half_widths } => ConvexSet::new_box(center, half_widths),
                SupportSpec::Ball { center, radius } => ConvexSet::new_ball(center, radius),
            }
            .map_err(|e| config_error(text, "support", e.to_string()))?;
            Ok(TargetDensity::Compact(CompactDensity { support: set, interior: perturbation(interior), profile: assumptions }))
        }
    }
}

pub fn read_density_spec(path: impl AsRef<Path>) -> Result<TargetDensity> {
    let text = std::fs::read_to_string(path)?;
    parse_density_spec(&text)
}
