use nalgebra::DVector;
use rand::Rng;
use serde::Serialize;

use crate::error::{input, Result};
use crate::rng::{standard_normal, StreamRng};

/// Convex compact support: an axis-aligned box or a Euclidean ball.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexSet {
    Box { center: Vec<f64>, half_widths: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl ConvexSet {
    pub fn new_box(center: Vec<f64>, half_widths: Vec<f64>) -> Result<Self> {
        if center.is_empty() || center.len() != half_widths.len() {
            return input("box center and half_widths must be nonempty and of equal length");
        }
        if half_widths.iter().any(|h| !(h.is_finite() && *h > 0.0)) || center.iter().any(|c| !c.is_finite()) {
            return input("box half_widths must be positive and finite");
        }
        Ok(ConvexSet::Box { center, half_widths })
    }

    pub fn new_ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() || !(radius.is_finite() && radius > 0.0) || center.iter().any(|c| !c.is_finite()) {
            return input("ball needs a nonempty finite center and a positive radius");
        }
        Ok(ConvexSet::Ball { center, radius })
    }

    pub fn dim(&self) -> usize {
        self.center().len()
    }

    pub fn center(&self) -> &[f64] {
        match self {
            ConvexSet::Box { center, .. } | ConvexSet::Ball { center, .. } => center,
        }
    }

    pub fn center_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(self.center())
    }

    /// Minkowski gauge about the center: ≤ 1 exactly on the set.
    pub fn gauge(&self, y: &DVector<f64>) -> f64 {
        match self {
            ConvexSet::Box { center, half_widths } => {
                (0..center.len()).map(|i| (y[i] - center[i]).abs() / half_widths[i]).fold(0.0, f64::max)
            }
            ConvexSet::Ball { center, radius } => {
                (0..center.len()).map(|i| (y[i] - center[i]).powi(2)).sum::<f64>().sqrt() / radius
            }
        }
    }

    pub fn contains(&self, y: &DVector<f64>) -> bool {
        self.gauge(y) <= 1.0
    }

    pub fn diameter(&self) -> f64 {
        match self {
            ConvexSet::Box { half_widths, .. } => 2.0 * half_widths.iter().map(|h| h * h).sum::<f64>().sqrt(),
            ConvexSet::Ball { radius, .. } => 2.0 * radius,
        }
    }

    /// Extent of the bounding box along `axis`.
    pub fn axis_bounds(&self, axis: usize) -> (f64, f64) {
        match self {
            ConvexSet::Box { center, half_widths } => (center[axis] - half_widths[axis], center[axis] + half_widths[axis]),
            ConvexSet::Ball { center, radius } => (center[axis] - radius, center[axis] + radius),
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            ConvexSet::Box { center, half_widths } => {
                DVector::from_fn(center.len(), |i, _| y[i].clamp(center[i] - half_widths[i], center[i] + half_widths[i]))
            }
            ConvexSet::Ball { radius, .. } => {
                let c = self.center_vector();
                let dy = y - &c;
                let n = dy.norm();
                if n <= *radius {
                    y.clone()
                } else {
                    c + dy * (*radius / n)
                }
            }
        }
    }

    /// Euclidean distance from y to the set (0 inside).
    pub fn distance(&self, y: &DVector<f64>) -> f64 {
        (y - self.project(y)).norm()
    }

    pub fn volume(&self) -> f64 {
        match self {
            ConvexSet::Box { half_widths, .. } => half_widths.iter().map(|h| 2.0 * h).product(),
            ConvexSet::Ball { radius, center } => {
                let d = center.len() as f64;
                std::f64::consts::PI.powf(d / 2.0) / gamma_half_integer(d / 2.0 + 1.0) * radius.powf(d)
            }
        }
    }

    pub fn sample_uniform(&self, rng: &mut StreamRng) -> DVector<f64> {
        match self {
            ConvexSet::Box { center, half_widths } => {
                DVector::from_fn(center.len(), |i, _| center[i] + half_widths[i] * (2.0 * rng.gen::<f64>() - 1.0))
            }
            ConvexSet::Ball { center, radius } => {
                let d = center.len();
                let z = standard_normal(rng, d);
                let u: f64 = rng.gen();
                let r = radius * u.powf(1.0 / d as f64);
                self.center_vector() + z.normalize() * r
            }
        }
    }
}

// Γ at positive integers and half-integers.
fn gamma_half_integer(x: f64) -> f64 {
    if (x - x.round()).abs() < 1e-12 {
        (1..x.round() as usize).map(|k| k as f64).product()
    } else {
        let mut g = std::f64::consts::PI.sqrt();
        let mut a = 0.5;
        while a < x - 1e-12 {
            g *= a;
            a += 1.0;
        }
        g
    }
}
