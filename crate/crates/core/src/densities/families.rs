//! Built-in closed-form potentials `u` and perturbations `a`.

use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};

/// Convex part `u` of a density exp(−u + a).
pub trait Potential: Send + Sync + Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    /// argmin u.
    fn minimizer(&self) -> DVector<f64>;
    fn label(&self) -> String;
}

/// Perturbation `a` of a density exp(−u + a).
pub trait Perturbation: Send + Sync + Debug {
    fn value(&self, x: &DVector<f64>) -> f64;
    /// Coordinates along `axis` where `a` fails to be smooth.
    fn breakpoints(&self, axis: usize) -> Vec<f64>;
    fn is_zero(&self) -> bool {
        false
    }
    fn label(&self) -> String;
}

/// u(x) = (α/2)‖x − c‖².
#[derive(Clone, Debug)]
pub struct Quadratic {
    pub alpha: f64,
    pub center: DVector<f64>,
}

impl Potential for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.alpha * (x - &self.center).norm_squared()
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (x - &self.center) * self.alpha
    }
    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.dim(), self.dim()) * self.alpha
    }
    fn minimizer(&self) -> DVector<f64> {
        self.center.clone()
    }
    fn label(&self) -> String {
        format!("quadratic(alpha={})", self.alpha)
    }
}

/// u(x) = (α/2)‖x‖² + c Σ x_i⁴ / (1 + x_i²).
///
/// Per axis u'' = α + c(2 + (6x² − 2)/(1 + x²)³) ∈ [α, α + 2.5c], so the
/// potential is strongly convex with bounded curvature.
#[derive(Clone, Debug)]
pub struct QuarticRatio {
    pub alpha: f64,
    pub coef: f64,
    pub dim: usize,
}

impl QuarticRatio {
    pub fn curvature_bound(&self) -> f64 {
        self.alpha + 2.5 * self.coef
    }
}

impl Potential for QuarticRatio {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        x.iter().map(|&v| 0.5 * self.alpha * v * v + self.coef * v.powi(4) / (1.0 + v * v)).sum()
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(|v| {
            let q = 1.0 + v * v;
            self.alpha * v + self.coef * (4.0 * v.powi(3) * q - 2.0 * v.powi(5)) / (q * q)
        })
    }
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&x.map(|v| {
            let q = 1.0 + v * v;
            self.alpha + self.coef * (2.0 + (6.0 * v * v - 2.0) / q.powi(3))
        }))
    }
    fn minimizer(&self) -> DVector<f64> {
        DVector::zeros(self.dim)
    }
    fn label(&self) -> String {
        format!("quartic_ratio(alpha={}, coef={})", self.alpha, self.coef)
    }
}

/// W(x) = (θ/2)‖x‖² + c Σ x_i⁴.
#[derive(Clone, Debug)]
pub struct QuadraticQuartic {
    pub theta: f64,
    pub quartic: f64,
    pub dim: usize,
}

impl Potential for QuadraticQuartic {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        x.iter().map(|&v| 0.5 * self.theta * v * v + self.quartic * v.powi(4)).sum()
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(|v| self.theta * v + 4.0 * self.quartic * v.powi(3))
    }
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&x.map(|v| self.theta + 12.0 * self.quartic * v * v))
    }
    fn minimizer(&self) -> DVector<f64> {
        DVector::zeros(self.dim)
    }
    fn label(&self) -> String {
        format!("quadratic_quartic(theta={}, quartic={})", self.theta, self.quartic)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroPerturbation;

impl Perturbation for ZeroPerturbation {
    fn value(&self, _x: &DVector<f64>) -> f64 {
        0.0
    }
    fn breakpoints(&self, _axis: usize) -> Vec<f64> {
        Vec::new()
    }
    fn is_zero(&self) -> bool {
        true
    }
    fn label(&self) -> String {
        "zero".into()
    }
}

/// a(x) = coef · min(1, |x₁|)^β: β-Hölder, kinks at x₁ ∈ {−1, 0, 1}.
#[derive(Clone, Copy, Debug)]
pub struct ClampedHolder {
    pub coef: f64,
    pub beta: f64,
}

impl Perturbation for ClampedHolder {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.coef * x[0].abs().min(1.0).powf(self.beta)
    }
    fn breakpoints(&self, axis: usize) -> Vec<f64> {
        if axis == 0 {
            vec![-1.0, 0.0, 1.0]
        } else {
            Vec::new()
        }
    }
    fn is_zero(&self) -> bool {
        self.coef == 0.0
    }
    fn label(&self) -> String {
        format!("clamped_holder(coef={}, beta={})", self.coef, self.beta)
    }
}

/// a(x) = coef · cos(freq · x₁): smooth and bounded.
#[derive(Clone, Copy, Debug)]
pub struct Cosine {
    pub coef: f64,
    pub freq: f64,
}

impl Perturbation for Cosine {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.coef * (self.freq * x[0]).cos()
    }
    fn breakpoints(&self, _axis: usize) -> Vec<f64> {
        Vec::new()
    }
    fn is_zero(&self) -> bool {
        self.coef == 0.0
    }
    fn label(&self) -> String {
        format!("cosine(coef={}, freq={})", self.coef, self.freq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_hessian(p: &dyn Potential, x: &DVector<f64>) -> DMatrix<f64> {
        let d = p.dim();
        let h = 1e-5;
        DMatrix::from_fn(d, d, |i, j| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            (p.gradient(&xp)[i] - p.gradient(&xm)[i]) / (2.0 * h)
        })
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let pots: Vec<Box<dyn Potential>> = vec![
            Box::new(QuarticRatio { alpha: 1.0, coef: 1.0, dim: 2 }),
            Box::new(QuadraticQuartic { theta: 3.0, quartic: 1.0, dim: 2 }),
            Box::new(Quadratic { alpha: 2.0, center: DVector::from_vec(vec![0.5, -1.0]) }),
        ];
        let x = DVector::from_vec(vec![0.7, -1.3]);
        for p in &pots {
            let h = 1e-6;
            for i in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (p.value(&xp) - p.value(&xm)) / (2.0 * h);
                assert!((fd - p.gradient(&x)[i]).abs() < 1e-7, "{}", p.label());
            }
            assert!((fd_hessian(p.as_ref(), &x) - p.hessian(&x)).norm() < 1e-6, "{}", p.label());
        }
    }

    #[test]
    fn quartic_ratio_curvature_within_bounds() {
        let p = QuarticRatio { alpha: 1.0, coef: 1.0, dim: 1 };
        for k in -400..=400 {
            let x = DVector::from_element(1, k as f64 * 0.01);
            let h = p.hessian(&x)[(0, 0)];
            assert!(h >= 1.0 - 1e-12 && h <= p.curvature_bound() + 1e-12);
        }
    }
}
