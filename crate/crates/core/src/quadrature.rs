//! One-dimensional quadrature rules and their tensor products.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// Nodes and weights of a 1D rule.
#[derive(Clone, Debug)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

fn cached(table: &'static OnceLock<Mutex<HashMap<usize, Arc<Rule>>>>, n: usize, build: fn(usize) -> Rule) -> Arc<Rule> {
    let map = table.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = map.lock().expect("quadrature cache poisoned");
    guard.entry(n).or_insert_with(|| Arc::new(build(n))).clone()
}

/// Gauss–Hermite rule for the standard normal weight: Σ w_i f(z_i) ≈ E f(Z),
/// Z ~ N(0,1). Weights sum to one.
pub fn gauss_hermite(n: usize) -> Arc<Rule> {
    static TABLE: OnceLock<Mutex<HashMap<usize, Arc<Rule>>>> = OnceLock::new();
    cached(&TABLE, n, build_gauss_hermite)
}

/// Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Arc<Rule> {
    static TABLE: OnceLock<Mutex<HashMap<usize, Arc<Rule>>>> = OnceLock::new();
    cached(&TABLE, n, build_gauss_legendre)
}

fn build_gauss_hermite(n: usize) -> Rule {
    assert!(n >= 1);
    // Newton iteration on orthonormal physicists' Hermite polynomials, then
    // rescaled to the probabilists' weight.
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let pim4 = PI.powf(-0.25);
    let mut z = 0.0_f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.166_67),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let sqrt2 = 2f64.sqrt();
    let sqrt_pi = PI.sqrt();
    let mut pairs: Vec<(f64, f64)> = x.iter().zip(&w).map(|(&xi, &wi)| (xi * sqrt2, wi / sqrt_pi)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1).collect() }
}

fn build_gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    Rule { nodes, weights }
}

/// Composite Gauss–Legendre rule on [lo, hi].
///
/// The interval is split at every breakpoint inside it; panels are graded
/// geometrically (ratio 2) toward breakpoints until they are `min_width`
/// wide, and no panel is wider than `max_width`. Integrands with kinks or
/// boundary layers at the breakpoints keep full accuracy.
pub fn graded_rule(lo: f64, hi: f64, breakpoints: &[f64], graded_ends: GradedEnds, min_width: f64, max_width: f64, order: usize) -> Rule {
    let gl = gauss_legendre(order);
    let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|&b| b > lo && b < hi).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut edges = vec![lo];
    edges.extend(cuts.iter().copied());
    edges.push(hi);

    let mut panels: Vec<(f64, f64)> = Vec::new();
    let last = edges.len() - 2;
    for (k, win) in edges.windows(2).enumerate() {
        let (a, b) = (win[0], win[1]);
        let grade_a = k > 0 || graded_ends.lo;
        let grade_b = k < last || graded_ends.hi;
        graded_panels(a, b, grade_a, grade_b, min_width, &mut panels);
    }

    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (a, b) in panels {
        let pieces = ((b - a) / max_width).ceil().max(1.0) as usize;
        let h = (b - a) / pieces as f64;
        for p in 0..pieces {
            let pa = a + h * p as f64;
            let half = 0.5 * h;
            let mid = pa + half;
            for (&z, &w) in gl.nodes.iter().zip(&gl.weights) {
                nodes.push(mid + half * z);
                weights.push(half * w);
            }
        }
    }
    Rule { nodes, weights }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct GradedEnds {
    pub lo: bool,
    pub hi: bool,
}

fn graded_panels(a: f64, b: f64, grade_a: bool, grade_b: bool, min_width: f64, out: &mut Vec<(f64, f64)>) {
    let len = b - a;
    if len <= 0.0 {
        return;
    }
    let mid = a + 0.5 * len;
    let mut left = Vec::new();
    if grade_a {
        let mut w = 0.5 * len;
        while w > min_width {
            w *= 0.5;
            left.push(a + w);
        }
    }
    left.reverse();
    let mut pts = vec![a];
    pts.extend(left);
    pts.push(mid);
    if grade_b {
        let mut w = 0.5 * len;
        let mut right = Vec::new();
        while w > min_width {
            w *= 0.5;
            right.push(b - w);
        }
        pts.extend(right);
    }
    pts.push(b);
    for win in pts.windows(2) {
        if win[1] > win[0] {
            out.push((win[0], win[1]));
        }
    }
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Iterate the tensor product of per-axis rules: calls `f(point, weight)`.
pub fn for_each_tensor_node(rules: &[Rule], mut f: impl FnMut(&[f64], f64)) {
    let d = rules.len();
    if d == 0 || rules.iter().any(|r| r.is_empty()) {
        return;
    }
    let mut idx = vec![0usize; d];
    let mut point: Vec<f64> = rules.iter().map(|r| r.nodes[0]).collect();
    loop {
        let w: f64 = idx.iter().zip(rules).map(|(&i, r)| r.weights[i]).product();
        f(&point, w);
        let mut k = d;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < rules[k].len() {
                point[k] = rules[k].nodes[idx[k]];
                break;
            }
            idx[k] = 0;
            point[k] = rules[k].nodes[0];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hermite_reproduces_normal_moments() {
        let r = gauss_hermite(64);
        assert_relative_eq!(r.integrate(|_| 1.0), 1.0, epsilon = 1e-13);
        assert_relative_eq!(r.integrate(|z| z * z), 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.integrate(|z| z.powi(6)), 15.0, epsilon = 1e-11);
        assert_relative_eq!(r.integrate(|z| z.cos()), (-0.5f64).exp(), epsilon = 1e-13);
    }

    #[test]
    fn legendre_is_exact_for_polynomials() {
        let r = gauss_legendre(16);
        assert_relative_eq!(r.integrate(|x| x.powi(30)), 2.0 / 31.0, epsilon = 1e-13);
    }

    #[test]
    fn graded_rule_resolves_sqrt_cusp() {
        // ∫_{-1}^{1} |x|^{1/2} dx = 4/3
        let r = graded_rule(-1.0, 1.0, &[0.0], GradedEnds::default(), 1e-9, 0.25, 16);
        assert_relative_eq!(r.integrate(|x| x.abs().sqrt()), 4.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn simpson_matches_analytic_integral() {
        let v = adaptive_simpson(&|s| 2.0 * s, 0.0, 1.0, 1e-12);
        assert_relative_eq!(v, 1.0, epsilon = 1e-12);
        let v = adaptive_simpson(&|s: f64| s.sin(), 0.0, PI, 1e-10);
        assert_relative_eq!(v, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn tensor_product_visits_every_node() {
        let r = gauss_legendre(3);
        let mut count = 0;
        let mut total = 0.0;
        for_each_tensor_node(&[(*r).clone(), (*r).clone()], |p, w| {
            count += 1;
            total += w * p[0] * p[0] * p[1] * p[1];
        });
        assert_eq!(count, 9);
        assert_relative_eq!(total, 4.0 / 9.0, epsilon = 1e-14);
    }
}
