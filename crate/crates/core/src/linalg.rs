//! Small dense linear algebra: cyclic Jacobi eigen-solver for symmetric
//! matrices, dense tensors of arbitrary order, Gaussian moment tensors and
//! the set-partition tables used by the cumulant formulas.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{input, Result};

/// Symmetry tolerance accepted by [`sym_eigs`], relative to the largest entry.
pub const SYMMETRY_TOL: f64 = 1e-8;

const JACOBI_OFF_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct SymEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `i` is the eigenvector of `values[i]`.
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().expect("non-empty spectrum")
    }

    /// |λ_max| ∨ |λ_min|.
    pub fn op_norm(&self) -> f64 {
        self.min().abs().max(self.max().abs())
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations,
/// iterated until the off-diagonal Frobenius norm drops below 1e-12 (relative
/// to the matrix norm).
pub fn sym_eigs(m: &DMatrix<f64>) -> Result<SymEigen> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return input(format!("sym_eigs needs a non-empty square matrix, got {}x{}", m.nrows(), m.ncols()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return input("sym_eigs: non-finite entry");
    }
    let scale = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return input(format!(
                    "sym_eigs: matrix not symmetric at ({i},{j}): {} vs {}",
                    m[(i, j)],
                    m[(j, i)]
                ));
            }
        }
    }

    let mut a = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let mut v = DMatrix::<f64>::identity(n, n);
    let norm = a.norm().max(f64::MIN_POSITIVE);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= JACOBI_OFF_TOL * norm {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymEigen { values, vectors })
}

/// Dense tensor of order `order` over R^dim, stored row-major
/// (first index slowest).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub order: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(order: usize, dim: usize) -> Self {
        Tensor { order, dim, data: vec![0.0; dim.pow(order as u32)] }
    }

    pub fn from_fn(order: usize, dim: usize, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Tensor::zeros(order, dim);
        let mut idx = vec![0usize; order];
        for flat in 0..t.data.len() {
            t.unflatten(flat, &mut idx);
            t.data[flat] = f(&idx);
        }
        t
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        Tensor { order: 1, dim: v.len(), data: v.iter().copied().collect() }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let d = m.nrows();
        Tensor::from_fn(2, d, |ix| m[(ix[0], ix[1])])
    }

    pub fn to_vector(&self) -> DVector<f64> {
        assert_eq!(self.order, 1);
        DVector::from_column_slice(&self.data)
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        assert_eq!(self.order, 2);
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.data[i * self.dim + j])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn unflatten(&self, mut flat: usize, out: &mut [usize]) {
        for slot in out.iter_mut().rev() {
            *slot = flat % self.dim;
            flat /= self.dim;
        }
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.flat_index(idx)]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Full contraction with `order` copies of `w`.
    pub fn contract_all(&self, w: &DVector<f64>) -> f64 {
        let mut idx = vec![0usize; self.order];
        let mut total = 0.0;
        for flat in 0..self.data.len() {
            self.unflatten(flat, &mut idx);
            let prod: f64 = idx.iter().map(|&i| w[i]).product();
            total += self.data[flat] * prod;
        }
        total
    }

    pub fn scale(mut self, factor: f64) -> Self {
        self.data.iter_mut().for_each(|v| *v *= factor);
        self
    }
}

/// E[w_{i_1} ... w_{i_k}] for a Gaussian-like law with mean `mean` and
/// second-order cumulant `cov`: the sum over partial matchings of the index
/// list where each pair contributes `cov` and each singleton `mean`.
///
/// `cov` need not be positive definite; with `cov = S − Id` this evaluates
/// the expected Hermite tensors of N(mean, S).
pub fn gaussian_moment(indices: &[usize], mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    match indices.split_first() {
        None => 1.0,
        Some((&first, rest)) => {
            let mut total = mean[first] * gaussian_moment(rest, mean, cov);
            for j in 0..rest.len() {
                let c = cov[(first, rest[j])];
                if c == 0.0 {
                    continue;
                }
                let mut remaining = Vec::with_capacity(rest.len() - 1);
                remaining.extend_from_slice(&rest[..j]);
                remaining.extend_from_slice(&rest[j + 1..]);
                total += c * gaussian_moment(&remaining, mean, cov);
            }
            total
        }
    }
}

/// Tensor of [`gaussian_moment`] over all index tuples of the given order.
pub fn gaussian_moment_tensor(order: usize, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Tensor {
    Tensor::from_fn(order, mean.len(), |idx| gaussian_moment(idx, mean, cov))
}

/// A set partition of {0, .., n-1}: each block is an ascending index list.
pub type Partition = Vec<Vec<usize>>;

const MAX_PARTITION_ORDER: usize = 8;

fn build_partitions(n: usize) -> Vec<Partition> {
    // Restricted-growth strings enumerate each partition exactly once.
    let mut out = Vec::new();
    if n == 0 {
        out.push(Vec::new());
        return out;
    }
    let mut labels = vec![0usize; n];
    fn rec(pos: usize, max_label: usize, labels: &mut [usize], out: &mut Vec<Partition>) {
        let n = labels.len();
        if pos == n {
            let blocks = max_label + 1;
            let mut part: Partition = vec![Vec::new(); blocks];
            for (i, &l) in labels.iter().enumerate() {
                part[l].push(i);
            }
            out.push(part);
            return;
        }
        for l in 0..=(max_label + 1) {
            labels[pos] = l;
            rec(pos + 1, max_label.max(l), labels, out);
        }
    }
    rec(1, 0, &mut labels, &mut out);
    out
}

/// All set partitions of {0..n-1}, built once per order and cached.
pub fn set_partitions(n: usize) -> &'static [Partition] {
    static CACHE: OnceLock<Vec<Vec<Partition>>> = OnceLock::new();
    assert!(n <= MAX_PARTITION_ORDER, "partition order {n} exceeds cache");
    let cache = CACHE.get_or_init(|| (0..=MAX_PARTITION_ORDER).map(build_partitions).collect());
    &cache[n]
}

/// Joint cumulant tensor of order `n` from moment tensors via the
/// moment-to-cumulant partition sum
/// κ_n = Σ_π (−1)^{|π|−1} (|π|−1)! Π_{B∈π} m_{|B|}.
///
/// `moments[l]` must hold the order-`l` moment tensor for l = 1..=n. When the
/// moments are centered the singleton blocks vanish and are skipped.
pub fn cumulant_from_moments(n: usize, moments: &[Tensor], centered: bool) -> Tensor {
    let dim = moments[1].dim;
    let parts = set_partitions(n);
    Tensor::from_fn(n, dim, |idx| {
        let mut total = 0.0;
        for part in parts {
            if centered && part.iter().any(|b| b.len() == 1) {
                continue;
            }
            let k = part.len();
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            let coef = sign * factorial(k - 1);
            let mut prod = 1.0;
            let mut sub = Vec::with_capacity(n);
            for block in part {
                sub.clear();
                sub.extend(block.iter().map(|&b| idx[b]));
                prod *= moments[block.len()].get(&sub);
                if prod == 0.0 {
                    break;
                }
            }
            total += coef * prod;
        }
        total
    })
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

pub fn outer(a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    a * b.transpose()
}

/// Stable log Σ exp(v_i); −∞ for an empty or all −∞ slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn diagonal_and_swap_spectra() {
        let e = sym_eigs(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0])).unwrap();
        assert_eq!((e.min(), e.max()), (-2.0, 1.0));
        let e = sym_eigs(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert_relative_eq!(e.min(), -1.0, epsilon = 1e-14);
        assert_relative_eq!(e.max(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(sym_eigs(&m), Err(crate::Error::Input(_))));
    }

    /// Real roots of the characteristic cubic by the trigonometric method.
    fn cubic_roots(m: &DMatrix<f64>) -> [f64; 3] {
        let tr = m.trace();
        let q = tr / 3.0;
        let b = m - DMatrix::identity(3, 3) * q;
        let p = ((b.clone() * b.clone()).trace() / 6.0).sqrt();
        let r = (b / p).determinant() / 2.0;
        let phi = r.clamp(-1.0, 1.0).acos() / 3.0;
        let mut roots = [
            q + 2.0 * p * phi.cos(),
            q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos(),
            q + 2.0 * p * (phi + 4.0 * std::f64::consts::PI / 3.0).cos(),
        ];
        roots.sort_by(f64::total_cmp);
        roots
    }

    #[test]
    fn random_3x3_matches_cubic_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let a = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-2.0..2.0));
            let m = &a + a.transpose();
            let e = sym_eigs(&m).unwrap();
            let roots = cubic_roots(&m);
            for (v, r) in e.values.iter().zip(roots) {
                assert!((v - r).abs() < 1e-10, "{v} vs {r}");
            }
            let recon = &e.vectors * DMatrix::from_diagonal(&DVector::from_vec(e.values.clone())) * e.vectors.transpose();
            assert!((recon - &m).norm() < 1e-11);
        }
    }

    #[test]
    fn bell_numbers() {
        let bells: Vec<usize> = (0..=5).map(|n| set_partitions(n).len()).collect();
        assert_eq!(bells, vec![1, 1, 2, 5, 15, 52]);
    }

    #[test]
    fn gaussian_fourth_moment_is_three_sigma4() {
        let mean = DVector::from_element(1, 0.0);
        let cov = DMatrix::from_element(1, 1, 2.0);
        assert_relative_eq!(gaussian_moment(&[0, 0, 0, 0], &mean, &cov), 12.0);
        let mean = DVector::from_element(1, 1.5);
        // E[(m + Z)^3] = m^3 + 3 m σ²
        assert_relative_eq!(gaussian_moment(&[0, 0, 0], &mean, &cov), 1.5f64.powi(3) + 3.0 * 1.5 * 2.0);
    }

    #[test]
    fn gaussian_cumulants_above_two_vanish() {
        let mean = DVector::from_vec(vec![0.3, -0.7]);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.5]);
        let raw: Vec<Tensor> = (0..=5).map(|k| gaussian_moment_tensor(k, &mean, &cov)).collect();
        for n in 3..=5 {
            assert!(cumulant_from_moments(n, &raw, false).max_abs() < 1e-12);
        }
        let k2 = cumulant_from_moments(2, &raw, false).to_matrix();
        assert!((k2 - cov).norm() < 1e-14);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_relative_eq!(log_sum_exp(&[1000.0, 1000.0]), 1000.0 + 2f64.ln());
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }
}
