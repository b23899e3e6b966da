//! Dense rank-3 arrays over a chart of dimension `n`.

use std::ops::{Index, IndexMut};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Row-major `n x n x n` array; `t[(j, k, l)]` addresses component `T_jkl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(n);
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    t[(j, k, l)] = f(j, k, l);
                }
            }
        }
        t
    }

    /// Tensor whose only non-zero entries are `T_jjj = diag[j]`.
    pub fn axis_cubic(diag: &[f64]) -> Self {
        Self::from_fn(diag.len(), |j, k, l| if j == k && k == l { diag[j] } else { 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Nested `[j][k][l]` representation, used for reports.
    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.n)
            .map(|j| {
                (0..self.n)
                    .map(|k| (0..self.n).map(|l| self[(j, k, l)]).collect())
                    .collect()
            })
            .collect()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &Tensor3, s: f64) -> Self {
        assert_eq!(self.n, other.n);
        Self {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + s * b)
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Largest deviation from invariance under permutations of `(j, k, l)`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let x = self[(j, k, l)];
                    for y in [
                        self[(j, l, k)],
                        self[(k, j, l)],
                        self[(k, l, j)],
                        self[(l, j, k)],
                        self[(l, k, j)],
                    ] {
                        worst = worst.max((x - y).abs());
                    }
                }
            }
        }
        worst
    }

    /// Largest deviation from symmetry in the last two indices.
    pub fn last_pair_symmetry_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    worst = worst.max((self[(j, k, l)] - self[(j, l, k)]).abs());
                }
            }
        }
        worst
    }

    /// `Σ_kl T_jkl v^k v^l`.
    pub fn contract_last_two(&self, v: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        DVector::from_fn(n, |j, _| {
            let mut s = 0.0;
            for k in 0..n {
                for l in 0..n {
                    s += self[(j, k, l)] * v[k] * v[l];
                }
            }
            s
        })
    }

    /// `Σ_l T_jkl v^l`.
    pub fn contract_last(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |j, k| (0..n).map(|l| self[(j, k, l)] * v[l]).sum())
    }

    /// `Σ_jkl T_jkl v^j v^k v^l`.
    pub fn contract_all(&self, v: &DVector<f64>) -> f64 {
        self.contract_last_two(v).dot(v)
    }

    /// Contracts the first index with `m`: `Σ_m A_jm T_mkl`.
    pub fn transform_first(&self, a: &DMatrix<f64>) -> Tensor3 {
        let n = self.n;
        Tensor3::from_fn(n, |j, k, l| (0..n).map(|m| a[(j, m)] * self[(m, k, l)]).sum())
    }
}

impl Index<(usize, usize, usize)> for Tensor3 {
    type Output = f64;

    fn index(&self, (j, k, l): (usize, usize, usize)) -> &f64 {
        &self.data[(j * self.n + k) * self.n + l]
    }
}

impl IndexMut<(usize, usize, usize)> for Tensor3 {
    fn index_mut(&mut self, (j, k, l): (usize, usize, usize)) -> &mut f64 {
        &mut self.data[(j * self.n + k) * self.n + l]
    }
}
