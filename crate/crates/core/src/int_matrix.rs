//! Small dense integer matrices with exact determinant and adjugate.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square integer matrix stored row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntMatrix {
    dim: usize,
    entries: Vec<i64>,
}

impl IntMatrix {
    pub fn from_row_major(dim: usize, entries: Vec<i64>) -> Result<Self> {
        if dim == 0 || entries.len() != dim * dim {
            return Err(Error::Precondition(format!(
                "matrix needs {} entries for dimension {dim}, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Ok(Self { dim, entries })
    }

    /// Builds a square matrix from a flat row-major list whose length is a perfect square.
    pub fn from_flat(entries: Vec<i64>) -> Result<Self> {
        let dim = (entries.len() as f64).sqrt().round() as usize;
        Self::from_row_major(dim, entries)
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1;
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[i64] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> i64 {
        self.entries[row * self.dim + col]
    }

    pub fn mul(&self, other: &IntMatrix) -> IntMatrix {
        let d = self.dim;
        let mut entries = vec![0i64; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.get(i, k);
                if a == 0 {
                    continue;
                }
                for j in 0..d {
                    entries[i * d + j] += a * other.get(k, j);
                }
            }
        }
        IntMatrix { dim: d, entries }
    }

    pub fn pow(&self, n: u32) -> IntMatrix {
        let mut acc = IntMatrix::identity(self.dim);
        for _ in 0..n {
            acc = self.mul(&acc);
        }
        acc
    }

    pub fn minus_identity(&self) -> IntMatrix {
        let mut out = self.clone();
        for i in 0..self.dim {
            out.entries[i * self.dim + i] -= 1;
        }
        out
    }

    pub fn mul_vec(&self, v: &[i64]) -> Vec<i64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    /// Exact determinant by fraction-free (Bareiss) elimination.
    pub fn det(&self) -> i64 {
        let d = self.dim;
        let mut m: Vec<i128> = self.entries.iter().map(|&v| v as i128).collect();
        let mut sign = 1i128;
        let mut prev = 1i128;
        for k in 0..d {
            if m[k * d + k] == 0 {
                let Some(swap) = (k + 1..d).find(|&r| m[r * d + k] != 0) else {
                    return 0;
                };
                for c in 0..d {
                    m.swap(k * d + c, swap * d + c);
                }
                sign = -sign;
            }
            for i in k + 1..d {
                for j in k + 1..d {
                    m[i * d + j] =
                        (m[i * d + j] * m[k * d + k] - m[i * d + k] * m[k * d + j]) / prev;
                }
            }
            prev = m[k * d + k];
        }
        (sign * m[d * d - 1]) as i64
    }

    fn minor(&self, skip_row: usize, skip_col: usize) -> IntMatrix {
        let d = self.dim;
        let entries = (0..d)
            .filter(|&r| r != skip_row)
            .flat_map(|r| {
                (0..d)
                    .filter(move |&c| c != skip_col)
                    .map(move |c| self.get(r, c))
            })
            .collect();
        IntMatrix {
            dim: d - 1,
            entries,
        }
    }

    /// Classical adjugate, so that `self * adj = det * I`.
    pub fn adjugate(&self) -> IntMatrix {
        let d = self.dim;
        if d == 1 {
            return IntMatrix::identity(1);
        }
        let mut entries = vec![0i64; d * d];
        for i in 0..d {
            for j in 0..d {
                let cof = self.minor(i, j).det();
                let sign = if (i + j) % 2 == 0 { 1 } else { -1 };
                // transpose of the cofactor matrix
                entries[j * d + i] = sign * cof;
            }
        }
        IntMatrix { dim: d, entries }
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.dim, self.dim, self.entries.iter().map(|&v| v as f64))
    }
}
