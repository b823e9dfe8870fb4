//! Symmetric banded matrices and their Cholesky factorization.
//!
//! Only the lower band is stored. Row `i` keeps columns `i - half_bandwidth ..= i`,
//! which for the two-DOF Hermite beam element means a half bandwidth of 3.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BandError {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
}

/// Symmetric matrix with entries confined to `|i - j| <= half_bandwidth`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    n: usize,
    hb: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, half_bandwidth: usize) -> Self {
        Self {
            n,
            hb: half_bandwidth,
            data: vec![0.0; n * (half_bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.hb
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.hb || i >= self.n {
            None
        } else {
            Some(i * (self.hb + 1) + (j + self.hb - i))
        }
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |k| self.data[k])
    }

    /// Adds `v` to the symmetric pair `(i, j)`/`(j, i)`.
    ///
    /// Panics when `(i, j)` lies outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside band {}", self.hb));
        self.data[k] += v;
    }

    /// Principal submatrix on the contiguous index range `start..start + len`.
    pub fn principal(&self, start: usize, len: usize) -> SymBand {
        let mut out = SymBand::zeros(len, self.hb);
        for i in 0..len {
            for j in i.saturating_sub(self.hb)..=i {
                let k = out.slot(i, j).expect("in band");
                out.data[k] = self.get(start + i, start + j);
            }
        }
        out
    }

    /// `alpha * self + beta * other`, both with the same shape.
    pub fn combine(&self, alpha: f64, other: &SymBand, beta: f64) -> SymBand {
        assert_eq!(self.n, other.n);
        assert_eq!(self.hb, other.hb);
        SymBand {
            n: self.n,
            hb: self.hb,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        }
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        let w = self.hb + 1;
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let row = &self.data[i * w..(i + 1) * w];
            let j0 = i.saturating_sub(self.hb);
            let mut acc = row[self.hb] * x[i];
            for j in j0..i {
                let a = row[j + self.hb - i];
                acc += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `x^T A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n);
        let w = self.hb + 1;
        let mut acc = 0.0;
        for i in 0..self.n {
            let row = &self.data[i * w..(i + 1) * w];
            let j0 = i.saturating_sub(self.hb);
            let mut off = 0.0;
            for j in j0..i {
                off += row[j + self.hb - i] * x[j];
            }
            acc += x[i] * (row[self.hb] * x[i] + 2.0 * off);
        }
        acc
    }

    /// Row-major dense copy, mainly for tests and small diagnostics.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn cholesky(&self) -> Result<BandCholesky, BandError> {
        BandCholesky::factor(self)
    }
}

/// Lower-triangular banded Cholesky factor `A = L L^T`.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    l: SymBand,
}

impl BandCholesky {
    pub fn factor(a: &SymBand) -> Result<Self, BandError> {
        let n = a.n;
        let hb = a.hb;
        let w = hb + 1;
        let mut l = a.clone();
        for i in 0..n {
            let j0 = i.saturating_sub(hb);
            for j in j0..=i {
                let mut s = l.data[i * w + j + hb - i];
                let k0 = j0.max(j.saturating_sub(hb));
                for k in k0..j {
                    s -= l.data[i * w + k + hb - i] * l.data[j * w + k + hb - j];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(BandError::NotPositiveDefinite { row: i, pivot: s });
                    }
                    l.data[i * w + hb] = s.sqrt();
                } else {
                    l.data[i * w + j + hb - i] = s / l.data[j * w + hb];
                }
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<(), BandError> {
        let n = self.l.n;
        if b.len() != n {
            return Err(BandError::Dimension {
                expected: n,
                actual: b.len(),
            });
        }
        let hb = self.l.hb;
        let w = hb + 1;
        let d = &self.l.data;
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(hb)..i {
                s -= d[i * w + k + hb - i] * b[k];
            }
            b[i] = s / d[i * w + hb];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n.min(i + hb + 1) {
                s -= d[k * w + i + hb - k] * b[k];
            }
            b[i] = s / d[i * w + hb];
        }
        Ok(())
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, BandError> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }
}
