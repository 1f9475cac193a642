//! Direct solvers for the small structured systems the discretization
//! produces: symmetric positive definite tridiagonal systems (operator
//! solves) and general banded systems (Newton corrections).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite: pivot {pivot:e} at row {row}")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("banded LU hit a zero pivot in column {col}")]
    SingularBand { col: usize },
    #[error("dimension mismatch: matrix order {order}, vector length {len}")]
    DimensionMismatch { order: usize, len: usize },
}

/// Symmetric tridiagonal matrix given by its diagonal and sub/super diagonal.
#[derive(Debug, Clone)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn order(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.order();
        assert_eq!(v.len(), n);
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * v[i];
            if i > 0 {
                s += self.off[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * v[i + 1];
            }
            out[i] = s;
        }
        out
    }

    /// LDL^T factorization; fails if any pivot is nonpositive.
    pub fn ldlt(&self) -> Result<TridiagFactor, LinalgError> {
        let n = self.order();
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        d[0] = self.diag[0];
        if d[0] <= 0.0 {
            return Err(LinalgError::NotPositiveDefinite {
                row: 0,
                pivot: d[0],
            });
        }
        for i in 0..n - 1 {
            l[i] = self.off[i] / d[i];
            d[i + 1] = self.diag[i + 1] - l[i] * self.off[i];
            if d[i + 1] <= 0.0 {
                return Err(LinalgError::NotPositiveDefinite {
                    row: i + 1,
                    pivot: d[i + 1],
                });
            }
        }
        Ok(TridiagFactor { d, l })
    }
}

/// Cached LDL^T factors of a symmetric positive definite tridiagonal matrix.
#[derive(Debug, Clone)]
pub struct TridiagFactor {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl TridiagFactor {
    pub fn order(&self) -> usize {
        self.d.len()
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.order();
        assert_eq!(rhs.len(), n);
        let mut x = rhs.to_vec();
        for i in 1..n {
            x[i] -= self.l[i - 1] * x[i - 1];
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.l[i] * x[i + 1];
        }
        x
    }
}

/// General banded matrix with `kl` subdiagonals and `ku` superdiagonals,
/// stored LAPACK-style with `kl` extra rows of fill for partial pivoting.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ldab,
            ab: vec![0.0; ldab * n],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        // entry (i, j) lives at row kl+ku+i-j of column j
        j * self.ldab + (self.kl + self.ku + i - j)
    }

    /// Set entry (i, j); |i - j| must be within the declared bandwidths.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(j <= i + self.ku && i <= j + self.kl);
        let k = self.idx(i, j);
        self.ab[k] = value;
    }

    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let k = self.idx(i, j);
        self.ab[k] += value;
    }

    /// Matrix-vector product of the unfactored matrix (fill rows are zero).
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        let mut out = vec![0.0; self.n];
        for j in 0..self.n {
            let lo = j.saturating_sub(self.kl + self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for i in lo..=hi {
                out[i] += self.ab[self.idx(i, j)] * v[j];
            }
        }
        out
    }

    /// In-place LU with partial pivoting (unblocked, dgbtf2-style).
    pub fn lu(mut self) -> Result<BandLu, LinalgError> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut ipiv = vec![0usize; n];
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            // pivot search in column j, rows j..=j+km
            let mut jp = 0usize;
            let mut best = self.ab[self.idx(j, j)].abs();
            for p in 1..=km {
                let cand = self.ab[self.idx(j + p, j)].abs();
                if cand > best {
                    best = cand;
                    jp = p;
                }
            }
            ipiv[j] = j + jp;
            if best == 0.0 {
                return Err(LinalgError::SingularBand { col: j });
            }
            let jhi = (j + kl + ku).min(n - 1);
            if jp != 0 {
                for c in j..=jhi {
                    let a = self.idx(j, c);
                    let b = self.idx(j + jp, c);
                    self.ab.swap(a, b);
                }
            }
            let pivot = self.ab[self.idx(j, j)];
            for p in 1..=km {
                let k = self.idx(j + p, j);
                self.ab[k] /= pivot;
            }
            for c in j + 1..=jhi {
                let ajc = self.ab[self.idx(j, c)];
                if ajc != 0.0 {
                    for p in 1..=km {
                        let lpj = self.ab[self.idx(j + p, j)];
                        let k = self.idx(j + p, c);
                        self.ab[k] -= lpj * ajc;
                    }
                }
            }
        }
        Ok(BandLu { band: self, ipiv })
    }
}

/// Factored banded system ready for repeated solves.
#[derive(Debug, Clone)]
pub struct BandLu {
    band: BandMatrix,
    ipiv: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.band.n;
        if rhs.len() != n {
            return Err(LinalgError::DimensionMismatch {
                order: n,
                len: rhs.len(),
            });
        }
        let (kl, ku) = (self.band.kl, self.band.ku);
        let mut x = rhs.to_vec();
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                x.swap(p, j);
            }
            let km = kl.min(n - 1 - j);
            for i in 1..=km {
                x[j + i] -= self.band.ab[self.band.idx(j + i, j)] * x[j];
            }
        }
        for j in (0..n).rev() {
            x[j] /= self.band.ab[self.band.idx(j, j)];
            let lo = j.saturating_sub(kl + ku);
            for i in lo..j {
                x[i] -= self.band.ab[self.band.idx(i, j)] * x[j];
            }
        }
        Ok(x)
    }
}
