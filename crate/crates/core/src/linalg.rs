//! Dense packed-triangular Cholesky used by the exact Gaussian path samplers.
//!
//! Storage is row-major lower-triangular: row `i` occupies
//! `data[i(i+1)/2 ..= i(i+1)/2 + i]`, so both the factorization inner products
//! and the sampling matrix-vector product walk contiguous memory.

use crate::error::{Error, Result};

/// Symmetric matrix stored by its lower triangle.
#[derive(Clone, Debug)]
pub struct PackedSym {
    n: usize,
    data: Vec<f64>,
}

impl PackedSym {
    /// Builds the matrix from an entry function evaluated for `j <= i` only,
    /// which makes the result symmetric by construction.
    pub fn from_fn(n: usize, mut entry: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in 0..=i {
                data.push(entry(i, j));
            }
        }
        PackedSym { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        self.data[i * (i + 1) / 2 + j]
    }

    fn max_diag(&self) -> f64 {
        (0..self.n)
            .map(|i| self.data[i * (i + 1) / 2 + i].abs())
            .fold(0.0, f64::max)
    }
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = C`.
#[derive(Clone, Debug)]
pub struct PackedLower {
    n: usize,
    data: Vec<f64>,
    jitter: f64,
}

impl PackedLower {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let s = i * (i + 1) / 2;
        &self.data[s..s + i + 1]
    }

    /// Diagonal jitter that had to be added before the factorization succeeded.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `out = L z`.
    pub fn mul_vec(&self, z: &[f64], out: &mut [f64]) {
        assert_eq!(z.len(), self.n);
        assert_eq!(out.len(), self.n);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), &z[..=i]);
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let o = c * 8;
        for k in 0..8 {
            acc[k] += a[o + k] * b[o + k];
        }
    }
    let mut tail = 0.0;
    for k in chunks * 8..n {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[4]) + (acc[1] + acc[5]) + (acc[2] + acc[6]) + (acc[3] + acc[7]) + tail
}

fn factor_in_place(data: &mut [f64], n: usize) -> std::result::Result<(), usize> {
    for i in 0..n {
        let si = i * (i + 1) / 2;
        let (head, tail) = data.split_at_mut(si);
        let row_i = &mut tail[..=i];
        for j in 0..i {
            let sj = j * (j + 1) / 2;
            let row_j = &head[sj..=sj + j];
            let s = row_i[j] - dot(&row_i[..j], &row_j[..j]);
            row_i[j] = s / row_j[j];
        }
        let d = row_i[i] - dot(&row_i[..i], &row_i[..i]);
        if !(d > 0.0) || !d.is_finite() {
            return Err(i);
        }
        row_i[i] = d.sqrt();
    }
    Ok(())
}

/// Cholesky factorization with diagonal jitter repair.
///
/// Jitter levels `10^-14 … 10^-10` times the largest diagonal entry are tried
/// in turn before reporting [`Error::NotPositiveDefinite`].
pub fn cholesky(cov: &PackedSym) -> Result<PackedLower> {
    let n = cov.n;
    let scale = cov.max_diag();
    let mut last_pivot = 0;
    let mut jitter = 0.0;
    for level in [0.0, 1e-14, 1e-13, 1e-12, 1e-11, 1e-10] {
        jitter = level * scale;
        let mut data = cov.data.clone();
        if jitter > 0.0 {
            for i in 0..n {
                data[i * (i + 1) / 2 + i] += jitter;
            }
        }
        match factor_in_place(&mut data, n) {
            Ok(()) => return Ok(PackedLower { n, data, jitter }),
            Err(p) => last_pivot = p,
        }
    }
    Err(Error::NotPositiveDefinite {
        pivot: last_pivot,
        jitter,
    })
}
