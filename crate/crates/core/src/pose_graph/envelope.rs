//! Symmetric positive-definite solver in envelope (skyline) storage.
//!
//! Row `i` stores the lower-triangle entries `first[i]..=i`. Cholesky fill
//! stays inside the envelope, so a time-ordered pose chain costs O(n) and
//! every loop edge adds one long row.

use nalgebra::{DVector, Matrix6};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct EnvelopeMatrix {
    first: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl EnvelopeMatrix {
    /// `first_block[b]` is the smallest block column coupled to block row
    /// `b` (at most `b`); blocks are 6×6.
    pub fn with_block_profile(first_block: &[usize]) -> Self {
        let n = first_block.len() * 6;
        let mut first = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(n);
        for (b, &fb) in first_block.iter().enumerate() {
            debug_assert!(fb <= b);
            for r in 0..6 {
                let i = b * 6 + r;
                let f = fb * 6;
                first.push(f);
                rows.push(vec![0.0; i - f + 1]);
            }
        }
        Self { first, rows }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if j < self.first[i] {
            0.0
        } else {
            self.rows[i][j - self.first[i]]
        }
    }

    /// Adds `block` at block position (`bi`, `bj`) with `bi >= bj`. On the
    /// diagonal only the lower triangle of `block` is read.
    pub fn add_block(&mut self, bi: usize, bj: usize, block: &Matrix6<f64>) {
        debug_assert!(bi >= bj);
        for r in 0..6 {
            let i = bi * 6 + r;
            let f = self.first[i];
            let cols = if bi == bj { r + 1 } else { 6 };
            for c in 0..cols {
                let j = bj * 6 + c;
                debug_assert!(j >= f, "block outside envelope");
                self.rows[i][j - f] += block[(r, c)];
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.rows.iter().map(|r| *r.last().expect("non-empty row")).collect()
    }

    pub fn add_to_diagonal(&mut self, values: &[f64]) {
        for (row, v) in self.rows.iter_mut().zip(values) {
            *row.last_mut().expect("non-empty row") += v;
        }
    }

    /// In-place Cholesky factorisation `A = L Lᵀ`.
    pub fn cholesky(mut self) -> Result<EnvelopeCholesky> {
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            for j in fi..i {
                let fj = self.first[j];
                let k0 = fi.max(fj);
                let (done, rest) = self.rows.split_at_mut(i);
                let row_i = &rest[0];
                let row_j = &done[j];
                let dot: f64 = row_i[k0 - fi..j - fi]
                    .iter()
                    .zip(&row_j[k0 - fj..j - fj])
                    .map(|(a, b)| a * b)
                    .sum();
                let ljj = row_j[j - fj];
                let v = (row_i[j - fi] - dot) / ljj;
                rest[0][j - fi] = v;
            }
            let row_i = &mut self.rows[i];
            let (off, diag) = row_i.split_at_mut(i - fi);
            let d = diag[0] - off.iter().map(|v| v * v).sum::<f64>();
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::SingularSystem);
            }
            diag[0] = d.sqrt();
        }
        Ok(EnvelopeCholesky { factor: self })
    }
}

#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    factor: EnvelopeMatrix,
}

impl EnvelopeCholesky {
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.factor.dim();
        let mut y = b.clone();
        for i in 0..n {
            let fi = self.factor.first[i];
            let row = &self.factor.rows[i];
            let dot: f64 = row[..i - fi].iter().zip(y.rows(fi, i - fi).iter()).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - dot) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.factor.first[i];
            let row = &self.factor.rows[i];
            y[i] /= row[i - fi];
            let xi = y[i];
            for (k, l) in (fi..i).zip(&row[..i - fi]) {
                y[k] -= l * xi;
            }
        }
        y
    }
}
