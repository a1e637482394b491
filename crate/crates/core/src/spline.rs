//! Clamped cubic B-spline basis on `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEGREE: usize = 3;

/// A design row with at most `DEGREE + 1` consecutive nonzero entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseRow {
    pub start: u32,
    pub len: u8,
    pub vals: [f64; DEGREE + 1],
}

impl SparseRow {
    /// A row of a dense design with at most four columns.
    pub fn dense(vals: &[f64]) -> Self {
        assert!(vals.len() <= DEGREE + 1);
        let mut v = [0.0; DEGREE + 1];
        v[..vals.len()].copy_from_slice(vals);
        SparseRow { start: 0, len: vals.len() as u8, vals: v }
    }

    #[inline]
    pub fn dot(&self, coef: &[f64]) -> f64 {
        let s = self.start as usize;
        let mut acc = 0.0;
        for k in 0..self.len as usize {
            acc += self.vals[k] * coef[s + k];
        }
        acc
    }

    pub fn to_dense(&self, q: usize) -> Vec<f64> {
        let mut out = vec![0.0; q];
        for k in 0..self.len as usize {
            out[self.start as usize + k] = self.vals[k];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    q: usize,
    knots: Vec<f64>,
}

impl SplineBasis {
    /// Clamped cubic basis with `q - 4` equally spaced interior knots.
    pub fn new(q: usize) -> Result<Self> {
        if q < DEGREE + 1 {
            return Err(Error::arg(format!("spline basis needs q >= 4, got {q}")));
        }
        let interior = q - DEGREE - 1;
        let mut knots = vec![0.0; DEGREE + 1];
        knots.extend((1..=interior).map(|k| k as f64 / (interior + 1) as f64));
        knots.extend(std::iter::repeat_n(1.0, DEGREE + 1));
        Ok(SplineBasis { q, knots })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.knots[DEGREE + 1..self.q]
    }

    fn span(&self, t: f64) -> usize {
        if t >= 1.0 {
            return self.q - 1;
        }
        // last index s in [DEGREE, q-1] with knots[s] <= t
        let mut lo = DEGREE;
        let mut hi = self.q;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.knots[mid] <= t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Nonzero basis values at `t` (Cox–de Boor triangle).
    pub fn evaluate_sparse(&self, t: f64) -> Result<SparseRow> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::arg(format!("spline argument {t} outside [0, 1]")));
        }
        let s = self.span(t);
        let k = &self.knots;
        let mut n = [0.0; DEGREE + 1];
        let mut left = [0.0; DEGREE + 1];
        let mut right = [0.0; DEGREE + 1];
        n[0] = 1.0;
        for j in 1..=DEGREE {
            left[j] = t - k[s + 1 - j];
            right[j] = k[s + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        Ok(SparseRow { start: (s - DEGREE) as u32, len: (DEGREE + 1) as u8, vals: n })
    }

    pub fn evaluate(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.evaluate_sparse(t)?.to_dense(self.q))
    }

    /// Row-major `times.len() × q` design matrix.
    pub fn design_matrix(&self, times: &[f64]) -> Result<Vec<Vec<f64>>> {
        times.iter().map(|&t| self.evaluate(t)).collect()
    }

    pub fn design_rows(&self, times: &[f64]) -> Result<Vec<SparseRow>> {
        times.iter().map(|&t| self.evaluate_sparse(t)).collect()
    }

    /// Curve `T(t) · coef` over a grid.
    pub fn curve(&self, coef: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
        grid.iter().map(|&t| Ok(self.evaluate_sparse(t)?.dot(coef))).collect()
    }
}
