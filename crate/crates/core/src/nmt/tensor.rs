use rand::Rng;
use serde::{Deserialize, Serialize};

/// Dense row-major matrix of `f64`; vectors are `cols == 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn uniform<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
        Tensor { rows, cols, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Rows `[start, start + n)` as a flat slice.
    pub fn rows_slice(&self, start: usize, n: usize) -> &[f64] {
        &self.data[start * self.cols..(start + n) * self.cols]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out += W x` for the row block `w` (`out.len()` rows of `x.len()` columns).
#[inline]
pub fn matvec_acc(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(w.len(), out.len() * cols);
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// `out += Wᵀ y` for the row block `w` (`y.len()` rows of `out.len()` columns).
#[inline]
pub fn matvec_t_acc(w: &[f64], y: &[f64], out: &mut [f64]) {
    let cols = out.len();
    debug_assert_eq!(w.len(), y.len() * cols);
    for (&yi, row) in y.iter().zip(w.chunks_exact(cols)) {
        if yi != 0.0 {
            for (o, &wv) in out.iter_mut().zip(row) {
                *o += yi * wv;
            }
        }
    }
}

/// `dw += a bᵀ` for the row block `dw` (`a.len()` rows of `b.len()` columns).
#[inline]
pub fn outer_acc(dw: &mut [f64], a: &[f64], b: &[f64]) {
    let cols = b.len();
    debug_assert_eq!(dw.len(), a.len() * cols);
    for (&ai, row) in a.iter().zip(dw.chunks_exact_mut(cols)) {
        if ai != 0.0 {
            for (d, &bv) in row.iter_mut().zip(b) {
                *d += ai * bv;
            }
        }
    }
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax in place.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}
