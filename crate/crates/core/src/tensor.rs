//! Dense row-major `f64` matrices and the numeric kernels shared by the
//! differentiable tape and the incremental inference path.
//!
//! Both paths call the same kernels so that a teacher-forced pass on the tape
//! and a step-by-step decode produce the same numbers for the same rows.

use std::fmt;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{})", self.rows, self.cols)
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "shape does not match data length");
        Matrix { rows, cols, data }
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        let cols = data.len();
        Matrix {
            rows: 1,
            cols,
            data,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Matrix {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Copy of rows `start..end`.
    pub fn rows_range(&self, start: usize, end: usize) -> Matrix {
        Matrix::from_vec(
            end - start,
            self.cols,
            self.data[start * self.cols..end * self.cols].to_vec(),
        )
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.cols);
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale_assign(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }
}

/// `a · b`
pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.rows, "matmul inner dimension");
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &av) in a.row(i).iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in out_row.iter_mut().zip(b.row(k)) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a · bᵀ`
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.cols, "matmul_nt inner dimension");
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let ar = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = dot(ar, b.row(j));
        }
    }
    out
}

/// `aᵀ · b`, accumulated into `out`.
pub fn matmul_tn_acc(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    assert_eq!(a.rows, b.rows, "matmul_tn inner dimension");
    assert_eq!(out.shape(), (a.cols, b.cols));
    for r in 0..a.rows {
        let br = b.row(r);
        for (i, &av) in a.row(r).iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bv) in out_row.iter_mut().zip(br) {
                *o += av * bv;
            }
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Adds a `1 x cols` row to every row of `x` in place.
pub fn add_row_assign(x: &mut Matrix, row: &Matrix) {
    assert_eq!(row.rows, 1);
    assert_eq!(x.cols, row.cols);
    for r in 0..x.rows {
        for (a, b) in x.row_mut(r).iter_mut().zip(&row.data) {
            *a += b;
        }
    }
}

/// `x · w + b` with `b` a `1 x out` row.
pub fn affine(x: &Matrix, w: &Matrix, b: &Matrix) -> Matrix {
    let mut y = matmul(x, w);
    add_row_assign(&mut y, b);
    y
}

pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Row-wise layer normalization. Returns the output together with the
/// normalized rows and inverse standard deviations needed for the backward.
pub fn layer_norm(x: &Matrix, gain: &Matrix, bias: &Matrix) -> (Matrix, Matrix, Vec<f64>) {
    let n = x.cols as f64;
    let mut xhat = Matrix::zeros(x.rows, x.cols);
    let mut out = Matrix::zeros(x.rows, x.cols);
    let mut inv_std = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std.push(is);
        let xh = xhat.row_mut(r);
        for (h, v) in xh.iter_mut().zip(row) {
            *h = (v - mean) * is;
        }
        let o = &mut out.data[r * x.cols..(r + 1) * x.cols];
        for c in 0..x.cols {
            o[c] = xh[c] * gain.data[c] + bias.data[c];
        }
    }
    (out, xhat, inv_std)
}

/// Numerically stable softmax of one row, in place.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Numerically stable log-softmax of one row.
pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(row);
    row.iter().map(|v| v - lse).collect()
}

pub fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Attention geometry for one call of [`attention`].
#[derive(Clone, Copy, Debug)]
pub struct AttnShape {
    pub heads: usize,
    /// `Some(offset)`: query row `i` sits at absolute position `offset + i`
    /// and may only attend to keys at positions `<= offset + i`.
    pub causal_offset: Option<usize>,
}

/// Multi-head scaled dot-product attention over packed heads.
///
/// `q` is `n x d`, `k` and `v` are `m x d`; head `h` uses columns
/// `h*dk..(h+1)*dk`. Returns the `n x d` output and the per-head attention
/// probabilities (`n x m` each).
pub fn attention(q: &Matrix, k: &Matrix, v: &Matrix, shape: AttnShape) -> (Matrix, Vec<Matrix>) {
    let d = q.cols;
    let dk = d / shape.heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let (n, m) = (q.rows, k.rows);
    let mut out = Matrix::zeros(n, d);
    let mut probs = Vec::with_capacity(shape.heads);
    for h in 0..shape.heads {
        let cols = h * dk..(h + 1) * dk;
        let mut p = Matrix::zeros(n, m);
        for i in 0..n {
            let visible = match shape.causal_offset {
                Some(off) => (off + i + 1).min(m),
                None => m,
            };
            let qi = &q.row(i)[cols.clone()];
            let prow = p.row_mut(i);
            for j in 0..visible {
                prow[j] = dot(qi, &k.row(j)[cols.clone()]) * scale;
            }
            softmax_in_place(&mut prow[..visible]);
            let orow = &mut out.data[i * d + h * dk..i * d + (h + 1) * dk];
            for j in 0..visible {
                let pj = prow[j];
                for (o, &vv) in orow.iter_mut().zip(&v.row(j)[cols.clone()]) {
                    *o += pj * vv;
                }
            }
        }
        probs.push(p);
    }
    (out, probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        let a = Matrix::from_vec(2, 3, vec![1., 2., 3., 4., 5., 6.]);
        let b = Matrix::from_vec(3, 2, vec![7., 8., 9., 10., 11., 12.]);
        let c = matmul(&a, &b);
        assert_eq!(c.data, vec![58., 64., 139., 154.]);
        assert_eq!(matmul_nt(&a, &b.transpose()).data, c.data);
        let mut t = Matrix::zeros(2, 2);
        matmul_tn_acc(&a.transpose(), &b, &mut t);
        assert_eq!(t.data, c.data);
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let x = Matrix::from_vec(1, 4, vec![1., 2., 3., 4.]);
        let (y, _, _) = layer_norm(&x, &Matrix::filled(1, 4, 1.0), &Matrix::zeros(1, 4));
        assert!(y.sum().abs() < 1e-12);
        let var: f64 = y.data.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!((var - 1.0).abs() < 1e-5);
    }

    #[test]
    fn causal_attention_row_matches_full() {
        let q = Matrix::from_vec(3, 2, vec![0.1, 0.2, 0.3, -0.4, 0.5, 0.6]);
        let k = Matrix::from_vec(3, 2, vec![0.7, -0.1, 0.2, 0.3, -0.5, 0.9]);
        let v = Matrix::from_vec(3, 2, vec![1., 2., 3., 4., 5., 6.]);
        let full = attention(
            &q,
            &k,
            &v,
            AttnShape {
                heads: 1,
                causal_offset: Some(0),
            },
        )
        .0;
        let last = attention(
            &q.rows_range(1, 2),
            &k.rows_range(0, 2),
            &v.rows_range(0, 2),
            AttnShape {
                heads: 1,
                causal_offset: Some(1),
            },
        )
        .0;
        assert_eq!(full.row(1), last.row(0));
        // first row only sees the first key
        assert_eq!(full.row(0), v.row(0));
    }
}
