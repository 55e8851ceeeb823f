//! Dense numeric primitives: row-major matrices and the elementwise / affine
//! operations the network layers are built from.
//!
//! All operations run in a fixed loop order with sequential accumulation, so
//! identical inputs give bitwise-identical outputs. Shape mismatches are
//! contract violations and panic.

use num_traits::Float;
use std::fmt::Debug;

/// Scalar type the numeric core is generic over. Implemented for `f32` and `f64`.
pub trait Scalar: Float + Debug + Default + Send + Sync + 'static {}
impl<T: Float + Debug + Default + Send + Sync + 'static> Scalar for T {}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixBase<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> MatrixBase<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "matrix data length {} != {rows}x{cols}",
            data.len()
        );
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Matrix with the given columns of `self`, in the order given.
    pub fn select_cols(&self, cols: &[usize]) -> Self {
        let mut out = Self::zeros(self.rows, cols.len());
        for i in 0..self.rows {
            let src = self.row(i);
            let dst = out.row_mut(i);
            for (k, &c) in cols.iter().enumerate() {
                assert!(c < self.cols, "column index {c} out of range");
                dst[k] = src[c];
            }
        }
        out
    }

    /// Matrix with the given rows of `self`, in the order given.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut out = Self::zeros(rows.len(), self.cols);
        for (k, &r) in rows.iter().enumerate() {
            assert!(r < self.rows, "row index {r} out of range");
            out.row_mut(k).copy_from_slice(self.row(r));
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Self::from_vec(self.rows, self.cols, data)
    }

    pub fn scale(&self, s: F) -> Self {
        let data = self.data.iter().map(|&a| a * s).collect();
        Self::from_vec(self.rows, self.cols, data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<F: Scalar> std::ops::Index<(usize, usize)> for MatrixBase<F> {
    type Output = F;
    fn index(&self, (i, j): (usize, usize)) -> &F {
        &self.data[i * self.cols + j]
    }
}

impl<F: Scalar> std::ops::IndexMut<(usize, usize)> for MatrixBase<F> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut F {
        let cols = self.cols;
        &mut self.data[i * cols + j]
    }
}

/// Standard matrix product with a fixed i-k-j loop order.
pub fn matmul<F: Scalar>(a: &MatrixBase<F>, b: &MatrixBase<F>) -> MatrixBase<F> {
    assert_eq!(
        a.cols, b.rows,
        "matmul: inner dimensions {} and {} differ",
        a.cols, b.rows
    );
    let mut out = MatrixBase::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a[(i, k)];
            let brow = b.row(k);
            let orow = out.row_mut(i);
            for j in 0..b.cols {
                orow[j] = orow[j] + aik * brow[j];
            }
        }
    }
    out
}

/// Fully connected layer: `x W + bias`, bias broadcast over rows.
pub fn affine<F: Scalar>(x: &MatrixBase<F>, w: &MatrixBase<F>, bias: &[F]) -> MatrixBase<F> {
    assert_eq!(bias.len(), w.cols, "affine: bias length != output size");
    let mut out = matmul(x, w);
    for i in 0..out.rows {
        let row = out.row_mut(i);
        for j in 0..bias.len() {
            row[j] = row[j] + bias[j];
        }
    }
    out
}

/// Elementwise `max(0, x)`.
pub fn relu<F: Scalar>(x: &MatrixBase<F>) -> MatrixBase<F> {
    let data = x
        .data
        .iter()
        .map(|&v| if v > F::zero() { v } else { F::zero() })
        .collect();
    MatrixBase::from_vec(x.rows, x.cols, data)
}

/// Passes `upstream` where `x > 0`, zero elsewhere. The subgradient at
/// exactly 0 is 0.
pub fn relu_backward<F: Scalar>(x: &MatrixBase<F>, upstream: &MatrixBase<F>) -> MatrixBase<F> {
    assert_eq!(
        (x.rows, x.cols),
        (upstream.rows, upstream.cols),
        "relu_backward: shape mismatch"
    );
    let data = x
        .data
        .iter()
        .zip(&upstream.data)
        .map(|(&v, &u)| if v > F::zero() { u } else { F::zero() })
        .collect();
    MatrixBase::from_vec(x.rows, x.cols, data)
}

/// Mean softmax cross-entropy over rows, with the gradient w.r.t. the logits.
///
/// Row maxima are subtracted before exponentiation. The gradient is
/// `(softmax - onehot) / batch`, matching the mean reduction of the loss.
pub fn softmax_cross_entropy<F: Scalar>(
    logits: &MatrixBase<F>,
    labels: &[usize],
) -> (F, MatrixBase<F>) {
    assert_eq!(logits.rows, labels.len(), "one label per logit row");
    assert!(logits.rows > 0, "empty batch");
    let b = F::from(logits.rows).unwrap();
    let mut grad = MatrixBase::zeros(logits.rows, logits.cols);
    let mut loss = F::zero();
    for i in 0..logits.rows {
        let label = labels[i];
        assert!(label < logits.cols, "label {label} out of range");
        let row = logits.row(i);
        let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
        let mut denom = F::zero();
        for &v in row {
            denom = denom + (v - max).exp();
        }
        loss = loss + (denom.ln() - (row[label] - max));
        let grow = grad.row_mut(i);
        for j in 0..row.len() {
            let p = (row[j] - max).exp() / denom;
            let target = if j == label { F::one() } else { F::zero() };
            grow[j] = (p - target) / b;
        }
    }
    (loss / b, grad)
}
