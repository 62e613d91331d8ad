//! Dense row-major 2D tensors over `f32`/`f64` with the handful of kernels
//! the GRU stack needs. Matrix products dispatch to `matrixmultiply`; all
//! other kernels are plain loops.

use std::fmt;

use num_traits::Float;

use super::NumericsError;

/// Element type for tensors: `f32` in train mode, `f64` in gradient-check
/// mode. The gemm hook routes to the matching `matrixmultiply` kernel.
pub trait Scalar: Float + fmt::Debug + fmt::Display + Send + Sync + 'static {
    #[allow(clippy::too_many_arguments)]
    /// C <- alpha * A * B + beta * C over raw strided buffers.
    ///
    /// # Safety
    /// Pointers must cover m*k, k*n and m*n elements under the given strides.
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn from_f64(x: f64) -> Self {
        num_traits::cast(x).expect("f64 conversion")
    }

    fn to_f64(self) -> f64 {
        num_traits::cast(self).expect("f64 conversion")
    }
}

impl Scalar for f32 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Tensor2<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "tensor dims must be positive");
        Tensor2 {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must be rows*cols");
        let t = Tensor2 { rows, cols, data };
        t.debug_check_finite("from_vec");
        t
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Tensor2::from_vec(rows, cols, data)
    }

    pub fn scalar(x: F) -> Self {
        Tensor2::from_vec(1, 1, vec![x])
    }

    pub fn identity(n: usize) -> Self {
        Tensor2::from_fn(n, n, |r, c| if r == c { F::one() } else { F::zero() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: F) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Single scalar payload of a 1x1 tensor.
    pub fn item(&self) -> F {
        assert_eq!(self.shape(), (1, 1), "item() requires a 1x1 tensor");
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Tensor2::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Converts element type, f64 <-> f32 via the checkpoint path.
    pub fn cast<G: Scalar>(&self) -> Tensor2<G> {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| G::from_f64(x.to_f64())).collect(),
        }
    }

    pub(crate) fn debug_check_finite(&self, op: &str) {
        if cfg!(debug_assertions) {
            debug_assert!(
                self.data.iter().all(|x| x.is_finite()),
                "non-finite value produced by {op}"
            );
        }
    }

    fn require_same_shape(&self, other: &Self, op: &'static str) -> Result<(), NumericsError> {
        if self.shape() != other.shape() {
            return Err(NumericsError::ShapeMismatch {
                op,
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        Ok(())
    }

    /// C = A . B
    pub fn matmul(&self, other: &Self) -> Result<Self, NumericsError> {
        if self.cols != other.rows {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let mut out = Tensor2::zeros(self.rows, other.cols);
        unsafe {
            F::gemm(
                self.rows,
                self.cols,
                other.cols,
                F::one(),
                self.data.as_ptr(),
                self.cols as isize,
                1,
                other.data.as_ptr(),
                other.cols as isize,
                1,
                F::zero(),
                out.data.as_mut_ptr(),
                out.cols as isize,
                1,
            );
        }
        out.debug_check_finite("matmul");
        Ok(out)
    }

    /// C = A^T . B without materializing the transpose.
    pub fn matmul_tn(&self, other: &Self) -> Result<Self, NumericsError> {
        if self.rows != other.rows {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul_tn",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let mut out = Tensor2::zeros(self.cols, other.cols);
        unsafe {
            F::gemm(
                self.cols,
                self.rows,
                other.cols,
                F::one(),
                self.data.as_ptr(),
                1,
                self.cols as isize,
                other.data.as_ptr(),
                other.cols as isize,
                1,
                F::zero(),
                out.data.as_mut_ptr(),
                out.cols as isize,
                1,
            );
        }
        out.debug_check_finite("matmul_tn");
        Ok(out)
    }

    /// C = A . B^T without materializing the transpose.
    pub fn matmul_nt(&self, other: &Self) -> Result<Self, NumericsError> {
        if self.cols != other.cols {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul_nt",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let mut out = Tensor2::zeros(self.rows, other.rows);
        unsafe {
            F::gemm(
                self.rows,
                self.cols,
                other.rows,
                F::one(),
                self.data.as_ptr(),
                self.cols as isize,
                1,
                other.data.as_ptr(),
                1,
                other.cols as isize,
                F::zero(),
                out.data.as_mut_ptr(),
                out.cols as isize,
                1,
            );
        }
        out.debug_check_finite("matmul_nt");
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self, NumericsError> {
        self.require_same_shape(other, "add")?;
        Ok(self.zip(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self, NumericsError> {
        self.require_same_shape(other, "sub")?;
        Ok(self.zip(other, |a, b| a - b))
    }

    pub fn mul_elementwise(&self, other: &Self) -> Result<Self, NumericsError> {
        self.require_same_shape(other, "mul_elementwise")?;
        Ok(self.zip(other, |a, b| a * b))
    }

    fn zip(&self, other: &Self, f: impl Fn(F, F) -> F) -> Self {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Adds a 1 x cols bias row to every row.
    pub fn add_row_broadcast(&self, bias: &Self) -> Result<Self, NumericsError> {
        if bias.rows != 1 || bias.cols != self.cols {
            return Err(NumericsError::ShapeMismatch {
                op: "add_row_broadcast",
                lhs: self.shape(),
                rhs: bias.shape(),
            });
        }
        let mut out = self.clone();
        for r in 0..out.rows {
            let row = &mut out.data[r * out.cols..(r + 1) * out.cols];
            for (x, &b) in row.iter_mut().zip(bias.data.iter()) {
                *x = *x + b;
            }
        }
        Ok(out)
    }

    /// Column-wise sum collapsed to a 1 x cols row (gradient of a broadcast bias).
    pub fn sum_rows(&self) -> Self {
        let mut out = Tensor2::zeros(1, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c] = out.data[c] + self.get(r, c);
            }
        }
        out
    }

    pub fn sigmoid(&self) -> Self {
        self.map(|x| F::one() / (F::one() + (-x).exp()))
    }

    pub fn tanh_elem(&self) -> Self {
        self.map(|x| x.tanh())
    }

    pub fn relu(&self) -> Self {
        self.map(|x| if x > F::zero() { x } else { F::zero() })
    }

    pub fn one_minus(&self) -> Self {
        self.map(|x| F::one() - x)
    }

    pub fn scale(&self, k: F) -> Self {
        self.map(|x| x * k)
    }

    /// [A | B], concatenated along columns.
    pub fn concat_cols(&self, other: &Self) -> Result<Self, NumericsError> {
        if self.rows != other.rows {
            return Err(NumericsError::ShapeMismatch {
                op: "concat_cols",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(Tensor2 {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Column slice [c0, c1).
    pub fn slice_cols(&self, c0: usize, c1: usize) -> Self {
        assert!(c0 < c1 && c1 <= self.cols, "bad column range");
        let mut data = Vec::with_capacity(self.rows * (c1 - c0));
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[c0..c1]);
        }
        Tensor2 {
            rows: self.rows,
            cols: c1 - c0,
            data,
        }
    }

    /// In-place elementwise accumulate, used by gradient aggregation.
    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape mismatch");
        for (x, &y) in self.data.iter_mut().zip(other.data.iter()) {
            *x = *x + y;
        }
    }

    pub fn frobenius_norm(&self) -> F {
        self.data
            .iter()
            .fold(F::zero(), |acc, &x| acc + x * x)
            .sqrt()
    }
}

/// Row-wise softmax, numerically stabilized by max subtraction.
pub fn softmax_rows<F: Scalar>(logits: &Tensor2<F>) -> Tensor2<F> {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = &mut out.data_mut()[r * logits.cols()..(r + 1) * logits.cols()];
        let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum = sum + *x;
        }
        for x in row.iter_mut() {
            *x = *x / sum;
        }
    }
    out
}

/// Mean negative log-likelihood over the batch plus the logits gradient
/// (softmax minus one-hot, divided by batch size).
pub fn softmax_cross_entropy<F: Scalar>(
    logits: &Tensor2<F>,
    targets: &[usize],
) -> Result<(F, Tensor2<F>), NumericsError> {
    if targets.len() != logits.rows() {
        return Err(NumericsError::ShapeMismatch {
            op: "softmax_cross_entropy",
            lhs: logits.shape(),
            rhs: (targets.len(), 1),
        });
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= logits.cols()) {
        return Err(NumericsError::BadTarget {
            target: t,
            classes: logits.cols(),
        });
    }
    let batch = F::from_f64(logits.rows() as f64);
    let mut grad = softmax_rows(logits);
    let mut loss = F::zero();
    for (r, &t) in targets.iter().enumerate() {
        let p = grad.get(r, t);
        loss = loss - p.max(F::from_f64(1e-300)).ln();
        grad.set(r, t, p - F::one());
    }
    loss = loss / batch;
    let grad = grad.map(|x| x / batch);
    Ok((loss, grad))
}
