//! Dense row-major matrices and constant sparse operators.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
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

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::from_vec",
                format!("{} values for {rows}x{cols}", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn scalar(value: f64) -> Self {
        Matrix {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
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

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
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

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }

    pub fn scaled_add_assign(&mut self, s: f64, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += s * b);
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, x| a.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(false, self, false, other, 0.0, &mut out);
        out
    }
}

/// `c = op(a) · op(b) + beta · c`, transposes applied through strides.
pub fn gemm(ta: bool, a: &Matrix, tb: bool, b: &Matrix, beta: f64, c: &mut Matrix) {
    assert_eq!(c.rows, if ta { a.cols } else { a.rows }, "gemm output rows");
    assert_eq!(c.cols, if tb { b.rows } else { b.cols }, "gemm output cols");
    gemm_slices(
        ta,
        &a.data,
        (a.rows, a.cols),
        tb,
        &b.data,
        (b.rows, b.cols),
        beta,
        &mut c.data,
    );
}

/// Slice form of [`gemm`]; shapes are those of the stored (untransposed)
/// row-major operands.
#[allow(clippy::too_many_arguments)]
pub fn gemm_slices(
    ta: bool,
    a: &[f64],
    a_shape: (usize, usize),
    tb: bool,
    b: &[f64],
    b_shape: (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    let (m, k) = if ta { (a_shape.1, a_shape.0) } else { a_shape };
    let (k2, n) = if tb { (b_shape.1, b_shape.0) } else { b_shape };
    assert_eq!(k, k2, "gemm inner dimension");
    assert_eq!(a.len(), a_shape.0 * a_shape.1);
    assert_eq!(b.len(), b_shape.0 * b_shape.1);
    assert_eq!(c.len(), m * n, "gemm output shape");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    let (rsa, csa) = if ta { (1, a_shape.1 as isize) } else { (a_shape.1 as isize, 1) };
    let (rsb, csb) = if tb { (1, b_shape.1 as isize) } else { (b_shape.1 as isize, 1) };
    // SAFETY: dimensions and strides describe exactly the checked buffers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Constant sparse matrix in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub rows: usize,
    pub cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet out of range");
            if last == Some((r, c)) {
                *values.last_mut().expect("value exists") += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Csr {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_dense(m: &Matrix) -> Self {
        let mut t = Vec::new();
        for r in 0..m.rows {
            for c in 0..m.cols {
                let v = m.get(r, c);
                if v != 0.0 {
                    t.push((r, c, v));
                }
            }
        }
        Csr::from_triplets(m.rows, m.cols, t)
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                m.data[r * self.cols + self.indices[p]] += self.values[p];
            }
        }
        m
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Block-diagonal matrix with `copies` repetitions of `self`.
    pub fn block_diag(&self, copies: usize) -> Csr {
        let mut indptr = Vec::with_capacity(self.rows * copies + 1);
        let mut indices = Vec::with_capacity(self.nnz() * copies);
        let mut values = Vec::with_capacity(self.nnz() * copies);
        indptr.push(0);
        for b in 0..copies {
            for r in 0..self.rows {
                for p in self.indptr[r]..self.indptr[r + 1] {
                    indices.push(self.indices[p] + b * self.cols);
                    values.push(self.values[p]);
                }
                indptr.push(indices.len());
            }
        }
        Csr {
            rows: self.rows * copies,
            cols: self.cols * copies,
            indptr,
            indices,
            values,
        }
    }

    /// `self · x`.
    pub fn matmul(&self, x: &Matrix) -> Matrix {
        assert_eq!(self.cols, x.rows, "spmm shape");
        let mut out = Matrix::zeros(self.rows, x.cols);
        let w = x.cols;
        for r in 0..self.rows {
            let dst = &mut out.data[r * w..(r + 1) * w];
            for p in self.indptr[r]..self.indptr[r + 1] {
                let v = self.values[p];
                let src = &x.data[self.indices[p] * w..(self.indices[p] + 1) * w];
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += v * s);
            }
        }
        out
    }

    /// `selfᵀ · g`.
    pub fn matmul_transposed(&self, g: &Matrix) -> Matrix {
        assert_eq!(self.rows, g.rows, "spmm transpose shape");
        let mut out = Matrix::zeros(self.cols, g.cols);
        let w = g.cols;
        for r in 0..self.rows {
            let src = &g.data[r * w..(r + 1) * w];
            for p in self.indptr[r]..self.indptr[r + 1] {
                let v = self.values[p];
                let c = self.indices[p];
                let dst = &mut out.data[c * w..(c + 1) * w];
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += v * s);
            }
        }
        out
    }
}
