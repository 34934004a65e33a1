//! Dense row-major f64 matrices. Scalars are 1x1, row vectors 1xN.
//!
//! Matrix products go through `matrixmultiply::dgemm`, split over row blocks
//! when large. Block boundaries depend only on the shapes involved, so
//! results are identical across thread counts.

use serde::{Deserialize, Serialize};

use crate::exec;

/// Row blocks of at least this many output elements are candidates for
/// parallel GEMM.
const PAR_GEMM_MIN_ELEMS: usize = 16 * 1024;
const PAR_GEMM_BLOCK_ROWS: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn full(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn scalar(value: f64) -> Self {
        Self { rows: 1, cols: 1, data: vec![value] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must match shape");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Self { rows: 1, cols: data.len(), data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Single element of a 1x1 tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() requires a scalar tensor");
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync + Send) -> Self {
        let mut out = self.clone();
        if out.data.len() >= PAR_GEMM_MIN_ELEMS {
            exec::batch_chunks_mut(&mut out.data, 4096, |start, s| {
                for (k, v) in s.iter_mut().enumerate() {
                    *v = f(self.data[start + k]);
                }
            });
        } else {
            for v in out.data.iter_mut() {
                *v = f(*v);
            }
        }
        out
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in zip_map");
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| f(*a, *b))
            .collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in add_assign");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for v in self.data.iter_mut() {
            *v *= s;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn transpose(&self) -> Self {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }
}

/// `C = A (m,k) * B (k,n)`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.cols, b.rows, "inner dimensions must agree");
    gemm(a.rows, a.cols, b.cols, a, (a.cols as isize, 1), b, (b.cols as isize, 1))
}

/// `C = A (m,k) * B^T` where `B` is `(n,k)`.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.cols, b.cols, "inner dimensions must agree");
    gemm(a.rows, a.cols, b.rows, a, (a.cols as isize, 1), b, (1, b.cols as isize))
}

/// `C = A^T * B` where `A` is `(k,m)`, `B` is `(k,n)`.
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.rows, b.rows, "inner dimensions must agree");
    gemm(a.cols, a.rows, b.cols, a, (1, a.cols as isize), b, (b.cols as isize, 1))
}

fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &Tensor,
    (rsa, csa): (isize, isize),
    b: &Tensor,
    (rsb, csb): (isize, isize),
) -> Tensor {
    let mut c = Tensor::zeros(m, n);
    if m == 0 || n == 0 {
        return c;
    }
    if k == 0 {
        return c;
    }
    let run = |row0: usize, rows: usize, out: &mut [f64]| unsafe {
        matrixmultiply::dgemm(
            rows,
            k,
            n,
            1.0,
            a.data.as_ptr().offset(row0 as isize * rsa),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    };
    if m * n * k >= PAR_GEMM_MIN_ELEMS && m > PAR_GEMM_BLOCK_ROWS {
        exec::batch_chunks_mut(&mut c.data, PAR_GEMM_BLOCK_ROWS * n, |start, out| {
            run(start / n, out.len() / n, out);
        });
    } else {
        let rows = m;
        run(0, rows, &mut c.data);
    }
    c
}
