//! Dense row-major `f64` tensors.
//!
//! Only the handful of kernels the autodiff graph needs live here. Shapes are
//! at most two-dimensional in practice; higher-rank data (images, feature
//! maps) is carried flattened and re-indexed through gather tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims2(&self) -> (usize, usize) {
        debug_assert_eq!(
            self.shape.len(),
            2,
            "expected a matrix, got {:?}",
            self.shape
        );
        (self.shape[0], self.shape[1])
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub(crate) fn reshaped(&self, shape: &[usize]) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), self.data.len());
        Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        }
    }

    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub(crate) fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        debug_assert_eq!(self.shape, other.shape);
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub(crate) fn matmul(&self, other: &Tensor) -> Tensor {
        let (n, k) = self.dims2();
        let (k2, m) = other.dims2();
        debug_assert_eq!(k, k2);
        let mut out = vec![0.0; n * m];
        if n > 0 && m > 0 && k > 0 {
            // SAFETY: slices are sized n*k, k*m and n*m with row-major strides.
            unsafe {
                matrixmultiply::dgemm(
                    n,
                    k,
                    m,
                    1.0,
                    self.data.as_ptr(),
                    k as isize,
                    1,
                    other.data.as_ptr(),
                    m as isize,
                    1,
                    0.0,
                    out.as_mut_ptr(),
                    m as isize,
                    1,
                );
            }
        }
        Tensor {
            shape: vec![n, m],
            data: out,
        }
    }

    pub(crate) fn transpose(&self) -> Tensor {
        let (n, m) = self.dims2();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = self.data[i * m + j];
            }
        }
        Tensor {
            shape: vec![m, n],
            data: out,
        }
    }

    pub(crate) fn sum_rows(&self) -> Tensor {
        let (n, m) = self.dims2();
        let mut out = vec![0.0; m];
        for row in self.data.chunks_exact(m.max(1)).take(n) {
            for (o, &x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        Tensor::vector(out)
    }

    pub(crate) fn sum_cols(&self) -> Tensor {
        let (n, m) = self.dims2();
        let out = (0..n)
            .map(|i| self.data[i * m..(i + 1) * m].iter().sum())
            .collect();
        Tensor::vector(out)
    }

    pub(crate) fn broadcast_rows(&self, rows: usize) -> Tensor {
        let m = self.data.len();
        let mut out = Vec::with_capacity(rows * m);
        for _ in 0..rows {
            out.extend_from_slice(&self.data);
        }
        Tensor {
            shape: vec![rows, m],
            data: out,
        }
    }

    pub(crate) fn broadcast_cols(&self, cols: usize) -> Tensor {
        let n = self.data.len();
        let mut out = Vec::with_capacity(n * cols);
        for &x in &self.data {
            out.extend(std::iter::repeat_n(x, cols));
        }
        Tensor {
            shape: vec![n, cols],
            data: out,
        }
    }

    pub(crate) fn softmax_rows(&self) -> Tensor {
        let (n, m) = self.dims2();
        let mut out = self.data.clone();
        for row in out.chunks_exact_mut(m.max(1)).take(n) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            for x in row.iter_mut() {
                *x /= total;
            }
        }
        Tensor {
            shape: self.shape.clone(),
            data: out,
        }
    }

    pub(crate) fn logsumexp_rows(&self) -> Tensor {
        let (n, m) = self.dims2();
        let out = (0..n)
            .map(|i| {
                let row = &self.data[i * m..(i + 1) * m];
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
            })
            .collect();
        Tensor::vector(out)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
