use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// A matrix-free symmetric linear map.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>>;
}

impl<T: SymmetricOperator + ?Sized> SymmetricOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        (**self).apply(v)
    }
}

pub(crate) fn check_dim(expected: usize, v: &[f64]) -> Result<()> {
    if v.len() != expected {
        return Err(Error::shape(format!(
            "operator of dimension {expected} applied to vector of length {}",
            v.len()
        )));
    }
    Ok(())
}

/// Dense symmetric matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    n: usize,
    data: Vec<f64>,
}

impl DenseOperator {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::shape(format!(
                "{n}x{n} matrix needs {} values",
                n * n
            )));
        }
        Ok(DenseOperator { n, data })
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn zeros(n: usize) -> Self {
        DenseOperator {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let mut data = vec![0.0; n * n];
        for (i, &x) in d.iter().enumerate() {
            data[i * n + i] = x;
        }
        DenseOperator { n, data }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Principal sub-block on `range x range`.
    pub fn block(&self, range: std::ops::Range<usize>) -> DenseOperator {
        let m = range.len();
        let mut data = Vec::with_capacity(m * m);
        for i in range.clone() {
            data.extend_from_slice(&self.data[i * self.n + range.start..i * self.n + range.end]);
        }
        DenseOperator { n: m, data }
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        symmetric_eigen(self.n, &self.data).0
    }

    pub fn max_abs_diff(&self, other: &DenseOperator) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl SymmetricOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n, v)?;
        Ok(self
            .data
            .chunks_exact(self.n.max(1))
            .take(self.n)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }
}

/// `(A - shift I) / scale`
pub struct AffineOperator<'a, A: SymmetricOperator + ?Sized> {
    pub inner: &'a A,
    pub scale: f64,
    pub shift: f64,
}

impl<A: SymmetricOperator + ?Sized> SymmetricOperator for AffineOperator<'_, A> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.inner.apply(v)?;
        for (o, x) in out.iter_mut().zip(v) {
            *o = (*o - self.shift * x) / self.scale;
        }
        Ok(out)
    }
}

/// Eigen-decomposition of a symmetric row-major matrix: ascending eigenvalues
/// and the matching unit eigenvectors (`vectors[k]` belongs to `values[k]`).
pub fn symmetric_eigen(n: usize, data: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    if n == 0 {
        return (vec![], vec![]);
    }
    let m = DMatrix::from_row_slice(n, n, data);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = order
        .iter()
        .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_of_diagonal() {
        let d = DenseOperator::diagonal(&[3.0, -1.0, 2.0]);
        assert_eq!(d.eigenvalues(), vec![-1.0, 2.0, 3.0]);
        assert_eq!(d.trace(), 4.0);
        assert_eq!(d.apply(&[1.0, 1.0, 1.0]).unwrap(), vec![3.0, -1.0, 2.0]);
        assert!(d.apply(&[1.0]).is_err());
    }

    #[test]
    fn block_extraction() {
        let a = DenseOperator::new(3, (0..9).map(|x| x as f64).collect()).unwrap();
        assert_eq!(a.block(1..3).data(), &[4.0, 5.0, 7.0, 8.0]);
    }
}
