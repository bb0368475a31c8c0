//! Flat row-major f64 tensors and the distance kernels built on them.
//!
//! Everything downstream (pairing, the trainer, diagnostics) works on these
//! buffers. Tensors are immutable values once constructed; operations return
//! fresh tensors and are safe to call from multiple threads.

use crate::error::{Error, Result};

/// Dense tensor: `shape` plus contiguous row-major `f64` data.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "TensorRepr", into = "TensorRepr")]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Serde wire form; deserialization re-validates the shape/data contract.
#[derive(serde::Serialize, serde::Deserialize)]
struct TensorRepr {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TryFrom<TensorRepr> for Tensor {
    type Error = Error;
    fn try_from(r: TensorRepr) -> Result<Self> {
        Tensor::from_vec(r.shape, r.data)
    }
}

impl From<Tensor> for TensorRepr {
    fn from(t: Tensor) -> Self {
        TensorRepr { shape: t.shape, data: t.data }
    }
}

impl Tensor {
    /// Build a tensor, validating the shape/data contract: non-empty shape,
    /// no zero dims, `product(shape) == data.len()`, all elements finite.
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "tensor shape must be non-empty with positive dims, got {shape:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} implies {numel} elements, data has {}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor element {bad}")));
        }
        Ok(Self { shape, data })
    }

    /// Internal constructor for data known to be finite (e.g. arithmetic on
    /// already-validated tensors). Debug builds still assert.
    pub(crate) fn from_vec_unchecked(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "tensor shape must be non-empty with positive dims, got {shape:?}"
            )));
        }
        let numel = shape.iter().product();
        Ok(Self { shape, data: vec![0.0; numel] })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Number of rows when viewed as a 2-D matrix (1-D tensors are a single row).
    pub fn nrows(&self) -> usize {
        if self.shape.len() == 1 {
            1
        } else {
            self.shape[0]
        }
    }

    /// Trailing dimension when viewed as a 2-D matrix.
    pub fn ncols(&self) -> usize {
        if self.shape.len() == 1 {
            self.shape[0]
        } else {
            self.numel() / self.shape[0]
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.ncols();
        &self.data[i * d..(i + 1) * d]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let d = self.ncols();
        &mut self.data[i * d..(i + 1) * d]
    }

    /// Elementwise map into a new tensor.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::from_vec_unchecked(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    /// Elementwise combination of two same-shape tensors.
    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor::from_vec_unchecked(self.shape.clone(), data))
    }

    /// Gathers rows by index into a new matrix with the same trailing dim.
    pub fn gather_rows(&self, idx: &[usize]) -> Tensor {
        let d = self.ncols();
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Tensor::from_vec_unchecked(vec![idx.len(), d], data)
    }
}

/// Squared Euclidean distance between a pair of equal-length slices.
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let diff = x - y;
        acc += diff * diff;
    }
    acc
}

/// All-pairs squared L2 distances: entry (i, j) = Σ_k (A[i,k] − B[j,k])².
pub fn pairwise_sq_dist(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let d = a.ncols();
    if d != b.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "trailing dims differ: {} vs {}",
            d,
            b.ncols()
        )));
    }
    let (m, n) = (a.nrows(), b.nrows());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let ra = a.row(i);
        let orow = &mut out[i * n..(i + 1) * n];
        for (j, o) in orow.iter_mut().enumerate() {
            *o = sq_dist(ra, b.row(j));
        }
    }
    Ok(Tensor::from_vec_unchecked(vec![m, n], out))
}

/// All-pairs L2 distances: elementwise square root of [`pairwise_sq_dist`].
pub fn l2_dist(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let sq = pairwise_sq_dist(a, b)?;
    Ok(sq.map(f64::sqrt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;
    use proptest::prelude::*;

    #[test]
    fn from_vec_validates() {
        assert!(Tensor::from_vec(vec![2, 2], vec![1.0; 4]).is_ok());
        assert!(matches!(
            Tensor::from_vec(vec![2, 3], vec![1.0; 4]),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            Tensor::from_vec(vec![], vec![]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            Tensor::from_vec(vec![0], vec![]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            Tensor::from_vec(vec![2], vec![1.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn three_four_five() {
        let a = Tensor::from_vec(vec![1, 2], vec![0.0, 0.0]).unwrap();
        let b = Tensor::from_vec(vec![1, 2], vec![3.0, 4.0]).unwrap();
        let sq = pairwise_sq_dist(&a, &b).unwrap();
        assert_eq!(sq.data(), &[25.0]);
        let l2 = l2_dist(&a, &b).unwrap();
        assert_eq!(l2.data(), &[5.0]);
    }

    #[test]
    fn zero_diagonal_on_self() {
        let mut rng = RngState::new(3);
        let a = crate::rng::gaussian_sample(&mut rng, &[5, 3]).unwrap();
        let sq = pairwise_sq_dist(&a, &a).unwrap();
        for i in 0..5 {
            assert_eq!(sq.data()[i * 5 + i], 0.0);
            for j in 0..5 {
                // symmetric when A == B
                assert_eq!(sq.data()[i * 5 + j], sq.data()[j * 5 + i]);
            }
        }
    }

    #[test]
    fn matches_double_loop_oracle() {
        let mut rng = RngState::new(11);
        let a = crate::rng::gaussian_sample(&mut rng, &[3, 2]).unwrap();
        let b = crate::rng::gaussian_sample(&mut rng, &[4, 2]).unwrap();
        let sq = pairwise_sq_dist(&a, &b).unwrap();
        let l2 = l2_dist(&a, &b).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                // independent scalar double loop
                let mut expect = 0.0;
                for k in 0..2 {
                    let diff = a.row(i)[k] - b.row(j)[k];
                    expect += diff * diff;
                }
                assert_eq!(sq.data()[i * 4 + j], expect);
                assert_eq!(l2.data()[i * 4 + j], expect.sqrt());
            }
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = Tensor::zeros(vec![2, 3]).unwrap();
        let b = Tensor::zeros(vec![2, 4]).unwrap();
        assert!(pairwise_sq_dist(&a, &b).is_err());
    }

    proptest! {
        #[test]
        fn pairwise_nonneg_and_zero_iff_equal(
            rows in proptest::collection::vec(
                proptest::collection::vec(-10.0f64..10.0, 3), 1..6),
        ) {
            let m = rows.len();
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            let a = Tensor::from_vec(vec![m, 3], flat).unwrap();
            let sq = pairwise_sq_dist(&a, &a).unwrap();
            for i in 0..m {
                for j in 0..m {
                    let v = sq.data()[i * m + j];
                    prop_assert!(v >= 0.0);
                    let equal_rows = a.row(i) == a.row(j);
                    prop_assert_eq!(v == 0.0, equal_rows);
                }
            }
        }
    }
}
