//! Validated containers for pAE logits and chain assignments, plus readers
//! and writers for the on-disk formats the rest of the crate consumes.

mod chains;
mod npy;
mod table;

pub use chains::{parse_chain_map, read_chain_map, ChainMap, ChainMapError, ChainSpec};
pub use npy::{parse_npy, read_npy, write_npy, encode_npy, NpyArray, NpyError};
pub use table::{parse_screening_csv, read_screening_csv, ScreeningRow, ScreeningTable, TableError};

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapeError {
    #[error("residue count must be at least 2, got {0}")]
    TooFewResidues(usize),
    #[error("bin count must be at least 1")]
    NoBins,
    #[error("element count {found} does not match shape ({len}, {len}, {bins})")]
    ElementCount { len: usize, bins: usize, found: usize },
    #[error("non-finite logit at index ({i}, {j}, {b})")]
    NonFinite { i: usize, j: usize, b: usize },
    #[error("expected a 3-D (L, L, B) array, got shape {0:?}")]
    NotSquare(Vec<usize>),
}

/// Predicted-aligned-error bin logits, an `L x L x B` tensor stored row-major.
///
/// Entry `(i, j, b)` is the logit of residue `j`'s alignment error falling in
/// bin `b` when the complex is superposed on residue `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct PaeLogits<S> {
    data: Vec<S>,
    len: usize,
    bins: usize,
}

impl<S: Scalar> PaeLogits<S> {
    pub fn new(data: Vec<S>, len: usize, bins: usize) -> Result<Self, ShapeError> {
        if len < 2 {
            return Err(ShapeError::TooFewResidues(len));
        }
        if bins == 0 {
            return Err(ShapeError::NoBins);
        }
        if data.len() != len * len * bins {
            return Err(ShapeError::ElementCount {
                len,
                bins,
                found: data.len(),
            });
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            let (i, j, b) = (k / (len * bins), (k / bins) % len, k % bins);
            return Err(ShapeError::NonFinite { i, j, b });
        }
        Ok(Self { data, len, bins })
    }

    pub fn from_fn(len: usize, bins: usize, mut f: impl FnMut(usize, usize, usize) -> S) -> Result<Self, ShapeError> {
        let mut data = Vec::with_capacity(len * len * bins);
        for i in 0..len {
            for j in 0..len {
                for b in 0..bins {
                    data.push(f(i, j, b));
                }
            }
        }
        Self::new(data, len, bins)
    }

    pub fn constant(len: usize, bins: usize, value: S) -> Result<Self, ShapeError> {
        Self::new(vec![value; len * len * bins], len, bins)
    }

    /// Residue count `L`.
    pub fn len(&self) -> usize {
        self.len
    }

    /// Bin count `B`.
    pub fn bins(&self) -> usize {
        self.bins
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize) -> usize {
        (i * self.len + j) * self.bins
    }

    /// Logits of pair `(i, j)` over all bins.
    #[inline]
    pub fn pair(&self, i: usize, j: usize) -> &[S] {
        let o = self.offset(i, j);
        &self.data[o..o + self.bins]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, b: usize) -> S {
        self.data[self.offset(i, j) + b]
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.len, self.len, self.bins]
    }

    /// Copy with a single element replaced; used by perturbation oracles.
    pub fn with_element(&self, flat: usize, value: S) -> Self {
        let mut data = self.data.clone();
        data[flat] = value;
        Self {
            data,
            len: self.len,
            bins: self.bins,
        }
    }

    /// Apply `f` elementwise. The result is revalidated for finiteness.
    pub fn map(&self, f: impl Fn(S) -> S) -> Result<Self, ShapeError> {
        Self::new(self.data.iter().map(|&v| f(v)).collect(), self.len, self.bins)
    }

    pub fn cast<T: Scalar>(&self) -> PaeLogits<T> {
        PaeLogits {
            data: self.data.iter().map(|v| T::of(v.to_f64_lossy())).collect(),
            len: self.len,
            bins: self.bins,
        }
    }
}

impl PaeLogits<f64> {
    pub fn from_npy(array: NpyArray) -> Result<Self, ShapeError> {
        match array.shape.as_slice() {
            &[a, b, bins] if a == b => Self::new(array.data, a, bins),
            _ => Err(ShapeError::NotSquare(array.shape)),
        }
    }

    pub fn to_npy(&self) -> NpyArray {
        NpyArray {
            shape: vec![self.len, self.len, self.bins],
            data: self.data.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert_eq!(PaeLogits::<f64>::new(vec![0.0; 4], 1, 4), Err(ShapeError::TooFewResidues(1)));
        assert_eq!(PaeLogits::<f64>::new(vec![], 2, 0), Err(ShapeError::NoBins));
        assert!(matches!(
            PaeLogits::<f64>::new(vec![0.0; 7], 2, 2),
            Err(ShapeError::ElementCount { found: 7, .. })
        ));
    }

    #[test]
    fn non_finite_reports_index() {
        let mut data = vec![0.0; 2 * 2 * 3];
        data[2 * 3 + 2] = f64::INFINITY;
        assert_eq!(
            PaeLogits::new(data, 2, 3),
            Err(ShapeError::NonFinite { i: 1, j: 0, b: 2 })
        );
    }

    #[test]
    fn pair_slices_are_row_major() {
        let t = PaeLogits::from_fn(3, 2, |i, j, b| (100 * i + 10 * j + b) as f64).unwrap();
        assert_eq!(t.pair(2, 1), &[210.0, 211.0]);
        assert_eq!(t.get(0, 2, 1), 21.0);
    }
}
