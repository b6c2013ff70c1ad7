use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg;

/// Norm tolerance enforced on construction of an [`EmbeddingSet`].
pub const UNIT_NORM_TOL: f64 = 1e-12;

/// Position of a row inside the class / instance / augmentation hierarchy.
/// All indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Position {
    pub class: usize,
    pub instance: usize,
    pub aug: usize,
}

/// `m * n * p` vectors of dimension `d`, stored row-major.
///
/// Row `((i * n) + j) * p + k` holds augmentation `k` of instance `j` of
/// class `i`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EmbeddingSet {
    data: Vec<f64>,
    m: usize,
    n: usize,
    p: usize,
    d: usize,
}

impl EmbeddingSet {
    /// Builds a set whose rows must be unit-norm within [`UNIT_NORM_TOL`].
    pub fn new(m: usize, n: usize, p: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        let set = Self::from_raw(m, n, p, d, data)?;
        set.check_unit_norm(UNIT_NORM_TOL)?;
        Ok(set)
    }

    /// Builds a set checking only the shape. Rows may have any norm; this
    /// is what training diagnostics and finite-difference probes use.
    pub fn from_raw(m: usize, n: usize, p: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if m == 0 || n == 0 || p == 0 || d == 0 {
            return Err(Error::ShapeMismatch(format!(
                "m, n, p, d must be positive (got {m}, {n}, {p}, {d})"
            )));
        }
        let rows = m * n * p;
        if data.len() != rows * d {
            return Err(Error::ShapeMismatch(format!(
                "expected {rows} rows x {d} = {} values, got {}",
                rows * d,
                data.len()
            )));
        }
        Ok(Self { data, m, n, p, d })
    }

    /// Builds a set by scaling each row of `data` to unit norm.
    pub fn normalized(m: usize, n: usize, p: usize, d: usize, mut data: Vec<f64>) -> Result<Self> {
        if d > 0 {
            for (r, row) in data.chunks_exact_mut(d).enumerate() {
                let norm = linalg::norm(row);
                if !(norm > 0.0 && norm.is_finite()) {
                    return Err(Error::NotUnitNorm { row: r, norm });
                }
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
        Self::from_raw(m, n, p, d, data)
    }

    pub fn classes(&self) -> usize {
        self.m
    }

    pub fn instances(&self) -> usize {
        self.n
    }

    pub fn augmentations(&self) -> usize {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Total number of rows, `m * n * p`.
    pub fn len(&self) -> usize {
        self.m * self.n * self.p
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.d..(r + 1) * self.d]
    }

    pub fn rows(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.d)
    }

    pub fn index_of(&self, pos: Position) -> usize {
        (pos.class * self.n + pos.instance) * self.p + pos.aug
    }

    pub fn position(&self, r: usize) -> Position {
        Position {
            class: r / (self.n * self.p),
            instance: (r / self.p) % self.n,
            aug: r % self.p,
        }
    }

    /// Rows belonging to class `i`, as one contiguous slice.
    pub fn class_rows(&self, i: usize) -> &[f64] {
        let per_class = self.n * self.p * self.d;
        &self.data[i * per_class..(i + 1) * per_class]
    }

    pub fn row_norms(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(linalg::norm)
    }

    /// Fails with the first row whose norm deviates from 1 by more than `tol`.
    pub fn check_unit_norm(&self, tol: f64) -> Result<()> {
        for (row, norm) in self.row_norms().enumerate() {
            if !((norm - 1.0).abs() <= tol) {
                return Err(Error::NotUnitNorm { row, norm });
            }
        }
        Ok(())
    }

    /// Rescales every row to unit norm in place and returns the smallest
    /// norm seen before rescaling.
    pub fn renormalize(&mut self) -> f64 {
        let mut min_norm = f64::INFINITY;
        for row in self.data.chunks_exact_mut(self.d) {
            let norm = linalg::norm(row);
            min_norm = min_norm.min(norm);
            if norm > 0.0 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
        min_norm
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Gram matrix of all rows, row-major `len x len`.
    pub fn gram(&self) -> Vec<f64> {
        linalg::gram(&self.data, self.d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn index_convention_round_trips() {
        let set = EmbeddingSet::from_raw(3, 4, 2, 1, vec![1.0; 24]).unwrap();
        for r in 0..set.len() {
            assert_eq!(set.index_of(set.position(r)), r);
        }
        let pos = Position { class: 2, instance: 1, aug: 1 };
        assert_eq!(set.index_of(pos), (2 * 4 + 1) * 2 + 1);
    }

    #[test]
    fn rejects_wrong_length_and_non_unit_rows() {
        assert!(matches!(
            EmbeddingSet::from_raw(2, 2, 1, 2, vec![0.0; 7]),
            Err(Error::ShapeMismatch(_))
        ));
        let err = EmbeddingSet::new(1, 2, 1, 2, vec![1.0, 0.0, 0.5, 0.0]).unwrap_err();
        assert_eq!(err, Error::NotUnitNorm { row: 1, norm: 0.5 });
    }

    #[test]
    fn renormalize_is_idempotent_on_unit_rows() {
        let mut set =
            EmbeddingSet::normalized(1, 2, 1, 3, vec![1.0, 2.0, 2.0, 0.3, -0.4, 1.2]).unwrap();
        let before = set.clone();
        set.renormalize();
        for (a, b) in set.as_slice().iter().zip(before.as_slice()) {
            assert!((a - b).abs() <= 1e-15);
        }
    }
}
