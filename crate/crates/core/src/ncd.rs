//! Normalized compression distance and pairwise distance matrices.
//!
//! NCD(x, y) = (C(xy) - min(C(x), C(y))) / max(C(x), C(y)), with the joint
//! term symmetrized as min(C(xy), C(yx)): real codecs are order-sensitive,
//! and the minimum is the tighter joint-complexity estimate. Raw negative
//! values (possible with strongly shared structure) clip to zero.

use rayon::prelude::*;
use thiserror::Error;

use crate::compress::{quantize_features, CompressError, Compressor};

/// Allowed excess over 1.0 for off-diagonal entries; models the additive
/// imperfection of real compressors.
pub const DEFAULT_EPSILON: f64 = 0.1;

#[derive(Debug, Error)]
pub enum NcdError {
    #[error("the distance is undefined for empty inputs")]
    EmptyInput,
    #[error("compressor produced zero length for both inputs")]
    DegenerateCompression,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} items, got {got}")]
    TooSmall { needed: usize, got: usize },
    #[error("item {index} is empty")]
    ItemEmpty { index: usize },
    #[error("item {index}: {source}")]
    Item { index: usize, source: CompressError },
    #[error("pair ({i}, {j}): {source}")]
    Pair {
        i: usize,
        j: usize,
        source: CompressError,
    },
    #[error("invalid distance matrix: {0}")]
    Invalid(String),
    #[error(transparent)]
    Compress(#[from] CompressError),
}

/// Square symmetric distance matrix with an exactly zero diagonal.
///
/// Only the upper triangle is stored; reads mirror it, so symmetry is exact
/// by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    upper: Vec<f64>,
}

impl DistanceMatrix {
    /// Build from explicit upper-triangle entries in row-major order
    /// (d(0,1), d(0,2), ..., d(n-2,n-1)).
    pub fn from_upper(n: usize, upper: Vec<f64>) -> Result<Self, NcdError> {
        if n == 0 {
            return Err(NcdError::TooSmall { needed: 1, got: 0 });
        }
        let expected = n * (n - 1) / 2;
        if upper.len() != expected {
            return Err(NcdError::Invalid(format!(
                "expected {expected} upper-triangle entries for n={n}, got {}",
                upper.len()
            )));
        }
        Ok(DistanceMatrix { n, upper })
    }

    /// Validate a dense matrix against the distance-matrix invariants
    /// (zero diagonal, exact symmetry, entries in [0, 1 + epsilon]) and
    /// ingest it.
    pub fn from_rows(rows: &[Vec<f64>], epsilon: f64) -> Result<Self, NcdError> {
        let n = rows.len();
        if n == 0 {
            return Err(NcdError::TooSmall { needed: 1, got: 0 });
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(NcdError::Invalid(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if rows[i][i] != 0.0 {
                return Err(NcdError::Invalid(format!(
                    "diagonal entry ({i}, {i}) is {}, expected exactly 0",
                    rows[i][i]
                )));
            }
        }
        let mut upper = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                let d = rows[i][j];
                if rows[j][i] != d {
                    return Err(NcdError::Invalid(format!(
                        "asymmetric entries at ({i}, {j}): {d} vs {}",
                        rows[j][i]
                    )));
                }
                if !(0.0..=1.0 + epsilon).contains(&d) {
                    return Err(NcdError::Invalid(format!(
                        "entry ({i}, {j}) = {d} outside [0, {}]",
                        1.0 + epsilon
                    )));
                }
                upper.push(d);
            }
        }
        Ok(DistanceMatrix { n, upper })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn upper_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.n);
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.n && j < self.n, "index out of range");
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.upper[self.upper_index(i, j)],
            std::cmp::Ordering::Greater => self.upper[self.upper_index(j, i)],
        }
    }

    /// Upper-triangle entries as (i, j, d) with i < j.
    pub fn upper_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            ((i + 1)..self.n).map(move |j| (i, j, self.upper[self.upper_index(i, j)]))
        })
    }

    pub fn max_offdiag(&self) -> f64 {
        self.upper.iter().copied().fold(0.0, f64::max)
    }

    /// Arithmetic mean over the n(n-1)/2 upper-triangle entries.
    pub fn offdiag_mean(&self) -> Result<f64, NcdError> {
        if self.n < 2 {
            return Err(NcdError::TooSmall {
                needed: 2,
                got: self.n,
            });
        }
        Ok(self.upper.iter().sum::<f64>() / self.upper.len() as f64)
    }

    /// Median of the upper-triangle entries (lower of the two middles for
    /// even counts). Used as the default affinity bandwidth.
    pub fn offdiag_median(&self) -> Result<f64, NcdError> {
        if self.n < 2 {
            return Err(NcdError::TooSmall {
                needed: 2,
                got: self.n,
            });
        }
        let mut sorted = self.upper.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(sorted[(sorted.len() - 1) / 2])
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }
}

/// The NCD formula on precomputed compressed lengths. `cjoint` is the joint
/// term C(xy) (already symmetrized by the caller if desired).
pub fn ncd_from_lengths(cx: usize, cy: usize, cjoint: usize) -> Result<f64, NcdError> {
    let max = cx.max(cy);
    if max == 0 {
        return Err(NcdError::DegenerateCompression);
    }
    let min = cx.min(cy);
    Ok(((cjoint as f64 - min as f64) / max as f64).max(0.0))
}

/// NCD between two byte strings. Symmetric by construction.
pub fn ncd_bytes(x: &[u8], y: &[u8], comp: &Compressor) -> Result<f64, NcdError> {
    if x.is_empty() || y.is_empty() {
        return Err(NcdError::EmptyInput);
    }
    let cx = comp.compressed_len(x)?;
    let cy = comp.compressed_len(y)?;
    let cxy = comp.compressed_len(&comp.concat(x, y)?)?;
    let cyx = comp.compressed_len(&comp.concat(y, x)?)?;
    ncd_from_lengths(cx, cy, cxy.min(cyx))
}

/// NCD between two equal-length feature vectors: quantize to bytes, then
/// the byte-string path.
pub fn ncd_vectors(x: &[f64], y: &[f64], comp: &Compressor) -> Result<f64, NcdError> {
    if x.len() != y.len() {
        return Err(NcdError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    ncd_bytes(&quantize_features(x), &quantize_features(y), comp)
}

/// Pairwise NCD matrix over byte-string items. The diagonal is zero by the
/// distance-matrix convention; disjoint pairs are evaluated in parallel.
pub fn distance_matrix<T: AsRef<[u8]> + Sync>(
    items: &[T],
    comp: &Compressor,
) -> Result<DistanceMatrix, NcdError> {
    let n = items.len();
    if n == 0 {
        return Err(NcdError::TooSmall { needed: 1, got: 0 });
    }
    for (i, item) in items.iter().enumerate() {
        if item.as_ref().is_empty() {
            return Err(NcdError::ItemEmpty { index: i });
        }
    }
    let singles: Vec<usize> = items
        .par_iter()
        .enumerate()
        .map(|(i, item)| {
            comp.compressed_len(item.as_ref())
                .map_err(|source| NcdError::Item { index: i, source })
        })
        .collect::<Result<_, _>>()?;

    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let upper: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let x = items[i].as_ref();
            let y = items[j].as_ref();
            let joint = |a: &[u8], b: &[u8]| {
                comp.concat(a, b)
                    .and_then(|cat| comp.compressed_len(&cat))
                    .map_err(|source| NcdError::Pair { i, j, source })
            };
            let cjoint = joint(x, y)?.min(joint(y, x)?);
            ncd_from_lengths(singles[i], singles[j], cjoint)
        })
        .collect::<Result<_, _>>()?;

    Ok(DistanceMatrix { n, upper })
}

/// Pairwise NCD matrix over equal-length feature vectors (quantized first).
pub fn distance_matrix_vectors(
    columns: &[Vec<f64>],
    comp: &Compressor,
) -> Result<DistanceMatrix, NcdError> {
    if let Some(first) = columns.first() {
        for col in columns {
            if col.len() != first.len() {
                return Err(NcdError::LengthMismatch {
                    left: first.len(),
                    right: col.len(),
                });
            }
        }
    }
    let quantized: Vec<Vec<u8>> = columns.iter().map(|c| quantize_features(c)).collect();
    distance_matrix(&quantized, comp)
}
