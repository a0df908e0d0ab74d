//! Compression-distance feature selection: the replacement for pooling.
//!
//! Feature vectors are quantized and compressed, their pairwise NCD matrix
//! is built, and only vectors participating in at least one pair whose
//! distance strictly exceeds the dissimilarity criterion propagate. If no
//! pair qualifies, the mean off-diagonal distance becomes the criterion;
//! if still nothing qualifies (all distances equal the mean, e.g. identical
//! columns), the full map propagates.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::compress::{quantize_features, Compressor};
use crate::convnet::{multimap_forward, ConvError, ConvLayerSpec, FeatureMap};
use crate::ncd::{distance_matrix_vectors, DistanceMatrix, NcdError};

#[derive(Debug, Error)]
pub enum SelectError {
    #[error(transparent)]
    Ncd(#[from] NcdError),
    #[error(transparent)]
    Conv(#[from] ConvError),
}

#[derive(Debug, Clone, Copy)]
pub struct SelectionConfig {
    /// Dissimilarity threshold; pairs strictly above it propagate.
    pub criterion: f64,
    pub compressor: Compressor,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            criterion: 0.4,
            compressor: Compressor::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SelectionResult {
    /// Kept column indices, strictly increasing.
    pub kept: Vec<usize>,
    pub matrix: DistanceMatrix,
    pub criterion_used: f64,
    pub fallback_applied: bool,
}

fn qualifying(matrix: &DistanceMatrix, criterion: f64) -> Vec<usize> {
    let mut kept = BTreeSet::new();
    for (i, j, d) in matrix.upper_entries() {
        if d > criterion {
            kept.insert(i);
            kept.insert(j);
        }
    }
    kept.into_iter().collect()
}

/// Selection on a prebuilt distance matrix: kept = the union of indices
/// over pairs with d > criterion, then the mean fallback, then full
/// propagation. Returns (kept, criterion_used, fallback_applied).
pub fn select_indices(matrix: &DistanceMatrix, criterion: f64) -> (Vec<usize>, f64, bool) {
    let n = matrix.n();
    if n < 2 {
        // a single column always propagates; there is no pair to test
        return (vec![0], criterion, false);
    }
    let kept = qualifying(matrix, criterion);
    if !kept.is_empty() {
        return (kept, criterion, false);
    }
    let mean = matrix
        .offdiag_mean()
        .expect("n >= 2 guarantees a defined mean");
    let kept = qualifying(matrix, mean);
    if !kept.is_empty() {
        return (kept, mean, true);
    }
    ((0..n).collect(), mean, true)
}

/// Build the NCD matrix over quantized columns and select.
pub fn select_features(
    columns: &[Vec<f64>],
    cfg: &SelectionConfig,
) -> Result<SelectionResult, SelectError> {
    let matrix = distance_matrix_vectors(columns, &cfg.compressor)?;
    let (kept, criterion_used, fallback_applied) = select_indices(&matrix, cfg.criterion);
    Ok(SelectionResult {
        kept,
        matrix,
        criterion_used,
        fallback_applied,
    })
}

/// Remove exact duplicates (byte equality after quantization), keeping the
/// first occurrence of each and preserving order.
pub fn dedupe(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(columns.len());
    for col in columns {
        if seen.insert(quantize_features(col)) {
            out.push(col.clone());
        }
    }
    out
}

/// One full layer: multi-map convolution, flatten per-filter responses to
/// columns, select, and reassemble a map holding only the kept filters.
pub fn layer_forward(
    input: &FeatureMap,
    spec: &ConvLayerSpec,
    cfg: &SelectionConfig,
) -> Result<(FeatureMap, SelectionResult), SelectError> {
    let convolved = multimap_forward(input, spec)?;
    let columns = convolved.columns();
    let selection = select_features(&columns, cfg)?;
    let kept_columns: Vec<Vec<f64>> = selection
        .kept
        .iter()
        .map(|&i| columns[i].clone())
        .collect();
    let out = FeatureMap::from_columns(convolved.h(), convolved.w(), convolved.ch(), &kept_columns)?;
    Ok((out, selection))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convnet::Activation;

    #[test]
    fn threshold_hit_keeps_the_qualifying_pair() {
        // columns 1..3 with d(1,2) = 0.5, d(1,3) = 0.1, d(2,3) = 0.1
        let m = DistanceMatrix::from_upper(3, vec![0.5, 0.1, 0.1]).unwrap();
        let (kept, used, fallback) = select_indices(&m, 0.4);
        assert_eq!(kept, vec![0, 1]);
        assert_eq!(used, 0.4);
        assert!(!fallback);
    }

    #[test]
    fn mean_fallback() {
        // No pair exceeds 0.4, so the mean becomes the criterion and only
        // the largest pair qualifies. Dyadic values keep the middle
        // distance exactly equal to the mean, which strict > must exclude.
        let m = DistanceMatrix::from_upper(3, vec![0.375, 0.25, 0.125]).unwrap();
        let (kept, used, fallback) = select_indices(&m, 0.4);
        assert_eq!(kept, vec![0, 1]);
        assert_eq!(used, 0.25);
        assert!(fallback);
    }

    #[test]
    fn degenerate_full_propagation() {
        let m = DistanceMatrix::from_upper(4, vec![0.0; 6]).unwrap();
        let (kept, used, fallback) = select_indices(&m, 0.4);
        assert_eq!(kept, vec![0, 1, 2, 3]);
        assert_eq!(used, 0.0);
        assert!(fallback);
    }

    #[test]
    fn identical_columns_propagate_fully() {
        let col = vec![0.25; 256];
        let columns = vec![col.clone(), col.clone(), col];
        let result = select_features(&columns, &SelectionConfig::default()).unwrap();
        assert_eq!(result.kept, vec![0, 1, 2]);
        assert!(result.fallback_applied);
        // off-diagonal entries all equal the raw self-NCD
        let d = result.matrix.get(0, 1);
        assert_eq!(result.matrix.get(0, 2), d);
        assert_eq!(result.matrix.get(1, 2), d);
    }

    #[test]
    fn single_column_propagates() {
        let result = select_features(&[vec![0.5; 64]], &SelectionConfig::default()).unwrap();
        assert_eq!(result.kept, vec![0]);
        assert!(!result.fallback_applied);
    }

    #[test]
    fn criterion_zero_keeps_any_positive_distance() {
        let m = DistanceMatrix::from_upper(3, vec![0.01, 0.02, 0.0]).unwrap();
        let (kept, _, fallback) = select_indices(&m, 0.0);
        assert_eq!(kept, vec![0, 1, 2]);
        assert!(!fallback);
    }

    #[test]
    fn kept_is_permutation_invariant() {
        let m = DistanceMatrix::from_upper(4, vec![0.5, 0.1, 0.1, 0.45, 0.2, 0.05]).unwrap();
        let (kept, _, _) = select_indices(&m, 0.4);
        // permute rows/columns with the cycle 0->1->2->3->0
        let perm = [1usize, 2, 3, 0];
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| m.get(perm[i], perm[j])).collect())
            .collect();
        let pm = DistanceMatrix::from_rows(&rows, 0.1).unwrap();
        let (pkept, _, _) = select_indices(&pm, 0.4);
        let mut mapped: Vec<usize> = pkept.iter().map(|&i| perm[i]).collect();
        mapped.sort_unstable();
        assert_eq!(mapped, kept);
    }

    #[test]
    fn dedupe_keeps_first_occurrence() {
        let v = vec![0.1, 0.2];
        let w = vec![0.9, 0.8];
        assert_eq!(dedupe(&[v.clone(), v.clone(), w.clone()]), vec![v.clone(), w.clone()]);
        let distinct = vec![vec![0.0], vec![0.5], vec![1.0]];
        assert_eq!(dedupe(&distinct), distinct);
        assert!(dedupe(&[]).is_empty());
    }

    #[test]
    fn dedupe_uses_quantized_equality() {
        // differ by less than half a quantization step: same bytes
        let a = vec![0.5000, 0.25];
        let b = vec![0.5001, 0.25];
        assert_eq!(dedupe(&[a.clone(), b]).len(), 1);
    }

    #[test]
    fn layer_forward_single_filter_keeps_it() {
        let input = FeatureMap::single(6, 6, 1, (0..36).map(|i| i as f64 / 35.0).collect())
            .unwrap();
        let spec = ConvLayerSpec::seeded(
            3,
            3,
            1,
            1,
            1,
            0,
            Activation::Sigmoid { slope: 1.0 },
            5,
        )
        .unwrap();
        let (out, sel) = layer_forward(&input, &spec, &SelectionConfig::default()).unwrap();
        assert_eq!(out.k(), 1);
        assert_eq!(sel.kept, vec![0]);
    }

    #[test]
    fn layer_forward_never_grows_the_map() {
        let input = FeatureMap::single(8, 8, 1, (0..64).map(|i| (i % 7) as f64 / 6.0).collect())
            .unwrap();
        let spec = ConvLayerSpec::seeded(
            3,
            3,
            1,
            4,
            1,
            0,
            Activation::Sigmoid { slope: 1.0 },
            17,
        )
        .unwrap();
        let (out, sel) = layer_forward(&input, &spec, &SelectionConfig::default()).unwrap();
        assert!(out.k() <= 4);
        assert_eq!(out.k(), sel.kept.len());
        assert_eq!(out.h(), 6);
        assert_eq!(out.w(), 6);
    }
}
