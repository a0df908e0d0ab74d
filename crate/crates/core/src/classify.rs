//! Lightweight classifiers for comparing feature sets: nearest centroid and
//! a one-vs-rest linear classifier trained by subgradient descent on the
//! hinge loss. Both are deterministic (the hinge trainer under a fixed
//! seed), which is all the feature-set comparison needs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("class {0} has no training vectors")]
    EmptyClass(usize),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
}

fn check_classes(items: &[(Vec<f64>, usize)], n_classes: usize) -> Result<(), ClassifyError> {
    if items.is_empty() || n_classes == 0 {
        return Err(ClassifyError::DegenerateData("no training data".into()));
    }
    let dim = items[0].0.len();
    for (v, label) in items {
        if *label >= n_classes {
            return Err(ClassifyError::DegenerateData(format!(
                "label {label} outside 0..{n_classes}"
            )));
        }
        if v.len() != dim {
            return Err(ClassifyError::DegenerateData(
                "feature vectors have mixed lengths".into(),
            ));
        }
    }
    for class in 0..n_classes {
        if !items.iter().any(|(_, l)| *l == class) {
            return Err(ClassifyError::EmptyClass(class));
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct CentroidModel {
    centroids: Vec<Vec<f64>>,
}

/// Per-class mean vectors.
pub fn centroid_train(
    items: &[(Vec<f64>, usize)],
    n_classes: usize,
) -> Result<CentroidModel, ClassifyError> {
    check_classes(items, n_classes)?;
    let dim = items[0].0.len();
    let mut sums = vec![vec![0.0; dim]; n_classes];
    let mut counts = vec![0usize; n_classes];
    for (v, label) in items {
        for (s, x) in sums[*label].iter_mut().zip(v) {
            *s += x;
        }
        counts[*label] += 1;
    }
    let centroids = sums
        .into_iter()
        .zip(&counts)
        .map(|(sum, &c)| sum.into_iter().map(|s| s / c as f64).collect())
        .collect();
    Ok(CentroidModel { centroids })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid by Euclidean distance; ties go to the lowest label.
pub fn centroid_predict(model: &CentroidModel, v: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (label, c) in model.centroids.iter().enumerate() {
        let d = sq_dist(v, c);
        if d < best_d {
            best_d = d;
            best = label;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct HingeModel {
    weights: Vec<Vec<f64>>, // one row per class
    bias: Vec<f64>,
}

/// One-vs-rest linear classifiers trained by subgradient descent on the
/// hinge loss, with a seeded shuffle each epoch.
pub fn hinge_train(
    items: &[(Vec<f64>, usize)],
    n_classes: usize,
    epochs: usize,
    rate: f64,
    seed: u64,
) -> Result<HingeModel, ClassifyError> {
    check_classes(items, n_classes)?;
    if n_classes < 2 {
        return Err(ClassifyError::DegenerateData(
            "need at least two classes".into(),
        ));
    }
    let dim = items[0].0.len();
    let mut weights = vec![vec![0.0; dim]; n_classes];
    let mut bias = vec![0.0; n_classes];
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let step = rate / (1.0 + epoch as f64 * 0.1);
        for &idx in &order {
            let (v, label) = &items[idx];
            for class in 0..n_classes {
                let y = if *label == class { 1.0 } else { -1.0 };
                let margin: f64 =
                    weights[class].iter().zip(v).map(|(w, x)| w * x).sum::<f64>() + bias[class];
                if y * margin < 1.0 {
                    for (w, x) in weights[class].iter_mut().zip(v) {
                        *w += step * y * x;
                    }
                    bias[class] += step * y;
                }
            }
        }
    }
    Ok(HingeModel { weights, bias })
}

/// Largest one-vs-rest margin; ties go to the lowest label.
pub fn hinge_predict(model: &HingeModel, v: &[f64]) -> usize {
    let mut best = 0;
    let mut best_m = f64::NEG_INFINITY;
    for (label, (w, b)) in model.weights.iter().zip(&model.bias).enumerate() {
        let m: f64 = w.iter().zip(v).map(|(w, x)| w * x).sum::<f64>() + b;
        if m > best_m {
            best_m = m;
            best = label;
        }
    }
    best
}

/// Fraction of predictions matching the true labels.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(predicted.len(), truth.len());
    if predicted.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / predicted.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> Vec<(Vec<f64>, usize)> {
        let mut items = Vec::new();
        for i in 0..10 {
            let j = i as f64 * 0.01;
            items.push((vec![0.0 + j, 0.0], 0));
            items.push((vec![10.0 + j, 10.0], 1));
            items.push((vec![-10.0, 10.0 + j], 2));
        }
        items
    }

    #[test]
    fn centroid_recovers_blobs() {
        let items = blobs();
        let model = centroid_train(&items, 3).unwrap();
        let preds: Vec<usize> = items.iter().map(|(v, _)| centroid_predict(&model, v)).collect();
        let truth: Vec<usize> = items.iter().map(|(_, l)| *l).collect();
        assert_eq!(accuracy(&preds, &truth), 1.0);
    }

    #[test]
    fn centroid_nearest_and_ties() {
        let items = vec![
            (vec![0.0, 0.0], 0),
            (vec![10.0, 10.0], 1),
        ];
        let model = centroid_train(&items, 2).unwrap();
        assert_eq!(centroid_predict(&model, &[1.0, 1.0]), 0);
        assert_eq!(centroid_predict(&model, &[10.0, 10.0]), 1);
        // equidistant: lowest label wins
        assert_eq!(centroid_predict(&model, &[5.0, 5.0]), 0);
    }

    #[test]
    fn centroid_empty_class() {
        let items = vec![(vec![0.0], 0)];
        assert!(matches!(
            centroid_train(&items, 2),
            Err(ClassifyError::EmptyClass(1))
        ));
    }

    #[test]
    fn hinge_separable_data() {
        let items: Vec<(Vec<f64>, usize)> = (0..20)
            .map(|i| {
                let x = i as f64 / 10.0;
                if i % 2 == 0 {
                    (vec![x, 1.0], 0)
                } else {
                    (vec![x, -1.0], 1)
                }
            })
            .collect();
        let model = hinge_train(&items, 2, 50, 0.1, 3).unwrap();
        let preds: Vec<usize> = items.iter().map(|(v, _)| hinge_predict(&model, v)).collect();
        let truth: Vec<usize> = items.iter().map(|(_, l)| *l).collect();
        assert_eq!(accuracy(&preds, &truth), 1.0);
    }

    #[test]
    fn hinge_is_deterministic_per_seed() {
        let items = blobs();
        let a = hinge_train(&items, 3, 20, 0.05, 11).unwrap();
        let b = hinge_train(&items, 3, 20, 0.05, 11).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.bias, b.bias);
    }

    #[test]
    fn hinge_cannot_solve_xor() {
        let items = vec![
            (vec![0.0, 0.0], 0),
            (vec![1.0, 1.0], 0),
            (vec![0.0, 1.0], 1),
            (vec![1.0, 0.0], 1),
        ];
        let model = hinge_train(&items, 2, 200, 0.1, 5).unwrap();
        let preds: Vec<usize> = items.iter().map(|(v, _)| hinge_predict(&model, v)).collect();
        let truth: Vec<usize> = items.iter().map(|(_, l)| *l).collect();
        assert!(accuracy(&preds, &truth) <= 0.75);
    }

    #[test]
    fn hinge_degenerate_inputs() {
        assert!(hinge_train(&[], 2, 10, 0.1, 0).is_err());
        let one_class = vec![(vec![0.0], 0), (vec![1.0], 0)];
        assert!(hinge_train(&one_class, 1, 10, 0.1, 0).is_err());
    }
}
