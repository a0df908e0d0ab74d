//! Spectral pipeline: distance matrix -> Gaussian affinity -> degree ->
//! graph Laplacian -> symmetric eigendecomposition -> 2-D embedding on the
//! eigenvectors of the 2nd and 3rd smallest eigenvalues -> partition.
//!
//! The eigensolver is cyclic Jacobi: dependency-free, deterministic, and
//! adequate for the dense matrices this pipeline sees (n up to a few
//! hundred).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ncd::DistanceMatrix;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("sigma must be positive and finite, got {0}")]
    BadSigma(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("matrix is not symmetric at ({i}, {j}): difference {diff}")]
    NotSymmetric { i: usize, j: usize, diff: f64 },
    #[error("Jacobi sweep cap of {sweeps} reached without convergence")]
    NoConvergence { sweeps: usize },
    #[error("need at least {needed} items, got {got}")]
    TooSmall { needed: usize, got: usize },
    #[error("cannot partition {n} points into {k} groups")]
    BadK { k: usize, n: usize },
    #[error("invalid matrix: {0}")]
    Invalid(String),
}

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMat {
    n: usize,
    data: Vec<f64>,
}

impl SquareMat {
    pub fn zeros(n: usize) -> Self {
        SquareMat {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = SquareMat::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, SpectralError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(SpectralError::ShapeMismatch(
                "rows do not form a square matrix".into(),
            ));
        }
        Ok(SquareMat {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Column i as a vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }
}

/// Gaussian affinity on distances: a(i,j) = exp(-d^2 / (2 sigma^2)) off the
/// diagonal, a(i,i) = 1.
pub fn affinity_from_distance(
    m: &DistanceMatrix,
    sigma: f64,
) -> Result<SquareMat, SpectralError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(SpectralError::BadSigma(sigma));
    }
    let n = m.n();
    let mut a = SquareMat::zeros(n);
    for i in 0..n {
        a.set(i, i, 1.0);
    }
    let denom = 2.0 * sigma * sigma;
    for (i, j, d) in m.upper_entries() {
        let v = (-d * d / denom).exp();
        a.set(i, j, v);
        a.set(j, i, v);
    }
    Ok(a)
}

/// Default affinity bandwidth: the median off-diagonal distance (1.0 when
/// the matrix is all zeros, so the kernel stays defined).
pub fn auto_sigma(m: &DistanceMatrix) -> f64 {
    match m.offdiag_median() {
        Ok(v) if v > 0.0 => v,
        _ => 1.0,
    }
}

/// Degree of each node: the affinity row sum, diagonal included.
pub fn degree_matrix(a: &SquareMat) -> Vec<f64> {
    (0..a.n()).map(|i| a.row(i).iter().sum()).collect()
}

/// Unnormalized graph Laplacian L = D - A. Every row sums to zero.
pub fn laplacian(degree: &[f64], a: &SquareMat) -> Result<SquareMat, SpectralError> {
    let n = a.n();
    if degree.len() != n {
        return Err(SpectralError::ShapeMismatch(format!(
            "degree has {} entries for a {n}x{n} affinity",
            degree.len()
        )));
    }
    let mut l = SquareMat::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let d = if i == j { degree[i] } else { 0.0 };
            l.set(i, j, d - a.get(i, j));
        }
    }
    Ok(l)
}

/// Reconstruct an affinity matrix from a degree matrix and a Laplacian:
/// A = D - L. Used to validate ingested golden files.
pub fn affinity_from_degree_laplacian(degree: &[f64], lap: &SquareMat) -> SquareMat {
    let n = lap.n();
    let mut a = SquareMat::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let d = if i == j { degree[i] } else { 0.0 };
            a.set(i, j, d - lap.get(i, j));
        }
    }
    a
}

/// Check affinity invariants within a tolerance: symmetry, unit diagonal,
/// and entries in [0, 1].
pub fn validate_affinity(a: &SquareMat, tol: f64) -> Result<(), SpectralError> {
    let n = a.n();
    for i in 0..n {
        let diag = a.get(i, i);
        if (diag - 1.0).abs() > tol {
            return Err(SpectralError::Invalid(format!(
                "diagonal entry ({i}, {i}) = {diag} is not 1"
            )));
        }
        for j in (i + 1)..n {
            let d = (a.get(i, j) - a.get(j, i)).abs();
            if d > tol {
                return Err(SpectralError::Invalid(format!(
                    "asymmetric at ({i}, {j}): difference {d}"
                )));
            }
            let v = a.get(i, j);
            if !(-tol..=1.0 + tol).contains(&v) {
                return Err(SpectralError::Invalid(format!(
                    "entry ({i}, {j}) = {v} outside [0, 1]"
                )));
            }
        }
    }
    Ok(())
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order with matching orthonormal
/// eigenvector columns. Sign convention: the first component of each
/// eigenvector with magnitude above 1e-12 is positive.
pub fn eig_symmetric(m: &SquareMat) -> Result<(Vec<f64>, SquareMat), SpectralError> {
    let n = m.n();
    if n == 0 {
        return Err(SpectralError::TooSmall { needed: 1, got: 0 });
    }
    let scale = m.max_abs().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = (m.get(i, j) - m.get(j, i)).abs();
            if diff > 1e-9 * scale {
                return Err(SpectralError::NotSymmetric { i, j, diff });
            }
        }
    }

    let mut a = m.clone();
    // fold residual asymmetry so rotations see one consistent value
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a.get(i, j) + a.get(j, i));
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }
    let mut v = SquareMat::identity(n);

    let off = |a: &SquareMat| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += a.get(i, j) * a.get(i, j);
            }
        }
        s
    };
    let tol = (1e-12 * scale) * (1e-12 * scale) * (n * n) as f64;

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off(&a) <= tol {
            converged = true;
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                let app = a.get(p, p);
                let aqq = a.get(q, q);
                a.set(p, p, app - t * apq);
                a.set(q, q, aqq + t * apq);
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                for i in 0..n {
                    if i != p && i != q {
                        let aip = a.get(i, p);
                        let aiq = a.get(i, q);
                        let new_ip = c * aip - s * aiq;
                        let new_iq = s * aip + c * aiq;
                        a.set(i, p, new_ip);
                        a.set(p, i, new_ip);
                        a.set(i, q, new_iq);
                        a.set(q, i, new_iq);
                    }
                }
                for i in 0..n {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
    }
    if !converged && off(&a) > tol {
        return Err(SpectralError::NoConvergence {
            sweeps: JACOBI_MAX_SWEEPS,
        });
    }

    // ascending eigenvalues, columns permuted to match
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).partial_cmp(&a.get(j, j)).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = SquareMat::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        let flip = (0..n)
            .map(|i| v.get(i, src))
            .find(|x| x.abs() > 1e-12)
            .is_some_and(|x| x < 0.0);
        let sign = if flip { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors.set(i, dst, sign * v.get(i, src));
        }
    }
    Ok((eigenvalues, vectors))
}

/// Embedding on the 2nd and 3rd smallest eigenvalues' eigenvectors:
/// point i = (v2[i], v3[i]).
pub fn embed_2d(eigenvectors: &SquareMat) -> Result<Vec<[f64; 2]>, SpectralError> {
    let n = eigenvectors.n();
    if n < 3 {
        return Err(SpectralError::TooSmall { needed: 3, got: n });
    }
    Ok((0..n)
        .map(|i| [eigenvectors.get(i, 1), eigenvectors.get(i, 2)])
        .collect())
}

/// Everything the pipeline produces for one distance matrix.
#[derive(Debug, Clone)]
pub struct SpectralBundle {
    pub affinity: SquareMat,
    pub degree: Vec<f64>,
    pub laplacian: SquareMat,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: SquareMat,
    pub embedding: Vec<[f64; 2]>,
    pub sigma: f64,
}

/// Run the full pipeline on a distance matrix. `sigma` defaults to the
/// median off-diagonal distance.
pub fn spectral_bundle(
    m: &DistanceMatrix,
    sigma: Option<f64>,
) -> Result<SpectralBundle, SpectralError> {
    let sigma = sigma.unwrap_or_else(|| auto_sigma(m));
    let affinity = affinity_from_distance(m, sigma)?;
    let degree = degree_matrix(&affinity);
    let lap = laplacian(&degree, &affinity)?;
    let (eigenvalues, eigenvectors) = eig_symmetric(&lap)?;
    let embedding = embed_2d(&eigenvectors)?;
    Ok(SpectralBundle {
        affinity,
        degree,
        laplacian: lap,
        eigenvalues,
        eigenvectors,
        embedding,
        sigma,
    })
}

/// Partition embedded points: a sign cut on the first coordinate (the
/// Fiedler direction) for k = 2, seeded k-means for larger k, and one
/// label per point for k = n.
pub fn partition(
    embedding: &[[f64; 2]],
    k: usize,
    seed: u64,
) -> Result<Vec<usize>, SpectralError> {
    let n = embedding.len();
    if k == 0 || k > n {
        return Err(SpectralError::BadK { k, n });
    }
    if k == n {
        return Ok((0..n).collect());
    }
    if k == 1 {
        return Ok(vec![0; n]);
    }
    if k == 2 {
        return Ok(embedding
            .iter()
            .map(|p| usize::from(p[0] > 0.0))
            .collect());
    }
    Ok(kmeans(embedding, k, seed))
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

fn nearest(centroids: &[[f64; 2]], p: [f64; 2]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, &centroid) in centroids.iter().enumerate() {
        let d = dist2(p, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Lloyd's algorithm with k-means++ seeding; deterministic per seed.
fn kmeans(points: &[[f64; 2]], k: usize, seed: u64) -> Vec<usize> {
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ initialization
    let mut centroids: Vec<[f64; 2]> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)]);
    while centroids.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|&p| {
                centroids
                    .iter()
                    .map(|&c| dist2(p, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[next]);
    }

    let mut labels = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for (i, &p) in points.iter().enumerate() {
            let c = nearest(&centroids, p);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        let mut sums = vec![[0.0f64; 2]; k];
        let mut counts = vec![0usize; k];
        for (i, &p) in points.iter().enumerate() {
            sums[labels[i]][0] += p[0];
            sums[labels[i]][1] += p[1];
            counts[labels[i]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64];
            } else {
                // deterministic repair: farthest point from its centroid
                let far = (0..n)
                    .max_by(|&a, &b| {
                        dist2(points[a], centroids[labels[a]])
                            .partial_cmp(&dist2(points[b], centroids[labels[b]]))
                            .unwrap()
                    })
                    .unwrap();
                centroids[c] = points[far];
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> SquareMat {
        SquareMat::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn affinity_basics() {
        let m = DistanceMatrix::from_upper(3, vec![0.0, 0.5, 1.0]).unwrap();
        let a = affinity_from_distance(&m, 0.5).unwrap();
        assert_eq!(a.get(0, 0), 1.0);
        assert_eq!(a.get(0, 1), 1.0); // d = 0
        assert!(a.get(0, 2) > a.get(1, 2)); // decreasing in d
        assert_eq!(a.get(0, 2), a.get(2, 0));

        // sigma -> infinity: everything approaches 1
        let wide = affinity_from_distance(&m, 1e9).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((wide.get(i, j) - 1.0).abs() < 1e-12);
            }
        }
        assert!(matches!(
            affinity_from_distance(&m, 0.0),
            Err(SpectralError::BadSigma(_))
        ));
    }

    #[test]
    fn degree_and_laplacian() {
        let a = SquareMat::identity(4);
        assert_eq!(degree_matrix(&a), vec![1.0; 4]);
        let l = laplacian(&degree_matrix(&a), &a).unwrap();
        assert_eq!(l.max_abs(), 0.0);

        let ones = mat(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert_eq!(degree_matrix(&ones), vec![2.0, 2.0]);
        let l = laplacian(&[2.0, 2.0], &ones).unwrap();
        for i in 0..2 {
            assert!((l.row(i).iter().sum::<f64>()).abs() < 1e-12);
        }
    }

    #[test]
    fn eig_classic_2x2() {
        let m = mat(&[&[2.0, -1.0], &[-1.0, 2.0]]);
        let (vals, vecs) = eig_symmetric(&m).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
        // orthonormal columns
        let dot: f64 = (0..2).map(|i| vecs.get(i, 0) * vecs.get(i, 1)).sum();
        assert!(dot.abs() < 1e-12);
        // sign convention: first nonzero component positive
        assert!(vecs.get(0, 0) > 0.0);
        assert!(vecs.get(0, 1) > 0.0);
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let m = mat(&[&[1.0, 2.0], &[0.5, 1.0]]);
        assert!(matches!(
            eig_symmetric(&m),
            Err(SpectralError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn eig_zero_matrix() {
        let (vals, vecs) = eig_symmetric(&SquareMat::zeros(3)).unwrap();
        assert_eq!(vals, vec![0.0; 3]);
        assert_eq!(vecs, SquareMat::identity(3));
    }

    #[test]
    fn connected_laplacian_has_constant_kernel() {
        // complete graph on 5 nodes with unit weights
        let mut a = SquareMat::zeros(5);
        for i in 0..5 {
            for j in 0..5 {
                a.set(i, j, 1.0);
            }
        }
        let l = laplacian(&degree_matrix(&a), &a).unwrap();
        let (vals, vecs) = eig_symmetric(&l).unwrap();
        assert!(vals[0].abs() < 1e-9);
        let expected = 1.0 / (5.0f64).sqrt();
        for i in 0..5 {
            assert!((vecs.get(i, 0) - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_eigenvalue_multiplicity_counts_components() {
        for parts in [vec![5], vec![3, 4], vec![2, 3, 2]] {
            let n: usize = parts.iter().sum();
            let mut a = SquareMat::zeros(n);
            let mut offset = 0;
            for &size in &parts {
                for i in 0..size {
                    for j in 0..size {
                        a.set(offset + i, offset + j, 1.0);
                    }
                }
                offset += size;
            }
            let l = laplacian(&degree_matrix(&a), &a).unwrap();
            let (vals, _) = eig_symmetric(&l).unwrap();
            let zeros = vals.iter().filter(|v| v.abs() <= 1e-9).count();
            assert_eq!(zeros, parts.len(), "components {parts:?}: {vals:?}");
        }
    }

    #[test]
    fn fiedler_sign_recovers_two_components() {
        // two disconnected cliques
        let mut a = SquareMat::zeros(6);
        for block in [&[0usize, 1, 2][..], &[3, 4, 5][..]] {
            for &i in block {
                for &j in block {
                    a.set(i, j, 1.0);
                }
            }
        }
        let l = laplacian(&degree_matrix(&a), &a).unwrap();
        let (_, vecs) = eig_symmetric(&l).unwrap();
        let emb = embed_2d(&vecs).unwrap();
        let labels = partition(&emb, 2, 0).unwrap();
        assert_eq!(labels[0], labels[1]);
        assert_eq!(labels[0], labels[2]);
        assert_eq!(labels[3], labels[4]);
        assert_eq!(labels[3], labels[5]);
        assert_ne!(labels[0], labels[3]);
    }

    #[test]
    fn partition_edge_cases() {
        let pts: Vec<[f64; 2]> = (0..4).map(|i| [i as f64, 0.0]).collect();
        assert_eq!(partition(&pts, 4, 0).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(partition(&pts, 1, 0).unwrap(), vec![0; 4]);
        assert!(matches!(
            partition(&pts, 5, 0),
            Err(SpectralError::BadK { .. })
        ));
        assert!(partition(&pts, 0, 0).is_err());
    }

    #[test]
    fn kmeans_separated_clouds() {
        let mut pts = Vec::new();
        for i in 0..5 {
            pts.push([0.0 + 0.01 * i as f64, 0.0]);
        }
        for i in 0..5 {
            pts.push([10.0 + 0.01 * i as f64, 10.0]);
        }
        for i in 0..5 {
            pts.push([-10.0, 5.0 + 0.01 * i as f64]);
        }
        let labels = partition(&pts, 3, 7).unwrap();
        for group in [&labels[0..5], &labels[5..10], &labels[10..15]] {
            assert!(group.iter().all(|&l| l == group[0]));
        }
        assert_ne!(labels[0], labels[5]);
        assert_ne!(labels[0], labels[10]);
        assert_ne!(labels[5], labels[10]);
        // deterministic per seed
        assert_eq!(labels, partition(&pts, 3, 7).unwrap());
    }

    #[test]
    fn bundle_pipeline_invariants() {
        let m = DistanceMatrix::from_upper(
            4,
            vec![0.1, 0.9, 0.85, 0.88, 0.92, 0.15],
        )
        .unwrap();
        let b = spectral_bundle(&m, None).unwrap();
        let n = m.n();
        for i in 0..n {
            assert!((b.laplacian.row(i).iter().sum::<f64>()).abs() < 1e-9);
            assert!((b.degree[i] - b.affinity.row(i).iter().sum::<f64>()).abs() < 1e-12);
        }
        assert!(b.eigenvalues[0] >= -1e-9);
        assert!(b.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        // columns orthonormal
        for p in 0..n {
            for q in 0..n {
                let dot: f64 = (0..n)
                    .map(|i| b.eigenvectors.get(i, p) * b.eigenvectors.get(i, q))
                    .sum();
                let expected = if p == q { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-9, "({p},{q}) dot {dot}");
            }
        }
        assert_eq!(b.embedding.len(), n);
    }

    #[test]
    fn affinity_reconstruction_helpers() {
        let m = DistanceMatrix::from_upper(3, vec![0.2, 0.6, 0.4]).unwrap();
        let a = affinity_from_distance(&m, 0.5).unwrap();
        let deg = degree_matrix(&a);
        let l = laplacian(&deg, &a).unwrap();
        let back = affinity_from_degree_laplacian(&deg, &l);
        for i in 0..3 {
            for j in 0..3 {
                assert!((back.get(i, j) - a.get(i, j)).abs() < 1e-12);
            }
        }
        assert!(validate_affinity(&back, 1e-9).is_ok());
        let mut bad = back.clone();
        bad.set(0, 0, 0.5);
        assert!(validate_affinity(&bad, 1e-4).is_err());
    }
}
