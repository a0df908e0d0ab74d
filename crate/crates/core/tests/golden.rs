//! Validation against the published five-item reference matrices in
//! `data/`: the distance matrix, the degree matrix, the graph Laplacian,
//! and the eigenvector table.

use ncdnet_core::matio::read_square;
use ncdnet_core::ncd::DistanceMatrix;
use ncdnet_core::spectral::{
    affinity_from_degree_laplacian, degree_matrix, eig_symmetric, embed_2d, validate_affinity,
    SquareMat,
};

const DISTANCE: &str = include_str!("../../../data/golden_distance_5.csv");
const DEGREE: &str = include_str!("../../../data/golden_degree_5.csv");
const LAPLACIAN: &str = include_str!("../../../data/golden_laplacian_5.csv");
const EIGENVECTORS: &str = include_str!("../../../data/golden_eigenvectors_5.csv");

fn load(text: &str) -> (usize, Vec<Vec<f64>>) {
    read_square(text.as_bytes()).expect("golden file parses")
}

fn load_mat(text: &str) -> SquareMat {
    let (_, rows) = load(text);
    SquareMat::from_rows(&rows).unwrap()
}

#[test]
fn distance_matrix_passes_invariants() {
    let (n, rows) = load(DISTANCE);
    assert_eq!(n, 5);
    let m = DistanceMatrix::from_rows(&rows, 0.1).expect("zero diagonal, symmetric, in range");
    assert_eq!(m.n(), 5);
}

#[test]
fn distance_matrix_offdiag_mean() {
    let (_, rows) = load(DISTANCE);
    let m = DistanceMatrix::from_rows(&rows, 0.1).unwrap();
    let mean = m.offdiag_mean().unwrap();
    assert!(
        (mean - 0.39829).abs() < 1e-5,
        "mean {mean} vs published 0.39829"
    );
}

#[test]
fn laplacian_rows_sum_to_zero_within_print_precision() {
    let lap = load_mat(LAPLACIAN);
    for i in 0..lap.n() {
        let sum: f64 = lap.row(i).iter().sum();
        assert!(sum.abs() <= 2e-5, "row {i} sums to {sum}");
    }
}

#[test]
fn degree_minus_laplacian_reconstructs_a_valid_affinity() {
    let deg_mat = load_mat(DEGREE);
    let lap = load_mat(LAPLACIAN);
    let degree: Vec<f64> = (0..5).map(|i| deg_mat.get(i, i)).collect();
    let affinity = affinity_from_degree_laplacian(&degree, &lap);
    validate_affinity(&affinity, 1e-4).expect("symmetric, unit diagonal, entries in [0,1]");
    // the unit diagonal pins the self-affinity convention: L_ii = D_ii - 1
    assert!((affinity.get(0, 0) - 1.0).abs() < 1e-4);
    // degree really is the affinity row sum at figure precision
    let recomputed = degree_matrix(&affinity);
    for (i, (a, b)) in recomputed.iter().zip(&degree).enumerate() {
        assert!((a - b).abs() < 1e-4, "degree {i}: {a} vs {b}");
    }
    assert!((degree[0] - 4.08397).abs() < 1e-9);
}

#[test]
fn eigendecomposition_of_golden_laplacian() {
    let lap = load_mat(LAPLACIAN);
    let (vals, vecs) = eig_symmetric(&lap).unwrap();

    // smallest eigenvalue is zero with the constant eigenvector
    assert!(vals[0].abs() <= 1e-4, "lambda0 = {}", vals[0]);
    let unit = 1.0 / 5.0_f64.sqrt();
    for i in 0..5 {
        assert!(
            (vecs.get(i, 0).abs() - unit).abs() < 1e-4,
            "constant eigenvector entry {i} = {}",
            vecs.get(i, 0)
        );
    }

    // eigenvalues cross-checked against an independent solver (numpy eigh
    // on the same printed matrix)
    let reference = [0.0, 3.78728, 3.87638, 4.01020, 4.32713];
    for (got, want) in vals.iter().zip(reference) {
        assert!((got - want).abs() < 1e-4, "eigenvalue {got} vs {want}");
    }
}

#[test]
fn golden_eigenvector_table_consistency() {
    // The printed eigenvector table agrees with the printed Laplacian on
    // the constant column, the two pair-contrast columns, and, for the
    // remaining two, on the 2-D subspace they span (the printed basis
    // within that plane is rotated; see the full-match acceptance test).
    let lap = load_mat(LAPLACIAN);
    let golden = load_mat(EIGENVECTORS);
    let (_, vecs) = eig_symmetric(&lap).unwrap();

    let column_diff = |g: usize, c: usize| -> f64 {
        let direct: f64 = (0..5)
            .map(|i| (golden.get(i, g) - vecs.get(i, c)).abs())
            .fold(0.0, f64::max);
        let flipped: f64 = (0..5)
            .map(|i| (golden.get(i, g) + vecs.get(i, c)).abs())
            .fold(0.0, f64::max);
        direct.min(flipped)
    };
    assert!(column_diff(0, 0) < 5e-3, "constant column");
    assert!(column_diff(1, 1) < 5e-3, "first contrast column");
    assert!(column_diff(4, 4) < 5e-3, "second contrast column");

    // middle columns: in-subspace within tolerance
    for g in [2usize, 3] {
        let col = golden.column(g);
        let mut residual: f64 = col.iter().map(|x| x * x).sum();
        for c in [2usize, 3] {
            let dot: f64 = (0..5).map(|i| col[i] * vecs.get(i, c)).sum();
            residual -= dot * dot;
        }
        assert!(
            residual.abs().sqrt() < 5e-3,
            "golden column {g} leaves the (v2, v3) plane by {}",
            residual.abs().sqrt()
        );
    }
}

#[test]
fn golden_embedding_separates_the_pair_groups() {
    // A and B sit apart from C and D along one embedding axis.
    let lap = load_mat(LAPLACIAN);
    let (_, vecs) = eig_symmetric(&lap).unwrap();
    let emb = embed_2d(&vecs).unwrap();
    assert_eq!(emb.len(), 5);
    // the first embedding coordinate is the A-vs-B contrast; the second
    // separates the (A,B) group from the (C,D) group
    let ab = (emb[0][1] + emb[1][1]) / 2.0;
    let cd = (emb[2][1] + emb[3][1]) / 2.0;
    assert!(
        (ab - cd).abs() > 0.5,
        "groups not separated: AB at {ab}, CD at {cd}"
    );
}
