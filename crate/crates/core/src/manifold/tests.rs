use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::*;
use crate::numerics::{
    gaussian_matrix, max_principal_angle, orthonormality_error, random_orthonormal, svd, DenseMatrix, SeededRng,
};

fn centered(x: &DenseMatrix) -> DenseMatrix {
    let m = x.rows();
    let means: Vec<f64> = x.column_sums().into_iter().map(|s| s / m as f64).collect();
    let mut c = x.clone();
    for r in 0..m {
        for (v, mu) in c.row_mut(r).iter_mut().zip(&means) {
            *v -= mu;
        }
    }
    c
}

fn diag_stream_batch(rng: &mut SeededRng, rows: usize, scales: &[f64]) -> DenseMatrix {
    DenseMatrix::from_fn(rows, scales.len(), |_, c| libm::sqrt(scales[c]) * rng.normal())
}

#[test]
fn first_update_matches_direct_pca() {
    let mut rng = SeededRng::new(11);
    let scales = [9.0, 4.0, 2.0, 1.0, 0.5, 0.25, 0.1, 0.05];
    let x = diag_stream_batch(&mut rng, 40, &scales);
    let mut state = ManifoldState::new(8, 3, &mut rng).unwrap();
    assert_eq!(state.update(&x).unwrap(), UpdateOutcome::Applied);
    let direct = svd(&centered(&x)).unwrap();
    let angle = max_principal_angle(&state.components(), &direct.v.columns(0, 3)).unwrap();
    assert!(angle < 1e-8, "angle {angle}");
    for (a, b) in state.singular_values().iter().zip(&direct.s) {
        assert!((a - b).abs() < 1e-9 * b);
    }
}

#[test]
fn wide_first_update_matches_direct_pca() {
    // fewer rows than features exercises the row-Gram route
    let mut rng = SeededRng::new(12);
    let basis = random_orthonormal(&mut rng, 50, 4).unwrap();
    let coeffs = DenseMatrix::from_fn(12, 4, |_, c| (4 - c) as f64 * rng.normal());
    let x = coeffs.matmul_nt(&basis);
    let mut state = ManifoldState::new(50, 3, &mut rng).unwrap();
    state.update(&x).unwrap();
    let direct = svd(&centered(&x)).unwrap();
    assert!(max_principal_angle(&state.components(), &direct.v.columns(0, 3)).unwrap() < 1e-8);
}

#[test]
fn full_rank_stream_equals_batch_pca_of_everything() {
    let mut rng = SeededRng::new(13);
    let scales = [5.0, 3.0, 2.0, 1.0, 0.5, 0.2];
    let mut state = ManifoldState::new(6, 6, &mut rng).unwrap();
    let mut all = Vec::new();
    for _ in 0..7 {
        let x = diag_stream_batch(&mut rng, 10, &scales);
        state.update(&x).unwrap();
        all.push(x);
    }
    let refs: Vec<&DenseMatrix> = all.iter().collect();
    let data = DenseMatrix::vstack(&refs).unwrap();
    let direct = svd(&centered(&data)).unwrap();
    for (a, b) in state.singular_values().iter().zip(&direct.s) {
        assert!((a - b).abs() < 1e-9 * direct.s[0], "{a} vs {b}");
    }
    assert!(max_principal_angle(&state.components().columns(0, 2), &direct.v.columns(0, 2)).unwrap() < 1e-8);
    let m = data.rows() as f64;
    for c in 0..6 {
        let col = data.column(c);
        let mean = col.iter().sum::<f64>() / m;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
        assert!((state.mean()[c] - mean).abs() < 1e-12);
        assert!((state.variance()[c] - var).abs() < 1e-12);
    }
    assert_eq!(state.samples_seen(), 70);
}

#[test]
fn stationary_stream_converges_to_analytic_eigenvectors() {
    let mut rng = SeededRng::new(14);
    let mut scales = vec![0.1; 20];
    scales[0] = 10.0;
    scales[1] = 5.0;
    scales[2] = 1.0;
    let mut state = ManifoldState::new(20, 2, &mut rng).unwrap();
    for _ in 0..200 {
        state.update(&diag_stream_batch(&mut rng, 16, &scales)).unwrap();
    }
    let truth = DenseMatrix::from_fn(20, 2, |r, c| if r == c { 1.0 } else { 0.0 });
    let angle = max_principal_angle(&state.components(), &truth).unwrap();
    assert!(angle < 0.05, "angle {angle}");
    assert!(orthonormality_error(state.components_ref()) < 1e-8);
}

#[test]
fn identical_batches_leave_mean_unchanged() {
    let mut rng = SeededRng::new(15);
    let x = gaussian_matrix(&mut rng, 8, 5, 1.0).unwrap();
    let mut state = ManifoldState::new(5, 2, &mut rng).unwrap();
    state.update(&x).unwrap();
    let before = state.mean().to_vec();
    state.update(&x).unwrap();
    for (a, b) in before.iter().zip(state.mean()) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn initial_components_are_random_unit_columns() {
    let mut rng = SeededRng::new(16);
    let state = ManifoldState::new(12, 4, &mut rng).unwrap();
    let u = state.components();
    assert_eq!(u.shape(), (12, 4));
    for c in 0..4 {
        let norm: f64 = u.column(c).iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }
    assert!(orthonormality_error(&u) < 1e-12);
}

#[test]
fn rejects_small_batches_and_drops_non_finite() {
    let mut rng = SeededRng::new(17);
    let mut state = ManifoldState::new(6, 4, &mut rng).unwrap();
    assert!(state.update(&DenseMatrix::zeros(3, 6)).is_err());
    assert!(state.update(&DenseMatrix::zeros(5, 7)).is_err());
    let snapshot = state.clone();
    let mut bad = gaussian_matrix(&mut rng, 5, 6, 1.0).unwrap();
    bad[(2, 3)] = f64::NAN;
    bad.as_mut_slice()[7] = f64::INFINITY;
    assert!(matches!(state.update(&bad).unwrap(), UpdateOutcome::Dropped(_)));
    assert_eq!(state, snapshot);
    assert!(ManifoldState::new(3, 4, &mut rng).is_err());
}

#[test]
fn inline_tracker_applies_immediately() {
    let mut rng = SeededRng::new(18);
    let states = vec![
        ManifoldState::new(4, 2, &mut rng).unwrap(),
        ManifoldState::new(6, 3, &mut rng).unwrap(),
    ];
    let mut tracker = InlineTracker::new(states);
    let x = gaussian_matrix(&mut rng, 5, 6, 1.0).unwrap();
    assert_eq!(tracker.submit(1, &x).unwrap(), Submission::Applied);
    assert_eq!(tracker.applied(1), 1);
    assert_eq!(tracker.applied(0), 0);
    assert_eq!(tracker.snapshot(1).unwrap(), tracker.state(1).components());
    assert!(tracker.submit(2, &x).is_err());
}

fn embed(rng: &mut SeededRng, latent: &DenseMatrix, ambient: usize) -> DenseMatrix {
    let q = random_orthonormal(rng, ambient, latent.cols()).unwrap();
    latent.matmul_nt(&q)
}

#[test]
fn twonn_recovers_segment_and_plane() {
    let mut rng = SeededRng::new(19);
    let seg = DenseMatrix::from_fn(5000, 1, |_, _| rng.uniform());
    let d1 = twonn_estimate(&embed(&mut rng, &seg, 10), DEFAULT_TRIM).unwrap();
    assert!((0.9..=1.1).contains(&d1), "segment {d1}");
    let plane = DenseMatrix::from_fn(5000, 2, |_, _| rng.uniform());
    let d2 = twonn_estimate(&embed(&mut rng, &plane, 10), DEFAULT_TRIM).unwrap();
    assert!((1.8..=2.2).contains(&d2), "plane {d2}");
}

#[test]
fn twonn_invariant_to_similarity_transforms() {
    let mut rng = SeededRng::new(20);
    let x = gaussian_matrix(&mut rng, 300, 3, 1.0).unwrap();
    let base = twonn_estimate(&x, DEFAULT_TRIM).unwrap();
    let q = random_orthonormal(&mut rng, 3, 3).unwrap();
    let mut moved = x.matmul(&q);
    moved.scale(7.5);
    moved.add_row_broadcast(&[3.0, -1.0, 100.0]);
    let after = twonn_estimate(&moved, DEFAULT_TRIM).unwrap();
    assert!((base - after).abs() < 1e-9 * base, "{base} vs {after}");
}

#[test]
fn twonn_rejects_duplicates_and_tiny_sets() {
    let mut rng = SeededRng::new(21);
    let mut x = gaussian_matrix(&mut rng, 20, 2, 1.0).unwrap();
    let dup = x.row(4).to_vec();
    x.row_mut(11).copy_from_slice(&dup);
    assert!(matches!(
        twonn_estimate(&x, 0.1),
        Err(crate::Error::DuplicatePoints(_, _))
    ));
    assert!(twonn_estimate(&gaussian_matrix(&mut rng, 9, 2, 1.0).unwrap(), 0.1).is_err());
    assert!(twonn_estimate(&gaussian_matrix(&mut rng, 20, 2, 1.0).unwrap(), 0.5).is_err());
}

#[test]
fn variance_curve_closed_forms() {
    let x = DenseMatrix::from_rows(&[&[3.0, 0.0], &[-3.0, 0.0], &[0.0, 1.0], &[0.0, -1.0]]).unwrap();
    let curve = variance_explained_curve(&x).unwrap();
    assert!((curve.cumulative[0] - 0.9).abs() < 1e-12);
    assert!((curve.cumulative[1] - 1.0).abs() < 1e-12);
    assert_eq!(curve.pcs_for_threshold(0.9), 1);

    let mut rng = SeededRng::new(22);
    let dir = rng.normal_vec(6);
    let rank1 = DenseMatrix::from_fn(30, 6, |_, c| dir[c]);
    let t: Vec<f64> = (0..30).map(|_| rng.normal()).collect();
    let rank1 = DenseMatrix::from_fn(30, 6, |r, c| t[r] * rank1[(r, c)]);
    let curve = variance_explained_curve(&rank1).unwrap();
    assert!((curve.cumulative[0] - 1.0).abs() < 1e-10);

    let iso = gaussian_matrix(&mut rng, 20000, 20, 1.0).unwrap();
    let curve = variance_explained_curve(&iso).unwrap();
    let pcs = curve.pcs_for_threshold(0.9);
    assert!((17..=19).contains(&pcs), "pcs {pcs}");
    for (j, c) in curve.cumulative.iter().enumerate() {
        assert!((c - (j + 1) as f64 / 20.0).abs() < 0.03);
    }
    assert!(variance_explained_curve(&DenseMatrix::zeros(1, 3)).is_err());
}

#[test]
fn jacobian_curve_limits() {
    let mut rng = SeededRng::new(23);
    let u = random_orthonormal(&mut rng, 8, 4).unwrap();
    let inside = gaussian_matrix(&mut rng, 5, 2, 1.0)
        .unwrap()
        .matmul_nt(&u.columns(0, 2));
    let curve = jacobian_variance_curve(&inside, &u).unwrap();
    assert!((curve[1] - 1.0).abs() < 1e-12);
    assert!((curve[3] - 1.0).abs() < 1e-12);

    let full = random_orthonormal(&mut rng, 8, 8).unwrap();
    let (span, rest) = (full.columns(0, 4), full.columns(4, 8));
    let outside = gaussian_matrix(&mut rng, 5, 4, 1.0).unwrap().matmul_nt(&rest);
    let curve = jacobian_variance_curve(&outside, &span).unwrap();
    assert!(curve.iter().all(|c| c.abs() < 1e-12));

    let mut bad = u.clone();
    bad.scale(2.0);
    assert!(jacobian_variance_curve(&inside, &bad).is_err());
    let spectrum = jacobian_spectrum_curve(&inside).unwrap();
    assert!((spectrum.cumulative[1] - 1.0).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn components_stay_orthonormal(seed in 0u64..1000, batches in 1usize..6, k in 1usize..5) {
        let mut rng = SeededRng::new(seed);
        let mut state = ManifoldState::new(7, k, &mut rng).unwrap();
        for _ in 0..batches {
            let x = gaussian_matrix(&mut rng, 6, 7, 2.0).unwrap();
            state.update(&x).unwrap();
            prop_assert!(orthonormality_error(state.components_ref()) < 1e-8);
            let s = state.singular_values();
            prop_assert!(s.windows(2).all(|w| w[0] >= w[1]) && s.iter().all(|&v| v >= 0.0));
        }
    }
}

#[test]
fn inline_tracker_stages_short_batches() {
    let mut rng = SeededRng::new(24);
    let mut tracker = InlineTracker::new(vec![ManifoldState::new(10, 6, &mut rng).unwrap()]);
    let a = gaussian_matrix(&mut rng, 4, 10, 1.0).unwrap();
    let b = gaussian_matrix(&mut rng, 4, 10, 1.0).unwrap();
    assert_eq!(tracker.submit(0, &a).unwrap(), Submission::Queued);
    assert_eq!(tracker.applied(0), 0);
    assert_eq!(tracker.submit(0, &b).unwrap(), Submission::Applied);
    assert_eq!(tracker.state(0).samples_seen(), 8);
    let mut direct = ManifoldState::new(10, 6, &mut SeededRng::new(0)).unwrap();
    direct.update(&DenseMatrix::vstack(&[&a, &b]).unwrap()).unwrap();
    assert_eq!(direct.components(), tracker.snapshot(0).unwrap());
}
