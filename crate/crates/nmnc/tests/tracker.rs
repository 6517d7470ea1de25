use nmnc::tracker::AsyncTracker;
use nmnc_core::manifold::{InlineTracker, ManifoldState, ManifoldTracker, Submission};
use nmnc_core::numerics::{gaussian_matrix, SeededRng};

fn states(dim: usize, k: usize, seed: u64) -> Vec<ManifoldState> {
    vec![ManifoldState::new(dim, k, &mut SeededRng::new(seed)).unwrap()]
}

#[test]
fn flushed_tracker_matches_inline_updates() {
    let mut rng = SeededRng::new(1);
    let batches: Vec<_> = (0..6)
        .map(|_| gaussian_matrix(&mut rng, 12, 10, 1.0).unwrap())
        .collect();
    let mut inline = InlineTracker::new(states(10, 3, 2));
    let mut background = AsyncTracker::new(states(10, 3, 2), 16);
    for b in &batches {
        assert_eq!(inline.submit(0, b).unwrap(), Submission::Applied);
        assert_eq!(background.submit(0, b).unwrap(), Submission::Queued);
    }
    background.flush();
    assert_eq!(background.applied(0), 6);
    assert_eq!(background.dropped(), 0);
    assert_eq!(background.snapshot(0).unwrap(), inline.snapshot(0).unwrap());
}

#[test]
fn full_queue_drops_instead_of_blocking() {
    let mut rng = SeededRng::new(3);
    let batch = gaussian_matrix(&mut rng, 300, 400, 1.0).unwrap();
    let mut t = AsyncTracker::new(states(400, 50, 4), 1);
    let mut dropped = 0;
    for _ in 0..40 {
        if t.submit(0, &batch).unwrap() == Submission::DroppedFull {
            dropped += 1;
        }
    }
    t.flush();
    assert!(dropped > 0);
    assert_eq!(t.dropped(), dropped);
    assert_eq!(t.applied(0) + dropped, 40);
}

#[test]
fn rejects_bad_input() {
    let mut t = AsyncTracker::new(states(4, 2, 5), 2);
    let mut bad = gaussian_matrix(&mut SeededRng::new(6), 3, 4, 1.0).unwrap();
    bad[(0, 0)] = f64::NAN;
    assert_eq!(t.submit(0, &bad).unwrap(), Submission::DroppedInvalid);
    assert!(t.submit(1, &bad).is_err());
    assert!(t.snapshot(1).is_err());
    assert_eq!(t.layers(), 1);
}
