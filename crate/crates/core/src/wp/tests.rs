use alloc::vec::Vec;

use super::*;
use crate::data::{generate_memory_batch, MemoryTaskSpec};
use crate::nets::Rnn;
use crate::numerics::{gaussian_matrix, random_orthonormal, svd, DenseMatrix, SeededRng};

fn rel(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.sub(b).frobenius_norm() / b.frobenius_norm()
}

#[test]
fn rank_structure_of_draws() {
    let mut rng = SeededRng::new(1);
    let basis = random_orthonormal(&mut rng, 6, 2).unwrap();
    for family in [
        PerturbationFamily::Rank1Iid,
        PerturbationFamily::Rank1FixedSubspace,
        PerturbationFamily::Rank1Manifold,
    ] {
        for side in [FactorSide::Left, FactorSide::Right, FactorSide::Both] {
            let e = draw_perturbation(family, 6, 6, side, Some(&basis), &mut rng).unwrap();
            let s = svd(&e).unwrap().s;
            assert!(s[1] < 1e-12 * s[0]);
        }
    }
    let e = draw_perturbation(PerturbationFamily::RankR(3), 7, 5, FactorSide::Left, None, &mut rng).unwrap();
    let s = svd(&e).unwrap().s;
    assert!(s[2] > 1e-8 && s[3] < 1e-12 * s[0]);
    assert!(matches!(
        draw_perturbation(
            PerturbationFamily::Rank1Manifold,
            6,
            6,
            FactorSide::Left,
            None,
            &mut rng
        ),
        Err(crate::Error::MissingBasis(_))
    ));
}

#[test]
fn subspace_factor_lies_in_basis() {
    let mut rng = SeededRng::new(2);
    let basis = random_orthonormal(&mut rng, 8, 3).unwrap();
    let proj = basis.matmul_nt(&basis);
    let left = draw_perturbation(
        PerturbationFamily::Rank1Manifold,
        8,
        5,
        FactorSide::Left,
        Some(&basis),
        &mut rng,
    )
    .unwrap();
    assert!(left.sub(&proj.matmul(&left)).max_abs() < 1e-12);
    let right = draw_perturbation(
        PerturbationFamily::Rank1Manifold,
        4,
        8,
        FactorSide::Right,
        Some(&basis),
        &mut rng,
    )
    .unwrap();
    assert!(right.sub(&right.matmul(&proj)).max_abs() < 1e-12);
    // a factor of another length stays unrestricted
    let e = draw_perturbation(
        PerturbationFamily::Rank1Manifold,
        8,
        1,
        FactorSide::Right,
        Some(&basis),
        &mut rng,
    )
    .unwrap();
    assert_eq!(e.shape(), (8, 1));
    assert!(draw_perturbation(
        PerturbationFamily::Rank1Manifold,
        5,
        4,
        FactorSide::Left,
        Some(&basis),
        &mut rng
    )
    .is_err());
}

#[test]
fn rescaled_norm_is_exact() {
    let mut rng = SeededRng::new(3);
    for family in [
        PerturbationFamily::Full,
        PerturbationFamily::Rank1Iid,
        PerturbationFamily::RankR(4),
    ] {
        let mut e = draw_perturbation(family, 9, 5, FactorSide::Left, None, &mut rng).unwrap();
        rescale(&mut e, 1e-4).unwrap();
        let target = 1e-4 * libm::sqrt(45.0);
        assert!((e.frobenius_norm() - target).abs() < 1e-12 * target);
    }
    assert!(rescale(&mut DenseMatrix::zeros(2, 2), 1e-4).is_err());
}

#[test]
fn isotropic_families_have_identity_second_moment() {
    let mut rng = SeededRng::new(4);
    for family in [
        PerturbationFamily::Full,
        PerturbationFamily::Rank1Iid,
        PerturbationFamily::RankR(3),
    ] {
        let m = second_moment(family, 3, 4, FactorSide::Left, None, 100_000, &mut rng).unwrap();
        let e = rel(&m, &DenseMatrix::identity(12));
        assert!(e < 0.05, "{family:?}: {e}");
    }
}

#[test]
fn subspace_family_second_moment_is_projected() {
    let mut rng = SeededRng::new(5);
    let basis = random_orthonormal(&mut rng, 4, 2).unwrap();
    let p = basis.matmul_nt(&basis);
    let m = second_moment(
        PerturbationFamily::Rank1FixedSubspace,
        4,
        3,
        FactorSide::Left,
        Some(&basis),
        100_000,
        &mut rng,
    )
    .unwrap();
    // vec is row-major: index i·3 + j, so the moment is P ⊗ I₃
    let expected = DenseMatrix::from_fn(12, 12, |a, b| if a % 3 == b % 3 { p[(a / 3, b / 3)] } else { 0.0 });
    assert!(rel(&m, &expected) < 0.05);
}

#[test]
fn antithetic_estimate_on_linear_loss() {
    let mut rng = SeededRng::new(6);
    let g = gaussian_matrix(&mut rng, 3, 4, 1.0).unwrap();
    let w = gaussian_matrix(&mut rng, 3, 4, 1.0).unwrap();
    let e = gaussian_matrix(&mut rng, 3, 4, 1.0).unwrap();
    for eps in [1e-6, 0.1, 3.0] {
        let est = antithetic_estimate(|v| v.frobenius_dot(&g) + 2.0, &w, &e, eps).unwrap();
        assert!(est.sub(&e.scaled(g.frobenius_dot(&e))).max_abs() < 1e-8);
    }
    let mut orth = e.clone();
    let c = orth.frobenius_dot(&g) / g.frobenius_norm().powi(2);
    orth.axpy(-c, &g);
    let est = antithetic_estimate(|v| v.frobenius_dot(&g), &w, &orth, 0.5).unwrap();
    assert!(est.max_abs() < 1e-12);
    assert!(antithetic_estimate(|v| v.frobenius_dot(&g), &w, &e, 0.0).is_err());
    assert!(antithetic_estimate(|_| f64::NAN, &w, &e, 0.1).is_err());
}

#[test]
fn antithetic_estimate_is_unbiased() {
    let mut rng = SeededRng::new(7);
    let g = gaussian_matrix(&mut rng, 2, 3, 1.0).unwrap();
    let w = DenseMatrix::zeros(2, 3);
    let trials = 100_000;
    let mut sum = DenseMatrix::zeros(2, 3);
    let mut sum_sq = DenseMatrix::zeros(2, 3);
    for _ in 0..trials {
        let e = draw_perturbation(PerturbationFamily::Rank1Iid, 2, 3, FactorSide::Left, None, &mut rng).unwrap();
        let est = antithetic_estimate(|v| v.frobenius_dot(&g), &w, &e, 1e-3).unwrap();
        sum.axpy(1.0, &est);
        sum_sq.axpy(1.0, &est.hadamard(&est));
    }
    let n = trials as f64;
    let mean = sum.scaled(1.0 / n);
    let var_total: f64 = (0..6)
        .map(|i| sum_sq.as_slice()[i] / n - mean.as_slice()[i].powi(2))
        .sum();
    let se = libm::sqrt(var_total / n);
    assert!(
        mean.sub(&g).frobenius_norm() < 3.0 * se + 1e-12,
        "err {} se {se}",
        mean.sub(&g).frobenius_norm()
    );
}

#[test]
fn closed_form_values() {
    assert_eq!(mse_closed_form(PerturbationFamily::Full, 2, 2, 1), Some(5.0));
    assert_eq!(mse_closed_form(PerturbationFamily::Rank1Iid, 2, 2, 1), Some(15.0));
    assert_eq!(mse_closed_form(PerturbationFamily::Full, 4, 4, 4), Some(17.0 / 4.0));
    assert!(mse_closed_form(PerturbationFamily::Rank1Iid, 8, 4, 1_000_000_000).unwrap() < 1e-6);
    assert_eq!(mse_closed_form(PerturbationFamily::Rank1Manifold, 2, 2, 1), None);
    assert_eq!(mse_closed_form(PerturbationFamily::RankR(2), 2, 2, 1), None);
    assert_eq!(mse_closed_form(PerturbationFamily::Full, 2, 2, 0), None);
}

#[test]
fn oracle_matches_full_gaussian_closed_form() {
    let mut rng = SeededRng::new(8);
    let g = gaussian_matrix(&mut rng, 4, 4, 1.0).unwrap();
    let est = mse_oracle(PerturbationFamily::Full, &g, 4, 10_000, None, &mut rng).unwrap();
    let predicted = 17.0 / 4.0;
    assert!(
        (est.mean() / predicted - 1.0).abs() < 0.05,
        "{} vs {predicted}",
        est.mean()
    );
}

#[test]
fn oracle_matches_rank1_closed_form() {
    let mut rng = SeededRng::new(9);
    let g = gaussian_matrix(&mut rng, 2, 2, 1.0).unwrap();
    let est = mse_oracle(PerturbationFamily::Rank1Iid, &g, 1, 200_000, None, &mut rng).unwrap();
    let predicted = 15.0;
    assert!(
        (est.mean() - predicted).abs() < 4.0 * est.std_err(),
        "{} ± {}",
        est.mean(),
        est.std_err()
    );
}

#[test]
fn rank1_and_full_share_linear_scaling_in_dimension() {
    // log-log slope of the MSE coefficient against d = N·M at large d
    let mut rng = SeededRng::new(10);
    let mut pts: Vec<(f64, f64, f64)> = Vec::new();
    for n in [16usize, 32, 64] {
        let g = gaussian_matrix(&mut rng, n, n, 1.0).unwrap();
        let r1 = mse_oracle(PerturbationFamily::Rank1Iid, &g, 1, 400, None, &mut rng)
            .unwrap()
            .mean();
        let full = mse_oracle(PerturbationFamily::Full, &g, 1, 400, None, &mut rng)
            .unwrap()
            .mean();
        pts.push((libm::log((n * n) as f64), libm::log(r1), libm::log(full)));
    }
    let slope = |f: &dyn Fn(&(f64, f64, f64)) -> f64| (f(&pts[2]) - f(&pts[0])) / (pts[2].0 - pts[0].0);
    let s_r1 = slope(&|p| p.1);
    let s_full = slope(&|p| p.2);
    assert!((0.85..1.1).contains(&s_r1), "rank-1 slope {s_r1}");
    assert!((0.9..1.1).contains(&s_full), "full slope {s_full}");
}

#[test]
fn family_names_round_trip() {
    for f in [
        PerturbationFamily::Full,
        PerturbationFamily::Rank1Iid,
        PerturbationFamily::Rank1FixedSubspace,
        PerturbationFamily::Rank1Manifold,
        PerturbationFamily::RankR(4),
    ] {
        assert_eq!(PerturbationFamily::parse(&f.name()).unwrap(), f);
    }
    assert!(PerturbationFamily::parse("rank0").is_err());
    assert_eq!(RnnMethod::parse("backprop").unwrap(), RnnMethod::Backprop);
}

#[test]
fn zero_rnn_predicts_uniformly() {
    let spec = MemoryTaskSpec::new(0, 5, 5).unwrap();
    let batch = generate_memory_batch(&spec, 16, &mut SeededRng::new(11)).unwrap();
    let rnn = Rnn::zeros(5, 8, 5);
    let (loss, traj) = rnn.forward_loss(&batch.inputs, &batch.targets).unwrap();
    assert!((loss - libm::log(5.0)).abs() < 1e-14);
    assert_eq!(traj.hidden.len(), 11);
    assert!(rnn.forward_loss(&batch.inputs, &batch.targets[..9]).is_err());
}

#[test]
fn hand_built_rnn_solves_smallest_task() {
    let spec = MemoryTaskSpec::new(0, 1, 3).unwrap();
    let batch = generate_memory_batch(&spec, 4, &mut SeededRng::new(12)).unwrap();
    let mut rnn = Rnn::zeros(3, 2, 3);
    // unit 0 fires on the payload symbol, unit 1 on the go-cue
    rnn.w_xh[(0, 1)] = 5.0;
    rnn.w_xh[(1, 2)] = 5.0;
    rnn.w_xh[(0, 2)] = -5.0;
    rnn.w_hh[(0, 0)] = -5.0;
    rnn.w_hy = DenseMatrix::from_rows(&[&[20.0, -20.0], &[-20.0, 20.0], &[-20.0, -20.0]]).unwrap();
    let (loss, _) = rnn.forward_loss(&batch.inputs, &batch.targets).unwrap();
    assert!(loss < 1e-3, "loss {loss}");
}

fn task_batches(n: usize, batch: usize, seed: u64) -> Vec<crate::data::MemoryBatch> {
    let spec = MemoryTaskSpec::new(0, 3, 4).unwrap();
    let mut rng = SeededRng::new(seed);
    (0..n)
        .map(|_| generate_memory_batch(&spec, batch, &mut rng).unwrap())
        .collect()
}

#[test]
fn backprop_trainer_aligns_perfectly_and_learns() {
    let mut rng = SeededRng::new(13);
    let rnn = Rnn::new(4, 16, 4, &mut rng);
    let mut config = WpConfig::new(RnnMethod::Backprop);
    config.lr = 0.05;
    let mut trainer = WpTrainer::new(rnn, config, &mut rng).unwrap();
    let batches = task_batches(150, 32, 14);
    let first = trainer.step(&batches[0], true).unwrap();
    let a = first.w_hh.unwrap();
    assert!((a.cosine - 1.0).abs() < 1e-12 && (a.projected - 1.0).abs() < 1e-12);
    let mut last = first.loss;
    for b in &batches[1..] {
        last = trainer.step(b, false).unwrap().loss;
    }
    assert!(last < first.loss - 0.1, "{} -> {last}", first.loss);
}

#[test]
fn perturbation_estimates_point_along_the_gradient() {
    // with many probes the estimate correlates with the exact W_hh gradient
    let batches = task_batches(1, 32, 15);
    for family in [
        PerturbationFamily::Full,
        PerturbationFamily::Rank1Iid,
        PerturbationFamily::Rank1Manifold,
    ] {
        let mut rng = SeededRng::new(16);
        let rnn = Rnn::new(4, 6, 4, &mut rng);
        let mut config = WpConfig::new(RnnMethod::Perturb(family));
        config.probes = 4000;
        config.pcs = 6;
        let mut trainer = WpTrainer::new(rnn, config, &mut rng).unwrap();
        let report = trainer.step(&batches[0], true).unwrap();
        let a = report.w_hh.unwrap();
        assert!(a.cosine > 0.6, "{family:?}: cosine {}", a.cosine);
    }
}
