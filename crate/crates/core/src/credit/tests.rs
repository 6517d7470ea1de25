use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::data::Dataset;
use crate::nets::{mlp_specs, Activation, Layer, LayerSpec, Network};
use crate::numerics::{gaussian_matrix, random_orthonormal, DenseMatrix, SeededRng};

fn rel(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.sub(b).frobenius_norm() / b.frobenius_norm()
}

#[test]
fn matched_sigma_values() {
    let s = matched_sigma_vnc(512, 16384, 1.0).unwrap();
    assert!((s - 0.176_776_695_296_636_9).abs() < 1e-12);
    assert_eq!(matched_sigma_vnc(7, 7, 0.3).unwrap(), 0.3);
    assert!(matched_sigma_vnc(8, 4, 1.0).is_err());
    assert!(matched_sigma_vnc(0, 4, 1.0).is_err());
}

#[test]
fn matched_noise_energy_agrees() {
    let mut rng = SeededRng::new(1);
    let (n, d) = (40, 6);
    let u = random_orthonormal(&mut rng, n, d).unwrap();
    let sigma_v = matched_sigma_vnc(d, n, 1.0).unwrap();
    let draws = 100_000;
    let a = sample_noise(NoiseMethod::Manifold, Some(&u), n, draws, 1.0, &mut rng).unwrap();
    let b = sample_noise(NoiseMethod::Isotropic, None, n, draws, sigma_v, &mut rng).unwrap();
    let ea = a.xi.frobenius_norm().powi(2) / draws as f64;
    let eb = b.xi.frobenius_norm().powi(2) / draws as f64;
    assert!((ea / eb - 1.0).abs() < 0.01, "{ea} vs {eb}");
}

#[test]
fn manifold_noise_lives_in_span_with_projector_covariance() {
    let mut rng = SeededRng::new(2);
    let (n, d, draws) = (16, 4, 100_000);
    let u = random_orthonormal(&mut rng, n, d).unwrap();
    let draw = sample_noise(NoiseMethod::Manifold, Some(&u), n, draws, 0.7, &mut rng).unwrap();
    assert_eq!(draw.zeta.as_ref().unwrap().shape(), (draws, d));
    let proj = u.matmul_nt(&u);
    let residual = draw.xi.sub(&draw.xi.matmul(&proj));
    assert!(residual.max_abs() < 1e-10);
    let mut cov = draw.xi.matmul_tn(&draw.xi);
    cov.scale(1.0 / draws as f64);
    assert!(rel(&cov, &proj.scaled(0.49)) < 0.05);

    let iso = sample_noise(NoiseMethod::Isotropic, None, n, draws, 0.5, &mut rng).unwrap();
    let mut cov = iso.xi.matmul_tn(&iso.xi);
    cov.scale(1.0 / draws as f64);
    assert!(rel(&cov, &DenseMatrix::identity(n).scaled(0.25)) < 0.05);

    assert!(matches!(
        sample_noise(NoiseMethod::Manifold, None, n, 3, 1.0, &mut rng),
        Err(crate::Error::MissingBasis(_))
    ));
}

#[test]
fn feedback_update_limits() {
    let mut rng = SeededRng::new(3);
    let b0 = gaussian_matrix(&mut rng, 5, 3, 1.0).unwrap();
    let xi = gaussian_matrix(&mut rng, 1, 5, 1.0).unwrap();
    let dy = gaussian_matrix(&mut rng, 1, 3, 1.0).unwrap();
    let mut b = b0.clone();
    feedback_update(&mut b, &xi, &dy, 0.0).unwrap();
    assert_eq!(b, b0);
    feedback_update(&mut b, &xi, &dy, 1.0).unwrap();
    assert!(b.sub(&xi.matmul_tn(&dy)).max_abs() < 1e-15);
    // a shared noise row is the same as repeating it for every example
    let dy4 = gaussian_matrix(&mut rng, 4, 3, 1.0).unwrap();
    let rep = DenseMatrix::from_fn(4, 5, |_, c| xi[(0, c)]);
    let (mut s1, mut s2) = (b0.clone(), b0.clone());
    feedback_update(&mut s1, &xi, &dy4, 0.3).unwrap();
    feedback_update(&mut s2, &rep, &dy4, 0.3).unwrap();
    assert!(s1.sub(&s2).max_abs() < 1e-14);
    assert!(feedback_update(&mut s1, &xi, &gaussian_matrix(&mut rng, 4, 2, 1.0).unwrap(), 0.1).is_err());
}

fn linear_net(rng: &mut SeededRng, sizes: &[usize]) -> Network {
    Network::new(&mlp_specs(sizes, Activation::Identity), rng).unwrap()
}

#[test]
fn frozen_linear_net_feedback_reaches_fixed_point() {
    let mut rng = SeededRng::new(4);
    let net = linear_net(&mut rng, &[6, 12, 8, 3]);
    let (n, d, layer) = (12, 3, 0);
    let u = random_orthonormal(&mut rng, n, d).unwrap();
    let x = gaussian_matrix(&mut rng, 32, 6, 1.0).unwrap();
    let cache = net.forward(&x).unwrap();
    let jt = net.jacobian(x.row(0), layer).unwrap().transpose();
    let target = u.matmul_nt(&u).matmul(&jt);
    let mut b = DenseMatrix::zeros(n, 3);
    for _ in 0..10_000 {
        let xi = sample_noise(NoiseMethod::Manifold, Some(&u), n, 32, 1.0, &mut rng)
            .unwrap()
            .xi;
        let out = net.perturbed_output(&cache, &[Some(xi.clone())]).unwrap();
        feedback_update(&mut b, &xi, &out.sub(cache.output()), 0.005).unwrap();
    }
    assert!(rel(&b, &target) < 0.05, "rel {}", rel(&b, &target));
}

#[test]
fn pseudo_error_cases() {
    let mut rng = SeededRng::new(5);
    let b = gaussian_matrix(&mut rng, 4, 3, 1.0).unwrap();
    let d_out = gaussian_matrix(&mut rng, 2, 3, 1.0).unwrap();
    let pre = gaussian_matrix(&mut rng, 2, 4, 1.0).unwrap();
    let e = pseudo_error(&b, &d_out, &pre, Activation::Identity).unwrap();
    assert!(e.sub(&d_out.matmul_nt(&b)).max_abs() < 1e-15);
    let neg = pre.map(|v| -v.abs() - 0.1);
    assert_eq!(pseudo_error(&b, &d_out, &neg, Activation::Relu).unwrap().max_abs(), 0.0);

    let net = linear_net(&mut rng, &[5, 6, 4, 3]);
    let x = gaussian_matrix(&mut rng, 3, 5, 1.0).unwrap();
    let cache = net.forward(&x).unwrap();
    let grads = net.backprop(&cache, &[0, 2, 1]).unwrap();
    for l in 0..2 {
        let jt = net.jacobian(x.row(0), l).unwrap().transpose();
        let e = pseudo_error(&jt, &grads.delta_out, &cache.pre[l], Activation::Identity).unwrap();
        assert!(e.sub(&grads.activation[l]).max_abs() < 1e-13);
    }
}

#[test]
fn forward_weight_update_cases() {
    let mut rng = SeededRng::new(6);
    let layer = Layer::init(LayerSpec::dense(4, 3, Activation::Relu), &mut rng);
    let x = gaussian_matrix(&mut rng, 5, 4, 1.0).unwrap();
    let zero = forward_weight_update(&layer, &DenseMatrix::zeros(5, 3), &x, 0.1);
    assert_eq!(zero.weight.max_abs(), 0.0);
    let delta = gaussian_matrix(&mut rng, 5, 3, 1.0).unwrap();
    let all = forward_weight_update(&layer, &delta, &x, 0.1);
    let mut sum = DenseMatrix::zeros(3, 4);
    for r in 0..5 {
        let d = DenseMatrix::row_vector(delta.row(r));
        let xr = DenseMatrix::row_vector(x.row(r));
        sum.axpy(-0.1, &d.matmul_tn(&xr));
    }
    assert!(all.weight.sub(&sum).max_abs() < 1e-14);

    let net = Network::new(&mlp_specs(&[4, 5, 3], Activation::Tanh), &mut rng).unwrap();
    let cache = net.forward(&x).unwrap();
    let g = net.backprop(&cache, &[0, 1, 2, 0, 1]).unwrap();
    let (_, params) = net.backprop_from(&cache, &g.delta_out);
    let act = Activation::Tanh;
    let true_delta = DenseMatrix::from_fn(5, 5, |r, c| {
        g.activation[0][(r, c)] * act.derivative(cache.pre[0][(r, c)])
    });
    let upd = forward_weight_update(&net.layers[0], &true_delta, &x, 0.01);
    assert!(upd.weight.sub(&params[0].weight.scaled(-0.01)).max_abs() < 1e-15);
}

#[test]
fn init_jacobian_variants() {
    let mut rng = SeededRng::new(7);
    let lin = linear_net(&mut rng, &[5, 7, 6, 3]);
    let b = init_jacobian_feedback(&lin, &mut rng, 32, FeedbackInit::InitJac).unwrap();
    let j0 = lin.layers[2].weight.matmul(&lin.layers[1].weight);
    assert!(rel(&b[0], &j0.transpose()) < 1e-12);
    assert!(rel(&b[1], &lin.layers[2].weight.transpose()) < 1e-12);

    let relu = Network::new(&mlp_specs(&[5, 7, 6, 3], Activation::Relu), &mut rng).unwrap();
    let mut r1 = SeededRng::new(70);
    let got = init_jacobian_feedback(&relu, &mut r1, 32, FeedbackInit::InitJac).unwrap();
    let mut r2 = SeededRng::new(70);
    let mut expected = [DenseMatrix::zeros(7, 3), DenseMatrix::zeros(6, 3)];
    for _ in 0..32 {
        let x = r2.normal_vec(5);
        for (l, e) in expected.iter_mut().enumerate() {
            e.axpy(1.0 / 32.0, &relu.jacobian(&x, l).unwrap().transpose());
        }
    }
    for l in 0..2 {
        assert!(got[l].sub(&expected[l]).max_abs() < 1e-14);
    }

    let mut r3 = SeededRng::new(70);
    let permuted = init_jacobian_feedback(&relu, &mut r3, 32, FeedbackInit::PermutedInitJac).unwrap();
    for l in 0..2 {
        let mut a = got[l].as_slice().to_vec();
        let mut p = permuted[l].as_slice().to_vec();
        assert_ne!(a, p);
        a.sort_by(f64::total_cmp);
        p.sort_by(f64::total_cmp);
        assert_eq!(a, p);
    }
}

#[test]
fn weight_mirror_cases() {
    let mut rng = SeededRng::new(8);
    let layer = Layer::init(LayerSpec::dense(6, 4, Activation::Identity), &mut rng);
    let pre = gaussian_matrix(&mut rng, 8, 4, 1.0).unwrap();
    let noise = gaussian_matrix(&mut rng, 8, 6, 1.0).unwrap();
    let resp = layer_noise_response(&layer, &pre, &noise).unwrap();
    assert!(resp.sub(&noise.matmul_nt(&layer.weight)).max_abs() < 1e-13);

    let m0 = gaussian_matrix(&mut rng, 4, 6, 1.0).unwrap();
    let mut m = m0.clone();
    weight_mirror_update(&mut m, &layer, &noise, &resp, 0.0, 0.0).unwrap();
    assert_eq!(m, m0);

    // λ = η = 1 with unit isotropic noise: the mirror estimates W itself
    // (its transpose in the B_l orientation) over many draws.
    let draws = 200_000;
    let noise = gaussian_matrix(&mut rng, draws, 6, 1.0).unwrap();
    let pre = DenseMatrix::zeros(draws, 4);
    let resp = layer_noise_response(&layer, &pre, &noise).unwrap();
    weight_mirror_update(&mut m, &layer, &noise, &resp, 1.0, 1.0).unwrap();
    assert!(rel(&m, &layer.weight) < 0.02, "rel {}", rel(&m, &layer.weight));
}

fn toy_data(rng: &mut SeededRng, n: usize) -> Dataset {
    let x = gaussian_matrix(rng, n, 6, 1.0).unwrap();
    let labels = (0..n)
        .map(|r| usize::from(x[(r, 0)] + 0.5 * x[(r, 1)] > 0.0) + usize::from(x[(r, 2)] > 0.8))
        .collect();
    Dataset::new(x, labels, 3).unwrap()
}

#[test]
fn backprop_rule_matches_manual_momentum_sgd() {
    let mut rng = SeededRng::new(9);
    let data = toy_data(&mut rng, 40);
    let net = Network::new(&mlp_specs(&[6, 8, 3], Activation::Relu), &mut rng).unwrap();
    let mut config = TrainerConfig::new(Rule::Backprop, vec![2]);
    config.batch_size = 10;
    config.lr = 0.05;
    let mut trainer = Trainer::new(net.clone(), config, &mut SeededRng::new(1)).unwrap();

    let mut manual = net;
    let mut velocity: Vec<Vec<f64>> = manual
        .layers
        .iter()
        .flat_map(|l| [vec![0.0; l.weight.len()], vec![0.0; l.bias.len()]])
        .collect();
    for step in 0..4 {
        let idx: Vec<usize> = (step * 10..step * 10 + 10).collect();
        let (x, y) = data.batch(&idx);
        trainer.train_step(&x, &y, &data).unwrap();
        let cache = manual.forward(&x).unwrap();
        let g = manual.backprop(&cache, &y).unwrap();
        for (l, pg) in g.params.iter().enumerate() {
            crate::nets::sgd_momentum_step(
                manual.layers[l].weight.as_mut_slice(),
                pg.weight.as_slice(),
                &mut velocity[2 * l],
                0.05,
                0.9,
            );
            crate::nets::sgd_momentum_step(
                &mut manual.layers[l].bias,
                &pg.bias,
                &mut velocity[2 * l + 1],
                0.05,
                0.9,
            );
        }
    }
    assert_eq!(trainer.net, manual);
}

#[test]
fn dfa_feedback_is_bitwise_constant() {
    let mut rng = SeededRng::new(10);
    let data = toy_data(&mut rng, 64);
    let net = Network::new(&mlp_specs(&[6, 8, 7, 3], Activation::Relu), &mut rng).unwrap();
    let mut config = TrainerConfig::new(Rule::Dfa, vec![2, 2]);
    config.batch_size = 8;
    config.interval = 1;
    let mut trainer = Trainer::new(net, config, &mut rng).unwrap();
    let before = trainer.feedback.clone();
    for _ in 0..3 {
        trainer.train_epoch(&data, &mut rng).unwrap();
    }
    assert_eq!(trainer.feedback, before);
    assert_eq!(trainer.feedback_updates(), &[0, 0]);
}

#[test]
fn feedback_gating_counts() {
    for (rule, interval) in [
        (Rule::Nmnc, 3),
        (Rule::Vnc, 4),
        (Rule::Mirror(NoiseMethod::Manifold), 5),
    ] {
        let mut rng = SeededRng::new(11);
        let data = toy_data(&mut rng, 80);
        let net = Network::new(&mlp_specs(&[6, 8, 7, 3], Activation::Relu), &mut rng).unwrap();
        let mut config = TrainerConfig::new(rule, vec![3, 2]);
        config.batch_size = 8;
        config.interval = interval;
        let mut trainer = Trainer::new(net, config, &mut rng).unwrap();
        for _ in 0..2 {
            trainer.train_epoch(&data, &mut rng).unwrap();
        }
        let t = trainer.steps();
        assert_eq!(t, 20);
        let expected = if matches!(rule, Rule::Mirror(_)) {
            vec![t / interval, t / interval]
        } else {
            vec![t / interval; 2]
        };
        assert_eq!(trainer.feedback_updates(), expected.as_slice());
    }
}

#[test]
fn noise_correlation_rules_learn_a_toy_task() {
    for rule in [
        Rule::Nmnc,
        Rule::Vnc,
        Rule::Dfa,
        Rule::Mirror(NoiseMethod::Manifold),
        Rule::Mirror(NoiseMethod::Isotropic),
    ] {
        let mut rng = SeededRng::new(12);
        let data = toy_data(&mut rng, 400);
        let net = Network::new(&mlp_specs(&[6, 16, 12, 3], Activation::Relu), &mut rng).unwrap();
        let mut config = TrainerConfig::new(rule, vec![4, 4]);
        config.batch_size = 16;
        config.interval = 1;
        config.lr = 0.02;
        config.eta_b = 0.05;
        config.init = FeedbackInit::InitJac;
        let mut trainer = Trainer::new(net, config, &mut rng).unwrap();
        let first = trainer.train_epoch(&data, &mut rng).unwrap();
        let mut last = first.clone();
        for _ in 0..15 {
            last = trainer.train_epoch(&data, &mut rng).unwrap();
        }
        assert!(
            last.train_loss < first.train_loss,
            "{rule:?}: {} -> {}",
            first.train_loss,
            last.train_loss
        );
        assert!(last.train_accuracy > 0.7, "{rule:?}: accuracy {}", last.train_accuracy);
    }
}

#[test]
fn rule_names_round_trip() {
    for rule in [
        Rule::Backprop,
        Rule::Nmnc,
        Rule::Vnc,
        Rule::Dfa,
        Rule::Mirror(NoiseMethod::Manifold),
        Rule::Mirror(NoiseMethod::Isotropic),
    ] {
        assert_eq!(Rule::parse(rule.name()).unwrap(), rule);
    }
    assert!(Rule::parse("hebbian").is_err());
}
