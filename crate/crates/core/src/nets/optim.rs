use alloc::vec;
use alloc::vec::Vec;

/// Heavy-ball momentum: `v ← μ·v + g`, `p ← p − lr·v`. No dampening, no Nesterov.
pub fn sgd_momentum_step(params: &mut [f64], grads: &[f64], velocity: &mut [f64], lr: f64, momentum: f64) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), velocity.len());
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
}

/// Momentum SGD with one zero-initialised velocity buffer per parameter tensor.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl SgdMomentum {
    pub fn new(lr: f64, momentum: f64, sizes: &[usize]) -> Self {
        Self {
            lr,
            momentum,
            velocity: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Updates parameter tensor `slot`.
    pub fn step(&mut self, slot: usize, params: &mut [f64], grads: &[f64]) {
        sgd_momentum_step(params, grads, &mut self.velocity[slot], self.lr, self.momentum);
    }

    pub fn velocity(&self, slot: usize) -> &[f64] {
        &self.velocity[slot]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_momentum_is_plain_sgd() {
        let mut p = vec![1.0, 2.0];
        let mut v = vec![0.0, 0.0];
        sgd_momentum_step(&mut p, &[0.5, -1.0], &mut v, 0.1, 0.0);
        assert_eq!(p, vec![1.0 - 0.05, 2.0 + 0.1]);
    }

    #[test]
    fn constant_gradient_unrolls() {
        let mut p = vec![0.0];
        let mut v = vec![0.0];
        sgd_momentum_step(&mut p, &[1.0], &mut v, 0.1, 0.9);
        assert!((p[0] + 0.1).abs() < 1e-15);
        sgd_momentum_step(&mut p, &[1.0], &mut v, 0.1, 0.9);
        // second step moves by lr·1.9
        assert!((p[0] + 0.1 + 0.19).abs() < 1e-15);
    }
}
