//! Forward dynamics model over encoded states and the curiosity reward.

use curiolab_numcore::{zeros_like, Adam, Module, Tensor};
use rand::Rng;

use crate::encoders::ACTIONS;
use crate::error::Result;
use crate::nets::{concat_cols, one_hot, Mlp};

pub const FORWARD_HIDDEN: usize = 256;

/// `concat(φ(s), one_hot(a)) → φ̂(s')` through two ReLU hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardModel {
    pub net: Mlp,
    pub feature_dim: usize,
}

impl Module for ForwardModel {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        self.net.visit(f)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.net.visit_mut(f)
    }
}

impl ForwardModel {
    pub fn new(feature_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            net: Mlp::new(&[feature_dim + ACTIONS, hidden, hidden, feature_dim], rng),
            feature_dim,
        }
    }

    pub fn predict(&self, phi: &Tensor, actions: &[usize]) -> Result<Tensor> {
        let x = concat_cols(phi, &one_hot(actions, ACTIONS))?;
        Ok(self.net.infer(&x)?)
    }

    /// Mean over the batch of `‖φ̂ − φ'‖²`.
    pub fn loss(&self, phi: &Tensor, actions: &[usize], phi_next: &Tensor) -> Result<f64> {
        let pred = self.predict(phi, actions)?;
        phi_next.expect_shape(pred.shape())?;
        let n = actions.len() as f64;
        Ok(pred.data().iter().zip(phi_next.data()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n)
    }

    pub fn loss_grad(&self, phi: &Tensor, actions: &[usize], phi_next: &Tensor) -> Result<(f64, ForwardModel)> {
        let x = concat_cols(phi, &one_hot(actions, ACTIONS))?;
        let (pred, cache) = self.net.forward(&x)?;
        phi_next.expect_shape(pred.shape())?;
        let n = actions.len() as f64;
        let mut loss = 0.0;
        let mut d = Tensor::zeros_like(&pred);
        for ((g, p), t) in d.data_mut().iter_mut().zip(pred.data()).zip(phi_next.data()) {
            loss += (p - t) * (p - t);
            *g = 2.0 * (p - t) / n;
        }
        let mut grads = zeros_like(self);
        self.net.backward(&cache, &d, &mut grads.net)?;
        Ok((loss / n, grads))
    }
}

/// `‖φ̂(s') − φ(s')‖₂` per row.
pub fn intrinsic_reward(phi_hat_next: &[f64], phi_next: &[f64]) -> f64 {
    assert_eq!(phi_hat_next.len(), phi_next.len(), "feature dims differ");
    phi_hat_next
        .iter()
        .zip(phi_next)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

pub fn intrinsic_rewards(phi_hat_next: &Tensor, phi_next: &Tensor) -> Result<Vec<f64>> {
    phi_next.expect_shape(phi_hat_next.shape())?;
    Ok((0..phi_next.dim(0)).map(|i| intrinsic_reward(phi_hat_next.row(i), phi_next.row(i))).collect())
}

/// Forward model with its optimiser.
#[derive(Debug, Clone)]
pub struct Icm {
    pub model: ForwardModel,
    adam: Adam,
}

impl Icm {
    pub fn new(feature_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            model: ForwardModel::new(feature_dim, hidden, rng),
            adam: Adam::default(),
        }
    }

    pub fn rewards(&self, phi: &Tensor, actions: &[usize], phi_next: &Tensor) -> Result<Vec<f64>> {
        intrinsic_rewards(&self.model.predict(phi, actions)?, phi_next)
    }

    /// One Adam step on the forward loss. Features arrive as plain tensors,
    /// so nothing reaches the encoder. Returns the pre-step loss.
    pub fn update(&mut self, phi: &Tensor, actions: &[usize], phi_next: &Tensor, lr: f64) -> Result<f64> {
        assert!(!actions.is_empty(), "icm update needs a nonempty batch");
        let (loss, grads) = self.model.loss_grad(phi, actions, phi_next)?;
        self.adam.step(&mut self.model, &grads, lr)?;
        Ok(loss)
    }
}

/// Welford running variance of the raw intrinsic reward.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunningStd {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStd {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn std(&self) -> f64 {
        if self.count < 2 {
            return 1.0;
        }
        (self.m2 / (self.count - 1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardMix {
    pub lambda_c: f64,
    pub normalizer: Option<RunningStd>,
}

impl RewardMix {
    pub fn new(lambda_c: f64, normalize: bool) -> Self {
        assert!(lambda_c >= 0.0, "lambda_c must be nonnegative");
        Self {
            lambda_c,
            normalizer: normalize.then(RunningStd::default),
        }
    }

    /// Folds a batch of raw intrinsic rewards into the normaliser.
    pub fn observe(&mut self, r_int: &[f64]) {
        if let Some(n) = &mut self.normalizer {
            r_int.iter().for_each(|&r| n.push(r));
        }
    }
}

/// `r_ext + λ_c · r̃_int`.
pub fn combine_rewards(r_ext: f64, r_int: f64, mix: &RewardMix) -> f64 {
    debug_assert!(r_int >= 0.0);
    if mix.lambda_c == 0.0 {
        return r_ext;
    }
    let scaled = match &mix.normalizer {
        Some(n) => r_int / n.std().max(1e-8),
        None => r_int,
    };
    r_ext + mix.lambda_c * scaled
}

#[cfg(test)]
mod tests {
    use super::*;
    use curiolab_numcore::{grad_check, GradCheckOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_give_zero_output() {
        let mut m = ForwardModel::new(4, 8, &mut ChaCha8Rng::seed_from_u64(0));
        m.visit_mut(&mut |_, t| t.fill(0.0));
        let phi = Tensor::uniform(&[3, 4], 1.0, &mut ChaCha8Rng::seed_from_u64(1));
        let y = m.predict(&phi, &[0, 4, 8]).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn equal_inputs_equal_outputs() {
        let m = ForwardModel::new(4, 8, &mut ChaCha8Rng::seed_from_u64(0));
        let phi = Tensor::from_vec(&[2, 4], vec![0.1, 0.2, 0.3, 0.4, 0.1, 0.2, 0.3, 0.4]).unwrap();
        let y = m.predict(&phi, &[5, 5]).unwrap();
        assert_eq!(y.row(0), y.row(1));
    }

    #[test]
    fn forward_loss_gradient() {
        for seed in 0..4 {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let mut m = ForwardModel::new(5, 7, &mut r);
            // Zero biases would put all-dead rows exactly on a ReLU kink.
            m.visit_mut(&mut |_, t| t.data_mut().iter_mut().for_each(|v| *v += 0.1 * r.gen_range(-1.0..1.0)));
            let phi = Tensor::randn(&[4, 5], 1.0, &mut r);
            let next = Tensor::randn(&[4, 5], 1.0, &mut r);
            let a = [0, 3, 8, 3];
            let (_, g) = m.loss_grad(&phi, &a, &next).unwrap();
            let rep = grad_check(&m, &g, |p: &ForwardModel| p.loss(&phi, &a, &next).unwrap(), 1e-5, &GradCheckOptions::default());
            assert!(rep.passed(), "{rep:?}");
        }
    }

    #[test]
    fn reward_examples() {
        assert_eq!(intrinsic_reward(&[0.3, -2.0], &[0.3, -2.0]), 0.0);
        assert_eq!(intrinsic_reward(&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0]), 1.0);
        assert!((intrinsic_reward(&[1.0, 1.0], &[0.0, 0.0]) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mix_examples() {
        assert_eq!(combine_rewards(0.7, 3.0, &RewardMix::new(0.0, false)), 0.7);
        assert!((combine_rewards(1.0, 0.5, &RewardMix::new(0.01, false)) - 1.005).abs() < 1e-15);
        assert_eq!(combine_rewards(0.0, 2.0, &RewardMix::new(0.5, false)), 1.0);
        let mut mix = RewardMix::new(1.0, true);
        mix.observe(&[1.0, 3.0]);
        assert!((combine_rewards(0.0, 2.0, &mix) - 2.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn constant_targets_are_learned() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let mut icm = Icm::new(6, 32, &mut r);
        let phi = Tensor::randn(&[16, 6], 1.0, &mut r);
        let target = Tensor::filled(&[16, 6], 0.5);
        let actions: Vec<usize> = (0..16).map(|i| i % 9).collect();
        let first = icm.update(&phi, &actions, &target, 1e-3).unwrap();
        let mut last = first;
        for _ in 0..199 {
            last = icm.update(&phi, &actions, &target, 1e-3).unwrap();
        }
        assert!(last < 1e-2 * first.max(1.0), "{first} -> {last}");
    }
}
