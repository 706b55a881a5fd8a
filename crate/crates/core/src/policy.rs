//! Recurrent actor-critic: conv stack, dense embedding, LSTM, and linear
//! logit and value heads over `concat(embedding, h)`.

use curiolab_numcore::activation::{relu, relu_backward};
use curiolab_numcore::module::{visit_scoped, visit_scoped_mut};
use curiolab_numcore::softmax::{entropy, log_softmax, softmax};
use curiolab_numcore::{zeros_like, Dense, Lstm, LstmSequenceCache, LstmState, Module, Tensor};
use rand::Rng;

use crate::encoders::ACTIONS;
use crate::error::Result;
use crate::nets::{concat_cols, split_cols, ConvStack, ConvStackCache};

pub const POLICY_CHANNELS: [usize; 4] = [8, 16, 16, 32];
pub const EMBED_DIM: usize = 128;
pub const LSTM_HIDDEN: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub conv: ConvStack,
    pub embed: Dense,
    pub lstm: Lstm,
    pub logits: Dense,
    pub value: Dense,
}

impl Module for PolicyNet {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        visit_scoped(&self.conv, "cnn", f);
        visit_scoped(&self.embed, "embed", f);
        visit_scoped(&self.lstm, "lstm", f);
        visit_scoped(&self.logits, "pi", f);
        visit_scoped(&self.value, "v", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        visit_scoped_mut(&mut self.conv, "cnn", f);
        visit_scoped_mut(&mut self.embed, "embed", f);
        visit_scoped_mut(&mut self.lstm, "lstm", f);
        visit_scoped_mut(&mut self.logits, "pi", f);
        visit_scoped_mut(&mut self.value, "v", f);
    }
}

/// Output of one batched recurrent step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    /// `[B, 9]`
    pub logits: Tensor,
    pub values: Vec<f64>,
    pub state: LstmState,
}

/// `S` consecutive steps of `B` sequences, stored time-major (`t·B + b`).
#[derive(Debug, Clone)]
pub struct SeqBatch {
    /// `[S·B, C, H, W]`
    pub obs: Tensor,
    pub init: LstmState,
    /// Zero the state of sequence `b` before step `t`.
    pub resets: Vec<bool>,
    pub seq_len: usize,
    pub batch: usize,
}

pub struct SeqCache {
    conv: ConvStackCache,
    flat: Tensor,
    emb: Tensor,
    lstm: LstmSequenceCache,
    joint: Tensor,
}

impl PolicyNet {
    pub fn new(input: (usize, usize, usize), rng: &mut impl Rng) -> Self {
        let conv = ConvStack::new(input, &POLICY_CHANNELS, rng);
        let embed = Dense::new(conv.output_dim(), EMBED_DIM, rng);
        Self {
            lstm: Lstm::new(EMBED_DIM, LSTM_HIDDEN, rng),
            logits: Dense::orthogonal(EMBED_DIM + LSTM_HIDDEN, ACTIONS, 0.01, rng),
            value: Dense::orthogonal(EMBED_DIM + LSTM_HIDDEN, 1, 1.0, rng),
            conv,
            embed,
        }
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.conv.input
    }

    pub fn initial_state(&self, batch: usize) -> LstmState {
        LstmState::zeros(batch, LSTM_HIDDEN)
    }

    fn embed_obs(&self, obs: &Tensor) -> Result<Tensor> {
        Ok(relu(&self.embed.forward(&self.conv.infer(obs)?)?))
    }

    /// One step for `B` lanes.
    pub fn step(&self, obs: &Tensor, state: &LstmState) -> Result<StepOutput> {
        let emb = self.embed_obs(obs)?;
        let (next, _) = self.lstm.step(&emb, state)?;
        let joint = concat_cols(&emb, &next.h)?;
        Ok(StepOutput {
            logits: self.logits.forward(&joint)?,
            values: self.value.forward(&joint)?.into_data(),
            state: next,
        })
    }

    /// Logits `[S·B, 9]` and values over a sequence batch.
    pub fn forward_seq(&self, b: &SeqBatch) -> Result<(Tensor, Vec<f64>, SeqCache)> {
        let (flat, conv) = self.conv.forward(&b.obs)?;
        let emb = relu(&self.embed.forward(&flat)?);
        let xs = emb.clone().reshape(&[b.seq_len, b.batch, EMBED_DIM])?;
        let (hs, _, lstm) = self.lstm.forward_sequence(&xs, &b.init, Some(&b.resets))?;
        let hs = hs.reshape(&[b.seq_len * b.batch, LSTM_HIDDEN])?;
        let joint = concat_cols(&emb, &hs)?;
        let logits = self.logits.forward(&joint)?;
        let values = self.value.forward(&joint)?.into_data();
        Ok((
            logits,
            values,
            SeqCache {
                conv,
                flat,
                emb,
                lstm,
                joint,
            },
        ))
    }

    /// Accumulates parameter gradients given loss gradients at the heads.
    pub fn backward_seq(&self, b: &SeqBatch, cache: &SeqCache, dlogits: &Tensor, dvalues: &[f64], grads: &mut PolicyNet) -> Result<()> {
        let dv = Tensor::from_vec(&[dvalues.len(), 1], dvalues.to_vec())?;
        let mut djoint = self.logits.backward(&cache.joint, dlogits, &mut grads.logits)?;
        djoint.add_assign(&self.value.backward(&cache.joint, &dv, &mut grads.value)?)?;
        let (mut demb, dh) = split_cols(&djoint, EMBED_DIM)?;
        let dh = dh.reshape(&[b.seq_len, b.batch, LSTM_HIDDEN])?;
        let (dxs, _) = self.lstm.backward_sequence(&cache.lstm, &dh, None, &mut grads.lstm)?;
        demb.add_assign(&dxs.reshape(&[b.seq_len * b.batch, EMBED_DIM])?)?;
        let dpre = relu_backward(&cache.emb, &demb)?;
        let dflat = self.embed.backward(&cache.flat, &dpre, &mut grads.embed)?;
        self.conv.backward(&cache.conv, &dflat, &mut grads.conv)?;
        Ok(())
    }
}

/// PPO loss weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoCoeffs {
    pub clip_eps: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

impl Default for PpoCoeffs {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.01,
        }
    }
}

/// A sequence batch with its PPO targets, aligned with `seq.obs` rows.
#[derive(Debug, Clone)]
pub struct Minibatch {
    pub seq: SeqBatch,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
}

/// Per-sample clipped surrogate `min(r·A, clip(r, 1−ε, 1+ε)·A)` and its
/// derivative with respect to `r`.
pub fn clipped_surrogate(ratio: f64, adv: f64, eps: f64) -> (f64, f64) {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
    if unclipped <= clipped {
        (unclipped, adv)
    } else {
        (clipped, 0.0)
    }
}

/// Loss terms and the gradient of `total` with respect to logits and values.
pub fn loss_from_outputs(logits: &Tensor, values: &[f64], mb: &Minibatch, c: &PpoCoeffs) -> (LossTerms, Tensor, Vec<f64>) {
    let n = mb.actions.len();
    let nf = n as f64;
    let mut t = LossTerms::default();
    let mut dlogits = Tensor::zeros(logits.shape());
    let mut dvalues = vec![0.0; n];
    for i in 0..n {
        let p = softmax(logits.row(i));
        let lp = log_softmax(logits.row(i));
        let a = mb.actions[i];
        let ratio = (lp[a] - mb.old_log_probs[i]).exp();
        let (s, ds_dr) = clipped_surrogate(ratio, mb.advantages[i], c.clip_eps);
        let h = entropy(&p, &lp);
        t.policy -= s / nf;
        t.entropy += h / nf;
        t.mean_ratio += ratio / nf;
        if (ratio - 1.0).abs() > c.clip_eps {
            t.clip_fraction += 1.0 / nf;
        }
        let dv = values[i] - mb.returns[i];
        t.value += dv * dv / nf;
        dvalues[i] = c.value_coef * 2.0 * dv / nf;
        let dlogp = -ds_dr * ratio / nf;
        for (k, g) in dlogits.row_mut(i).iter_mut().enumerate() {
            let onehot = f64::from(u8::from(k == a));
            *g = dlogp * (onehot - p[k]) + c.entropy_coef / nf * p[k] * (lp[k] + h);
        }
    }
    t.total = t.policy + c.value_coef * t.value - c.entropy_coef * t.entropy;
    (t, dlogits, dvalues)
}

/// `(policy_loss, value_loss, entropy, total)` for a minibatch.
pub fn ppo_losses(policy: &PolicyNet, mb: &Minibatch, c: &PpoCoeffs) -> Result<LossTerms> {
    let (logits, values, _) = policy.forward_seq(&mb.seq)?;
    Ok(loss_from_outputs(&logits, &values, mb, c).0)
}

pub fn ppo_loss_grad(policy: &PolicyNet, mb: &Minibatch, c: &PpoCoeffs) -> Result<(LossTerms, PolicyNet)> {
    let (logits, values, cache) = policy.forward_seq(&mb.seq)?;
    let (terms, dlogits, dvalues) = loss_from_outputs(&logits, &values, mb, c);
    let mut g = zeros_like(policy);
    policy.backward_seq(&mb.seq, &cache, &dlogits, &dvalues, &mut g)?;
    Ok((terms, g))
}

/// Log-probability of each taken action.
pub fn action_log_probs(logits: &Tensor, actions: &[usize]) -> Vec<f64> {
    actions.iter().enumerate().map(|(i, &a)| log_softmax(logits.row(i))[a]).collect()
}
