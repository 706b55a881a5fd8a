//! Rollout collection across environment lanes, GAE, and the clipped PPO
//! update with truncated BPTT over fixed-length chunks.

use std::collections::BTreeMap;

use curiolab_arena::{render, Action, Arena, ArenaSpec, EpisodeState, RenderConfig};
use curiolab_numcore::module::clip_global_norm;
use curiolab_numcore::softmax::softmax_sample;
use curiolab_numcore::{Adam, LstmState, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::curriculum::{Curriculum, CurriculumState};
use crate::encoders::Encoder;
use crate::error::{LabError, Result};
use crate::icm::{combine_rewards, Icm, RewardMix};
use crate::policy::{action_log_probs, loss_from_outputs, LossTerms, Minibatch, PolicyNet, PpoCoeffs, SeqBatch};

/// Tolerance for stored versus recomputed behaviour log-probabilities.
pub const LOGP_TOLERANCE: f64 = 1e-9;
/// Observations per online-VAE step.
pub const VAE_ONLINE_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule {
    pub total_steps: u64,
    pub lr_init: f64,
    pub gamma: f64,
    pub clip_eps: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    /// Transitions per minibatch; a multiple of `seq_len`.
    pub minibatch: usize,
    pub seq_len: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub lanes: usize,
    /// Steps per lane per rollout; a multiple of `seq_len`.
    pub horizon: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            total_steps: 300_000,
            lr_init: 3e-4,
            gamma: 0.99,
            clip_eps: 0.2,
            gae_lambda: 0.95,
            epochs: 3,
            minibatch: 256,
            seq_len: 64,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            lanes: 4,
            horizon: 512,
        }
    }
}

impl TrainSchedule {
    /// `lr_init · (1 − k/K)`, floored at zero.
    pub fn lr_at(&self, step: u64) -> f64 {
        self.lr_init * (1.0 - step as f64 / self.total_steps as f64).max(0.0)
    }

    pub fn coeffs(&self) -> PpoCoeffs {
        PpoCoeffs {
            clip_eps: self.clip_eps,
            value_coef: self.value_coef,
            entropy_coef: self.entropy_coef,
        }
    }

    pub fn steps_per_update(&self) -> u64 {
        (self.lanes * self.horizon) as u64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(LabError::InvalidValue {
                key: key.into(),
                msg: msg.into(),
            })
        };
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", "must lie in (0, 1]");
        }
        if !(self.clip_eps > 0.0) {
            return bad("clip_eps", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda", "must lie in [0, 1]");
        }
        if self.lr_init < 0.0 {
            return bad("lr", "must be nonnegative");
        }
        if self.total_steps == 0 || self.lanes == 0 || self.seq_len == 0 || self.epochs == 0 {
            return bad("schedule", "steps, lanes, seq_len and epochs must be positive");
        }
        if self.horizon == 0 || !self.horizon.is_multiple_of(self.seq_len) {
            return bad("horizon", "must be a positive multiple of seq_len");
        }
        if self.minibatch == 0 || !self.minibatch.is_multiple_of(self.seq_len) || self.minibatch > self.lanes * self.horizon {
            return bad("minibatch", "must be a multiple of seq_len no larger than one rollout");
        }
        Ok(())
    }
}

/// Supplies arenas to lanes and hears about their progress.
pub trait EpisodeSource {
    /// Arena for a fresh episode plus the `(cycle, lesson)` tag it runs under.
    fn next_episode(&mut self, rng: &mut dyn rand::RngCore) -> Result<(ArenaSpec, (usize, usize))>;
    fn on_steps(&mut self, n: u64);
    fn on_episode_end(&mut self, cell: (usize, usize), ext_return: f64);
}

/// The same arena forever.
pub struct FixedSource(pub ArenaSpec);

impl EpisodeSource for FixedSource {
    fn next_episode(&mut self, _: &mut dyn rand::RngCore) -> Result<(ArenaSpec, (usize, usize))> {
        Ok((self.0.clone(), (0, 0)))
    }
    fn on_steps(&mut self, _: u64) {}
    fn on_episode_end(&mut self, _: (usize, usize), _: f64) {}
}

/// Lessons from a curriculum, advancing as episodes finish.
pub struct CurriculumSource<'a> {
    pub curriculum: &'a Curriculum,
    pub state: &'a mut CurriculumState,
}

impl EpisodeSource for CurriculumSource<'_> {
    fn next_episode(&mut self, rng: &mut dyn rand::RngCore) -> Result<(ArenaSpec, (usize, usize))> {
        let spec = self.curriculum.lessons[self.state.lesson_index].source.instantiate(&mut &mut *rng)?;
        Ok((spec, self.state.cell()))
    }

    fn on_steps(&mut self, n: u64) {
        self.state.record_steps(n);
    }

    fn on_episode_end(&mut self, cell: (usize, usize), ext_return: f64) {
        self.state.record_episode(cell, ext_return, self.curriculum);
    }
}

struct Lane {
    arena: Arena,
    state: EpisodeState,
    cell: (usize, usize),
    obs: Vec<f64>,
    ext_return: f64,
    int_return: f64,
    length: u64,
}

/// Parallel environment lanes with their recurrent policy state.
pub struct EnvPool {
    lanes: Vec<Lane>,
    pub render: RenderConfig,
    pub lstm: LstmState,
}

impl EnvPool {
    pub fn new(n: usize, render: RenderConfig, hidden: usize, source: &mut dyn EpisodeSource, rng: &mut impl Rng) -> Result<Self> {
        let mut lanes = Vec::with_capacity(n);
        for _ in 0..n {
            lanes.push(Self::fresh_lane(&render, source, rng)?);
        }
        Ok(Self {
            lanes,
            render,
            lstm: LstmState::zeros(n, hidden),
        })
    }

    fn fresh_lane(render_cfg: &RenderConfig, source: &mut dyn EpisodeSource, rng: &mut impl Rng) -> Result<Lane> {
        let (spec, cell) = source.next_episode(&mut &mut *rng)?;
        let arena = Arena::new(spec);
        let state = arena.spawn(rng)?;
        let obs = render(&state, &arena.spec, render_cfg).to_chw();
        Ok(Lane {
            arena,
            state,
            cell,
            obs,
            ext_return: 0.0,
            int_return: 0.0,
            length: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.lanes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lanes.is_empty()
    }

    fn obs_shape(&self) -> [usize; 3] {
        [3, self.render.height, self.render.width]
    }

    fn batch_obs(&self) -> Tensor {
        let [c, h, w] = self.obs_shape();
        let data = self.lanes.iter().flat_map(|l| l.obs.iter().copied()).collect();
        Tensor::from_vec(&[self.lanes.len(), c, h, w], data).expect("lane observations")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub lane: usize,
    pub cell: (usize, usize),
    pub ext_return: f64,
    /// Sum of `λ_c · r̃_int` over the episode.
    pub int_return: f64,
    pub length: u64,
}

/// One rollout, lane-major: transition `(lane, t)` lives at `lane·T + t`.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub lanes: usize,
    pub horizon: usize,
    pub seq_len: usize,
    pub obs_shape: [usize; 3],
    pub obs: Vec<f64>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards_ext: Vec<f64>,
    /// Raw `‖φ̂(s') − φ(s')‖`.
    pub rewards_int: Vec<f64>,
    /// Combined reward used for returns.
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Recurrent state at the start of each chunk, `lane·chunks + k`.
    pub chunk_states: Vec<LstmState>,
    pub bootstrap_values: Vec<f64>,
    /// `φ(s_t)` and `φ(s_{t+1})`, `[N, D]`.
    pub features: Tensor,
    pub next_features: Tensor,
    /// Terminal observations of finished episodes, keyed by transition index.
    pub terminal_obs: BTreeMap<usize, Vec<f64>>,
    /// Observation after the last step of each lane.
    pub final_obs: Vec<Vec<f64>>,
    pub episodes: Vec<EpisodeRecord>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.lanes * self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn obs_len(&self) -> usize {
        self.obs_shape.iter().product()
    }

    pub fn obs_at(&self, i: usize) -> &[f64] {
        let n = self.obs_len();
        &self.obs[i * n..(i + 1) * n]
    }

    /// `s_{t+1}` for transition `i`.
    pub fn next_obs_at(&self, i: usize) -> &[f64] {
        if let Some(o) = self.terminal_obs.get(&i) {
            return o;
        }
        let (lane, t) = (i / self.horizon, i % self.horizon);
        if t + 1 < self.horizon {
            self.obs_at(i + 1)
        } else {
            &self.final_obs[lane]
        }
    }

    /// `[n, C, H, W]` tensor of the given observations.
    pub fn obs_batch<'a>(&self, rows: impl Iterator<Item = &'a [f64]>) -> Tensor {
        let data: Vec<f64> = rows.flat_map(|r| r.iter().copied()).collect();
        let [c, h, w] = self.obs_shape;
        let n = data.len() / (c * h * w);
        Tensor::from_vec(&[n, c, h, w], data).expect("observation batch")
    }

    pub fn chunks_per_lane(&self) -> usize {
        self.horizon / self.seq_len
    }
}

fn encode_all(encoder: &Encoder, rows: &[&[f64]], shape: [usize; 3]) -> Result<Tensor> {
    let d = encoder.output_dim();
    let mut out = Vec::with_capacity(rows.len() * d);
    for chunk in rows.chunks(256) {
        let data: Vec<f64> = chunk.iter().flat_map(|r| r.iter().copied()).collect();
        let x = Tensor::from_vec(&[chunk.len(), shape[0], shape[1], shape[2]], data)?;
        out.extend_from_slice(encoder.encode(&x)?.data());
    }
    Ok(Tensor::from_vec(&[rows.len(), d], out)?)
}

/// Steps every lane `horizon` times with sampled actions, then scores each
/// transition's curiosity reward and mixes it into the stored reward.
pub fn collect_rollout(
    policy: &PolicyNet,
    pool: &mut EnvPool,
    source: &mut dyn EpisodeSource,
    encoder: &Encoder,
    icm: &Icm,
    mix: &mut RewardMix,
    horizon: usize,
    seq_len: usize,
    rng: &mut impl Rng,
) -> Result<Rollout> {
    let nl = pool.len();
    let n = nl * horizon;
    let obs_shape = pool.obs_shape();
    let obs_len: usize = obs_shape.iter().product();
    let mut r = Rollout {
        lanes: nl,
        horizon,
        seq_len,
        obs_shape,
        obs: vec![0.0; n * obs_len],
        actions: vec![0; n],
        log_probs: vec![0.0; n],
        values: vec![0.0; n],
        rewards_ext: vec![0.0; n],
        rewards_int: vec![0.0; n],
        rewards: vec![0.0; n],
        dones: vec![false; n],
        chunk_states: Vec::with_capacity(nl * horizon / seq_len),
        bootstrap_values: Vec::new(),
        features: Tensor::zeros(&[1, 1]),
        next_features: Tensor::zeros(&[1, 1]),
        terminal_obs: BTreeMap::new(),
        final_obs: Vec::new(),
        episodes: Vec::new(),
    };
    let carried: Vec<f64> = pool.lanes.iter().map(|l| l.int_return).collect();
    let mut chunk_starts = vec![Vec::with_capacity(horizon / seq_len); nl];
    // Indices of transitions that ended an episode, with the episode's lane.
    let mut ended: Vec<(usize, EpisodeRecord)> = Vec::new();

    for t in 0..horizon {
        if t % seq_len == 0 {
            for (b, starts) in chunk_starts.iter_mut().enumerate() {
                starts.push(pool.lstm.lane(b));
            }
        }
        let out = policy.step(&pool.batch_obs(), &pool.lstm)?;
        pool.lstm = out.state;
        for b in 0..nl {
            let i = b * horizon + t;
            let s = softmax_sample(out.logits.row(b), rng);
            let lane = &mut pool.lanes[b];
            r.obs[i * obs_len..(i + 1) * obs_len].copy_from_slice(&lane.obs);
            r.actions[i] = s.action;
            r.log_probs[i] = s.log_prob;
            r.values[i] = out.values[b];

            let step = lane.arena.step(&lane.state, Action::from_index(s.action))?;
            source.on_steps(1);
            r.rewards_ext[i] = step.reward;
            r.dones[i] = step.done;
            lane.ext_return += step.reward;
            lane.length += 1;
            lane.state = step.state;
            let next_obs = render(&lane.state, &lane.arena.spec, &pool.render).to_chw();
            if step.done {
                r.terminal_obs.insert(i, next_obs);
                let rec = EpisodeRecord {
                    lane: b,
                    cell: lane.cell,
                    ext_return: lane.ext_return,
                    int_return: 0.0,
                    length: lane.length,
                };
                source.on_episode_end(lane.cell, lane.ext_return);
                ended.push((i, rec));
                pool.lanes[b] = EnvPool::fresh_lane(&pool.render, source, rng)?;
                pool.lstm.reset_lane(b);
            } else {
                lane.obs = next_obs;
            }
        }
    }
    r.bootstrap_values = policy.step(&pool.batch_obs(), &pool.lstm)?.values;
    r.final_obs = pool.lanes.iter().map(|l| l.obs.clone()).collect();
    r.chunk_states = chunk_starts.into_iter().flatten().collect();

    let cur: Vec<&[f64]> = (0..n).map(|i| r.obs_at(i)).collect();
    let nxt: Vec<&[f64]> = (0..n).map(|i| r.next_obs_at(i)).collect();
    let features = encode_all(encoder, &cur, obs_shape)?;
    let next_features = encode_all(encoder, &nxt, obs_shape)?;
    r.rewards_int = icm.rewards(&features, &r.actions, &next_features)?;
    r.features = features;
    r.next_features = next_features;
    mix.observe(&r.rewards_int);
    for i in 0..n {
        r.rewards[i] = combine_rewards(r.rewards_ext[i], r.rewards_int[i], mix);
    }

    // Attribute each step's curiosity share to its episode.
    let ended: BTreeMap<usize, EpisodeRecord> = ended.into_iter().collect();
    for b in 0..nl {
        let mut acc = carried[b];
        for t in 0..horizon {
            let i = b * horizon + t;
            acc += r.rewards[i] - r.rewards_ext[i];
            if let Some(rec) = ended.get(&i) {
                r.episodes.push(EpisodeRecord {
                    int_return: acc,
                    ..rec.clone()
                });
                acc = 0.0;
            }
        }
        pool.lanes[b].int_return = acc;
    }
    Ok(r)
}

/// Per-lane GAE with episode boundaries cutting the recursion. Inputs are
/// one lane's sequences; returns `(advantages, returns)`.
pub fn compute_gae(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let t_len = rewards.len();
    let mut adv = vec![0.0; t_len];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..t_len).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Shift to mean 0 and scale to unit population standard deviation.
/// A constant input maps to zeros.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let std = (adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt();
    for a in adv.iter_mut() {
        *a = if std > 1e-12 { (*a - mean) / std } else { 0.0 };
    }
}

/// Minibatch made of whole chunks `(lane, k)`, time-major inside.
pub fn chunk_minibatch(r: &Rollout, chunks: &[(usize, usize)], advantages: &[f64], returns: &[f64]) -> Result<Minibatch> {
    let (s, b) = (r.seq_len, chunks.len());
    let idx = |t: usize, j: usize| {
        let (lane, k) = chunks[j];
        lane * r.horizon + k * s + t
    };
    let order: Vec<usize> = (0..s).flat_map(|t| (0..b).map(move |j| (t, j))).map(|(t, j)| idx(t, j)).collect();
    let resets = (0..s)
        .flat_map(|t| (0..b).map(move |j| (t, j)))
        .map(|(t, j)| t > 0 && r.dones[idx(t - 1, j)])
        .collect();
    let states: Vec<LstmState> = chunks.iter().map(|&(lane, k)| r.chunk_states[lane * r.chunks_per_lane() + k].clone()).collect();
    Ok(Minibatch {
        seq: SeqBatch {
            obs: r.obs_batch(order.iter().map(|&i| r.obs_at(i))),
            init: LstmState::concat(&states)?,
            resets,
            seq_len: s,
            batch: b,
        },
        actions: order.iter().map(|&i| r.actions[i]).collect(),
        old_log_probs: order.iter().map(|&i| r.log_probs[i]).collect(),
        advantages: order.iter().map(|&i| advantages[i]).collect(),
        returns: order.iter().map(|&i| returns[i]).collect(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateMetrics {
    pub lr: f64,
    pub loss_policy: f64,
    pub loss_value: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    /// Largest `|log π_old − log π_recomputed|` before the first step.
    pub logp_drift: f64,
    pub adv_mean: f64,
    pub adv_std: f64,
}

/// Advantages and returns for every transition, advantages normalised.
pub fn rollout_targets(r: &Rollout, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let mut adv = Vec::with_capacity(r.len());
    let mut ret = Vec::with_capacity(r.len());
    for lane in 0..r.lanes {
        let span = lane * r.horizon..(lane + 1) * r.horizon;
        let (a, g) = compute_gae(
            &r.rewards[span.clone()],
            &r.values[span.clone()],
            &r.dones[span],
            r.bootstrap_values[lane],
            gamma,
            lambda,
        );
        adv.extend(a);
        ret.extend(g);
    }
    normalize_advantages(&mut adv);
    (adv, ret)
}

/// Shuffled groups of chunks covering the rollout once.
pub fn minibatch_plan(r: &Rollout, per_batch: usize, rng: &mut impl Rng) -> Vec<Vec<(usize, usize)>> {
    let mut chunks: Vec<(usize, usize)> = (0..r.lanes).flat_map(|l| (0..r.chunks_per_lane()).map(move |k| (l, k))).collect();
    chunks.shuffle(rng);
    chunks.chunks(per_batch).map(<[_]>::to_vec).collect()
}

/// PPO epochs over `rollout` at `lr = lr_at(step_count)`.
pub fn ppo_update(
    policy: &mut PolicyNet,
    adam: &mut Adam,
    rollout: &Rollout,
    sched: &TrainSchedule,
    step_count: u64,
    rng: &mut impl Rng,
) -> Result<UpdateMetrics> {
    let lr = sched.lr_at(step_count);
    debug_assert!((lr - sched.lr_init * (1.0 - step_count as f64 / sched.total_steps as f64).max(0.0)).abs() == 0.0);
    let (adv, ret) = rollout_targets(rollout, sched.gamma, sched.gae_lambda);
    let n = adv.len() as f64;
    let adv_mean = adv.iter().sum::<f64>() / n;
    let adv_std = (adv.iter().map(|a| (a - adv_mean).powi(2)).sum::<f64>() / n).sqrt();
    let degenerate = adv.iter().all(|&a| a == 0.0);
    if adv_mean.abs() >= 1e-9 || (!degenerate && (adv_std - 1.0).abs() > 1e-6) {
        return Err(LabError::Consistency(format!("advantage normalisation gave mean {adv_mean}, std {adv_std}")));
    }

    let per_batch = sched.minibatch / sched.seq_len;
    let coeffs = sched.coeffs();
    let all: Vec<(usize, usize)> = (0..rollout.lanes).flat_map(|l| (0..rollout.chunks_per_lane()).map(move |k| (l, k))).collect();
    let mut logp_drift = 0.0f64;
    for group in all.chunks(per_batch) {
        let mb = chunk_minibatch(rollout, group, &adv, &ret)?;
        let (logits, _, _) = policy.forward_seq(&mb.seq)?;
        for (a, b) in action_log_probs(&logits, &mb.actions).iter().zip(&mb.old_log_probs) {
            logp_drift = logp_drift.max((a - b).abs());
        }
    }
    if logp_drift > LOGP_TOLERANCE {
        return Err(LabError::Consistency(format!("stored log-probs differ from the policy by {logp_drift:e}")));
    }

    let mut acc = LossTerms::default();
    let mut count = 0.0;
    for _ in 0..sched.epochs {
        for group in minibatch_plan(rollout, per_batch, rng) {
            let mb = chunk_minibatch(rollout, &group, &adv, &ret)?;
            let (logits, values, cache) = policy.forward_seq(&mb.seq)?;
            let (terms, dlogits, dvalues) = loss_from_outputs(&logits, &values, &mb, &coeffs);
            if lr > 0.0 {
                let mut grads = curiolab_numcore::zeros_like(policy);
                policy.backward_seq(&mb.seq, &cache, &dlogits, &dvalues, &mut grads)?;
                clip_global_norm(&mut grads, sched.max_grad_norm);
                adam.step(policy, &grads, lr)?;
            }
            acc.policy += terms.policy;
            acc.value += terms.value;
            acc.entropy += terms.entropy;
            acc.mean_ratio += terms.mean_ratio;
            acc.clip_fraction += terms.clip_fraction;
            count += 1.0;
        }
    }
    Ok(UpdateMetrics {
        lr,
        loss_policy: acc.policy / count,
        loss_value: acc.value / count,
        entropy: acc.entropy / count,
        mean_ratio: acc.mean_ratio / count,
        clip_fraction: acc.clip_fraction / count,
        logp_drift,
        adv_mean,
        adv_std,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AuxMetrics {
    pub loss_forward: f64,
    pub loss_idf: f64,
    pub loss_vae_online: f64,
}

/// Forward-model epochs on the rollout's features, then the encoder's own
/// objective for the trainable kinds.
pub fn auxiliary_update(
    encoder: &mut Encoder,
    icm: &mut Icm,
    rollout: &Rollout,
    sched: &TrainSchedule,
    lr: f64,
    rng: &mut impl Rng,
) -> Result<AuxMetrics> {
    let mut m = AuxMetrics::default();
    let n = rollout.len();
    let before = cfg!(debug_assertions).then(|| encoder.checksum());
    let mut count = 0.0;
    for _ in 0..sched.epochs {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        for mb in idx.chunks(sched.minibatch) {
            let phi = gather_rows(&rollout.features, mb)?;
            let next = gather_rows(&rollout.next_features, mb)?;
            let acts: Vec<usize> = mb.iter().map(|&i| rollout.actions[i]).collect();
            m.loss_forward += if lr > 0.0 {
                icm.update(&phi, &acts, &next, lr)?
            } else {
                icm.model.loss(&phi, &acts, &next)?
            };
            count += 1.0;
        }
    }
    m.loss_forward /= count;
    if let Some(c) = before {
        assert_eq!(c, encoder.checksum(), "forward-model update touched the encoder");
    }

    match encoder.kind() {
        crate::encoders::EncoderKind::Idf => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            let mut k = 0.0;
            for mb in idx.chunks(sched.minibatch) {
                let s = rollout.obs_batch(mb.iter().map(|&i| rollout.obs_at(i)));
                let s2 = rollout.obs_batch(mb.iter().map(|&i| rollout.next_obs_at(i)));
                let acts: Vec<usize> = mb.iter().map(|&i| rollout.actions[i]).collect();
                m.loss_idf += encoder.idf_update(&s, &s2, &acts, lr)?;
                k += 1.0;
            }
            m.loss_idf /= k;
        }
        crate::encoders::EncoderKind::OnlineVae => {
            let picks: Vec<usize> = (0..VAE_ONLINE_BATCH.min(n)).map(|_| rng.gen_range(0..n)).collect();
            let x = rollout.obs_batch(picks.iter().map(|&i| rollout.obs_at(i)));
            m.loss_vae_online = encoder.vae_update(&x, lr, rng)?.total;
        }
        _ => {}
    }
    Ok(m)
}

fn gather_rows(t: &Tensor, rows: &[usize]) -> Result<Tensor> {
    let d = t.dim(1);
    let data = rows.iter().flat_map(|&i| t.row(i).iter().copied()).collect();
    Ok(Tensor::from_vec(&[rows.len(), d], data)?)
}
