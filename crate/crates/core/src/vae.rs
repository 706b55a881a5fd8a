//! β-VAE with a strided conv encoder and an upsample+conv decoder.

use curiolab_numcore::activation::{relu, relu_backward, sigmoid_tensor, upsample_nearest, upsample_nearest_backward};
use curiolab_numcore::module::{load_param_map, to_param_map, visit_scoped, visit_scoped_mut, zeros_like};
use curiolab_numcore::{checksum, Adam, Conv2d, Dense, Module, ParamMap, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::ObservationDataset;
use crate::error::{LabError, Result};
use crate::nets::{ConvStack, ConvStackCache};

pub const ENCODER_CHANNELS: [usize; 4] = [16, 32, 32, 64];
pub const LOG_VAR_CLAMP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconLoss {
    /// Summed squared error over pixels.
    SquaredError,
    /// Summed Bernoulli negative log-likelihood over pixels.
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub encoder: ConvStack,
    pub mu_head: Dense,
    pub log_var_head: Dense,
    pub dec_fc: Dense,
    pub dec_convs: Vec<Conv2d>,
    pub latent_dim: usize,
    pub beta: f64,
    pub recon: ReconLoss,
    frozen: bool,
}

impl Module for VaeModel {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        visit_scoped(&self.encoder, "enc", f);
        visit_scoped(&self.mu_head, "mu", f);
        visit_scoped(&self.log_var_head, "log_var", f);
        visit_scoped(&self.dec_fc, "dec_fc", f);
        visit_scoped(&self.dec_convs, "dec", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        visit_scoped_mut(&mut self.encoder, "enc", f);
        visit_scoped_mut(&mut self.mu_head, "mu", f);
        visit_scoped_mut(&mut self.log_var_head, "log_var", f);
        visit_scoped_mut(&mut self.dec_fc, "dec_fc", f);
        visit_scoped_mut(&mut self.dec_convs, "dec", f);
    }
}

/// Posterior parameters, plus a sample once reparameterised. All `[N, d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub mu: Tensor,
    pub log_var: Tensor,
    pub z: Option<Tensor>,
}

/// Batch-mean loss terms. `total` is always `recon + beta * kl`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTerms {
    pub recon: f64,
    pub kl: f64,
    pub total: f64,
}

/// `½ Σ (μ² + e^{lv} − 1 − lv)` summed over every element.
pub fn kl_diag_gaussian(mu: &[f64], log_var: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(log_var)
        .map(|(&m, &lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

fn recon_sum(kind: ReconLoss, x: &[f64], x_hat: &[f64]) -> f64 {
    match kind {
        ReconLoss::SquaredError => x.iter().zip(x_hat).map(|(a, b)| (b - a) * (b - a)).sum(),
        ReconLoss::Bernoulli => x
            .iter()
            .zip(x_hat)
            .map(|(&t, &p)| {
                let p = p.clamp(1e-12, 1.0 - 1e-12);
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .sum(),
    }
}

/// Batch-mean ELBO terms from a reconstruction and posterior parameters.
pub fn elbo_terms(kind: ReconLoss, beta: f64, x: &Tensor, x_hat: &Tensor, mu: &Tensor, log_var: &Tensor) -> ElboTerms {
    let n = x.dim(0) as f64;
    let recon = recon_sum(kind, x.data(), x_hat.data()) / n;
    let kl = kl_diag_gaussian(mu.data(), log_var.data()) / n;
    ElboTerms {
        recon,
        kl,
        total: recon + beta * kl,
    }
}

struct ForwardCache {
    enc: ConvStackCache,
    feat: Tensor,
    mu: Tensor,
    log_var_raw: Tensor,
    log_var: Tensor,
    eps: Tensor,
    z: Tensor,
    dec_h: Tensor,
    /// Per decoder stage: upsampled input and post-activation output.
    dec: Vec<(Tensor, Tensor)>,
    x_hat: Tensor,
}

impl VaeModel {
    /// Fresh model for `(channels, height, width)` observations.
    pub fn new(input: (usize, usize, usize), latent_dim: usize, beta: f64, rng: &mut impl Rng) -> Self {
        assert!(latent_dim >= 1, "latent_dim must be at least 1");
        let encoder = ConvStack::new(input, &ENCODER_CHANNELS, rng);
        let shapes = encoder.shapes();
        let feat = encoder.output_dim();
        let mut dec_convs = Vec::with_capacity(ENCODER_CHANNELS.len());
        for k in (0..ENCODER_CHANNELS.len()).rev() {
            dec_convs.push(Conv2d::new(shapes[k + 1].0, shapes[k].0, 3, 1, 1, rng));
        }
        Self {
            mu_head: Dense::new(feat, latent_dim, rng),
            log_var_head: Dense::new(feat, latent_dim, rng),
            dec_fc: Dense::new(latent_dim, feat, rng),
            encoder,
            dec_convs,
            latent_dim,
            beta,
            recon: ReconLoss::SquaredError,
            frozen: false,
        }
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.encoder.input
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// A trainable copy of a (possibly frozen) model.
    pub fn thawed(&self) -> Self {
        Self {
            frozen: false,
            ..self.clone()
        }
    }

    pub fn checksum(&self) -> String {
        checksum(self)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (c, h, w) = self.input_shape();
        if x.rank() != 4 || x.dim(1) != c || (x.dim(2), x.dim(3)) != (h, w) {
            return Err(LabError::ResolutionMismatch {
                expected: (h, w),
                got: if x.rank() == 4 { (x.dim(2), x.dim(3)) } else { (0, 0) },
            });
        }
        Ok(())
    }

    /// Posterior mean and clamped log-variance for `[N, C, H, W]` input.
    pub fn encode(&self, x: &Tensor) -> Result<LatentCode> {
        self.check_input(x)?;
        let feat = self.encoder.infer(x)?;
        Ok(LatentCode {
            mu: self.mu_head.forward(&feat)?,
            log_var: clamp_log_var(&self.log_var_head.forward(&feat)?),
            z: None,
        })
    }

    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        if z.rank() != 2 || z.dim(1) != self.latent_dim {
            return Err(curiolab_numcore::NumError::ShapeMismatch(format!(
                "decoder expects [N,{}], got {:?}",
                self.latent_dim,
                z.shape()
            ))
            .into());
        }
        let shapes = self.encoder.shapes();
        let (c4, h4, w4) = *shapes.last().expect("shapes");
        let n = z.dim(0);
        let mut a = relu(&self.dec_fc.forward(z)?).reshape(&[n, c4, h4, w4])?;
        let last = self.dec_convs.len() - 1;
        for (s, conv) in self.dec_convs.iter().enumerate() {
            let (_, th, tw) = shapes[last - s];
            let y = conv.forward(&upsample_nearest(&a, th, tw)?)?;
            a = if s == last { sigmoid_tensor(&y) } else { relu(&y) };
        }
        Ok(a)
    }

    fn forward(&self, x: &Tensor, eps: &Tensor) -> Result<ForwardCache> {
        self.check_input(x)?;
        let n = x.dim(0);
        eps.expect_shape(&[n, self.latent_dim])?;
        let (feat, enc) = self.encoder.forward(x)?;
        let mu = self.mu_head.forward(&feat)?;
        let log_var_raw = self.log_var_head.forward(&feat)?;
        let log_var = clamp_log_var(&log_var_raw);
        let z = reparameterize_with(&mu, &log_var, eps)?;

        let shapes = self.encoder.shapes();
        let (c4, h4, w4) = *shapes.last().expect("shapes");
        let dec_h = relu(&self.dec_fc.forward(&z)?);
        let mut a = dec_h.clone().reshape(&[n, c4, h4, w4])?;
        let last = self.dec_convs.len() - 1;
        let mut dec = Vec::with_capacity(self.dec_convs.len());
        for (s, conv) in self.dec_convs.iter().enumerate() {
            let (_, th, tw) = shapes[last - s];
            let up = upsample_nearest(&a, th, tw)?;
            let y = conv.forward(&up)?;
            a = if s == last { sigmoid_tensor(&y) } else { relu(&y) };
            dec.push((up, a.clone()));
        }
        Ok(ForwardCache {
            enc,
            feat,
            mu,
            log_var_raw,
            log_var,
            eps: eps.clone(),
            z,
            dec_h,
            dec,
            x_hat: a,
        })
    }

    /// ELBO terms with explicit reparameterisation noise.
    pub fn elbo_with_noise(&self, x: &Tensor, eps: &Tensor) -> Result<ElboTerms> {
        let c = self.forward(x, eps)?;
        Ok(elbo_terms(self.recon, self.beta, x, &c.x_hat, &c.mu, &c.log_var))
    }

    /// ELBO terms and their gradient with respect to every parameter.
    pub fn elbo_grad(&self, x: &Tensor, eps: &Tensor) -> Result<(ElboTerms, VaeModel)> {
        let c = self.forward(x, eps)?;
        let terms = elbo_terms(self.recon, self.beta, x, &c.x_hat, &c.mu, &c.log_var);
        let n = x.dim(0) as f64;
        let mut g = zeros_like(self);

        // Gradient with respect to the last pre-activation.
        let pre: Vec<f64> = match self.recon {
            ReconLoss::SquaredError => c
                .x_hat
                .data()
                .iter()
                .zip(x.data())
                .map(|(&p, &t)| 2.0 * (p - t) / n * p * (1.0 - p))
                .collect(),
            ReconLoss::Bernoulli => c.x_hat.data().iter().zip(x.data()).map(|(&p, &t)| (p - t) / n).collect(),
        };
        let mut grad = Tensor::from_vec(c.x_hat.shape(), pre)?;
        let shapes = self.encoder.shapes();
        let last = self.dec_convs.len() - 1;
        for s in (0..self.dec_convs.len()).rev() {
            if s != last {
                grad = relu_backward(&c.dec[s].1, &grad)?;
            }
            let gu = self.dec_convs[s].backward(&c.dec[s].0, &grad, &mut g.dec_convs[s])?;
            let (_, ih, iw) = shapes[last - s + 1];
            grad = upsample_nearest_backward(&gu, ih, iw)?;
        }
        let grad = relu_backward(&c.dec_h, &grad.reshape(c.dec_h.shape())?)?;
        let dz = self.dec_fc.backward(&c.z, &grad, &mut g.dec_fc)?;

        let beta = self.beta;
        let mut dmu = dz.clone();
        for (d, &m) in dmu.data_mut().iter_mut().zip(c.mu.data()) {
            *d += beta * m / n;
        }
        let mut dlv = Tensor::zeros_like(&c.log_var);
        for i in 0..dlv.len() {
            let (lv, raw) = (c.log_var.data()[i], c.log_var_raw.data()[i]);
            let d = dz.data()[i] * c.eps.data()[i] * 0.5 * (0.5 * lv).exp() + beta * 0.5 * (lv.exp() - 1.0) / n;
            dlv.data_mut()[i] = if raw.abs() > LOG_VAR_CLAMP { 0.0 } else { d };
        }
        let mut dfeat = self.mu_head.backward(&c.feat, &dmu, &mut g.mu_head)?;
        dfeat.add_assign(&self.log_var_head.backward(&c.feat, &dlv, &mut g.log_var_head)?)?;
        self.encoder.backward(&c.enc, &dfeat, &mut g.encoder)?;
        Ok((terms, g))
    }

    /// Samples noise from `rng` and evaluates the ELBO.
    pub fn elbo_loss(&self, x: &Tensor, rng: &mut impl Rng) -> Result<ElboTerms> {
        let eps = standard_normal(&[x.dim(0), self.latent_dim], rng);
        self.elbo_with_noise(x, &eps)
    }

    /// One Adam step on a batch; refuses to touch a frozen model.
    pub fn train_step(&mut self, adam: &mut Adam, x: &Tensor, lr: f64, rng: &mut impl Rng) -> Result<ElboTerms> {
        if self.frozen {
            return Err(LabError::Frozen);
        }
        let eps = standard_normal(&[x.dim(0), self.latent_dim], rng);
        let (terms, grads) = self.elbo_grad(x, &eps)?;
        adam.step(self, &grads, lr)?;
        Ok(terms)
    }

    /// Parameters plus architecture metadata as checkpoint tensors.
    pub fn to_checkpoint(&self) -> ParamMap {
        let mut map = to_param_map(self);
        let (c, h, w) = self.input_shape();
        let meta = [
            ("meta.input", vec![c as f64, h as f64, w as f64]),
            ("meta.latent_dim", vec![self.latent_dim as f64]),
            ("meta.beta", vec![self.beta]),
            ("meta.frozen", vec![f64::from(u8::from(self.frozen))]),
            (
                "meta.recon",
                vec![match self.recon {
                    ReconLoss::SquaredError => 0.0,
                    ReconLoss::Bernoulli => 1.0,
                }],
            ),
        ];
        for (k, v) in meta {
            map.insert(k.into(), Tensor::vector(v));
        }
        map
    }

    pub fn from_checkpoint(map: &ParamMap) -> Result<Self> {
        let meta = |k: &str| {
            map.get(k)
                .map(|t| t.data().to_vec())
                .ok_or_else(|| LabError::MissingModel(format!("checkpoint lacks {k}")))
        };
        let input = meta("meta.input")?;
        let latent = meta("meta.latent_dim")?;
        if input.len() != 3 || latent.len() != 1 || input.iter().chain(&latent).any(|v| *v < 1.0 || v.fract() != 0.0) {
            return Err(LabError::MissingModel("malformed VAE metadata".into()));
        }
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut model = VaeModel::new(
            (input[0] as usize, input[1] as usize, input[2] as usize),
            latent[0] as usize,
            meta("meta.beta")?[0],
            &mut rng,
        );
        load_param_map(&mut model, map)?;
        model.frozen = meta("meta.frozen")?[0] != 0.0;
        model.recon = if meta("meta.recon")?[0] != 0.0 { ReconLoss::Bernoulli } else { ReconLoss::SquaredError };
        Ok(model)
    }
}

fn clamp_log_var(raw: &Tensor) -> Tensor {
    raw.map(|v| v.clamp(-LOG_VAR_CLAMP, LOG_VAR_CLAMP))
}

pub fn standard_normal(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::from_vec(shape, data).expect("noise shape")
}

/// `z = mu + exp(log_var / 2) ⊙ eps`.
pub fn reparameterize_with(mu: &Tensor, log_var: &Tensor, eps: &Tensor) -> Result<Tensor> {
    log_var.expect_shape(mu.shape())?;
    eps.expect_shape(mu.shape())?;
    let data = mu
        .data()
        .iter()
        .zip(log_var.data())
        .zip(eps.data())
        .map(|((&m, &lv), &e)| m + (0.5 * lv).exp() * e)
        .collect();
    Ok(Tensor::from_vec(mu.shape(), data)?)
}

pub fn reparameterize(code: &LatentCode, rng: &mut impl Rng) -> Result<LatentCode> {
    let eps = standard_normal(code.mu.shape(), rng);
    Ok(LatentCode {
        z: Some(reparameterize_with(&code.mu, &code.log_var, &eps)?),
        ..code.clone()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeTrainConfig {
    pub epochs: usize,
    pub beta: f64,
    pub latent_dim: usize,
    pub lr: f64,
    pub batch: usize,
}

impl Default for VaeTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            beta: 10.0,
            latent_dim: 32,
            lr: 1e-3,
            batch: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub recon: f64,
    pub kl: f64,
    pub total: f64,
    /// Terms of every minibatch in this epoch, in order.
    pub batches: Vec<ElboTerms>,
}

/// Minibatch Adam on the ELBO; returns the frozen model and per-epoch means.
pub fn train_vae_offline(
    dataset: &ObservationDataset,
    cfg: &VaeTrainConfig,
    rng: &mut impl Rng,
) -> Result<(VaeModel, Vec<EpochLog>)> {
    if dataset.is_empty() {
        return Err(LabError::Dataset("cannot train on an empty dataset".into()));
    }
    let mut model = VaeModel::new((3, dataset.height, dataset.width), cfg.latent_dim, cfg.beta, rng);
    let mut adam = Adam::default();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut logs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut batches = Vec::new();
        let (mut r, mut k, mut t, mut seen) = (0.0, 0.0, 0.0, 0.0);
        for chunk in order.chunks(cfg.batch.max(1)) {
            let x = dataset.batch(chunk);
            let terms = model.train_step(&mut adam, &x, cfg.lr, rng)?;
            let w = chunk.len() as f64;
            r += terms.recon * w;
            k += terms.kl * w;
            t += terms.total * w;
            seen += w;
            batches.push(terms);
        }
        logs.push(EpochLog {
            epoch,
            recon: r / seen,
            kl: k / seen,
            total: t / seen,
            batches,
        });
    }
    model.freeze();
    Ok((model, logs))
}

/// Mean per-image reconstruction error of the posterior mean decode.
pub fn mean_reconstruction_error(model: &VaeModel, dataset: &ObservationDataset, indices: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in indices.chunks(128) {
        let x = dataset.batch(chunk);
        let x_hat = model.decode(&model.encode(&x)?.mu)?;
        total += recon_sum(model.recon, x.data(), x_hat.data());
    }
    Ok(total / indices.len() as f64)
}

/// Per-pixel mean absolute error of `decode(mu)`.
pub fn mean_abs_error(model: &VaeModel, dataset: &ObservationDataset, indices: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in indices.chunks(128) {
        let x = dataset.batch(chunk);
        let x_hat = model.decode(&model.encode(&x)?.mu)?;
        total += x.data().iter().zip(x_hat.data()).map(|(a, b)| (a - b).abs()).sum::<f64>();
        count += x.len();
    }
    Ok(total / count as f64)
}
