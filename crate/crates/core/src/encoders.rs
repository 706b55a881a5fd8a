//! State encoders φ feeding the curiosity module.

use curiolab_numcore::module::visit_scoped;
use curiolab_numcore::module::visit_scoped_mut;
use curiolab_numcore::softmax::log_softmax;
use curiolab_numcore::{checksum, zeros_like, Adam, Dense, Module, Tensor};
use rand::Rng;

use crate::error::{LabError, Result};
use crate::nets::{concat_cols, split_cols, ConvStack, ConvStackCache, Mlp};
use crate::vae::{ElboTerms, VaeModel, ENCODER_CHANNELS};

pub const FEATURE_DIM: usize = 32;
pub const INVERSE_HIDDEN: usize = 256;
pub const ACTIONS: usize = curiolab_arena::Action::COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncoderKind {
    Pixels,
    RandomFeatures,
    Idf,
    OnlineVae,
    FixedVae,
}

impl EncoderKind {
    pub const ALL: [EncoderKind; 5] = [
        EncoderKind::Pixels,
        EncoderKind::RandomFeatures,
        EncoderKind::Idf,
        EncoderKind::OnlineVae,
        EncoderKind::FixedVae,
    ];

    /// Config spelling.
    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Pixels => "pixels",
            EncoderKind::RandomFeatures => "rf",
            EncoderKind::Idf => "idf",
            EncoderKind::OnlineVae => "online_vae",
            EncoderKind::FixedVae => "fixed_vae",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn trainable(self) -> bool {
        matches!(self, EncoderKind::Idf | EncoderKind::OnlineVae)
    }
}

impl std::fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The VAE encoder topology followed by a linear projection to
/// [`FEATURE_DIM`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvFeatures {
    pub conv: ConvStack,
    pub head: Dense,
}

pub struct ConvFeaturesCache {
    conv: ConvStackCache,
    flat: Tensor,
}

impl Module for ConvFeatures {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        visit_scoped(&self.conv, "body", f);
        visit_scoped(&self.head, "head", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        visit_scoped_mut(&mut self.conv, "body", f);
        visit_scoped_mut(&mut self.head, "head", f);
    }
}

impl ConvFeatures {
    pub fn new(input: (usize, usize, usize), rng: &mut impl Rng) -> Self {
        let conv = ConvStack::new(input, &ENCODER_CHANNELS, rng);
        let head = Dense::new(conv.output_dim(), FEATURE_DIM, rng);
        Self { conv, head }
    }

    pub fn orthogonal(input: (usize, usize, usize), rng: &mut impl Rng) -> Self {
        let gain = 2f64.sqrt();
        let conv = ConvStack::orthogonal(input, &ENCODER_CHANNELS, gain, rng);
        let head = Dense::orthogonal(conv.output_dim(), FEATURE_DIM, 1.0, rng);
        Self { conv, head }
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.head.forward(&self.conv.infer(x)?)?)
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ConvFeaturesCache)> {
        let (flat, conv) = self.conv.forward(x)?;
        let y = self.head.forward(&flat)?;
        Ok((y, ConvFeaturesCache { conv, flat }))
    }

    pub fn backward(&self, cache: &ConvFeaturesCache, grad_out: &Tensor, grads: &mut ConvFeatures) -> Result<()> {
        let g = self.head.backward(&cache.flat, grad_out, &mut grads.head)?;
        self.conv.backward(&cache.conv, &g, &mut grads.conv)?;
        Ok(())
    }
}

/// IDF trunk plus the inverse-dynamics head that trains it.
#[derive(Debug, Clone, PartialEq)]
pub struct IdfNet {
    pub features: ConvFeatures,
    /// `[2·FEATURE_DIM, 256, 9]`
    pub inverse: Mlp,
}

impl Module for IdfNet {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        visit_scoped(&self.features, "phi", f);
        visit_scoped(&self.inverse, "inv", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        visit_scoped_mut(&mut self.features, "phi", f);
        visit_scoped_mut(&mut self.inverse, "inv", f);
    }
}

impl IdfNet {
    pub fn new(input: (usize, usize, usize), rng: &mut impl Rng) -> Self {
        Self {
            features: ConvFeatures::new(input, rng),
            inverse: Mlp::new(&[2 * FEATURE_DIM, INVERSE_HIDDEN, ACTIONS], rng),
        }
    }

    /// Action logits for `(s, s')` pairs.
    pub fn predict(&self, s: &Tensor, s_next: &Tensor) -> Result<Tensor> {
        let joint = concat_cols(&self.features.infer(s)?, &self.features.infer(s_next)?)?;
        Ok(self.inverse.infer(&joint)?)
    }

    /// Mean cross-entropy of the taken actions.
    pub fn loss(&self, s: &Tensor, s_next: &Tensor, actions: &[usize]) -> Result<f64> {
        let logits = self.predict(s, s_next)?;
        Ok(cross_entropy(&logits, actions).0)
    }

    pub fn loss_grad(&self, s: &Tensor, s_next: &Tensor, actions: &[usize]) -> Result<(f64, IdfNet)> {
        let (fa, ca) = self.features.forward(s)?;
        let (fb, cb) = self.features.forward(s_next)?;
        let (logits, ci) = self.inverse.forward(&concat_cols(&fa, &fb)?)?;
        let (loss, dlogits) = cross_entropy(&logits, actions);
        let mut g = zeros_like(self);
        let djoint = self.inverse.backward(&ci, &dlogits, &mut g.inverse)?;
        let (da, db) = split_cols(&djoint, FEATURE_DIM)?;
        self.features.backward(&ca, &da, &mut g.features)?;
        self.features.backward(&cb, &db, &mut g.features)?;
        Ok((loss, g))
    }
}

/// Mean negative log-likelihood of `targets` and its gradient with respect
/// to the logits.
pub fn cross_entropy(logits: &Tensor, targets: &[usize]) -> (f64, Tensor) {
    let n = targets.len();
    let mut grad = Tensor::zeros(logits.shape());
    let mut loss = 0.0;
    for (i, &a) in targets.iter().enumerate() {
        let lp = log_softmax(logits.row(i));
        loss -= lp[a];
        for (k, g) in grad.row_mut(i).iter_mut().enumerate() {
            *g = (lp[k].exp() - f64::from(u8::from(k == a))) / n as f64;
        }
    }
    (loss / n as f64, grad)
}

#[derive(Debug, Clone)]
enum Body {
    Pixels,
    Random(ConvFeatures),
    Idf { net: IdfNet, adam: Adam },
    OnlineVae { model: VaeModel, adam: Adam },
    FixedVae(VaeModel),
}

/// One of the five φ variants behind a common interface.
#[derive(Debug, Clone)]
pub struct Encoder {
    kind: EncoderKind,
    input: (usize, usize, usize),
    body: Body,
    /// Parameter checksum taken at construction for the immutable kinds.
    pinned: Option<String>,
}

/// Builds an encoder for `(channels, height, width)` observations.
///
/// `FixedVae` needs a frozen model; `OnlineVae` starts from a thawed copy of
/// `vae` when given and from a fresh β-VAE otherwise.
pub fn build_encoder(
    kind: EncoderKind,
    input: (usize, usize, usize),
    rng: &mut impl Rng,
    vae: Option<&VaeModel>,
) -> Result<Encoder> {
    let check_res = |m: &VaeModel| {
        let (_, h, w) = m.input_shape();
        if m.input_shape() != input {
            return Err(LabError::ResolutionMismatch {
                expected: (input.1, input.2),
                got: (h, w),
            });
        }
        Ok(())
    };
    let body = match kind {
        EncoderKind::Pixels => Body::Pixels,
        EncoderKind::RandomFeatures => Body::Random(ConvFeatures::orthogonal(input, rng)),
        EncoderKind::Idf => Body::Idf {
            net: IdfNet::new(input, rng),
            adam: Adam::default(),
        },
        EncoderKind::OnlineVae => {
            let model = match vae {
                Some(m) => {
                    check_res(m)?;
                    m.thawed()
                }
                None => VaeModel::new(input, FEATURE_DIM, 10.0, rng),
            };
            Body::OnlineVae {
                model,
                adam: Adam::default(),
            }
        }
        EncoderKind::FixedVae => {
            let m = vae.ok_or_else(|| LabError::MissingModel("fixed_vae requires a pretrained VAE".into()))?;
            if !m.is_frozen() {
                return Err(LabError::MissingModel("fixed_vae requires a frozen VAE".into()));
            }
            check_res(m)?;
            Body::FixedVae(m.clone())
        }
    };
    let mut enc = Encoder {
        kind,
        input,
        body,
        pinned: None,
    };
    if matches!(kind, EncoderKind::RandomFeatures | EncoderKind::FixedVae) {
        enc.pinned = Some(enc.checksum());
    }
    Ok(enc)
}

impl Module for Encoder {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        match &self.body {
            Body::Pixels => {}
            Body::Random(n) => visit_scoped(n, "rf", f),
            Body::Idf { net, .. } => visit_scoped(net, "idf", f),
            Body::OnlineVae { model, .. } | Body::FixedVae(model) => visit_scoped(model, "vae", f),
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        match &mut self.body {
            Body::Pixels => {}
            Body::Random(n) => visit_scoped_mut(n, "rf", f),
            Body::Idf { net, .. } => visit_scoped_mut(net, "idf", f),
            Body::OnlineVae { model, .. } | Body::FixedVae(model) => visit_scoped_mut(model, "vae", f),
        }
    }
}

impl Encoder {
    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input
    }

    pub fn output_dim(&self) -> usize {
        match &self.body {
            Body::Pixels => self.input.0 * self.input.1 * self.input.2,
            Body::OnlineVae { model, .. } | Body::FixedVae(model) => model.latent_dim,
            _ => FEATURE_DIM,
        }
    }

    pub fn trainable(&self) -> bool {
        self.kind.trainable()
    }

    /// SHA-256 over the parameters (empty input for `Pixels`).
    pub fn checksum(&self) -> String {
        checksum(self)
    }

    /// For RF and FixedVAE, errors if the parameters changed since construction.
    pub fn verify_frozen(&self) -> Result<()> {
        match &self.pinned {
            Some(c) if *c != self.checksum() => Err(LabError::Consistency(format!("{} encoder parameters changed", self.kind))),
            _ => Ok(()),
        }
    }

    /// Wrapped VAE, if any.
    pub fn vae(&self) -> Option<&VaeModel> {
        match &self.body {
            Body::OnlineVae { model, .. } | Body::FixedVae(model) => Some(model),
            _ => None,
        }
    }

    /// `[N, C, H, W]` observations to `[N, output_dim]` features.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        let (c, h, w) = self.input;
        if x.rank() != 4 || (x.dim(1), x.dim(2), x.dim(3)) != (c, h, w) {
            return Err(curiolab_numcore::NumError::ShapeMismatch(format!(
                "encoder expects [N,{c},{h},{w}], got {:?}",
                x.shape()
            ))
            .into());
        }
        match &self.body {
            Body::Pixels => Ok(x.clone().reshape(&[x.dim(0), c * h * w])?),
            Body::Random(n) => n.infer(x),
            Body::Idf { net, .. } => net.features.infer(x),
            Body::OnlineVae { model, .. } | Body::FixedVae(model) => Ok(model.encode(x)?.mu),
        }
    }

    /// One Adam step on the inverse-dynamics loss; returns the pre-step loss.
    pub fn idf_update(&mut self, s: &Tensor, s_next: &Tensor, actions: &[usize], lr: f64) -> Result<f64> {
        let got = self.kind.name();
        let Body::Idf { net, adam } = &mut self.body else {
            return Err(LabError::WrongKind { expected: "idf", got });
        };
        let (loss, grads) = net.loss_grad(s, s_next, actions)?;
        adam.step(net, &grads, lr)?;
        Ok(loss)
    }

    /// One ELBO step for the online VAE.
    pub fn vae_update(&mut self, x: &Tensor, lr: f64, rng: &mut impl Rng) -> Result<ElboTerms> {
        let got = self.kind.name();
        let Body::OnlineVae { model, adam } = &mut self.body else {
            return Err(LabError::WrongKind { expected: "online_vae", got });
        };
        model.train_step(adam, x, lr, rng)
    }
}

/// Mean L2 distance between corresponding rows of two feature matrices.
pub fn feature_drift(before: &Tensor, after: &Tensor) -> f64 {
    let n = before.dim(0);
    (0..n)
        .map(|i| {
            before
                .row(i)
                .iter()
                .zip(after.row(i))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .sum::<f64>()
        / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use curiolab_numcore::{grad_check, GradCheckOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SMALL: (usize, usize, usize) = (3, 16, 16);

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn rf_is_seeded_and_pinned() {
        let a = build_encoder(EncoderKind::RandomFeatures, SMALL, &mut rng(1), None).unwrap();
        let b = build_encoder(EncoderKind::RandomFeatures, SMALL, &mut rng(1), None).unwrap();
        assert_eq!(a.checksum(), b.checksum());
        assert_eq!(a.output_dim(), FEATURE_DIM);
        assert!(!a.trainable());
        a.verify_frozen().unwrap();
        let mut c = a.clone();
        c.visit_mut(&mut |_, t| t.data_mut()[0] += 1.0);
        assert!(c.verify_frozen().is_err());
    }

    #[test]
    fn pixels_is_flatten() {
        let e = build_encoder(EncoderKind::Pixels, (3, 32, 32), &mut rng(0), None).unwrap();
        assert_eq!(e.output_dim(), 3072);
        let x = Tensor::uniform(&[2, 3, 32, 32], 1.0, &mut rng(2));
        assert_eq!(e.encode(&x).unwrap().data(), x.data());
        assert!(e.encode(&Tensor::zeros(&[1, 3, 16, 16])).is_err());
    }

    #[test]
    fn fixed_vae_contract() {
        let mut m = VaeModel::new(SMALL, 8, 10.0, &mut rng(3));
        let err = build_encoder(EncoderKind::FixedVae, SMALL, &mut rng(0), Some(&m));
        assert!(matches!(err, Err(LabError::MissingModel(_))));
        assert!(matches!(build_encoder(EncoderKind::FixedVae, SMALL, &mut rng(0), None), Err(LabError::MissingModel(_))));
        m.freeze();
        let e = build_encoder(EncoderKind::FixedVae, SMALL, &mut rng(0), Some(&m)).unwrap();
        assert_eq!(e.output_dim(), 8);
        let x = Tensor::uniform(&[3, 3, 16, 16], 1.0, &mut rng(4));
        assert_eq!(e.encode(&x).unwrap(), m.encode(&x).unwrap().mu);
        assert_eq!(e.checksum(), checksum(&e));
        let wrong = build_encoder(EncoderKind::FixedVae, (3, 32, 32), &mut rng(0), Some(&m));
        assert!(matches!(wrong, Err(LabError::ResolutionMismatch { .. })));
    }

    #[test]
    fn updates_check_kind() {
        let mut e = build_encoder(EncoderKind::RandomFeatures, SMALL, &mut rng(0), None).unwrap();
        let x = Tensor::zeros(&[1, 3, 16, 16]);
        assert!(matches!(e.idf_update(&x, &x, &[0], 1e-3), Err(LabError::WrongKind { .. })));
        assert!(matches!(e.vae_update(&x, 1e-3, &mut rng(0)), Err(LabError::WrongKind { .. })));
    }

    #[test]
    fn online_vae_drifts() {
        let mut e = build_encoder(EncoderKind::OnlineVae, SMALL, &mut rng(5), None).unwrap();
        let x = Tensor::uniform(&[4, 3, 16, 16], 1.0, &mut rng(6)).map(f64::abs);
        let before = e.encode(&x).unwrap();
        for _ in 0..3 {
            e.vae_update(&x, 1e-3, &mut rng(7)).unwrap();
        }
        assert!(feature_drift(&before, &e.encode(&x).unwrap()) > 0.0);
        assert_eq!(feature_drift(&before, &before), 0.0);
    }

    #[test]
    fn cross_entropy_uniform_is_ln_k() {
        let (l, g) = cross_entropy(&Tensor::zeros(&[2, 9]), &[0, 4]);
        assert!((l - 9f64.ln()).abs() < 1e-12);
        assert!((g.row(0)[0] - (1.0 / 9.0 - 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn idf_gradient_check() {
        let mut r = rng(8);
        let net = IdfNet::new((3, 8, 8), &mut r);
        let s = Tensor::uniform(&[3, 3, 8, 8], 1.0, &mut r);
        let t = Tensor::uniform(&[3, 3, 8, 8], 1.0, &mut r);
        let a = [1, 7, 3];
        let (_, g) = net.loss_grad(&s, &t, &a).unwrap();
        let rep = grad_check(&net, &g, |m: &IdfNet| m.loss(&s, &t, &a).unwrap(), 1e-4, &GradCheckOptions::default());
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn idf_learns_deterministic_transitions() {
        // Two states; the action alone selects which one follows.
        let mut r = rng(9);
        let mut e = build_encoder(EncoderKind::Idf, (3, 8, 8), &mut r, None).unwrap();
        let a_img = Tensor::filled(&[1, 3, 8, 8], 0.2);
        let b_img = Tensor::filled(&[1, 3, 8, 8], 0.8);
        let mut s = Vec::new();
        let mut t = Vec::new();
        let mut acts = Vec::new();
        for k in 0..16 {
            let act = k % 2;
            s.push(&a_img);
            t.push(if act == 0 { &a_img } else { &b_img });
            acts.push(act);
        }
        let stack = |v: &[&Tensor]| Tensor::stack(v).unwrap().reshape(&[v.len(), 3, 8, 8]).unwrap();
        let (s, t) = (stack(&s), stack(&t));
        for _ in 0..200 {
            e.idf_update(&s, &t, &acts, 1e-3).unwrap();
        }
        let Body::Idf { net, .. } = &e.body else { unreachable!() };
        let logits = net.predict(&s, &t).unwrap();
        let correct = (0..acts.len())
            .filter(|&i| curiolab_numcore::softmax::argmax(logits.row(i)) == acts[i])
            .count();
        assert!(correct as f64 / acts.len() as f64 > 0.95);
    }
}
