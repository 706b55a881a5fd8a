//! Building blocks shared by the VAE, the encoders, the forward model and the
//! policy: a strided ReLU conv stack and a ReLU perceptron.

use curiolab_numcore::activation::{relu, relu_backward};
use curiolab_numcore::module::visit_scoped;
use curiolab_numcore::module::visit_scoped_mut;
use curiolab_numcore::{Conv2d, Dense, Module, Result, Tensor};
use rand::Rng;

/// Stride-2, 3x3, padding-1 convolutions with ReLU after every layer.
/// Output is flattened to `[N, features]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvStack {
    pub layers: Vec<Conv2d>,
    pub input: (usize, usize, usize),
}

#[derive(Debug, Clone)]
pub struct ConvStackCache {
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    acts: Vec<Tensor>,
}

impl Module for ConvStack {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        visit_scoped(&self.layers, "conv", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        visit_scoped_mut(&mut self.layers, "conv", f);
    }
}

impl ConvStack {
    /// He-initialised stack over `(channels, height, width)` inputs.
    pub fn new(input: (usize, usize, usize), channels: &[usize], rng: &mut impl Rng) -> Self {
        let mut c = input.0;
        let layers = channels
            .iter()
            .map(|&o| {
                let l = Conv2d::new(c, o, 3, 2, 1, rng);
                c = o;
                l
            })
            .collect();
        Self { layers, input }
    }

    /// Orthogonally initialised stack, used for frozen random features.
    pub fn orthogonal(input: (usize, usize, usize), channels: &[usize], gain: f64, rng: &mut impl Rng) -> Self {
        let mut c = input.0;
        let layers = channels
            .iter()
            .map(|&o| {
                let l = Conv2d::orthogonal(c, o, 3, 2, 1, gain, rng);
                c = o;
                l
            })
            .collect();
        Self { layers, input }
    }

    /// Spatial size after each layer.
    pub fn shapes(&self) -> Vec<(usize, usize, usize)> {
        let (mut h, mut w) = (self.input.1, self.input.2);
        let mut out = vec![self.input];
        for l in &self.layers {
            (h, w) = l.output_hw(h, w).expect("conv stack geometry");
            out.push((l.out_channels(), h, w));
        }
        out
    }

    pub fn output_dim(&self) -> usize {
        let (c, h, w) = *self.shapes().last().expect("nonempty");
        c * h * w
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ConvStackCache)> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for l in &self.layers {
            let y = relu(&l.forward(acts.last().expect("input"))?);
            acts.push(y);
        }
        let n = x.dim(0);
        let out = acts.last().expect("output").clone().reshape(&[n, self.output_dim()])?;
        Ok((out, ConvStackCache { acts }))
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut a = x.clone();
        for l in &self.layers {
            a = relu(&l.forward(&a)?);
        }
        let n = x.dim(0);
        a.reshape(&[n, self.output_dim()])
    }

    /// Accumulates into `grads`; returns the input gradient.
    pub fn backward(&self, cache: &ConvStackCache, grad_out: &Tensor, grads: &mut ConvStack) -> Result<Tensor> {
        let last = cache.acts.last().expect("output");
        let mut g = grad_out.clone().reshape(last.shape())?;
        for (i, l) in self.layers.iter().enumerate().rev() {
            g = relu_backward(&cache.acts[i + 1], &g)?;
            g = l.backward(&cache.acts[i], &g, &mut grads.layers[i])?;
        }
        Ok(g)
    }
}

/// Dense layers with ReLU between them and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    acts: Vec<Tensor>,
}

impl Module for Mlp {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        visit_scoped(&self.layers, "fc", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        visit_scoped_mut(&mut self.layers, "fc", f);
    }
}

impl Mlp {
    /// `sizes = [in, hidden..., out]`.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Self {
        Self {
            layers: sizes.windows(2).map(|w| Dense::new(w[0], w[1], rng)).collect(),
        }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().expect("nonempty").outputs()
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, MlpCache)> {
        let mut acts = vec![x.clone()];
        for (i, l) in self.layers.iter().enumerate() {
            let y = l.forward(acts.last().expect("input"))?;
            acts.push(if i + 1 < self.layers.len() { relu(&y) } else { y });
        }
        let out = acts.last().expect("output").clone();
        Ok((out, MlpCache { acts }))
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(x)?.0)
    }

    pub fn backward(&self, cache: &MlpCache, grad_out: &Tensor, grads: &mut Mlp) -> Result<Tensor> {
        let mut g = grad_out.clone();
        let n = self.layers.len();
        for i in (0..n).rev() {
            if i + 1 < n {
                g = relu_backward(&cache.acts[i + 1], &g)?;
            }
            g = self.layers[i].backward(&cache.acts[i], &g, &mut grads.layers[i])?;
        }
        Ok(g)
    }
}

/// Row-wise concatenation of `[N, a]` and `[N, b]`.
pub fn concat_cols(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let n = a.dim(0);
    b.expect_shape(&[n, b.dim(1)])?;
    let (da, db) = (a.dim(1), b.dim(1));
    let mut out = Vec::with_capacity(n * (da + db));
    for i in 0..n {
        out.extend_from_slice(a.row(i));
        out.extend_from_slice(b.row(i));
    }
    Tensor::from_vec(&[n, da + db], out)
}

/// Inverse of [`concat_cols`] for gradients.
pub fn split_cols(x: &Tensor, first: usize) -> Result<(Tensor, Tensor)> {
    let (n, d) = (x.dim(0), x.dim(1));
    let mut a = Vec::with_capacity(n * first);
    let mut b = Vec::with_capacity(n * (d - first));
    for i in 0..n {
        let r = x.row(i);
        a.extend_from_slice(&r[..first]);
        b.extend_from_slice(&r[first..]);
    }
    Ok((Tensor::from_vec(&[n, first], a)?, Tensor::from_vec(&[n, d - first], b)?))
}

/// One-hot rows for action indices.
pub fn one_hot(actions: &[usize], classes: usize) -> Tensor {
    let mut t = Tensor::zeros(&[actions.len(), classes]);
    for (i, &a) in actions.iter().enumerate() {
        t.row_mut(i)[a] = 1.0;
    }
    t
}
