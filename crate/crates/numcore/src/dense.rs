//! Affine layer `y = x W^T + b` over `[N, in]` tensors.

use rand::Rng;

use crate::error::{shape_err, Result};
use crate::linalg::{gemm, he_uniform, orthogonal, MatRef};
use crate::module::Module;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `[out, in]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

impl Module for Dense {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("weight", &self.weight);
        f("bias", &self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("weight", &mut self.weight);
        f("bias", &mut self.bias);
    }
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let w = he_uniform(inputs * outputs, inputs, rng);
        Self {
            weight: Tensor::from_vec(&[outputs, inputs], w).expect("dense shape"),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    /// Orthogonal weights scaled by `gain`; small gains give near-uniform
    /// policy heads.
    pub fn orthogonal(inputs: usize, outputs: usize, gain: f64, rng: &mut impl Rng) -> Self {
        let w = orthogonal(outputs, inputs, gain, rng);
        Self {
            weight: Tensor::from_vec(&[outputs, inputs], w).expect("dense shape"),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn from_params(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.rank() != 2 {
            return shape_err(format!("dense weight must be [out,in], got {:?}", weight.shape()));
        }
        bias.expect_shape(&[weight.dim(0)])?;
        Ok(Self { weight, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weight.dim(1)
    }

    pub fn outputs(&self) -> usize {
        self.weight.dim(0)
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        if x.rank() != 2 || x.dim(1) != self.inputs() {
            return shape_err(format!(
                "dense expects [N,{}], got {:?}",
                self.inputs(),
                x.shape()
            ));
        }
        Ok(x.dim(0))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let n = self.check_input(x)?;
        let (i, o) = (self.inputs(), self.outputs());
        let mut out = vec![0.0; n * o];
        for row in out.chunks_mut(o) {
            row.copy_from_slice(self.bias.data());
        }
        gemm(
            1.0,
            MatRef::new(x.data(), n, i),
            MatRef::new(self.weight.data(), o, i).t(),
            1.0,
            &mut out,
            o,
        );
        Tensor::from_vec(&[n, o], out)
    }

    /// Accumulates into `grads`, returns `dL/dx`.
    pub fn backward(&self, x: &Tensor, grad_out: &Tensor, grads: &mut Dense) -> Result<Tensor> {
        let n = self.check_input(x)?;
        let (i, o) = (self.inputs(), self.outputs());
        grad_out.expect_shape(&[n, o])?;
        grads.weight.expect_shape(self.weight.shape())?;
        let go = MatRef::new(grad_out.data(), n, o);
        gemm(1.0, go.t(), MatRef::new(x.data(), n, i), 1.0, grads.weight.data_mut(), i);
        for row in grad_out.data().chunks(o) {
            for (b, g) in grads.bias.data_mut().iter_mut().zip(row) {
                *b += g;
            }
        }
        let mut gx = vec![0.0; n * i];
        gemm(1.0, go, MatRef::new(self.weight.data(), o, i), 0.0, &mut gx, i);
        Tensor::from_vec(&[n, i], gx)
    }
}
