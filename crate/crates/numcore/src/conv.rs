//! 2D cross-correlation layer over `[N, C, H, W]` tensors (im2col + GEMM).

use rand::Rng;

use crate::error::{shape_err, Result};
use crate::linalg::{gemm, he_uniform, orthogonal, MatRef};
use crate::module::Module;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `[out_channels, in_channels, k, k]`
    pub weight: Tensor,
    /// `[out_channels]`
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl Module for Conv2d {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("weight", &self.weight);
        f("bias", &self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("weight", &mut self.weight);
        f("bias", &mut self.bias);
    }
}

impl Conv2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let w = he_uniform(out_channels * fan_in, fan_in, rng);
        Self {
            weight: Tensor::from_vec(&[out_channels, in_channels, kernel, kernel], w)
                .expect("conv weight shape"),
            bias: Tensor::zeros(&[out_channels]),
            stride,
            padding,
        }
    }

    /// Same shape as [`Conv2d::new`] but with orthogonal filters scaled by
    /// `gain`.
    pub fn orthogonal(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        gain: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let w = orthogonal(out_channels, fan_in, gain, rng);
        Self {
            weight: Tensor::from_vec(&[out_channels, in_channels, kernel, kernel], w)
                .expect("conv weight shape"),
            bias: Tensor::zeros(&[out_channels]),
            stride,
            padding,
        }
    }

    pub fn from_params(weight: Tensor, bias: Tensor, stride: usize, padding: usize) -> Result<Self> {
        if weight.rank() != 4 || weight.dim(2) != weight.dim(3) {
            return shape_err(format!("conv weight must be [O,C,k,k], got {:?}", weight.shape()));
        }
        bias.expect_shape(&[weight.dim(0)])?;
        if stride == 0 {
            return shape_err("conv stride must be >= 1");
        }
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dim(1)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dim(0)
    }

    pub fn kernel(&self) -> usize {
        self.weight.dim(2)
    }

    /// Output spatial size for an `h x w` input, or `None` if the kernel does
    /// not fit.
    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let k = self.kernel();
        let ph = h + 2 * self.padding;
        let pw = w + 2 * self.padding;
        if ph < k || pw < k || self.stride == 0 {
            return None;
        }
        Some(((ph - k) / self.stride + 1, (pw - k) / self.stride + 1))
    }

    fn geometry(&self, input: &Tensor) -> Result<Geometry> {
        if input.rank() != 4 || input.dim(1) != self.in_channels() {
            return shape_err(format!(
                "conv expects [N,{},H,W], got {:?}",
                self.in_channels(),
                input.shape()
            ));
        }
        let (h, w) = (input.dim(2), input.dim(3));
        let Some((ho, wo)) = self.output_hw(h, w) else {
            return shape_err(format!("kernel {} does not fit {h}x{w}", self.kernel()));
        };
        Ok(Geometry {
            n: input.dim(0),
            c: input.dim(1),
            h,
            w,
            ho,
            wo,
            k: self.kernel(),
            stride: self.stride,
            pad: self.padding,
        })
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let g = self.geometry(input)?;
        let o = self.out_channels();
        let (kk, p) = (g.c * g.k * g.k, g.ho * g.wo);
        let mut cols = vec![0.0; kk * p];
        let mut out = vec![0.0; g.n * o * p];
        let wmat = MatRef::new(self.weight.data(), o, kk);
        for n in 0..g.n {
            im2col(&g, &input.data()[n * g.c * g.h * g.w..(n + 1) * g.c * g.h * g.w], &mut cols);
            let dst = &mut out[n * o * p..(n + 1) * o * p];
            for (oc, row) in dst.chunks_mut(p).enumerate() {
                row.fill(self.bias.data()[oc]);
            }
            gemm(1.0, wmat, MatRef::new(&cols, kk, p), 1.0, dst, p);
        }
        Tensor::from_vec(&[g.n, o, g.ho, g.wo], out)
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to `input`.
    pub fn backward(&self, input: &Tensor, grad_out: &Tensor, grads: &mut Conv2d) -> Result<Tensor> {
        let g = self.geometry(input)?;
        let o = self.out_channels();
        grad_out.expect_shape(&[g.n, o, g.ho, g.wo])?;
        grads.weight.expect_shape(self.weight.shape())?;
        let (kk, p) = (g.c * g.k * g.k, g.ho * g.wo);
        let in_sz = g.c * g.h * g.w;
        let mut cols = vec![0.0; kk * p];
        let mut dcols = vec![0.0; kk * p];
        let mut grad_in = vec![0.0; g.n * in_sz];
        let wmat = MatRef::new(self.weight.data(), o, kk);
        for n in 0..g.n {
            let x = &input.data()[n * in_sz..(n + 1) * in_sz];
            let go = &grad_out.data()[n * o * p..(n + 1) * o * p];
            im2col(&g, x, &mut cols);
            let gomat = MatRef::new(go, o, p);
            gemm(1.0, gomat, MatRef::new(&cols, kk, p).t(), 1.0, grads.weight.data_mut(), kk);
            for (oc, row) in go.chunks(p).enumerate() {
                grads.bias.data_mut()[oc] += row.iter().sum::<f64>();
            }
            gemm(1.0, wmat.t(), gomat, 0.0, &mut dcols, p);
            col2im(&g, &dcols, &mut grad_in[n * in_sz..(n + 1) * in_sz]);
        }
        Tensor::from_vec(input.shape(), grad_in)
    }
}

struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
    k: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    /// Source index along one axis, or `None` inside the zero padding.
    #[inline]
    fn src(&self, out: usize, tap: usize, extent: usize) -> Option<usize> {
        let pos = (out * self.stride + tap) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }
}

fn im2col(g: &Geometry, x: &[f64], cols: &mut [f64]) {
    let p = g.ho * g.wo;
    let mut row = 0;
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let iy = g.src(oy, ki, g.h);
                    for ox in 0..g.wo {
                        dst[oy * g.wo + ox] = match (iy, g.src(ox, kj, g.w)) {
                            (Some(iy), Some(ix)) => plane[iy * g.w + ix],
                            _ => 0.0,
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

fn col2im(g: &Geometry, cols: &[f64], x: &mut [f64]) {
    let p = g.ho * g.wo;
    let mut row = 0;
    for c in 0..g.c {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let Some(iy) = g.src(oy, ki, g.h) else { continue };
                    for ox in 0..g.wo {
                        if let Some(ix) = g.src(ox, kj, g.w) {
                            plane[iy * g.w + ix] += src[oy * g.wo + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}
