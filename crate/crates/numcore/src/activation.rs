//! Elementwise nonlinearities and nearest-neighbour resampling.

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn sigmoid_grad_from_output(y: f64) -> f64 {
    y * (1.0 - y)
}

#[inline]
pub fn tanh_grad_from_output(y: f64) -> f64 {
    1.0 - y * y
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Gradient of ReLU given its *output*; zero at the kink.
pub fn relu_backward(output: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    grad_out.expect_shape(output.shape())?;
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| if y > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(output.shape(), data)
}

pub fn sigmoid_tensor(x: &Tensor) -> Tensor {
    x.map(sigmoid)
}

pub fn sigmoid_backward(output: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    grad_out.expect_shape(output.shape())?;
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| g * sigmoid_grad_from_output(y))
        .collect();
    Tensor::from_vec(output.shape(), data)
}

fn nearest_src(dst: usize, dst_len: usize, src_len: usize) -> usize {
    (dst * src_len) / dst_len
}

/// Nearest-neighbour resize of `[N, C, H, W]` to `[N, C, out_h, out_w]`.
pub fn upsample_nearest(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    if x.rank() != 4 || out_h == 0 || out_w == 0 {
        return shape_err(format!("upsample expects [N,C,H,W], got {:?}", x.shape()));
    }
    let (n, c, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let mut out = Vec::with_capacity(n * c * out_h * out_w);
    for plane in x.data().chunks(h * w) {
        for oy in 0..out_h {
            let row = &plane[nearest_src(oy, out_h, h) * w..];
            for ox in 0..out_w {
                out.push(row[nearest_src(ox, out_w, w)]);
            }
        }
    }
    Tensor::from_vec(&[n, c, out_h, out_w], out)
}

/// Sums each output gradient back onto its source pixel.
pub fn upsample_nearest_backward(grad_out: &Tensor, in_h: usize, in_w: usize) -> Result<Tensor> {
    if grad_out.rank() != 4 {
        return shape_err("upsample backward expects rank 4");
    }
    let (n, c, oh, ow) = (grad_out.dim(0), grad_out.dim(1), grad_out.dim(2), grad_out.dim(3));
    let mut out = vec![0.0; n * c * in_h * in_w];
    for (plane, dst) in grad_out.data().chunks(oh * ow).zip(out.chunks_mut(in_h * in_w)) {
        for oy in 0..oh {
            let sy = nearest_src(oy, oh, in_h);
            for ox in 0..ow {
                dst[sy * in_w + nearest_src(ox, ow, in_w)] += plane[oy * ow + ox];
            }
        }
    }
    Tensor::from_vec(&[n, c, in_h, in_w], out)
}
