//! LSTM cell with truncated backpropagation through time.
//!
//! Gate layout inside the fused `[4H, *]` matrices is input, forget,
//! candidate, output.

use rand::Rng;

use crate::activation::{sigmoid, sigmoid_grad_from_output, tanh_grad_from_output};
use crate::error::{shape_err, Result};
use crate::linalg::{gemm, orthogonal, MatRef};
use crate::module::Module;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    /// `[4H, I]`
    pub w_ih: Tensor,
    /// `[4H, H]`
    pub w_hh: Tensor,
    /// `[4H]`
    pub bias: Tensor,
}

impl Module for Lstm {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("w_ih", &self.w_ih);
        f("w_hh", &self.w_hh);
        f("bias", &self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("w_ih", &mut self.w_ih);
        f("w_hh", &mut self.w_hh);
        f("bias", &mut self.bias);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    /// `[B, H]`
    pub h: Tensor,
    /// `[B, H]`
    pub c: Tensor,
}

impl LstmState {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        Self {
            h: Tensor::zeros(&[batch, hidden]),
            c: Tensor::zeros(&[batch, hidden]),
        }
    }

    pub fn batch(&self) -> usize {
        self.h.dim(0)
    }

    /// Extract lane `b` as a batch-of-one state.
    pub fn lane(&self, b: usize) -> LstmState {
        let hdim = self.h.dim(1);
        LstmState {
            h: Tensor::from_vec(&[1, hdim], self.h.row(b).to_vec()).expect("lane"),
            c: Tensor::from_vec(&[1, hdim], self.c.row(b).to_vec()).expect("lane"),
        }
    }

    /// Concatenate batch-of-one (or larger) states along the batch axis.
    pub fn concat(states: &[LstmState]) -> Result<LstmState> {
        let Some(first) = states.first() else {
            return shape_err("cannot concat zero states");
        };
        let hdim = first.h.dim(1);
        let mut h = Vec::new();
        let mut c = Vec::new();
        for s in states {
            if s.h.dim(1) != hdim {
                return shape_err("hidden size differs between states");
            }
            h.extend_from_slice(s.h.data());
            c.extend_from_slice(s.c.data());
        }
        let b = h.len() / hdim;
        Ok(LstmState {
            h: Tensor::from_vec(&[b, hdim], h)?,
            c: Tensor::from_vec(&[b, hdim], c)?,
        })
    }

    /// Zero lane `b` in place.
    pub fn reset_lane(&mut self, b: usize) {
        self.h.row_mut(b).fill(0.0);
        self.c.row_mut(b).fill(0.0);
    }
}

/// Activations saved by one forward step.
#[derive(Debug, Clone)]
pub struct LstmStepCache {
    x: Tensor,
    h_prev: Tensor,
    c_prev: Tensor,
    /// `[B, 4H]` post-nonlinearity gate values.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Activations saved by a sequence forward pass.
#[derive(Debug, Clone)]
pub struct LstmSequenceCache {
    steps: Vec<LstmStepCache>,
    resets: Option<Vec<bool>>,
    batch: usize,
}

impl Lstm {
    pub fn new(inputs: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let w_ih = orthogonal(4 * hidden, inputs, 1.0, rng);
        let w_hh = orthogonal(4 * hidden, hidden, 1.0, rng);
        let mut bias = Tensor::zeros(&[4 * hidden]);
        // Forget gate starts open.
        bias.data_mut()[hidden..2 * hidden].fill(1.0);
        Self {
            w_ih: Tensor::from_vec(&[4 * hidden, inputs], w_ih).expect("lstm shape"),
            w_hh: Tensor::from_vec(&[4 * hidden, hidden], w_hh).expect("lstm shape"),
            bias,
        }
    }

    pub fn zeroed(inputs: usize, hidden: usize) -> Self {
        Self {
            w_ih: Tensor::zeros(&[4 * hidden, inputs]),
            w_hh: Tensor::zeros(&[4 * hidden, hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w_ih.dim(1)
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.dim(1)
    }

    fn check_state(&self, s: &LstmState, batch: usize) -> Result<()> {
        let hd = self.hidden();
        s.h.expect_shape(&[batch, hd])?;
        s.c.expect_shape(&[batch, hd])
    }

    /// One step: returns the new state (whose `h` is also the output).
    pub fn step(&self, x: &Tensor, state: &LstmState) -> Result<(LstmState, LstmStepCache)> {
        if x.rank() != 2 || x.dim(1) != self.inputs() {
            return shape_err(format!("lstm expects [B,{}], got {:?}", self.inputs(), x.shape()));
        }
        let b = x.dim(0);
        self.check_state(state, b)?;
        let (hd, id) = (self.hidden(), self.inputs());
        let g4 = 4 * hd;
        let mut gates = vec![0.0; b * g4];
        for row in gates.chunks_mut(g4) {
            row.copy_from_slice(self.bias.data());
        }
        gemm(
            1.0,
            MatRef::new(x.data(), b, id),
            MatRef::new(self.w_ih.data(), g4, id).t(),
            1.0,
            &mut gates,
            g4,
        );
        gemm(
            1.0,
            MatRef::new(state.h.data(), b, hd),
            MatRef::new(self.w_hh.data(), g4, hd).t(),
            1.0,
            &mut gates,
            g4,
        );
        let mut h = vec![0.0; b * hd];
        let mut c = vec![0.0; b * hd];
        let mut tanh_c = vec![0.0; b * hd];
        for n in 0..b {
            let g = &mut gates[n * g4..(n + 1) * g4];
            for j in 0..hd {
                let i = sigmoid(g[j]);
                let f = sigmoid(g[hd + j]);
                let cand = g[2 * hd + j].tanh();
                let o = sigmoid(g[3 * hd + j]);
                g[j] = i;
                g[hd + j] = f;
                g[2 * hd + j] = cand;
                g[3 * hd + j] = o;
                let cn = f * state.c.data()[n * hd + j] + i * cand;
                let tc = cn.tanh();
                c[n * hd + j] = cn;
                tanh_c[n * hd + j] = tc;
                h[n * hd + j] = o * tc;
            }
        }
        let next = LstmState {
            h: Tensor::from_vec(&[b, hd], h)?,
            c: Tensor::from_vec(&[b, hd], c)?,
        };
        let cache = LstmStepCache {
            x: x.clone(),
            h_prev: state.h.clone(),
            c_prev: state.c.clone(),
            gates,
            tanh_c,
        };
        Ok((next, cache))
    }

    /// Backward through one step. `grad_h`/`grad_c` are the total gradients
    /// arriving at the step's output state. Returns `(dx, dh_prev, dc_prev)`.
    pub fn step_backward(
        &self,
        cache: &LstmStepCache,
        grad_h: &Tensor,
        grad_c: &Tensor,
        grads: &mut Lstm,
    ) -> Result<(Tensor, Tensor, Tensor)> {
        let b = cache.x.dim(0);
        let (hd, id) = (self.hidden(), self.inputs());
        let g4 = 4 * hd;
        grad_h.expect_shape(&[b, hd])?;
        grad_c.expect_shape(&[b, hd])?;
        grads.w_ih.expect_shape(self.w_ih.shape())?;
        let mut da = vec![0.0; b * g4];
        let mut dc_prev = vec![0.0; b * hd];
        for n in 0..b {
            let g = &cache.gates[n * g4..(n + 1) * g4];
            let d = &mut da[n * g4..(n + 1) * g4];
            for j in 0..hd {
                let k = n * hd + j;
                let (i, f, cand, o) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
                let tc = cache.tanh_c[k];
                let dh = grad_h.data()[k];
                let dc = grad_c.data()[k] + dh * o * tanh_grad_from_output(tc);
                d[j] = dc * cand * sigmoid_grad_from_output(i);
                d[hd + j] = dc * cache.c_prev.data()[k] * sigmoid_grad_from_output(f);
                d[2 * hd + j] = dc * i * tanh_grad_from_output(cand);
                d[3 * hd + j] = dh * tc * sigmoid_grad_from_output(o);
                dc_prev[k] = dc * f;
            }
        }
        let dam = MatRef::new(&da, b, g4);
        gemm(1.0, dam.t(), MatRef::new(cache.x.data(), b, id), 1.0, grads.w_ih.data_mut(), id);
        gemm(1.0, dam.t(), MatRef::new(cache.h_prev.data(), b, hd), 1.0, grads.w_hh.data_mut(), hd);
        for row in da.chunks(g4) {
            for (acc, v) in grads.bias.data_mut().iter_mut().zip(row) {
                *acc += v;
            }
        }
        let mut dx = vec![0.0; b * id];
        gemm(1.0, dam, MatRef::new(self.w_ih.data(), g4, id), 0.0, &mut dx, id);
        let mut dh_prev = vec![0.0; b * hd];
        gemm(1.0, dam, MatRef::new(self.w_hh.data(), g4, hd), 0.0, &mut dh_prev, hd);
        Ok((
            Tensor::from_vec(&[b, id], dx)?,
            Tensor::from_vec(&[b, hd], dh_prev)?,
            Tensor::from_vec(&[b, hd], dc_prev)?,
        ))
    }

    /// Run `xs: [T, B, I]` from `init`. `resets[t * B + b]` zeroes lane `b`'s
    /// state before step `t` (episode boundaries). Returns `[T, B, H]`
    /// outputs and the final state.
    pub fn forward_sequence(
        &self,
        xs: &Tensor,
        init: &LstmState,
        resets: Option<&[bool]>,
    ) -> Result<(Tensor, LstmState, LstmSequenceCache)> {
        if xs.rank() != 3 || xs.dim(2) != self.inputs() {
            return shape_err(format!("lstm sequence expects [T,B,{}], got {:?}", self.inputs(), xs.shape()));
        }
        let (t_len, b, id, hd) = (xs.dim(0), xs.dim(1), self.inputs(), self.hidden());
        self.check_state(init, b)?;
        if let Some(r) = resets {
            if r.len() != t_len * b {
                return shape_err(format!("reset mask needs {} entries, got {}", t_len * b, r.len()));
            }
        }
        let mut state = init.clone();
        let mut out = Vec::with_capacity(t_len * b * hd);
        let mut steps = Vec::with_capacity(t_len);
        for t in 0..t_len {
            if let Some(r) = resets {
                for lane in 0..b {
                    if r[t * b + lane] {
                        state.reset_lane(lane);
                    }
                }
            }
            let x = Tensor::from_vec(&[b, id], xs.data()[t * b * id..(t + 1) * b * id].to_vec())?;
            let (next, cache) = self.step(&x, &state)?;
            out.extend_from_slice(next.h.data());
            steps.push(cache);
            state = next;
        }
        Ok((
            Tensor::from_vec(&[t_len, b, hd], out)?,
            state,
            LstmSequenceCache {
                steps,
                resets: resets.map(<[bool]>::to_vec),
                batch: b,
            },
        ))
    }

    /// Backpropagation through the whole cached window. `grad_final`
    /// optionally carries gradient into the final state. Returns `dL/dxs`
    /// and the gradient with respect to `init`.
    pub fn backward_sequence(
        &self,
        cache: &LstmSequenceCache,
        grad_outputs: &Tensor,
        grad_final: Option<&LstmState>,
        grads: &mut Lstm,
    ) -> Result<(Tensor, LstmState)> {
        let (t_len, b, id, hd) = (cache.steps.len(), cache.batch, self.inputs(), self.hidden());
        grad_outputs.expect_shape(&[t_len, b, hd])?;
        let (mut dh, mut dc) = match grad_final {
            Some(g) => {
                self.check_state(g, b)?;
                (g.h.clone(), g.c.clone())
            }
            None => (Tensor::zeros(&[b, hd]), Tensor::zeros(&[b, hd])),
        };
        let mut dxs = vec![0.0; t_len * b * id];
        for t in (0..t_len).rev() {
            let go = &grad_outputs.data()[t * b * hd..(t + 1) * b * hd];
            for (a, g) in dh.data_mut().iter_mut().zip(go) {
                *a += g;
            }
            let (dx, mut dh_prev, mut dc_prev) = self.step_backward(&cache.steps[t], &dh, &dc, grads)?;
            dxs[t * b * id..(t + 1) * b * id].copy_from_slice(dx.data());
            if let Some(r) = &cache.resets {
                for lane in 0..b {
                    if r[t * b + lane] {
                        dh_prev.row_mut(lane).fill(0.0);
                        dc_prev.row_mut(lane).fill(0.0);
                    }
                }
            }
            dh = dh_prev;
            dc = dc_prev;
        }
        Ok((Tensor::from_vec(&[t_len, b, id], dxs)?, LstmState { h: dh, c: dc }))
    }
}
