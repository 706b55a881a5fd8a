//! Minimal differentiable numeric core: dense `f64` tensors, convolution,
//! affine and LSTM layers with hand-written backward passes, Adam,
//! categorical sampling, a central-difference gradient checker and the
//! binary checkpoint format.
//!
//! Layers own their parameters and double as their own gradient buffers:
//! `backward` accumulates into a zeroed clone obtained from
//! [`module::zeros_like`].

pub mod activation;
pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod dense;
pub mod error;
pub mod gradcheck;
pub mod linalg;
pub mod lstm;
pub mod module;
pub mod softmax;
pub mod tensor;

pub use adam::Adam;
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use conv::Conv2d;
pub use dense::Dense;
pub use error::{NumError, Result};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use lstm::{Lstm, LstmSequenceCache, LstmState, LstmStepCache};
pub use module::{checksum, zeros_like, Module, ParamMap};
pub use softmax::{softmax, softmax_sample, CategoricalSample};
pub use tensor::Tensor;
