//! Curiosity-driven reinforcement learning laboratory: β-VAE pretraining,
//! five interchangeable state encoders, a forward-model curiosity signal,
//! recurrent PPO and threshold curricula over raycast arenas.

pub mod analysis;
pub mod config;
pub mod curriculum;
pub mod dataset;
pub mod encoders;
pub mod error;
pub mod experiment;
pub mod icm;
pub mod nets;
pub mod plot;
pub mod policy;
pub mod ppo;
pub mod vae;

pub use error::{LabError, Result};
