//! Novelty-driven exploration for reinforcement learning with a BiGAN novelty scorer.
//!
//! The crate bundles a small reverse-mode autodiff engine, three sparse-reward toy
//! environments, PPO with separate extrinsic/intrinsic value heads, BiGAN/RND/VAE novelty
//! estimators, intrinsic-reward normalization with an episodic start-state memory, and the
//! experiment harness that ties them together.

pub mod autodiff;
pub mod checkpoint;
pub mod env;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod nn;
pub mod novelty;
pub mod optim;
pub mod ppo;
pub mod reward;
pub mod rng;
pub mod tensor;

pub use autodiff::{Tape, Var};
pub use error::{Error, Result};
pub use tensor::{Grads, ParamSet, Tensor};
