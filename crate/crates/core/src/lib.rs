//! Adversarial-feedback fine-tuning for tiny autoregressive sequence models.
//!
//! A generator policy and a discriminator classifier share a vocabulary and are
//! trained in alternation: the discriminator learns to separate expert
//! demonstrations (label 1) from fresh generator samples (label 0), and its
//! score becomes the generator's reward. Three generator update rules are
//! provided:
//!
//! * [`reinforce`]: Monte Carlo policy gradient with reward-to-go and optional
//!   rollout rewards for intermediate positions,
//! * [`ppo`]: clipped sequence-level PPO with a KL penalty to a frozen
//!   reference policy and an optional pretraining log-likelihood term,
//! * [`gumbel`]: a fully differentiable path through Gumbel-Softmax relaxed
//!   tokens fed to the discriminator by one-hot matrix multiplication.
//!
//! Everything numeric runs on the small reverse-mode tape in [`diffcore`].
//! The crate is `no_std` and only needs `alloc`; file formats, the CLI and the
//! judge transport live in the `rlgaf` crate.
#![no_std]

extern crate alloc;

pub mod adversarial;
pub mod diffcore;
pub mod discriminator;
pub mod error;
pub mod eval;
pub mod gumbel;
pub mod ppo;
pub mod reinforce;
pub mod rng;
pub mod seqmodel;
pub mod tasks;

pub use error::{Error, Result};
pub use rng::{RngRoot, StreamRng};
