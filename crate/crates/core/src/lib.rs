//! Population-coded spiking actor networks (PopSAN) for continuous control.
//!
//! The crate is organised bottom-up:
//!
//! - [`snn`]: current-based LIF layers, forward stepping and surrogate-gradient BPTT.
//! - [`popsan`]: Gaussian population encoder, spiking core and rate decoder, with
//!   analytic gradients for every trainable tensor.
//! - [`mlp`], [`optim`], [`replay`], [`td3`], [`actor`], [`train`]: the off-policy
//!   actor-critic harness that trains either a spiking or a feedforward actor.
//! - [`envs`]: small deterministic control tasks.
//! - [`energy`]: MAC/AC operation counting and energy estimates.
//! - [`checkpoint`]: the `PSAN` tensor container.

pub mod actor;
pub mod checkpoint;
pub mod energy;
pub mod envs;
pub mod error;
pub mod mlp;
pub mod optim;
pub mod params;
pub mod popsan;
pub mod replay;
pub mod rollout;
pub mod snn;
pub mod td3;
pub mod train;

pub use error::{Error, Result};
pub use params::Parameters;
