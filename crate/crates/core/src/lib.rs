//! Core algorithms for a user-centric cell-free massive MIMO handoff lab.
//!
//! The crate simulates a mobile user served by a cluster of access points,
//! models channel aging and correlated shadowing, evaluates closed-form
//! achievable rates under conjugate beamforming, and wraps the whole thing
//! into a decision environment where a soft actor-critic agent learns when
//! to hand the user off between access points.
//!
//! The crate is `no_std` (with `alloc`) so the numerics stay free of
//! platform dependencies; all file formats, CLI handling, and timing live
//! in the companion `cfho-cli` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod bessel;
pub mod checkpoint;
pub mod complex;
pub mod config;
pub mod env;
pub mod math;
pub mod mobility;
pub mod nn;
pub mod propagation;
pub mod rate;
pub mod rng;
pub mod sac;
pub mod scaling;

pub use config::ScenarioConfig;
pub use env::{HandoffEnv, ObsMode, StepOutcome};
pub use rng::RngStream;
