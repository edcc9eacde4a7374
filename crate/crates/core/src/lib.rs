//! Adaptive model-based value expansion (AdaMVE) on FourRoom gridworlds.
//!
//! The crate is organised bottom-up:
//!
//! - [`env`]: the FourRoom MDP family (geometry, transitions, rewards, episodes).
//! - [`models`]: hand-crafted and learned dynamics models, and the W-reward.
//! - [`approx`]: tabular and MLP approximators, Adam, target copies, replay buffer,
//!   checkpoints.
//! - [`error_fn`]: TD learning of h-step cumulative model errors.
//! - [`expansion`]: model rollouts, softmax horizon weights and the mixed target.
//! - [`agent`]: the DQN / MVE / AdaMVE training loop.
//! - [`dp`]: exact finite-horizon dynamic programming used as ground truth.
//! - [`harness`]: experiment configuration, seeded runs, CSV output, heatmaps,
//!   transfer and the DP report.

pub mod agent;
pub mod approx;
pub mod dp;
pub mod env;
pub mod error;
pub mod error_fn;
pub mod expansion;
pub mod harness;
pub mod models;
pub mod rng;

pub use error::{Error, Result};
