//! Jumpy skill models: learn a latent skill space, a skill-conditioned
//! low-level policy and a K-step (jumpy) dynamics model from offline
//! trajectories, then harness them zero-shot with CEM-MPC planning on a
//! 2D planar-grasp environment.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod par;
pub mod planner;
pub mod rng;
pub mod skill;
pub mod viz;

pub use error::JumpyError;
