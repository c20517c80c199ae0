//! Representation transfer across low-rank MDPs.
//!
//! The crate is organised bottom-up:
//!
//! - [`mdp`]: finite-latent episodic Block MDPs with rich (codeword) observations,
//!   online and generative access, exact dynamic-programming oracles and coverage
//!   diagnostics.
//! - [`envs`]: combination-lock constructors and the transfer suites built from them,
//!   including the two-source lower-bound family.
//! - [`features`]: finite decoder classes, learned linear-MDP models and the single and
//!   multi-task maximum-likelihood representation learners.
//! - [`lsvi`]: LSVI-UCB with elliptical bonuses and regret accounting.
//! - [`explore`]: reward-free Rep-UCB model learning and exploratory policy search.
//! - [`transfer`]: cross-sampling, the generative and online transfer pipelines,
//!   baselines and the lower-bound verifier.
//! - [`harness`]: experiment configs, orchestration and result emission.

pub mod dataset;
pub mod envs;
pub mod error;
pub mod explore;
pub mod features;
pub mod harness;
pub mod linalg;
pub mod lsvi;
pub mod mdp;
pub mod rng;
pub mod transfer;

pub use error::{Error, Result};
