//! Meta-learned deep encoder neural state-space models.
//!
//! The crate covers the whole pipeline: simulating a parameterised van der
//! Pol family ([`vdp`]), the encoder + linear latent SSM ([`nssm`]), MAML and
//! ANIL meta-training and few-shot adaptation ([`meta`]), the supervised and
//! transfer-learning baselines ([`baselines`]), rollout evaluation and the
//! context-size × adaptation-steps grid ([`eval`]), and the experiment
//! runner behind the `metassm` binary ([`cli`]).

pub mod baselines;
pub mod cli;
pub mod diff;
pub mod error;
pub mod eval;
pub mod meta;
pub mod nssm;
pub mod optim;
pub mod provenance;
pub mod vdp;

pub use error::{Error, Result};
