//! Trust-region policy optimization where the actor and critic are low-rank
//! matrices indexed by a discretized state grid.
//!
//! The actor is a Gaussian policy whose mean (and optionally standard
//! deviation) at grid cell `(i, j)` is the entry `(L R)_{ij}` of a rank-`K`
//! factorization. Each iteration samples episodes, estimates advantages from
//! the low-rank critic, takes a KL-constrained natural-gradient step on the
//! actor and then runs a few gradient steps on the critic.

pub mod buffer;
pub mod critic;
pub mod discretizer;
pub mod envs;
pub mod error;
pub mod experiment;
pub mod factorization;
pub mod par;
pub mod policy;
pub mod stats;
pub mod trainer;
pub mod trustregion;
pub mod vecops;

pub use error::{Error, Result};
