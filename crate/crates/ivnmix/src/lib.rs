//! Separate a mixture of perfect interventions on a known causal Bayesian
//! network using only single-node marginal probabilities.
//!
//! The crate covers the whole pipeline: network representation and I/O
//! ([`bn`], [`bif`], [`io`]), graph surgery and exact marginal inference
//! ([`intervention`], [`marginals`]), mixture modelling and instance
//! generation ([`mixture`]), exact recovery from exact marginals ([`exact`]),
//! the constrained minimax estimator for noisy marginals ([`dimm`]), an EM
//! baseline working from joint samples ([`em`]), and an experiment harness
//! ([`experiment`]).

pub mod bif;
pub mod bn;
pub mod dimm;
pub mod em;
pub mod error;
pub mod exact;
pub mod experiment;
pub mod factor;
pub mod fixtures;
pub mod intervention;
pub mod io;
pub mod marginals;
pub mod mixture;

pub use bn::{Assignment, CausalNetwork, Cpt, NodeSpec};
pub use error::{Error, Result};
pub use intervention::InterventionId;
pub use marginals::{MarginalTable, OracleBundle};
pub use mixture::{MixtureSpec, ProblemInstance};
