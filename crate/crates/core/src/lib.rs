//! Randomness amplification from weak Santha-Vazirani sources whose bias
//! may be correlated with the measuring devices.
//!
//! The crate models no-signaling boxes on the chained Bell scenario,
//! derives the probability-bound chain that ties the Bell value observed
//! under source-correlated settings to the true one, computes the bias
//! thresholds below which amplification survives, solves the adversary's
//! acceptance-probability linear program (with closed-form optimum, dual
//! certificate and an exhaustive enumeration oracle), and runs a seeded
//! Monte Carlo simulation of the amplification protocol under honest and
//! adversarial box suppliers.
//!
//! Modules:
//! - [`sv_source`]: SV sources, extremal sampling, and every bias-derived
//!   probability bound.
//! - [`boxes`]: chain boxes, Bell values, randomness distance, the
//!   ideal/bad decomposition, and the local-box mimicry example.
//! - [`amplification_bounds`]: the single-box bound chain and both
//!   epsilon thresholds.
//! - [`attack_lp`]: the symmetric attack model and its linear program.
//! - [`protocol_sim`]: the protocol simulator and its estimators.

pub mod amplification_bounds;
pub mod attack_lp;
pub mod boxes;
pub mod error;
pub mod numeric;
pub mod output;
pub mod protocol_sim;
pub mod sv_source;

pub use error::{Error, Result};
