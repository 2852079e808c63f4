//! Numerical laboratory for continuous spontaneous localization (CSL).
//!
//! States are superpositions of particle-number eigenstates over spatial
//! cells. The [`engine`] evolves single trajectories under the stochastic
//! collapse equation, [`ensemble`] aggregates them into outcome statistics
//! and collapse-time studies, [`counterexample`] shows what goes wrong when
//! the noise law ignores the amplitudes, [`branchlab`] checks that disjoint
//! branches of a linear unitary lattice evolution never interact, and
//! [`constraints`] encodes the experimental bounds on collapse couplings.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod logspace;
pub mod model;
pub mod rng;
pub mod scenario;
pub mod engine;
pub mod ensemble;
pub mod counterexample;
pub mod branchlab;
pub mod constraints;
pub mod stats;

pub use error::{Error, Result};
pub use model::{
    make_params, validate, Branch, ModelParams, OccupationVector, RunConfig, Scenario, Scheme,
    SuperposedState, Violation,
};
pub use scenario::{pointer_scenario, scenario_from_probabilities, two_branch_delta_scenario};
