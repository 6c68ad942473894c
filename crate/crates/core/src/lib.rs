//! Hyperspectral unmixing by a multilayer factorization over a pool of
//! candidate endmembers, with an L2,1 data term, L1/2 sparsity and
//! anisotropic total variation on the abundance maps.
//!
//! The pieces compose in order: [`synthgen`] or [`hsi_data`] supply a cube,
//! [`candidates`] builds the pool `Φ`, [`solver`] factorizes, and
//! [`metrics`] scores the result. [`baseline_nmf`] is the comparator and
//! [`cli`] wires everything into the `stvmlu` binary.

pub mod baseline_nmf;
pub mod candidates;
pub mod cli;
pub mod error;
pub mod experiment;
pub mod hsi_data;
pub mod metrics;
pub mod seeds;
pub mod solver;
pub mod synthgen;
pub mod tv_prox;

pub use error::{Result, UnmixError};
