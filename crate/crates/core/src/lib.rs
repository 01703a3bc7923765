//! Transport on load-bearing branching hierarchical lattices.
//!
//! The crate builds base, V and perturbed-V lattices, runs weight-transmission
//! avalanches and packet-percolation experiments on them, and fits the
//! resulting distributions and finite-size scaling laws.

pub mod avalanche;
pub mod dsu;
pub mod ensemble;
pub mod error;
pub mod lattice;
pub mod seed;
pub mod percolation;
pub mod stats;

pub use error::{Error, Result};
