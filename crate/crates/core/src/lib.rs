//! Finite-horizon diagnostics for weak mixing of vector sequences.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod ergodic_means;
pub mod error;
pub mod grid;
pub mod hull_geometry;
pub mod integer_sets;
pub mod mixing_analysis;
pub mod sequence_models;
pub mod shift_bounds;
pub mod symbolic_structure;
pub mod verdict;

pub use error::{Error, Result};
