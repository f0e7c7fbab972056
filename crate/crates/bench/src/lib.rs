//! Experiment harness for the tenips library: synthetic grids, error
//! metrics and bound diagnostics.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod config;
pub mod experiment;
pub mod metrics;
