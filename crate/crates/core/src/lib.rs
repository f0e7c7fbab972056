//! Completion of tensors whose entries are missing not at random.
//!
//! The observation propensities are first estimated from the binary mask
//! ([`propensity::convex_pe`] or [`propensity::nonconvex_pe`]); the tensor
//! is then recovered by a fixed-rank HOSVD of the inverse-propensity
//! reweighted observations ([`completion::tenips`]).

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod completion;
pub mod decomposition;
pub mod error;
pub mod io;
pub mod link;
pub mod propensity;
pub mod synthesis;
pub mod tensor;

pub use error::{Error, Result};
