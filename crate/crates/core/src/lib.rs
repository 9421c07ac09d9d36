//! Search-space controlled automated feature engineering.
//!
//! The pipeline narrows the candidate space of an expand-and-reduce feature
//! generator before any candidate is built:
//!
//! - [`assoc`] and [`cluster`] group related features so binary operators are
//!   only applied to pairs that share a cluster.
//! - [`probe`] scores every operator on a small subsample and keeps the best.
//! - [`oper`] enumerates and materializes the remaining candidates.
//! - [`select`] ranks candidates with a variance-penalized boosting gain,
//!   prunes them with successive halving and keeps the top attributed ones.
//!
//! [`pipeline::run`] wires the stages together.

pub mod assoc;
pub mod booster;
pub mod cluster;
pub mod error;
pub mod oper;
pub mod pipeline;
pub mod probe;
pub mod seed;
pub mod select;
pub mod tabular;

pub use error::{Error, Result};
