//! Identity/style disentangling iris synthesis and its evaluation pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attribute;
pub mod error;
pub mod eval;
pub mod image;
pub mod irisproc;
pub mod metrics;
pub mod models;
pub mod seed;
pub mod synthesis;
pub mod toydata;
pub mod training;
pub mod warp;

pub use error::{Error, Result};
