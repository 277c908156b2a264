#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod basis;
#[cfg(feature = "cli")]
pub mod cli;
pub mod cohort;
pub mod config;
pub mod design;
pub mod error;
pub mod evaluate;
pub mod likelihood;
pub mod model;
pub mod predictor;
pub mod sampler;
pub mod trajectory;
