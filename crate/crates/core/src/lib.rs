#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod data;
pub mod datasets;
pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod models;
pub mod nn;
pub mod run;
pub mod training;

pub use error::{Error, Result};
