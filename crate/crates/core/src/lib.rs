#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod data;
pub mod error;
pub mod flatness;
pub mod jam;
pub mod kv;
pub mod model;
pub mod objective;
pub mod seq;
pub mod tensor;

pub use error::{Error, Result};
