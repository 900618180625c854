//! Goal-directed trajectory prediction on planning grids.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baseline_imm;
pub mod error;
pub mod gridworld;
pub mod mixture;
pub mod planner;
pub mod recurrent;
pub mod scenariolab;
pub mod topology;
pub mod training;

pub use error::{Error, Result};
