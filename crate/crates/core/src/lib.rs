#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod env;
pub mod error;
pub mod graph;
pub mod messages;
pub mod numcore;
pub mod oracle;
pub mod rl;
pub mod vinrs;

pub use error::{Error, Result};
