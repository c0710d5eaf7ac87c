#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dmd;
pub mod error;
pub mod koopman;
pub mod linalg;
pub mod snapshots;
pub mod systems;
