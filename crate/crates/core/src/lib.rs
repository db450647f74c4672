//! Learned cost-map navigation for off-road ground vehicles.

// `!(x > 0.0)` range checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod gridmap;
pub mod io_util;
pub mod model;
pub mod nav;
pub mod sim;
pub mod tensor;
pub mod train;
