//! Configuration, units and data files.

pub mod config;
pub mod data;
pub mod units;

pub use config::RunConfig;
pub use units::{parse_quantity, Dimension};
