//! Distribution-grid monitoring from sparse measurements with feed-forward
//! networks, benchmarked against weighted-least-squares state estimation.

pub mod ann;
pub mod catalog;
pub mod cli;
pub mod correction;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod grid;
pub mod hash;
pub mod measurement;
pub mod monitor;
pub mod pipeline;
pub mod powerflow;
pub mod scenario;
pub mod seeds;
pub mod wls;

pub use error::{Error, Result};
