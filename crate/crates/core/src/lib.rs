//! Parallel particle filtering for object tracking in image sequences.

pub mod dlb;
pub mod dra;
pub mod harness;
pub mod likelihood;
pub mod models;
pub mod particle;
pub mod rng;
pub mod transport;
