//! Dynamics, appearance/observation model and synthetic fluorescence movies.

mod dynamics;
mod io;
mod observation;
mod synth;

pub use dynamics::{propagate, DynamicsParams};
pub use io::{
    frame_file, read_ground_truth, read_movie, write_ground_truth, write_movie,
    write_movie_with_truth, MovieIoError, SIDECAR, TRUTH_CSV,
};
pub use observation::{
    log_likelihood, log_likelihood_in, psf_intensity, psf_profile, snr_to_db, Frame,
    LikelihoodForm, ObservationParams, PixelSource,
};
pub use synth::{
    generate_movie, render_frame, GroundTruth, Movie, MovieConfig, MovieMeta, TruthPoint,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("state position ({x}, {y}) lies outside the {width}x{height} image")]
    OutOfBounds {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
}
