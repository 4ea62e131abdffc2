//! Weight evaluation over image data.
//!
//! Particles are binned by the pixel their position falls in, the occupied
//! pixels are tiled into a checkerboard that assigns each tile to a worker
//! thread, and each worker loads one image patch per occupied pixel and
//! reuses it for every particle in that pixel. The piecewise-constant mode
//! (pcSIR) goes further and evaluates the likelihood once per pixel.

mod binning;
mod checkerboard;
mod evaluate;
mod patch;

pub use binning::{bin_particles, PixelBin, PixelBinning};
pub use checkerboard::{build_layout, thread_grid, CheckerboardLayout};
pub use evaluate::{
    apply_log_likelihoods, evaluate_weights_exact, evaluate_weights_pcsir, log_likelihoods,
    EvalCounters, LikelihoodMode,
};
pub use patch::{load_patch, ImagePatch};
