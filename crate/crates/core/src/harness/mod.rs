//! Experiment driver: configuration, movie setup, running a filter variant
//! over a movie, RMSE, CSV output and small scaling sweeps.

mod run;
mod scaling;

pub use run::{
    build_movie, filter_config, run_experiment, run_repeats, FrameRecord, RunOutcome,
    METRICS_HEADER, TIMING_HEADER, TRAJECTORY_HEADER,
};
pub use scaling::{scaling_sweep, ScalingPlan, ScalingRow, SCALING_HEADER};

use crate::dlb::Scheduler;
use crate::dra::DraError;
use crate::models::{LikelihoodForm, ModelError, MovieIoError};
use crate::particle::{StateVector, PARTICLE_BYTES};
use crate::transport::TransportError;
use std::fmt;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("{estimates} estimates for {truth} ground-truth frames")]
    LengthMismatch { estimates: usize, truth: usize },
    #[error(transparent)]
    Dra(#[from] DraError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    MovieIo(#[from] MovieIoError),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algo {
    #[default]
    Serial,
    Rna,
    Arna,
    Rpa,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Serial => "serial",
            Algo::Rna => "rna",
            Algo::Arna => "arna",
            Algo::Rpa => "rpa",
        }
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "serial" | "sir" => Ok(Algo::Serial),
            "rna" => Ok(Algo::Rna),
            "arna" => Ok(Algo::Arna),
            "rpa" => Ok(Algo::Rpa),
            other => Err(format!(
                "unknown algorithm `{other}` (expected serial, rna, arna or rpa)"
            )),
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransportKind {
    /// Ranks are threads of this process.
    #[default]
    InProcess,
    /// Ranks talk over TCP sockets.
    Tcp,
}

impl FromStr for TransportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "inproc" | "in-process" => Ok(TransportKind::InProcess),
            "tcp" => Ok(TransportKind::Tcp),
            other => Err(format!(
                "unknown transport `{other}` (expected inproc or tcp)"
            )),
        }
    }
}

impl fmt::Display for TransportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransportKind::InProcess => "inproc",
            TransportKind::Tcp => "tcp",
        })
    }
}

/// Everything one tracking run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algo: Algo,
    /// Load balancer for RPA; ignored by the other variants.
    pub scheduler: Scheduler,
    pub ranks: usize,
    /// Likelihood worker threads per rank.
    pub threads: usize,
    /// Global particle count.
    pub particles: usize,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    /// Amplitude SNR `I0 / σ_noise`; infinite for noiseless movies.
    pub snr: f64,
    pub sigma_psf: f64,
    /// Fraction of each rank's particles sent along the ring per frame (RNA).
    pub exchange_ratio: f64,
    pub pcsir: bool,
    pub transport: TransportKind,
    /// Peer addresses indexed by rank for multi-process TCP runs. Without
    /// them, TCP ranks run as threads connected over loopback.
    pub hosts: Option<Vec<SocketAddr>>,
    /// This process's rank in a multi-process TCP run.
    pub rank: Option<usize>,
    pub seed: u64,
    pub likelihood: LikelihoodForm,
    /// Draw initial particles in a square of this half-width around the
    /// first true position instead of over the whole frame.
    pub init_window: Option<f64>,
    /// ARNA tracking threshold; calibrated on noise frames when absent.
    pub arna_tau: Option<f64>,
    pub resample_fraction: f64,
    /// Read the movie from this directory instead of generating it.
    pub movie_dir: Option<PathBuf>,
    /// Output directory for the CSV files; nothing is written when absent.
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    /// The single-object benchmark: 512×512, 50 frames, SNR 2, σ_PSF 1.16 px,
    /// 10⁴ particles, serial SIR.
    fn default() -> Self {
        Self {
            algo: Algo::Serial,
            scheduler: Scheduler::SortedGreedy,
            ranks: 1,
            threads: 1,
            particles: 10_000,
            frames: 50,
            width: 512,
            height: 512,
            snr: 2.0,
            sigma_psf: 1.16,
            exchange_ratio: 0.1,
            pcsir: false,
            transport: TransportKind::InProcess,
            hosts: None,
            rank: None,
            seed: 0,
            likelihood: LikelihoodForm::BackgroundReferenced,
            init_window: None,
            arna_tau: None,
            resample_fraction: 0.5,
            movie_dir: None,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidConfig(m));
        if self.ranks == 0 {
            return bad("need at least one rank".into());
        }
        if self.threads == 0 {
            return bad("need at least one thread".into());
        }
        if self.frames == 0 {
            return bad("need at least one frame".into());
        }
        if self.particles < self.ranks {
            return bad(format!(
                "{} particles cannot cover {} ranks",
                self.particles, self.ranks
            ));
        }
        if self.width == 0 || self.height == 0 {
            return bad(format!("image size {}x{}", self.width, self.height));
        }
        if !(self.snr > 0.0) {
            return bad(format!("snr {}", self.snr));
        }
        if !(self.sigma_psf > 0.0 && self.sigma_psf.is_finite()) {
            return bad(format!("sigma_psf {}", self.sigma_psf));
        }
        if !(0.0..=1.0).contains(&self.exchange_ratio) {
            return bad(format!("exchange ratio {}", self.exchange_ratio));
        }
        if self.algo == Algo::Serial && self.ranks != 1 {
            return bad("the serial filter runs on one rank".into());
        }
        if matches!(self.algo, Algo::Rna | Algo::Arna) && !self.particles.is_multiple_of(self.ranks)
        {
            return bad(format!(
                "RNA keeps N/P particles per rank; {} is not divisible by {}",
                self.particles, self.ranks
            ));
        }
        if let Some(hosts) = &self.hosts {
            if self.transport != TransportKind::Tcp {
                return bad("a host list needs the tcp transport".into());
            }
            if hosts.len() != self.ranks {
                return bad(format!(
                    "{} hosts listed for {} ranks",
                    hosts.len(),
                    self.ranks
                ));
            }
            match self.rank {
                Some(r) if r < self.ranks => {}
                Some(r) => return bad(format!("rank {r} of {}", self.ranks)),
                None => return bad("a host list needs this process's rank".into()),
            }
        }
        Ok(())
    }
}

/// One frame of the run log plus its wall-clock time.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub frame: usize,
    pub algo: Algo,
    /// `None` for variants without a load balancer.
    pub scheduler: Option<Scheduler>,
    pub ranks: usize,
    pub threads: usize,
    pub neff_global: f64,
    pub links: usize,
    pub particles_moved: usize,
    pub est_x: f64,
    pub est_y: f64,
    pub rmse_running: f64,
    pub wall_ms: f64,
}

/// `√(mean_k ‖est_k − truth_k‖²)` over paired frames, in pixels.
pub fn compute_rmse(estimates: &[(f64, f64)], truth: &[(f64, f64)]) -> Result<f64, HarnessError> {
    if estimates.len() != truth.len() {
        return Err(HarnessError::LengthMismatch {
            estimates: estimates.len(),
            truth: truth.len(),
        });
    }
    if estimates.is_empty() {
        return Ok(0.0);
    }
    let sq: f64 = estimates
        .iter()
        .zip(truth)
        .map(|(e, t)| (e.0 - t.0).powi(2) + (e.1 - t.1).powi(2))
        .sum();
    Ok((sq / estimates.len() as f64).sqrt())
}

/// Position part of a sequence of state estimates.
pub fn positions(estimates: &[StateVector]) -> Vec<(f64, f64)> {
    estimates.iter().map(|s| (s.x_hat, s.y_hat)).collect()
}

/// Bytes needed to hold `n` particles: five state doubles, the weight and a tag.
pub fn memory_footprint(n: u64) -> u64 {
    n * PARTICLE_BYTES as u64
}
