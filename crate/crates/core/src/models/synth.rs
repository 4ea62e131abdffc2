//! Synthetic single-channel fluorescence movies with known trajectories.

use super::{
    propagate, psf_profile, DynamicsParams, Frame, LikelihoodForm, ModelError, ObservationParams,
};
use crate::particle::StateVector;
use crate::rng::RngStream;
use serde::{Deserialize, Serialize};

/// Ground-truth position and intensity of one object in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthPoint {
    pub x: f64,
    pub y: f64,
    pub i0: f64,
}

/// Object trajectories, indexed `[frame][object]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub width: usize,
    pub height: usize,
    /// Nominal object intensity; sets the noise level `I0 / SNR`.
    pub reference_intensity: f64,
    pub frames: Vec<Vec<TruthPoint>>,
}

impl GroundTruth {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn n_objects(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    /// Trajectory of one object as `(x, y)` per frame.
    pub fn track(&self, object: usize) -> Vec<(f64, f64)> {
        self.frames
            .iter()
            .map(|f| (f[object].x, f[object].y))
            .collect()
    }
}

/// Sidecar metadata written next to the raw frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovieMeta {
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    pub snr: f64,
    pub sigma_psf: f64,
    pub i_bg: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Movie {
    pub meta: MovieMeta,
    pub frames: Vec<Frame>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MovieConfig {
    pub n_frames: usize,
    pub n_objects: usize,
    pub width: usize,
    pub height: usize,
    pub observation: ObservationParams,
    pub snr: f64,
    pub intensity: f64,
    pub dynamics: DynamicsParams,
    /// Initial speed components are drawn from `[-max_speed, max_speed]`.
    pub max_speed: f64,
    /// Overrides the random initial velocity of every object.
    pub initial_velocity: Option<(f64, f64)>,
    /// Overrides the random initial position of every object.
    pub initial_position: Option<(f64, f64)>,
    pub seed: u64,
}

impl MovieConfig {
    /// Single object, 50 frames of 512×512 at SNR 2 with σ_PSF = 1.16 px.
    pub fn tracking_benchmark(seed: u64) -> Self {
        let intensity = 10.0;
        let snr = 2.0;
        Self {
            n_frames: 50,
            n_objects: 1,
            width: 512,
            height: 512,
            observation: ObservationParams {
                sigma_psf: 1.16,
                sigma_xi: intensity / snr,
                i_bg: 1.0,
                form: LikelihoodForm::Residual,
            },
            snr,
            intensity,
            dynamics: DynamicsParams::for_intensity(intensity),
            max_speed: 1.0,
            initial_velocity: None,
            initial_position: None,
            seed,
        }
    }

    pub fn noise_sigma(&self) -> f64 {
        self.intensity / self.snr
    }
}

fn reflect(pos: &mut f64, vel: &mut f64, len: usize) {
    let hi = (len - 1) as f64;
    for _ in 0..4 {
        if *pos < 0.0 {
            *pos = -*pos;
            *vel = -*vel;
        } else if *pos > hi {
            *pos = 2.0 * hi - *pos;
            *vel = -*vel;
        } else {
            return;
        }
    }
    *pos = pos.clamp(0.0, hi);
}

/// Renders frame `k`: every object's PSF profile over the background, plus
/// additive Gaussian noise of std `I0 / snr`, clamped at zero. An infinite
/// `snr` renders the noiseless image without drawing from `rng`.
pub fn render_frame(
    truth: &GroundTruth,
    k: usize,
    params: &ObservationParams,
    snr: f64,
    rng: &mut RngStream,
) -> Result<Frame, ModelError> {
    if !(snr > 0.0) {
        return Err(ModelError::InvalidParams(format!("snr = {snr}")));
    }
    let objects = truth
        .frames
        .get(k)
        .ok_or_else(|| ModelError::InvalidParams(format!("frame {k} out of range")))?;
    let sigma = if snr.is_infinite() {
        0.0
    } else {
        truth.reference_intensity / snr
    };
    let (w, h) = (truth.width, truth.height);
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut v = params.i_bg;
            for o in objects {
                v += psf_profile(x as f64, y as f64, o.x, o.y, o.i0, params.sigma_psf);
            }
            if sigma > 0.0 {
                v += sigma * rng.normal();
            }
            pixels.push(v.max(0.0));
        }
    }
    Frame::new(w, h, pixels)
}

/// Draws trajectories with the configured dynamics (reflecting at the image
/// border) and renders every frame from the same stream.
pub fn generate_movie(
    config: &MovieConfig,
    rng: &mut RngStream,
) -> Result<(Movie, GroundTruth), ModelError> {
    if config.n_frames == 0 || config.width == 0 || config.height == 0 {
        return Err(ModelError::InvalidParams("empty movie".into()));
    }
    if !config.dynamics.is_valid() {
        return Err(ModelError::InvalidParams("negative dynamics noise".into()));
    }
    config.observation.validate()?;

    let margin = config.observation.kernel_halfwidth() as f64;
    let span = |len: usize| {
        let hi = (len - 1) as f64;
        if hi > 2.0 * margin {
            (margin, hi - margin)
        } else {
            (0.0, hi)
        }
    };
    let (xlo, xhi) = span(config.width);
    let (ylo, yhi) = span(config.height);
    let mut states: Vec<StateVector> = (0..config.n_objects)
        .map(|_| {
            let x = rng.uniform_in(xlo, xhi);
            let y = rng.uniform_in(ylo, yhi);
            let vx = rng.uniform_in(-config.max_speed, config.max_speed);
            let vy = rng.uniform_in(-config.max_speed, config.max_speed);
            let (vx, vy) = config.initial_velocity.unwrap_or((vx, vy));
            let (x, y) = config.initial_position.unwrap_or((x, y));
            StateVector::new(x, y, vx, vy, config.intensity)
        })
        .collect();

    let mut truth_frames = Vec::with_capacity(config.n_frames);
    for k in 0..config.n_frames {
        if k > 0 {
            for s in &mut states {
                let mut next = propagate(s, &config.dynamics, rng);
                reflect(&mut next.x_hat, &mut next.vx, config.width);
                reflect(&mut next.y_hat, &mut next.vy, config.height);
                *s = next;
            }
        }
        truth_frames.push(
            states
                .iter()
                .map(|s| TruthPoint {
                    x: s.x_hat,
                    y: s.y_hat,
                    i0: s.i0,
                })
                .collect(),
        );
    }
    let truth = GroundTruth {
        width: config.width,
        height: config.height,
        reference_intensity: config.intensity,
        frames: truth_frames,
    };

    let frames = (0..config.n_frames)
        .map(|k| render_frame(&truth, k, &config.observation, config.snr, rng))
        .collect::<Result<Vec<_>, _>>()?;
    let meta = MovieMeta {
        width: config.width,
        height: config.height,
        n_frames: config.n_frames,
        snr: config.snr,
        sigma_psf: config.observation.sigma_psf,
        i_bg: config.observation.i_bg,
        seed: config.seed,
    };
    Ok((Movie { meta, frames }, truth))
}
