//! Filter steps: serial SIR and the distributed resampling algorithms.
//!
//! Every variant runs the same per-frame skeleton on each rank:
//!
//! 1. propagate every local particle through the dynamics model,
//! 2. evaluate log-likelihoods and multiply them into the weights after
//!    subtracting the global maximum,
//! 3. reduce `(Σw·x, Σw, Σw²)` across ranks to get the MMSE estimate and the
//!    global effective sample size,
//! 4. resample and move particles between ranks in the variant's own way.
//!
//! * [`SerialFilter`]: one process, resampling when `N̂_eff` drops below the threshold.
//! * [`rna_step`]: fixed per-rank counts, local resampling, ring exchange of a
//!   fraction of the particles.
//! * [`arna_step`]: RNA whose exchange ratio follows the fraction of ranks
//!   that currently track the object, reshuffling the ring when none does.
//! * [`rpa_step`]: global resampling budget apportioned by local weight mass,
//!   then rebalanced with a [`crate::dlb`] scheduler.
//!
//! With one rank, RNA and RPA reduce to the serial loop bit for bit.

mod ring;
mod rna;
mod rpa;
mod serial;

pub use ring::RingTopology;
pub use rna::{
    arna_ratio, arna_step, calibrate_tracking_threshold, rna_step, ArnaParams, TrackingStatus,
    TAG_RNA,
};
pub use rpa::{rpa_allocate, rpa_allocate_collective, rpa_step, RpaAllocation, TAG_RPA};
pub use serial::SerialFilter;

use crate::dlb::ScheduleError;
use crate::likelihood::{
    apply_log_likelihoods, bin_particles, build_layout, log_likelihoods, EvalCounters,
    LikelihoodMode,
};
use crate::models::{propagate, DynamicsParams, Frame, ModelError, ObservationParams};
use crate::particle::{
    effective_sample_size_of, Particle, ParticleStore, StateVector, WeightError, WeightedSums,
    WireError,
};
use crate::rng::RngStream;
use crate::transport::{allreduce_max, allreduce_sum, Communicator, TransportError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DraError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid filter setup: {0}")]
    InvalidConfig(String),
}

/// Uniform prior used to draw initial (and reinitialized) particles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitPrior {
    pub x: (f64, f64),
    pub y: (f64, f64),
    /// Velocity components are drawn from `[-max_speed, max_speed]`.
    pub max_speed: f64,
    pub i0: (f64, f64),
}

impl InitPrior {
    /// Positions anywhere in a `width × height` frame.
    pub fn whole_frame(width: usize, height: usize, max_speed: f64, i0: (f64, f64)) -> Self {
        Self {
            x: (0.0, width as f64),
            y: (0.0, height as f64),
            max_speed,
            i0,
        }
    }

    /// Positions in a square of half-width `half` around `(cx, cy)`, cut to the frame.
    pub fn window(
        cx: f64,
        cy: f64,
        half: f64,
        width: usize,
        height: usize,
        max_speed: f64,
        i0: (f64, f64),
    ) -> Self {
        Self {
            x: ((cx - half).max(0.0), (cx + half).min(width as f64)),
            y: ((cy - half).max(0.0), (cy + half).min(height as f64)),
            max_speed,
            i0,
        }
    }

    /// Five uniform draws in the order x, y, vx, vy, I0.
    pub fn sample(&self, rng: &mut RngStream) -> StateVector {
        let x = rng.uniform_in(self.x.0, self.x.1);
        let y = rng.uniform_in(self.y.0, self.y.1);
        let vx = rng.uniform_in(-self.max_speed, self.max_speed);
        let vy = rng.uniform_in(-self.max_speed, self.max_speed);
        let i0 = rng.uniform_in(self.i0.0, self.i0.1);
        StateVector::new(x, y, vx, vy, i0)
    }

    /// `n` particles with equal `weight`, tagged from `first_tag` upwards.
    pub fn sample_store(
        &self,
        n: usize,
        weight: f64,
        first_tag: u32,
        rng: &mut RngStream,
    ) -> ParticleStore {
        ParticleStore::from_particles(
            (0..n)
                .map(|i| Particle::new(self.sample(rng), weight, first_tag.wrapping_add(i as u32)))
                .collect(),
        )
    }
}

/// Model and numerical settings shared by all filter variants.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub observation: ObservationParams,
    pub dynamics: DynamicsParams,
    pub prior: InitPrior,
    /// Likelihood worker threads per rank.
    pub threads: usize,
    pub mode: LikelihoodMode,
    /// Resample when `N̂_eff` falls below this fraction of the particle count.
    pub resample_fraction: f64,
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), DraError> {
        self.observation.validate()?;
        if !self.dynamics.is_valid() {
            return Err(DraError::InvalidConfig(
                "dynamics noise must be finite and ≥ 0".into(),
            ));
        }
        if self.threads == 0 {
            return Err(DraError::InvalidConfig(
                "at least one thread is needed".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.resample_fraction) {
            return Err(DraError::InvalidConfig(format!(
                "resample fraction {}",
                self.resample_fraction
            )));
        }
        Ok(())
    }
}

/// One rank's particles and random stream.
#[derive(Debug, Clone)]
pub struct RankState {
    pub store: ParticleStore,
    pub rng: RngStream,
}

/// What one filter step did, identical on every rank.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub estimate: StateVector,
    /// `1/Σw²` over all ranks after global normalization.
    pub neff_global: f64,
    /// True when any rank resampled.
    pub resampled: bool,
    /// Point-to-point links used to move particles, summed over ranks.
    pub links: usize,
    pub particles_moved: usize,
    /// Global particle count after the step.
    pub particles: usize,
    /// Likelihood work done by this rank.
    pub counters: EvalCounters,
    /// True when this rank reinitialized its particles from the prior.
    pub reinitialized: bool,
    /// Ranks flagged as tracking (ARNA only).
    pub tracking_ranks: Option<usize>,
    /// Exchange ratio used (RNA and ARNA).
    pub exchange_ratio: Option<f64>,
}

/// Number of weighted-sum values exchanged per step: `Σw·x` (5), `Σw`, `Σw²`.
const STATS_LEN: usize = WeightedSums::LEN + 1;

fn local_stats(store: &ParticleStore) -> Vec<f64> {
    let mut v = store.weighted_sums().to_vec();
    v.push(store.sum_squared_weights());
    v
}

pub(crate) struct Weighed {
    pub raw_max: f64,
    pub local: Vec<f64>,
    pub global: Vec<f64>,
    pub counters: EvalCounters,
}

impl Weighed {
    fn sums(stats: &[f64]) -> WeightedSums {
        WeightedSums::from_slice(&stats[..WeightedSums::LEN])
    }

    pub fn local_weight(&self) -> f64 {
        self.local[WeightedSums::LEN - 1]
    }

    pub fn global_weight(&self) -> f64 {
        self.global[WeightedSums::LEN - 1]
    }

    pub fn estimate(&self) -> Result<StateVector, WeightError> {
        Self::sums(&self.global).estimate()
    }

    /// `N̂_eff` of the local weights after dividing by their own sum.
    pub fn local_neff(&self, n: usize) -> f64 {
        let w = self.local_weight();
        effective_sample_size_of(self.local[STATS_LEN - 1] / (w * w), n)
    }

    /// `N̂_eff` of all weights after dividing by the global sum.
    pub fn global_neff(&self, n: usize) -> f64 {
        let w = self.global_weight();
        effective_sample_size_of(self.global[STATS_LEN - 1] / (w * w), n)
    }
}

pub(crate) fn propagate_all(
    store: &mut ParticleStore,
    dynamics: &DynamicsParams,
    rng: &mut RngStream,
) {
    for p in store.particles_mut() {
        p.state = propagate(&p.state, dynamics, rng);
    }
}

fn local_log_likelihoods(
    store: &ParticleStore,
    frame: &Frame,
    cfg: &FilterConfig,
) -> (Vec<f64>, EvalCounters) {
    let binning = bin_particles(store, frame.width(), frame.height());
    let layout = build_layout(&binning, cfg.threads);
    log_likelihoods(store, frame, &binning, &layout, &cfg.observation, cfg.mode)
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn shift_of(max: f64) -> f64 {
    if max.is_finite() {
        max
    } else {
        0.0
    }
}

/// Propagation and reweighting. With a communicator the shift is the global
/// maximum log-likelihood and the weighted sums are reduced over all ranks.
pub(crate) fn weigh(
    state: &mut RankState,
    frame: &Frame,
    cfg: &FilterConfig,
    mut comm: Option<&mut dyn Communicator>,
) -> Result<Weighed, DraError> {
    propagate_all(&mut state.store, &cfg.dynamics, &mut state.rng);
    let (ll, counters) = local_log_likelihoods(&state.store, frame, cfg);
    let raw_max = max_of(&ll);
    let global_max = match comm.as_deref_mut() {
        Some(c) => allreduce_max(c, &[raw_max])?[0],
        None => raw_max,
    };
    apply_log_likelihoods(&mut state.store, &ll, shift_of(global_max));
    let local = local_stats(&state.store);
    let global = match comm {
        Some(c) => allreduce_sum(c, &local)?,
        None => local.clone(),
    };
    Ok(Weighed {
        raw_max,
        local,
        global,
        counters,
    })
}

/// Systematic resampling of `store` (weights taken as they are) into `n_out`
/// particles, each carrying `weight`.
pub(crate) fn resample_local(
    store: &ParticleStore,
    n_out: usize,
    weight: f64,
    rng: &mut RngStream,
) -> ParticleStore {
    if n_out == 0 {
        return ParticleStore::default();
    }
    let weights: Vec<f64> = store.weights().collect();
    let idx = crate::particle::systematic_indices(&weights, n_out, rng.uniform());
    let src = store.particles();
    ParticleStore::from_particles(
        idx.into_iter()
            .map(|i| Particle { weight, ..src[i] })
            .collect(),
    )
}

/// Global MMSE estimate from every rank's unnormalized weights.
pub fn global_estimate<C: Communicator + ?Sized>(
    store: &ParticleStore,
    comm: &mut C,
) -> Result<StateVector, DraError> {
    let sums = allreduce_sum(comm, &store.weighted_sums().to_vec())?;
    Ok(WeightedSums::from_slice(&sums).estimate()?)
}

/// Initial particles of `rank` when `n_global` particles are split as evenly as possible.
pub fn initial_rank_state(
    prior: &InitPrior,
    n_global: usize,
    ranks: usize,
    rank: usize,
    seed: u64,
) -> RankState {
    let counts = crate::dlb::balanced_targets(n_global, ranks);
    let first: usize = counts[..rank].iter().sum();
    let mut rng = RngStream::new(seed, crate::rng::rank_stream(rank));
    let store = prior.sample_store(counts[rank], 1.0 / n_global as f64, first as u32, &mut rng);
    RankState { store, rng }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::models::{generate_movie, GroundTruth, LikelihoodForm, Movie, MovieConfig};

    pub fn small_movie(seed: u64, frames: usize) -> (Movie, GroundTruth, MovieConfig) {
        let cfg = MovieConfig {
            n_frames: frames,
            width: 64,
            height: 64,
            initial_position: Some((32.0, 32.0)),
            ..MovieConfig::tracking_benchmark(seed)
        };
        let (m, t) =
            generate_movie(&cfg, &mut RngStream::new(seed, crate::rng::MOVIE_STREAM)).unwrap();
        (m, t, cfg)
    }

    pub fn filter_config(movie: &MovieConfig, truth: &GroundTruth, threads: usize) -> FilterConfig {
        let p = truth.frames[0][0];
        FilterConfig {
            observation: movie
                .observation
                .with_form(LikelihoodForm::BackgroundReferenced),
            dynamics: movie.dynamics,
            prior: InitPrior::window(p.x, p.y, 5.0, movie.width, movie.height, 1.0, (5.0, 15.0)),
            threads,
            mode: LikelihoodMode::Exact,
            resample_fraction: 0.5,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::run_in_process;

    #[test]
    fn prior_sampling_stays_in_bounds() {
        let prior = InitPrior::window(2.0, 30.0, 5.0, 40, 32, 1.0, (5.0, 15.0));
        assert_eq!(prior.x, (0.0, 7.0));
        assert_eq!(prior.y, (25.0, 32.0));
        let s = prior.sample_store(500, 0.002, 10, &mut RngStream::new(1, 0));
        assert_eq!(s.particles()[3].tag, 13);
        for p in s.particles() {
            assert!((0.0..7.0).contains(&p.state.x_hat) && (25.0..32.0).contains(&p.state.y_hat));
            assert!(p.state.vx.abs() <= 1.0 && (5.0..15.0).contains(&p.state.i0));
        }
    }

    #[test]
    fn initial_split_covers_all_tags() {
        let prior = InitPrior::whole_frame(10, 10, 0.0, (1.0, 2.0));
        let mut tags: Vec<u32> = (0..3)
            .flat_map(|r| {
                initial_rank_state(&prior, 10, 3, r, 7)
                    .store
                    .into_particles()
            })
            .map(|p| p.tag)
            .collect();
        tags.sort_unstable();
        assert_eq!(tags, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn global_estimate_examples() {
        let mk = |x: f64, w| Particle::new(StateVector::new(x, 0.0, 0.0, 0.0, 1.0), w, 0);
        let single = ParticleStore::from_particles(vec![mk(3.0, 0.25), mk(7.0, 0.75)]);
        let mut normalized = single.clone();
        normalized.normalize_weights().unwrap();
        let est = run_in_process(1, |c| global_estimate(&single, c).unwrap());
        assert_eq!(est[0], normalized.mmse_estimate().unwrap());

        let est = run_in_process(2, |c| {
            let s = if c.rank() == 0 {
                ParticleStore::from_particles(vec![mk(0.0, 1.0), mk(2.0, 1.0)])
            } else {
                ParticleStore::from_particles(vec![mk(-1.0, 2.0), mk(3.0, 2.0)])
            };
            global_estimate(&s, c).unwrap().x_hat
        });
        assert_eq!(est, vec![1.0, 1.0]);

        let all_zero = ParticleStore::from_particles(vec![mk(1.0, 0.0)]);
        let r = run_in_process(2, |c| global_estimate(&all_zero, c));
        assert!(r
            .iter()
            .all(|r| matches!(r, Err(DraError::Weights(WeightError::AllZeroWeights)))));
    }
}
