//! Particle representation, weight bookkeeping, resampling and estimators.

mod resample;
mod weights;
mod wire;

pub use resample::{multinomial_resample, systematic_indices, systematic_resample};
pub use weights::{effective_sample_size_of, WeightedSums};
pub use wire::{decode_particles, encode_particles, WireError, PARTICLE_BYTES};

use thiserror::Error;

/// Tolerance on `|Σw − 1|` for operations that require normalized weights.
pub const NORMALIZED_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("all particle weights are zero")]
    AllZeroWeights,
    #[error("weights are not normalized (sum = {sum})")]
    NotNormalized { sum: f64 },
    #[error("invalid particle count {0}")]
    InvalidCount(usize),
    #[error("particle store is empty")]
    Empty,
    #[error("store capacity {capacity} exceeded")]
    CapacityExceeded { capacity: usize },
}

/// Object state: position (pixels), velocity (pixels/frame) and intensity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateVector {
    pub x_hat: f64,
    pub y_hat: f64,
    pub vx: f64,
    pub vy: f64,
    pub i0: f64,
}

impl StateVector {
    pub const DIM: usize = 5;

    pub fn new(x_hat: f64, y_hat: f64, vx: f64, vy: f64, i0: f64) -> Self {
        Self {
            x_hat,
            y_hat,
            vx,
            vy,
            i0,
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.x_hat, self.y_hat, self.vx, self.vy, self.i0]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }

    /// All components finite and a nonnegative intensity.
    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite()) && self.i0 >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Particle {
    pub state: StateVector,
    pub weight: f64,
    /// Lineage identifier; copied from the ancestor when resampled.
    pub tag: u32,
}

impl Particle {
    pub fn new(state: StateVector, weight: f64, tag: u32) -> Self {
        Self { state, weight, tag }
    }
}

/// The weighted particle set held by one rank.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParticleStore {
    particles: Vec<Particle>,
    capacity: usize,
}

impl ParticleStore {
    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            particles: Vec::with_capacity(capacity),
            capacity,
        }
    }

    /// Builds a store whose capacity equals the number of particles given.
    pub fn from_particles(particles: Vec<Particle>) -> Self {
        let capacity = particles.len();
        Self {
            particles,
            capacity,
        }
    }

    /// Builds a store from raw weights with default states; handy in tests and docs.
    pub fn from_weights(weights: &[f64]) -> Self {
        Self::from_particles(
            weights
                .iter()
                .enumerate()
                .map(|(i, &w)| Particle::new(StateVector::default(), w, i as u32))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn set_capacity(&mut self, capacity: usize) {
        self.capacity = capacity.max(self.particles.len());
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn particles_mut(&mut self) -> &mut [Particle] {
        &mut self.particles
    }

    pub fn into_particles(self) -> Vec<Particle> {
        self.particles
    }

    pub fn push(&mut self, particle: Particle) -> Result<(), WeightError> {
        if self.particles.len() >= self.capacity {
            return Err(WeightError::CapacityExceeded {
                capacity: self.capacity,
            });
        }
        self.particles.push(particle);
        Ok(())
    }

    pub fn extend(
        &mut self,
        particles: impl IntoIterator<Item = Particle>,
    ) -> Result<(), WeightError> {
        for p in particles {
            self.push(p)?;
        }
        Ok(())
    }

    /// Removes the last `count` particles and returns them in store order.
    pub fn split_off_tail(&mut self, count: usize) -> Vec<Particle> {
        let at = self.particles.len().saturating_sub(count);
        self.particles.split_off(at)
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.particles.iter().map(|p| p.weight)
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights().fold(0.0, |acc, w| acc + w)
    }

    pub fn set_uniform_weights(&mut self, weight: f64) {
        for p in &mut self.particles {
            p.weight = weight;
        }
    }

    /// Divides every weight by `total`.
    pub fn normalize_by(&mut self, total: f64) {
        for p in &mut self.particles {
            p.weight /= total;
        }
    }

    /// `w ← w / Σw`.
    pub fn normalize_weights(&mut self) -> Result<(), WeightError> {
        let total = self.weight_sum();
        if !(total > 0.0) {
            return Err(WeightError::AllZeroWeights);
        }
        self.normalize_by(total);
        Ok(())
    }

    fn check_normalized(&self) -> Result<(), WeightError> {
        if self.particles.is_empty() {
            return Err(WeightError::Empty);
        }
        let sum = self.weight_sum();
        if (sum - 1.0).abs() > NORMALIZED_TOLERANCE {
            return Err(WeightError::NotNormalized { sum });
        }
        Ok(())
    }

    /// `N̂_eff = 1 / Σ w²` on normalized weights, clamped to `[1, N]`.
    pub fn effective_sample_size(&self) -> Result<f64, WeightError> {
        self.check_normalized()?;
        Ok(effective_sample_size_of(
            self.sum_squared_weights(),
            self.len(),
        ))
    }

    pub fn sum_squared_weights(&self) -> f64 {
        self.weights().fold(0.0, |acc, w| acc + w * w)
    }

    /// Posterior-mean state `Σ wⁱ xⁱ` over normalized weights.
    pub fn mmse_estimate(&self) -> Result<StateVector, WeightError> {
        self.check_normalized()?;
        let mut acc = [0.0; 5];
        for p in &self.particles {
            for (a, v) in acc.iter_mut().zip(p.state.to_array()) {
                *a += p.weight * v;
            }
        }
        Ok(StateVector::from_array(acc))
    }

    /// Per-component `Σ w·x` plus `Σ w`, accumulated in store order.
    pub fn weighted_sums(&self) -> WeightedSums {
        WeightedSums::of(&self.particles)
    }
}
