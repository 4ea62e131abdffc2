use super::{Particle, StateVector, WeightError};

/// `N̂_eff = 1 / Σw²` for normalized weights, clamped to `[1, n]` against rounding.
pub fn effective_sample_size_of(sum_squared: f64, n: usize) -> f64 {
    if !(sum_squared > 0.0) {
        return 1.0;
    }
    (1.0 / sum_squared).clamp(1.0, n.max(1) as f64)
}

/// Running `Σ w·x` per state component together with `Σ w`.
///
/// This is the quantity reduced across ranks for the global estimate; the
/// flat layout `[Σw·x̂, Σw·ŷ, Σw·vx, Σw·vy, Σw·I0, Σw]` is what goes on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WeightedSums {
    pub moments: [f64; 5],
    pub weight: f64,
}

impl WeightedSums {
    pub const LEN: usize = 6;

    pub fn of(particles: &[Particle]) -> Self {
        let mut out = Self::default();
        for p in particles {
            for (m, v) in out.moments.iter_mut().zip(p.state.to_array()) {
                *m += p.weight * v;
            }
            out.weight += p.weight;
        }
        out
    }

    pub fn to_vec(self) -> Vec<f64> {
        let mut v = self.moments.to_vec();
        v.push(self.weight);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        assert_eq!(v.len(), Self::LEN, "weighted sums carry six values");
        let mut moments = [0.0; 5];
        moments.copy_from_slice(&v[..5]);
        Self {
            moments,
            weight: v[5],
        }
    }

    /// Weighted mean `Σw·x / Σw`.
    pub fn estimate(&self) -> Result<StateVector, WeightError> {
        if !(self.weight > 0.0) {
            return Err(WeightError::AllZeroWeights);
        }
        Ok(StateVector::from_array(
            self.moments.map(|m| m / self.weight),
        ))
    }
}
