use super::{Particle, ParticleStore, WeightError};
use crate::rng::RngStream;

/// Systematic resampling indices for `n_out` draws at phase `u ∈ [0, 1)`.
///
/// Weights need not be normalized: the comb `(u + j)·W/n_out` is laid over
/// the running sum, whose final value `W` is the comb's span. Index `l` is
/// picked once for every comb tooth inside `[c_{l-1}, c_l)`, so zero-weight
/// entries are never chosen and multiplicities are `⌊n·w_l/W⌋` or `⌈n·w_l/W⌉`.
pub fn systematic_indices(weights: &[f64], n_out: usize, u: f64) -> Vec<usize> {
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut running = 0.0;
    for &w in weights {
        running += w;
        cumulative.push(running);
    }
    let total = running;
    let last_positive = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
    let step = total / n_out as f64;

    let mut out = Vec::with_capacity(n_out);
    let mut i = 0;
    for j in 0..n_out {
        let pos = (u + j as f64) * step;
        while i < last_positive && cumulative[i] <= pos {
            i += 1;
        }
        out.push(i);
    }
    out
}

fn gather(store: &ParticleStore, indices: &[usize]) -> ParticleStore {
    let weight = 1.0 / indices.len() as f64;
    let src = store.particles();
    ParticleStore::from_particles(
        indices
            .iter()
            .map(|&i| Particle { weight, ..src[i] })
            .collect(),
    )
}

fn check_input(store: &ParticleStore, n_out: usize) -> Result<(), WeightError> {
    if n_out == 0 {
        return Err(WeightError::InvalidCount(0));
    }
    store.check_normalized()
}

/// Systematic resampling of a normalized store; every output weight is `1/n_out`.
pub fn systematic_resample(
    store: &ParticleStore,
    rng: &mut RngStream,
    n_out: usize,
) -> Result<ParticleStore, WeightError> {
    check_input(store, n_out)?;
    let weights: Vec<f64> = store.weights().collect();
    let indices = systematic_indices(&weights, n_out, rng.uniform());
    Ok(gather(store, &indices))
}

/// i.i.d. (multinomial) resampling; multiplicities are `Binomial(n_out, wˡ)`.
pub fn multinomial_resample(
    store: &ParticleStore,
    rng: &mut RngStream,
    n_out: usize,
) -> Result<ParticleStore, WeightError> {
    check_input(store, n_out)?;
    let mut cumulative = Vec::with_capacity(store.len());
    let mut running = 0.0;
    for w in store.weights() {
        running += w;
        cumulative.push(running);
    }
    let last_positive = store
        .particles()
        .iter()
        .rposition(|p| p.weight > 0.0)
        .unwrap_or(0);
    let indices: Vec<usize> = (0..n_out)
        .map(|_| {
            let target = rng.uniform() * running;
            cumulative
                .partition_point(|&c| c <= target)
                .min(last_positive)
        })
        .collect();
    Ok(gather(store, &indices))
}
