use super::{
    initial_rank_state, resample_local, weigh, DraError, FilterConfig, RankState, StepReport,
};
use crate::models::Frame;
use crate::particle::ParticleStore;

/// Single-process SIR filter: propagate, weight, estimate, normalize, and
/// resample systematically when `N̂_eff` drops below the threshold.
#[derive(Debug, Clone)]
pub struct SerialFilter {
    cfg: FilterConfig,
    state: RankState,
    n: usize,
}

impl SerialFilter {
    /// Draws `n` particles from the prior using the rank-0 stream of `seed`.
    pub fn new(cfg: FilterConfig, n: usize, seed: u64) -> Result<Self, DraError> {
        cfg.validate()?;
        if n == 0 {
            return Err(DraError::InvalidConfig("need at least one particle".into()));
        }
        let state = initial_rank_state(&cfg.prior, n, 1, 0, seed);
        Ok(Self { cfg, state, n })
    }

    pub fn store(&self) -> &ParticleStore {
        &self.state.store
    }

    pub fn config(&self) -> &FilterConfig {
        &self.cfg
    }

    pub fn step(&mut self, frame: &Frame) -> Result<StepReport, DraError> {
        let n = self.n;
        let w = weigh(&mut self.state, frame, &self.cfg, None)?;
        let total = w.global_weight();
        let mut report = StepReport {
            estimate: Default::default(),
            neff_global: 1.0,
            resampled: false,
            links: 0,
            particles_moved: 0,
            particles: n,
            counters: w.counters,
            reinitialized: false,
            tracking_ranks: None,
            exchange_ratio: None,
        };
        if !(total > 0.0) {
            log::warn!("all particle weights vanished; redrawing from the prior");
            self.state.store =
                self.cfg
                    .prior
                    .sample_store(n, 1.0 / n as f64, 0, &mut self.state.rng);
            report.estimate = self.state.store.weighted_sums().estimate()?;
            report.neff_global = n as f64;
            report.reinitialized = true;
            return Ok(report);
        }
        report.estimate = w.estimate()?;
        self.state.store.normalize_by(total);
        report.neff_global = w.global_neff(n);
        if report.neff_global < self.cfg.resample_fraction * n as f64 {
            self.state.store =
                resample_local(&self.state.store, n, 1.0 / n as f64, &mut self.state.rng);
            report.resampled = true;
        }
        Ok(report)
    }
}
