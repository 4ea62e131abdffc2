use super::{resample_local, weigh, DraError, FilterConfig, RankState, StepReport};
use crate::dlb::{classify, LoadReport, RouteSchedule, Scheduler};
use crate::models::Frame;
use crate::particle::{decode_particles, encode_particles, WeightError};
use crate::transport::{
    allgather_f64, wait_all, Communicator, RankId, Source, Tag, TransportError,
};

/// Message tag of particle transfers.
pub const TAG_RPA: Tag = 2;

/// Number of particles each rank draws in the global resampling step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RpaAllocation {
    pub counts: Vec<usize>,
}

/// Largest-remainder apportionment of `n` proportional to `masses`; ties go
/// to the lower rank.
pub fn rpa_allocate(masses: &[f64], n: usize) -> Result<RpaAllocation, DraError> {
    if masses.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
        return Err(DraError::InvalidConfig(format!("weight masses {masses:?}")));
    }
    let total: f64 = masses.iter().sum();
    if !(total > 0.0) {
        return Err(WeightError::AllZeroWeights.into());
    }
    let quotas: Vec<f64> = masses.iter().map(|m| n as f64 * m / total).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut by_remainder: Vec<usize> = (0..masses.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut assigned: usize = counts.iter().sum();
    for &r in by_remainder.iter().cycle() {
        if assigned >= n {
            break;
        }
        if masses[r] > 0.0 {
            counts[r] += 1;
            assigned += 1;
        }
    }
    // Rounding may overshoot by a particle or two; take them back from the smallest remainders.
    for &r in by_remainder.iter().rev().cycle() {
        if assigned <= n {
            break;
        }
        if counts[r] > 0 {
            counts[r] -= 1;
            assigned -= 1;
        }
    }
    Ok(RpaAllocation { counts })
}

/// Gathers every rank's weight mass and apportions `n` identically on all ranks.
pub fn rpa_allocate_collective(
    local_mass: f64,
    n: usize,
    comm: &mut dyn Communicator,
) -> Result<RpaAllocation, DraError> {
    let masses = allgather_f64(comm, local_mass)?;
    rpa_allocate(&masses, n)
}

fn execute(
    state: &mut RankState,
    schedule: &RouteSchedule,
    me: RankId,
    comm: &mut dyn Communicator,
) -> Result<(), DraError> {
    let mut handles = Vec::new();
    for t in schedule.transfers.iter().filter(|t| t.from == me) {
        let out = state.store.split_off_tail(t.count);
        handles.push(comm.send_nonblocking(t.to, TAG_RPA, encode_particles(&out))?);
    }
    for t in schedule.transfers.iter().filter(|t| t.to == me) {
        let env = comm.receive(Source::Rank(t.from), TAG_RPA)?;
        let incoming = decode_particles(&env.payload)?;
        if incoming.len() != t.count {
            return Err(TransportError::Malformed(format!(
                "expected {} particles from rank {}, got {}",
                t.count,
                t.from,
                incoming.len()
            ))
            .into());
        }
        state.store.extend(incoming)?;
    }
    wait_all(handles)?;
    Ok(())
}

/// One RPA frame: SIS update, then, when the global `N̂_eff` is low, every
/// rank resamples its share of `n_global` (proportional to its weight mass)
/// and the resulting imbalance is routed with `scheduler`.
pub fn rpa_step(
    state: &mut RankState,
    frame: &Frame,
    scheduler: Scheduler,
    n_global: usize,
    cfg: &FilterConfig,
    comm: &mut dyn Communicator,
) -> Result<StepReport, DraError> {
    let w = weigh(state, frame, cfg, Some(comm))?;
    let total = w.global_weight();
    if !(total > 0.0) {
        return Err(WeightError::AllZeroWeights.into());
    }
    let mut report = StepReport {
        estimate: w.estimate()?,
        neff_global: w.global_neff(n_global),
        resampled: false,
        links: 0,
        particles_moved: 0,
        particles: n_global,
        counters: w.counters,
        reinitialized: false,
        tracking_ranks: None,
        exchange_ratio: None,
    };
    state.store.normalize_by(total);
    if report.neff_global >= cfg.resample_fraction * n_global as f64 {
        return Ok(report);
    }

    let me = comm.rank();
    let alloc = rpa_allocate_collective(w.local_weight(), n_global, comm)?;
    let weight = 1.0 / n_global as f64;
    state.store = resample_local(&state.store, alloc.counts[me], weight, &mut state.rng);
    state.store.set_capacity(n_global);
    report.resampled = true;

    // Every rank now holds exactly its allocation, which all ranks already know.
    let loads = LoadReport::new(alloc.counts);
    let schedule = scheduler.schedule(&classify(&loads))?;
    execute(state, &schedule, me, comm)?;
    report.links = schedule.link_count();
    report.particles_moved = schedule.particles_moved();
    Ok(report)
}
