use super::{
    global_estimate, local_log_likelihoods, max_of, resample_local, weigh, DraError, FilterConfig,
    RankState, RingTopology, StepReport, Weighed,
};
use crate::models::Frame;
use crate::particle::{decode_particles, encode_particles};
use crate::rng::{RngStream, CALIBRATION_STREAM};
use crate::transport::{allgather_u64, Communicator, Source, Tag, TransportError};

/// Message tag of ring exchanges.
pub const TAG_RNA: Tag = 1;

/// Particles sent to the ring successor: `⌈ratio · n⌉`, at most `n`.
pub fn exchange_count(ratio: f64, n: usize) -> usize {
    (((ratio * n as f64) - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// `k` distinct indices from `0..n`, uniformly, by a partial Fisher–Yates shuffle.
fn choose_without_replacement(n: usize, k: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + ((rng.uniform() * (n - i) as f64) as usize).min(n - i - 1);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

fn rna_finish(
    state: &mut RankState,
    w: Weighed,
    ring: &RingTopology,
    ratio: f64,
    cfg: &FilterConfig,
    comm: &mut dyn Communicator,
) -> Result<StepReport, DraError> {
    let n = state.store.len();
    let ranks = comm.size();
    let mut report = StepReport {
        estimate: Default::default(),
        neff_global: 1.0,
        resampled: false,
        links: 0,
        particles_moved: 0,
        particles: n * ranks,
        counters: w.counters,
        reinitialized: false,
        tracking_ranks: None,
        exchange_ratio: Some(ratio),
    };
    let fresh =
        |state: &mut RankState| cfg.prior.sample_store(n, 1.0 / n as f64, 0, &mut state.rng);

    if !(w.global_weight() > 0.0) {
        log::warn!(
            "rank {}: all weights vanished on every rank; redrawing from the prior",
            comm.rank()
        );
        state.store = fresh(state);
        report.estimate = global_estimate(&state.store, comm)?;
        report.neff_global = (n * ranks) as f64;
        report.reinitialized = true;
    } else {
        report.estimate = w.estimate()?;
        report.neff_global = w.global_neff(n * ranks);
        let local = w.local_weight();
        if !(local > 0.0) {
            log::warn!(
                "rank {}: local weights vanished; redrawing from the prior",
                comm.rank()
            );
            state.store = fresh(state);
            report.reinitialized = true;
        } else {
            state.store.normalize_by(local);
            if w.local_neff(n) < cfg.resample_fraction * n as f64 {
                state.store = resample_local(&state.store, n, 1.0 / n as f64, &mut state.rng);
                report.resampled = true;
            }
        }
    }

    let k = exchange_count(ratio, n);
    if ranks > 1 && k > 0 {
        let me = comm.rank();
        let slots = choose_without_replacement(n, k, &mut state.rng);
        let outgoing: Vec<_> = slots.iter().map(|&i| state.store.particles()[i]).collect();
        let handle = comm.send_nonblocking(ring.next(me), TAG_RNA, encode_particles(&outgoing))?;
        let env = comm.receive(Source::Rank(ring.prev(me)), TAG_RNA)?;
        let incoming = decode_particles(&env.payload)?;
        if incoming.len() != k {
            return Err(TransportError::Malformed(format!(
                "expected {k} particles, got {}",
                incoming.len()
            ))
            .into());
        }
        let ps = state.store.particles_mut();
        for (slot, p) in slots.into_iter().zip(incoming) {
            ps[slot] = p;
        }
        handle.wait()?;
        report.links = ranks;
        report.particles_moved = k * ranks;
    }
    Ok(report)
}

/// One RNA frame: SIS update, local resampling when the local `N̂_eff` is
/// low, then `⌈ratio · N/P⌉` randomly chosen particles go to the ring
/// successor and as many arrive from the predecessor.
pub fn rna_step(
    state: &mut RankState,
    frame: &Frame,
    ring: &RingTopology,
    ratio: f64,
    cfg: &FilterConfig,
    comm: &mut dyn Communicator,
) -> Result<StepReport, DraError> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(DraError::InvalidConfig(format!("exchange ratio {ratio}")));
    }
    let w = weigh(state, frame, cfg, Some(comm))?;
    rna_finish(state, w, ring, ratio, cfg, comm)
}

/// Tracking threshold and exchange-ratio range of ARNA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArnaParams {
    /// A rank is tracking when its best raw log-likelihood reaches this value.
    pub tau: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl ArnaParams {
    pub fn new(tau: f64) -> Self {
        Self {
            tau,
            r_min: 0.1,
            r_max: 0.5,
        }
    }
}

/// Per-rank tracking flags of the last ARNA step.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrackingStatus {
    pub flags: Vec<bool>,
}

impl TrackingStatus {
    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn fraction(&self) -> f64 {
        if self.flags.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.flags.len() as f64
        }
    }
}

/// `r_max·(1 − f) + r_min·f` for tracking fraction `f`.
pub fn arna_ratio(fraction: f64, r_min: f64, r_max: f64) -> f64 {
    r_max * (1.0 - fraction) + r_min * fraction
}

/// One ARNA frame. The exchange ratio follows the fraction of tracking
/// ranks; when no rank tracks, the ring order is redrawn from `shared`,
/// which must be in the same state on every rank.
pub fn arna_step(
    state: &mut RankState,
    frame: &Frame,
    ring: &mut RingTopology,
    params: &ArnaParams,
    shared: &mut RngStream,
    cfg: &FilterConfig,
    comm: &mut dyn Communicator,
) -> Result<(StepReport, TrackingStatus), DraError> {
    let w = weigh(state, frame, cfg, Some(comm))?;
    let flags = allgather_u64(comm, u64::from(w.raw_max >= params.tau))?;
    let status = TrackingStatus {
        flags: flags.into_iter().map(|f| f != 0).collect(),
    };
    let ratio = arna_ratio(status.fraction(), params.r_min, params.r_max);
    if status.count() == 0 {
        ring.shuffle(shared);
    }
    let mut report = rna_finish(state, w, ring, ratio, cfg, comm)?;
    report.tracking_ranks = Some(status.count());
    Ok((report, status))
}

/// 99th percentile of the best log-likelihood among `particles` prior draws
/// on object-free noise frames (background `I_bg`, noise std `noise_sigma`).
pub fn calibrate_tracking_threshold(
    cfg: &FilterConfig,
    width: usize,
    height: usize,
    noise_sigma: f64,
    particles: usize,
    frames: usize,
    seed: u64,
) -> Result<f64, DraError> {
    if particles == 0 || frames == 0 {
        return Err(DraError::InvalidConfig(
            "calibration needs particles and frames".into(),
        ));
    }
    let mut rng = RngStream::new(seed, CALIBRATION_STREAM);
    let mut maxima = Vec::with_capacity(frames);
    for _ in 0..frames {
        let pixels = (0..width * height)
            .map(|_| (cfg.observation.i_bg + noise_sigma * rng.normal()).max(0.0))
            .collect();
        let frame = Frame::new(width, height, pixels)?;
        let store = cfg.prior.sample_store(particles, 1.0, 0, &mut rng);
        let (ll, _) = local_log_likelihoods(&store, &frame, cfg);
        maxima.push(max_of(&ll));
    }
    maxima.sort_by(f64::total_cmp);
    let rank = ((0.99 * frames as f64).ceil() as usize).clamp(1, frames);
    Ok(maxima[rank - 1])
}
