use super::{compute_rmse, positions, Algo, HarnessError, MetricsRow, RunConfig, TransportKind};
use crate::dra::{
    arna_step, calibrate_tracking_threshold, initial_rank_state, rna_step, rpa_step, ArnaParams,
    FilterConfig, InitPrior, RingTopology, SerialFilter, StepReport,
};
use crate::likelihood::LikelihoodMode;
use crate::models::{
    generate_movie, read_ground_truth, read_movie, Frame, GroundTruth, Movie, MovieConfig,
    TRUTH_CSV,
};
use crate::particle::StateVector;
use crate::rng::{RngStream, MOVIE_STREAM, SHARED_STREAM};
use crate::transport::{run_in_process, run_tcp_local, Communicator, TcpEndpoint, DEFAULT_TIMEOUT};
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

pub const METRICS_HEADER: [&str; 11] = [
    "frame",
    "algo",
    "scheduler",
    "ranks",
    "threads",
    "neff_global",
    "links",
    "particles_moved",
    "est_x",
    "est_y",
    "rmse_running",
];
pub const TIMING_HEADER: [&str; 2] = ["frame", "wall_ms"];
pub const TRAJECTORY_HEADER: [&str; 8] = [
    "frame", "est_x", "est_y", "est_vx", "est_vy", "est_i0", "true_x", "true_y",
];

const CALIBRATION_FRAMES: usize = 100;

/// Rank 0's view of one filter step.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub report: StepReport,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub rows: Vec<MetricsRow>,
    pub estimates: Vec<StateVector>,
    pub truth: Vec<(f64, f64)>,
    pub rmse: f64,
    /// Wall-clock time of the filter loop alone.
    pub wall: Duration,
    /// Tracking threshold used by ARNA.
    pub tau: Option<f64>,
}

/// The movie a run tracks: generated from the seed, or read from
/// `movie_dir` and cut to `frames`.
pub fn build_movie(cfg: &RunConfig) -> Result<(Movie, GroundTruth, MovieConfig), HarnessError> {
    let mut mc = MovieConfig::tracking_benchmark(cfg.seed);
    if let Some(dir) = &cfg.movie_dir {
        let mut movie = read_movie(dir)?;
        let truth = read_ground_truth(&dir.join(TRUTH_CSV), movie.meta.width, movie.meta.height)?;
        if movie.frames.len() < cfg.frames || truth.frames.len() < cfg.frames {
            return Err(HarnessError::InvalidConfig(format!(
                "{} holds {} frames, {} requested",
                dir.display(),
                movie.frames.len().min(truth.frames.len()),
                cfg.frames
            )));
        }
        if truth.frames.iter().any(|f| f.is_empty()) {
            return Err(HarnessError::InvalidConfig(
                "ground truth has a frame without objects".into(),
            ));
        }
        movie.frames.truncate(cfg.frames);
        let mut truth = truth;
        truth.frames.truncate(cfg.frames);
        mc.n_frames = cfg.frames;
        mc.width = movie.meta.width;
        mc.height = movie.meta.height;
        mc.snr = movie.meta.snr;
        mc.intensity = truth.reference_intensity;
        mc.observation.sigma_psf = movie.meta.sigma_psf;
        mc.observation.i_bg = movie.meta.i_bg;
        mc.observation.sigma_xi = likelihood_sigma(mc.intensity, mc.snr);
        return Ok((movie, truth, mc));
    }
    mc.n_frames = cfg.frames;
    mc.width = cfg.width;
    mc.height = cfg.height;
    mc.snr = cfg.snr;
    mc.observation.sigma_psf = cfg.sigma_psf;
    mc.observation.sigma_xi = likelihood_sigma(mc.intensity, cfg.snr);
    let (movie, truth) = generate_movie(&mc, &mut RngStream::new(cfg.seed, MOVIE_STREAM))?;
    Ok((movie, truth, mc))
}

/// Noise level `I0 / SNR`; noiseless movies fall back to `I0 / 2`.
fn likelihood_sigma(intensity: f64, snr: f64) -> f64 {
    if snr.is_finite() {
        intensity / snr
    } else {
        intensity / 2.0
    }
}

/// Filter settings for a run over the movie described by `mc`.
pub fn filter_config(cfg: &RunConfig, mc: &MovieConfig, truth: &GroundTruth) -> FilterConfig {
    let i0 = (0.5 * mc.intensity, 1.5 * mc.intensity);
    let prior = match cfg.init_window {
        Some(half) => {
            let p = truth.frames[0][0];
            InitPrior::window(p.x, p.y, half, mc.width, mc.height, mc.max_speed, i0)
        }
        None => InitPrior::whole_frame(mc.width, mc.height, mc.max_speed, i0),
    };
    FilterConfig {
        observation: mc.observation.with_form(cfg.likelihood),
        dynamics: mc.dynamics,
        prior,
        threads: cfg.threads,
        mode: if cfg.pcsir {
            LikelihoodMode::Pcsir
        } else {
            LikelihoodMode::Exact
        },
        resample_fraction: cfg.resample_fraction,
    }
}

struct Setup<'a> {
    cfg: &'a RunConfig,
    filter: FilterConfig,
    frames: &'a [Frame],
    tau: Option<f64>,
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn run_serial(s: &Setup) -> Result<Vec<FrameRecord>, HarnessError> {
    let mut f = SerialFilter::new(s.filter.clone(), s.cfg.particles, s.cfg.seed)?;
    let mut out = Vec::with_capacity(s.frames.len());
    for frame in s.frames {
        let t = Instant::now();
        let report = f.step(frame)?;
        out.push(FrameRecord {
            report,
            wall_ms: elapsed_ms(t),
        });
    }
    Ok(out)
}

fn run_rank(comm: &mut dyn Communicator, s: &Setup) -> Result<Vec<FrameRecord>, HarnessError> {
    let n = s.cfg.particles;
    let mut st = initial_rank_state(&s.filter.prior, n, comm.size(), comm.rank(), s.cfg.seed);
    let mut ring = RingTopology::new(comm.size());
    let mut shared = RngStream::new(s.cfg.seed, SHARED_STREAM);
    let arna = ArnaParams::new(s.tau.unwrap_or(f64::INFINITY));
    let mut out = Vec::with_capacity(s.frames.len());
    for frame in s.frames {
        let t = Instant::now();
        let report = match s.cfg.algo {
            Algo::Rna => rna_step(&mut st, frame, &ring, s.cfg.exchange_ratio, &s.filter, comm)?,
            Algo::Arna => {
                arna_step(
                    &mut st,
                    frame,
                    &mut ring,
                    &arna,
                    &mut shared,
                    &s.filter,
                    comm,
                )?
                .0
            }
            Algo::Rpa => rpa_step(&mut st, frame, s.cfg.scheduler, n, &s.filter, comm)?,
            Algo::Serial => {
                return Err(HarnessError::InvalidConfig(
                    "the serial filter has no ranks".into(),
                ))
            }
        };
        out.push(FrameRecord {
            report,
            wall_ms: elapsed_ms(t),
        });
    }
    Ok(out)
}

fn first_rank(
    results: Vec<Result<Vec<FrameRecord>, HarnessError>>,
) -> Result<Vec<FrameRecord>, HarnessError> {
    let mut first = None;
    for r in results {
        let r = r?;
        first.get_or_insert(r);
    }
    first.ok_or_else(|| HarnessError::InvalidConfig("no ranks ran".into()))
}

fn execute(s: &Setup) -> Result<Vec<FrameRecord>, HarnessError> {
    let cfg = s.cfg;
    if cfg.algo == Algo::Serial {
        return run_serial(s);
    }
    match (cfg.transport, &cfg.hosts) {
        (TransportKind::InProcess, _) => first_rank(run_in_process(cfg.ranks, |c| run_rank(c, s))),
        (TransportKind::Tcp, None) => first_rank(run_tcp_local(cfg.ranks, |c| run_rank(c, s))?),
        (TransportKind::Tcp, Some(hosts)) => {
            let rank = cfg.rank.unwrap_or(0);
            let mut ep = TcpEndpoint::connect(rank, hosts, DEFAULT_TIMEOUT)?;
            run_rank(&mut ep, s)
        }
    }
}

/// Generates (or loads) the movie, runs the configured filter over it and,
/// when `cfg.out` is set, writes `metrics.csv`, `trajectory.csv` and
/// `timing.csv` there. In a multi-process TCP run only rank 0 writes.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunOutcome, HarnessError> {
    cfg.validate()?;
    let (movie, truth, mc) = build_movie(cfg)?;
    let filter = filter_config(cfg, &mc, &truth);
    let tau = match (cfg.algo, cfg.arna_tau) {
        (Algo::Arna, None) => Some(calibrate_tracking_threshold(
            &filter,
            mc.width,
            mc.height,
            mc.noise_sigma(),
            cfg.particles / cfg.ranks,
            CALIBRATION_FRAMES,
            cfg.seed,
        )?),
        (Algo::Arna, tau) => tau,
        _ => None,
    };
    let setup = Setup {
        cfg,
        filter,
        frames: &movie.frames,
        tau,
    };
    let start = Instant::now();
    let records = execute(&setup)?;
    let wall = start.elapsed();

    let truth_xy: Vec<(f64, f64)> = truth.frames.iter().map(|f| (f[0].x, f[0].y)).collect();
    let estimates: Vec<StateVector> = records.iter().map(|r| r.report.estimate).collect();
    let rows = metrics_rows(cfg, &records, &truth_xy);
    let rmse = compute_rmse(&positions(&estimates), &truth_xy)?;
    let outcome = RunOutcome {
        rows,
        estimates,
        truth: truth_xy,
        rmse,
        wall,
        tau,
    };
    if let Some(dir) = &cfg.out {
        if cfg.rank.unwrap_or(0) == 0 {
            write_outputs(dir, &outcome)?;
        }
    }
    log::info!(
        "{} P={} T={} N={} seed={}: rmse {:.4} px in {:.1} ms",
        cfg.algo,
        cfg.ranks,
        cfg.threads,
        cfg.particles,
        cfg.seed,
        outcome.rmse,
        wall.as_secs_f64() * 1e3
    );
    Ok(outcome)
}

fn metrics_rows(cfg: &RunConfig, records: &[FrameRecord], truth: &[(f64, f64)]) -> Vec<MetricsRow> {
    let mut sq = 0.0;
    records
        .iter()
        .zip(truth)
        .enumerate()
        .map(|(k, (r, t))| {
            let e = r.report.estimate;
            sq += (e.x_hat - t.0).powi(2) + (e.y_hat - t.1).powi(2);
            MetricsRow {
                frame: k,
                algo: cfg.algo,
                scheduler: (cfg.algo == Algo::Rpa).then_some(cfg.scheduler),
                ranks: cfg.ranks,
                threads: cfg.threads,
                neff_global: r.report.neff_global,
                links: r.report.links,
                particles_moved: r.report.particles_moved,
                est_x: e.x_hat,
                est_y: e.y_hat,
                rmse_running: (sq / (k + 1) as f64).sqrt(),
                wall_ms: r.wall_ms,
            }
        })
        .collect()
}

fn write_outputs(dir: &Path, o: &RunOutcome) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    let mut m = csv::Writer::from_path(dir.join("metrics.csv"))?;
    m.write_record(METRICS_HEADER)?;
    let mut t = csv::Writer::from_path(dir.join("timing.csv"))?;
    t.write_record(TIMING_HEADER)?;
    for r in &o.rows {
        let scheduler = r.scheduler.map_or("-", |s| s.name());
        m.write_record([
            r.frame.to_string(),
            r.algo.to_string(),
            scheduler.to_string(),
            r.ranks.to_string(),
            r.threads.to_string(),
            r.neff_global.to_string(),
            r.links.to_string(),
            r.particles_moved.to_string(),
            r.est_x.to_string(),
            r.est_y.to_string(),
            r.rmse_running.to_string(),
        ])?;
        t.write_record([r.frame.to_string(), format!("{:.3}", r.wall_ms)])?;
    }
    m.flush()?;
    t.flush()?;

    let mut w = csv::Writer::from_path(dir.join("trajectory.csv"))?;
    w.write_record(TRAJECTORY_HEADER)?;
    for (k, (e, t)) in o.estimates.iter().zip(&o.truth).enumerate() {
        w.write_record([
            k.to_string(),
            e.x_hat.to_string(),
            e.y_hat.to_string(),
            e.vx.to_string(),
            e.vy.to_string(),
            e.i0.to_string(),
            t.0.to_string(),
            t.1.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs `repeats` experiments with seeds `seed, seed + 1, …`. With an output
/// directory, each run writes into `repeat_NNN/` and `summary.csv` lists
/// `repeat,seed,rmse,wall_ms`.
pub fn run_repeats(cfg: &RunConfig, repeats: usize) -> Result<Vec<RunOutcome>, HarnessError> {
    if repeats == 0 {
        return Err(HarnessError::InvalidConfig(
            "need at least one repeat".into(),
        ));
    }
    let mut outcomes = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let c = RunConfig {
            seed: cfg.seed + r as u64,
            out: cfg.out.as_ref().map(|d| d.join(format!("repeat_{r:03}"))),
            ..cfg.clone()
        };
        outcomes.push(run_experiment(&c)?);
    }
    if let (Some(dir), 0) = (&cfg.out, cfg.rank.unwrap_or(0)) {
        let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
        w.write_record(["repeat", "seed", "rmse", "wall_ms"])?;
        for (r, o) in outcomes.iter().enumerate() {
            w.write_record([
                r.to_string(),
                (cfg.seed + r as u64).to_string(),
                o.rmse.to_string(),
                format!("{:.3}", o.wall.as_secs_f64() * 1e3),
            ])?;
        }
        w.flush()?;
    }
    Ok(outcomes)
}
