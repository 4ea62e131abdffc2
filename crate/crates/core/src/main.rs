use clap::{Args, Parser, Subcommand};
use ppf::dlb::Scheduler;
use ppf::harness::{
    build_movie, run_repeats, scaling_sweep, Algo, HarnessError, RunConfig, ScalingPlan,
    TransportKind,
};
use ppf::models::{write_movie_with_truth, LikelihoodForm};
use ppf::transport::parse_addresses;
use std::path::PathBuf;
use std::process::ExitCode;

/// Parallel particle filter tracking runs. Every flag can also be set
/// through an environment variable named `PPF_<FLAG>`, e.g. `PPF_PARTICLES`.
#[derive(Debug, Parser)]
#[command(name = "ppf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Track the object in one or more synthetic movies.
    Run {
        #[command(flatten)]
        common: Common,
        /// Movies to run, with seeds seed, seed+1, ...
        #[arg(long, env = "PPF_REPEATS", default_value_t = 20)]
        repeats: usize,
    },
    /// Time a configuration over a grid of rank and thread counts.
    Scale {
        #[command(flatten)]
        common: Common,
        /// Rank counts to sweep; a one-rank baseline is always added.
        #[arg(
            long,
            env = "PPF_RANK_LIST",
            value_delimiter = ',',
            default_value = "1,2,4,8"
        )]
        rank_list: Vec<usize>,
        /// Thread counts to sweep.
        #[arg(
            long,
            env = "PPF_THREAD_LIST",
            value_delimiter = ',',
            default_value = "1"
        )]
        thread_list: Vec<usize>,
        /// Keep --particles per rank instead of in total.
        #[arg(long, env = "PPF_WEAK")]
        weak: bool,
        /// Timed runs per cell; the fastest is kept.
        #[arg(long, env = "PPF_REPEATS", default_value_t = 1)]
        repeats: usize,
    },
    /// Write a synthetic movie and its ground truth to --out.
    Movie {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// serial, rna, arna or rpa.
    #[arg(long, env = "PPF_ALGO", default_value = "serial")]
    algo: Algo,
    /// Load balancer for rpa: gs, sgs or lgs.
    #[arg(long, env = "PPF_SCHEDULER", default_value = "sgs")]
    scheduler: Scheduler,
    #[arg(long, env = "PPF_RANKS", default_value_t = 1)]
    ranks: usize,
    /// Likelihood threads per rank.
    #[arg(long, env = "PPF_THREADS", default_value_t = 1)]
    threads: usize,
    #[arg(long, env = "PPF_PARTICLES", default_value_t = 10_000)]
    particles: usize,
    #[arg(long, env = "PPF_FRAMES", default_value_t = 50)]
    frames: usize,
    /// Image size as WIDTHxHEIGHT.
    #[arg(long, env = "PPF_SIZE", default_value = "512x512", value_parser = parse_size)]
    size: (usize, usize),
    /// Amplitude signal-to-noise ratio; `inf` for noiseless movies.
    #[arg(long, env = "PPF_SNR", default_value_t = 2.0)]
    snr: f64,
    #[arg(long, env = "PPF_SIGMA_PSF", default_value_t = 1.16)]
    sigma_psf: f64,
    /// Fraction of particles each RNA rank passes along the ring per frame.
    #[arg(long, env = "PPF_EXCHANGE_RATIO", default_value_t = 0.1)]
    exchange_ratio: f64,
    /// One likelihood evaluation per occupied pixel.
    #[arg(long, env = "PPF_PCSIR")]
    pcsir: bool,
    /// inproc or tcp.
    #[arg(long, env = "PPF_TRANSPORT", default_value = "inproc")]
    transport: TransportKind,
    /// File listing one host:port per rank (lines or commas); this process
    /// then runs as --rank and only rank 0 writes output.
    #[arg(long, env = "PPF_HOSTS")]
    hosts: Option<PathBuf>,
    /// This process's rank when --hosts is given.
    #[arg(long, env = "PPF_RANK")]
    rank: Option<usize>,
    #[arg(long, env = "PPF_SEED", default_value_t = 0)]
    seed: u64,
    /// residual or referenced (background-referenced residual).
    #[arg(long, env = "PPF_LIKELIHOOD", default_value = "referenced")]
    likelihood: LikelihoodForm,
    /// Start particles within this many pixels of the true first position
    /// instead of uniformly over the frame.
    #[arg(long, env = "PPF_INIT_WINDOW")]
    init_window: Option<f64>,
    /// ARNA tracking threshold; calibrated on noise frames when omitted.
    #[arg(long, env = "PPF_ARNA_TAU")]
    arna_tau: Option<f64>,
    /// Track a movie written by `ppf movie` instead of generating one.
    #[arg(long, env = "PPF_MOVIE")]
    movie: Option<PathBuf>,
    #[arg(long, env = "PPF_OUT")]
    out: Option<PathBuf>,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got `{s}`"))?;
    let w = w.trim().parse().map_err(|e| format!("width: {e}"))?;
    let h = h.trim().parse().map_err(|e| format!("height: {e}"))?;
    Ok((w, h))
}

impl Common {
    fn into_config(self) -> Result<RunConfig, HarnessError> {
        let hosts = match &self.hosts {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                let list = text
                    .lines()
                    .map(|l| l.split('#').next().unwrap_or("").trim())
                    .filter(|l| !l.is_empty())
                    .collect::<Vec<_>>()
                    .join(",");
                Some(parse_addresses(&list)?)
            }
            None => None,
        };
        Ok(RunConfig {
            algo: self.algo,
            scheduler: self.scheduler,
            ranks: self.ranks,
            threads: self.threads,
            particles: self.particles,
            frames: self.frames,
            width: self.size.0,
            height: self.size.1,
            snr: self.snr,
            sigma_psf: self.sigma_psf,
            exchange_ratio: self.exchange_ratio,
            pcsir: self.pcsir,
            transport: self.transport,
            hosts,
            rank: self.rank,
            seed: self.seed,
            likelihood: self.likelihood,
            init_window: self.init_window,
            arna_tau: self.arna_tau,
            movie_dir: self.movie,
            out: self.out,
            ..RunConfig::default()
        })
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { common, repeats } => {
            let cfg = common.into_config()?;
            let outcomes = run_repeats(&cfg, repeats)?;
            let rmse: Vec<f64> = outcomes.iter().map(|o| o.rmse).collect();
            let mean = rmse.iter().sum::<f64>() / rmse.len() as f64;
            println!(
                "{} over {} movie(s): mean RMSE {mean:.4} px (min {:.4}, max {:.4})",
                cfg.algo,
                rmse.len(),
                rmse.iter().cloned().fold(f64::INFINITY, f64::min),
                rmse.iter().cloned().fold(0.0, f64::max)
            );
        }
        Command::Scale {
            common,
            rank_list,
            thread_list,
            weak,
            repeats,
        } => {
            let cfg = common.into_config()?;
            let plan = ScalingPlan {
                ranks: rank_list,
                threads: thread_list,
                weak,
                repeats,
            };
            println!("ranks threads particles wall_ms speedup efficiency");
            for r in scaling_sweep(&cfg, &plan)? {
                println!(
                    "{:>5} {:>7} {:>9} {:>9.1} {:>7.2} {:>10.3}",
                    r.ranks, r.threads, r.particles, r.wall_ms, r.speedup, r.efficiency
                );
            }
        }
        Command::Movie { common } => {
            let cfg = common.into_config()?;
            let dir = cfg
                .out
                .clone()
                .ok_or_else(|| HarnessError::InvalidConfig("--out is required".into()))?;
            let (movie, truth, _) = build_movie(&cfg)?;
            write_movie_with_truth(&dir, &movie, &truth)?;
            println!("wrote {} frames to {}", movie.frames.len(), dir.display());
        }
    }
    Ok(())
}
