use super::{run_experiment, Algo, HarnessError, RunConfig};
use crate::dlb::Scheduler;
use std::fs;

pub const SCALING_HEADER: [&str; 10] = [
    "mode",
    "algo",
    "scheduler",
    "ranks",
    "threads",
    "particles",
    "wall_ms",
    "speedup",
    "efficiency",
    "rmse",
];

/// Grid of a scaling sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingPlan {
    pub ranks: Vec<usize>,
    pub threads: Vec<usize>,
    /// Weak scaling keeps `base.particles` per rank; strong scaling keeps it in total.
    pub weak: bool,
    /// Runs per cell; the fastest one is kept.
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub weak: bool,
    pub algo: Algo,
    pub scheduler: Option<Scheduler>,
    pub ranks: usize,
    pub threads: usize,
    pub particles: usize,
    pub wall_ms: f64,
    /// Against the one-rank, fewest-threads cell.
    pub speedup: f64,
    /// `t₁/(P·t_P)` (strong) or `t₁/t_P` (weak), with `t₁` the one-rank
    /// time at the same thread count.
    pub efficiency: f64,
    pub rmse: f64,
}

fn sorted_unique(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v.dedup();
    v
}

/// Times `base` on every `(P, T)` cell of `plan`. A one-rank row is always
/// included. Writes `scaling.csv` into `base.out` when set.
pub fn scaling_sweep(
    base: &RunConfig,
    plan: &ScalingPlan,
) -> Result<Vec<ScalingRow>, HarnessError> {
    if plan.threads.is_empty() || plan.repeats == 0 {
        return Err(HarnessError::InvalidConfig(
            "a sweep needs thread counts and at least one repeat".into(),
        ));
    }
    let mut ranks = plan.ranks.clone();
    ranks.push(1);
    let ranks = sorted_unique(ranks);
    let threads = sorted_unique(plan.threads.clone());
    if base.algo == Algo::Serial && ranks.len() > 1 {
        return Err(HarnessError::InvalidConfig(
            "the serial filter cannot be swept over ranks".into(),
        ));
    }

    let mut rows = Vec::new();
    let mut reference = None;
    for &t in &threads {
        let mut one_rank = None;
        for &p in &ranks {
            let particles = if plan.weak {
                base.particles * p
            } else {
                base.particles
            };
            let cfg = RunConfig {
                ranks: p,
                threads: t,
                particles,
                out: None,
                ..base.clone()
            };
            let mut best: Option<(f64, f64)> = None;
            for _ in 0..plan.repeats {
                let o = run_experiment(&cfg)?;
                let ms = o.wall.as_secs_f64() * 1e3;
                if best.is_none_or(|b| ms < b.0) {
                    best = Some((ms, o.rmse));
                }
            }
            let (wall_ms, rmse) = best.expect("at least one repeat");
            let t1 = *one_rank.get_or_insert(wall_ms);
            let t_ref = *reference.get_or_insert(wall_ms);
            let efficiency = if plan.weak {
                t1 / wall_ms
            } else {
                t1 / (p as f64 * wall_ms)
            };
            rows.push(ScalingRow {
                weak: plan.weak,
                algo: base.algo,
                scheduler: (base.algo == Algo::Rpa).then_some(base.scheduler),
                ranks: p,
                threads: t,
                particles,
                wall_ms,
                speedup: t_ref / wall_ms,
                efficiency,
                rmse,
            });
        }
    }

    if let Some(dir) = &base.out {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("scaling.csv"))?;
        w.write_record(SCALING_HEADER)?;
        for r in &rows {
            w.write_record([
                if r.weak { "weak" } else { "strong" }.to_string(),
                r.algo.to_string(),
                r.scheduler.map_or("-", |s| s.name()).to_string(),
                r.ranks.to_string(),
                r.threads.to_string(),
                r.particles.to_string(),
                format!("{:.3}", r.wall_ms),
                format!("{:.4}", r.speedup),
                format!("{:.4}", r.efficiency),
                r.rmse.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> RunConfig {
        RunConfig {
            algo: Algo::Rpa,
            particles: 400,
            frames: 3,
            width: 40,
            height: 40,
            init_window: Some(4.0),
            ..Default::default()
        }
    }

    #[test]
    fn baseline_row_has_unit_efficiency() {
        let dir = tempfile::tempdir().unwrap();
        let rows = scaling_sweep(
            &RunConfig {
                out: Some(dir.path().to_path_buf()),
                ..base()
            },
            &ScalingPlan {
                ranks: vec![4, 2],
                threads: vec![1],
                weak: false,
                repeats: 1,
            },
        )
        .unwrap();
        assert_eq!(
            rows.iter().map(|r| r.ranks).collect::<Vec<_>>(),
            vec![1, 2, 4]
        );
        assert_eq!(rows[0].efficiency, 1.0);
        assert_eq!(rows[0].speedup, 1.0);
        assert!(rows.iter().all(|r| r.particles == 400));
        let csv = fs::read_to_string(dir.path().join("scaling.csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), SCALING_HEADER.join(","));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn weak_scaling_grows_the_problem() {
        let rows = scaling_sweep(
            &base(),
            &ScalingPlan {
                ranks: vec![2],
                threads: vec![1, 2],
                weak: true,
                repeats: 1,
            },
        )
        .unwrap();
        let cells: Vec<_> = rows
            .iter()
            .map(|r| (r.ranks, r.threads, r.particles))
            .collect();
        assert_eq!(
            cells,
            vec![(1, 1, 400), (2, 1, 800), (1, 2, 400), (2, 2, 800)]
        );
        assert_eq!(rows[2].efficiency, 1.0);
    }

    #[test]
    fn serial_sweep_over_ranks_is_rejected() {
        let plan = ScalingPlan {
            ranks: vec![2],
            threads: vec![1],
            weak: false,
            repeats: 1,
        };
        assert!(scaling_sweep(
            &RunConfig {
                algo: Algo::Serial,
                ..base()
            },
            &plan
        )
        .is_err());
    }
}
