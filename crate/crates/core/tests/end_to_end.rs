use ppf::dlb::{balanced_targets, Scheduler};
use ppf::dra::{initial_rank_state, rna_step, rpa_step, RingTopology};
use ppf::harness::{build_movie, filter_config, run_experiment, Algo, RunConfig, TransportKind};
use ppf::transport::{run_in_process, Communicator};

fn small(algo: Algo, ranks: usize) -> RunConfig {
    RunConfig {
        algo,
        ranks,
        particles: 2000,
        frames: 8,
        width: 64,
        height: 64,
        seed: 12,
        init_window: Some(5.0),
        ..Default::default()
    }
}

#[test]
fn tcp_and_in_process_runs_are_bit_identical() {
    for (algo, scheduler) in [
        (Algo::Rna, Scheduler::SortedGreedy),
        (Algo::Arna, Scheduler::SortedGreedy),
        (Algo::Rpa, Scheduler::Greedy),
        (Algo::Rpa, Scheduler::SortedGreedy),
        (Algo::Rpa, Scheduler::LargestGradient),
    ] {
        let base = RunConfig {
            scheduler,
            threads: 2,
            ..small(algo, 4)
        };
        let a = run_experiment(&base).unwrap();
        let b = run_experiment(&RunConfig {
            transport: TransportKind::Tcp,
            ..base.clone()
        })
        .unwrap();
        let bits = |o: &ppf::harness::RunOutcome| {
            o.rows
                .iter()
                .map(|r| {
                    (
                        r.est_x.to_bits(),
                        r.est_y.to_bits(),
                        r.neff_global.to_bits(),
                        r.links,
                        r.particles_moved,
                    )
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b), "{algo} {scheduler}");
        assert_eq!(a.estimates, b.estimates);
    }
}

#[test]
fn one_rank_runs_equal_the_serial_filter() {
    let serial = run_experiment(&small(Algo::Serial, 1)).unwrap();
    for algo in [Algo::Rna, Algo::Rpa] {
        for transport in [TransportKind::InProcess, TransportKind::Tcp] {
            let o = run_experiment(&RunConfig {
                transport,
                ..small(algo, 1)
            })
            .unwrap();
            assert_eq!(o.estimates, serial.estimates, "{algo} {transport}");
            let neff = |o: &ppf::harness::RunOutcome| {
                o.rows
                    .iter()
                    .map(|r| r.neff_global.to_bits())
                    .collect::<Vec<_>>()
            };
            assert_eq!(neff(&o), neff(&serial));
        }
    }
}

#[test]
fn particle_counts_are_conserved() {
    let cfg = small(Algo::Rpa, 4);
    let (movie, truth, mc) = build_movie(&cfg).unwrap();
    let fc = filter_config(&cfg, &mc, &truth);
    let n = 2002;

    let rna = run_in_process(4, |c| {
        let mut st = initial_rank_state(&fc.prior, n - 2, 4, c.rank(), 1);
        let ring = RingTopology::new(4);
        movie
            .frames
            .iter()
            .map(|f| {
                rna_step(&mut st, f, &ring, 0.2, &fc, c).unwrap();
                st.store.len()
            })
            .collect::<Vec<_>>()
    });
    assert!(rna.iter().all(|sizes| sizes.iter().all(|&s| s == 500)));

    for sched in [
        Scheduler::Greedy,
        Scheduler::SortedGreedy,
        Scheduler::LargestGradient,
    ] {
        let rpa = run_in_process(4, |c| {
            let mut st = initial_rank_state(&fc.prior, n, 4, c.rank(), 1);
            movie
                .frames
                .iter()
                .map(|f| {
                    let r = rpa_step(&mut st, f, sched, n, &fc, c).unwrap();
                    (st.store.len(), r.resampled)
                })
                .collect::<Vec<_>>()
        });
        for k in 0..movie.frames.len() {
            let sizes: Vec<usize> = rpa.iter().map(|r| r[k].0).collect();
            assert_eq!(sizes.iter().sum::<usize>(), n, "{sched} frame {k}");
            if sched != Scheduler::LargestGradient && rpa[0][k].1 {
                assert_eq!(sizes, balanced_targets(n, 4), "{sched} frame {k}");
            }
        }
    }
}

#[test]
fn schedulers_track_equally_well() {
    let mut rmse = Vec::new();
    for s in [
        Scheduler::Greedy,
        Scheduler::SortedGreedy,
        Scheduler::LargestGradient,
    ] {
        let o = run_experiment(&RunConfig {
            scheduler: s,
            frames: 15,
            ..small(Algo::Rpa, 4)
        })
        .unwrap();
        rmse.push(o.rmse);
    }
    assert!(rmse.iter().all(|r| *r < 2.0), "{rmse:?}");
}
