use super::{load_patch, CheckerboardLayout, PixelBinning};
use crate::models::{log_likelihood_in, Frame, ObservationParams};
use crate::particle::{ParticleStore, StateVector};
use std::ops::AddAssign;

/// Work done by one evaluation pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounters {
    pub patch_loads: u64,
    pub kernel_evaluations: u64,
}

impl AddAssign for EvalCounters {
    fn add_assign(&mut self, rhs: Self) {
        self.patch_loads += rhs.patch_loads;
        self.kernel_evaluations += rhs.kernel_evaluations;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum LikelihoodMode {
    /// One kernel evaluation per particle at its own position.
    #[default]
    Exact,
    /// One kernel evaluation per occupied pixel, at the pixel center
    /// `(x + 0.5, y + 0.5)` with the bin's weight-mean intensity.
    Pcsir,
}

/// Weight-mean `i0` of a bin, falling back to the plain mean when the bin has no mass.
///
/// Accumulated as offsets from the first member so that a bin of equal
/// intensities yields that intensity exactly.
fn bin_intensity(store: &ParticleStore, members: &[u32]) -> f64 {
    let ps = store.particles();
    let base = ps[members[0] as usize].state.i0;
    let (mut wsum, mut wd, mut d) = (0.0, 0.0, 0.0);
    for &i in members {
        let p = &ps[i as usize];
        wsum += p.weight;
        wd += p.weight * (p.state.i0 - base);
        d += p.state.i0 - base;
    }
    if wsum > 0.0 {
        base + wd / wsum
    } else {
        base + d / members.len() as f64
    }
}

struct ThreadOutput {
    bins: Vec<usize>,
    values: Vec<f64>,
    counters: EvalCounters,
}

fn evaluate_bins(
    store: &ParticleStore,
    frame: &Frame,
    binning: &PixelBinning,
    bins: &[usize],
    params: &ObservationParams,
    mode: LikelihoodMode,
) -> ThreadOutput {
    let mut values = Vec::new();
    let mut counters = EvalCounters::default();
    let ps = store.particles();
    for &b in bins {
        let bin = binning.bins()[b];
        let members = binning.particles_of(b);
        let patch = load_patch(frame, (bin.x, bin.y), params);
        counters.patch_loads += 1;
        match mode {
            LikelihoodMode::Exact => {
                for &i in members {
                    let ll = log_likelihood_in(&patch, &ps[i as usize].state, params)
                        .unwrap_or(f64::NEG_INFINITY);
                    values.push(ll);
                }
                counters.kernel_evaluations += members.len() as u64;
            }
            LikelihoodMode::Pcsir => {
                let rep = StateVector::new(
                    bin.x as f64 + 0.5,
                    bin.y as f64 + 0.5,
                    0.0,
                    0.0,
                    bin_intensity(store, members),
                );
                let ll = log_likelihood_in(&patch, &rep, params).unwrap_or(f64::NEG_INFINITY);
                counters.kernel_evaluations += 1;
                values.extend(std::iter::repeat_n(ll, members.len()));
            }
        }
    }
    ThreadOutput {
        bins: bins.to_vec(),
        values,
        counters,
    }
}

/// Per-particle log-likelihoods in store order; particles outside the frame get `−∞`.
///
/// Each layout thread handles its own bins; with more than one thread the
/// work runs on scoped OS threads. Values do not depend on the thread count.
pub fn log_likelihoods(
    store: &ParticleStore,
    frame: &Frame,
    binning: &PixelBinning,
    layout: &CheckerboardLayout,
    params: &ObservationParams,
    mode: LikelihoodMode,
) -> (Vec<f64>, EvalCounters) {
    debug_assert_eq!(binning.particle_count(), store.len());
    let threads = layout.threads();
    let outputs: Vec<ThreadOutput> = if threads == 1 {
        vec![evaluate_bins(
            store,
            frame,
            binning,
            layout.bins_of_thread(0),
            params,
            mode,
        )]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    let bins = layout.bins_of_thread(t);
                    scope.spawn(move || evaluate_bins(store, frame, binning, bins, params, mode))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("likelihood worker panicked"))
                .collect()
        })
    };

    let mut ll = vec![f64::NEG_INFINITY; store.len()];
    let mut counters = EvalCounters::default();
    for out in outputs {
        let mut values = out.values.into_iter();
        for b in out.bins {
            for &i in binning.particles_of(b) {
                ll[i as usize] = values.next().expect("one value per binned particle");
            }
        }
        counters += out.counters;
    }
    (ll, counters)
}

/// `w ← w · exp(ll − shift)`.
pub fn apply_log_likelihoods(store: &mut ParticleStore, ll: &[f64], shift: f64) {
    for (p, &l) in store.particles_mut().iter_mut().zip(ll) {
        p.weight *= (l - shift).exp();
    }
}

/// Multiplies every prior weight by `exp(log_likelihood)` using per-pixel patches.
pub fn evaluate_weights_exact(
    store: &mut ParticleStore,
    frame: &Frame,
    binning: &PixelBinning,
    layout: &CheckerboardLayout,
    params: &ObservationParams,
) -> EvalCounters {
    let (ll, counters) =
        log_likelihoods(store, frame, binning, layout, params, LikelihoodMode::Exact);
    apply_log_likelihoods(store, &ll, 0.0);
    counters
}

/// Piecewise-constant variant of [`evaluate_weights_exact`].
pub fn evaluate_weights_pcsir(
    store: &mut ParticleStore,
    frame: &Frame,
    binning: &PixelBinning,
    layout: &CheckerboardLayout,
    params: &ObservationParams,
) -> EvalCounters {
    let (ll, counters) =
        log_likelihoods(store, frame, binning, layout, params, LikelihoodMode::Pcsir);
    apply_log_likelihoods(store, &ll, 0.0);
    counters
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::{bin_particles, build_layout};
    use crate::models::{generate_movie, log_likelihood, MovieConfig};
    use crate::particle::Particle;
    use crate::rng::RngStream;

    fn noisy_frame(seed: u64) -> (Frame, ObservationParams) {
        let cfg = MovieConfig {
            n_frames: 1,
            n_objects: 3,
            width: 64,
            height: 48,
            ..MovieConfig::tracking_benchmark(seed)
        };
        let (movie, _) = generate_movie(&cfg, &mut RngStream::new(seed, 0)).unwrap();
        (movie.frames[0].clone(), cfg.observation)
    }

    fn random_store(n: usize, w: f64, h: f64, seed: u64) -> ParticleStore {
        let mut rng = RngStream::new(seed, 1);
        ParticleStore::from_particles(
            (0..n)
                .map(|i| {
                    let s = StateVector::new(
                        rng.uniform_in(-1.0, w + 1.0),
                        rng.uniform_in(-1.0, h + 1.0),
                        0.0,
                        0.0,
                        rng.uniform_in(0.0, 20.0),
                    );
                    Particle::new(s, rng.uniform_in(0.1, 1.0), i as u32)
                })
                .collect(),
        )
    }

    fn exact(
        store: &ParticleStore,
        frame: &Frame,
        p: &ObservationParams,
        threads: usize,
    ) -> (ParticleStore, EvalCounters) {
        let mut s = store.clone();
        let b = bin_particles(&s, frame.width(), frame.height());
        let l = build_layout(&b, threads);
        let c = evaluate_weights_exact(&mut s, frame, &b, &l, p);
        (s, c)
    }

    #[test]
    fn single_particle_matches_model() {
        let (f, p) = noisy_frame(1);
        let s = ParticleStore::from_particles(vec![Particle::new(
            StateVector::new(20.3, 11.8, 0.0, 0.0, 9.0),
            1.0,
            0,
        )]);
        let (out, c) = exact(&s, &f, &p, 1);
        let want = log_likelihood(&f, &s.particles()[0].state, &p)
            .unwrap()
            .exp();
        assert_eq!(out.particles()[0].weight, want);
        assert_eq!(c.kernel_evaluations, 1);
    }

    #[test]
    fn shared_pixel_loads_one_patch() {
        let (f, p) = noisy_frame(2);
        let mk = |x| Particle::new(StateVector::new(x, 7.5, 0.0, 0.0, 9.0), 1.0, 0);
        let s = ParticleStore::from_particles(vec![mk(10.1), mk(10.9)]);
        let (_, c) = exact(&s, &f, &p, 1);
        assert_eq!(
            c,
            EvalCounters {
                patch_loads: 1,
                kernel_evaluations: 2
            }
        );
    }

    #[test]
    fn out_of_frame_gets_zero_weight() {
        let (f, p) = noisy_frame(3);
        let s = ParticleStore::from_particles(vec![Particle::new(
            StateVector::new(-3.0, 2.0, 0.0, 0.0, 9.0),
            1.0,
            0,
        )]);
        let (out, c) = exact(&s, &f, &p, 2);
        assert_eq!(out.particles()[0].weight, 0.0);
        assert_eq!(c.kernel_evaluations, 0);
    }

    #[test]
    fn thread_count_does_not_change_weights() {
        let (f, p) = noisy_frame(4);
        let s = random_store(3000, 64.0, 48.0, 4);
        let (one, c1) = exact(&s, &f, &p, 1);
        for t in [2, 3, 8] {
            let (many, ct) = exact(&s, &f, &p, t);
            assert_eq!(c1, ct);
            for (a, b) in one.particles().iter().zip(many.particles()) {
                assert_eq!(a.weight.to_bits(), b.weight.to_bits());
            }
        }
    }

    #[test]
    fn pcsir_counts_one_kernel_per_pixel() {
        let (f, p) = noisy_frame(5);
        let mut rng = RngStream::new(5, 2);
        // 10⁵ particles packed into a 10×10 block of pixels.
        let s = ParticleStore::from_particles(
            (0..100_000)
                .map(|i| {
                    let st = StateVector::new(
                        rng.uniform_in(20.0, 30.0),
                        rng.uniform_in(10.0, 20.0),
                        0.0,
                        0.0,
                        10.0,
                    );
                    Particle::new(st, 1.0, i)
                })
                .collect(),
        );
        let b = bin_particles(&s, f.width(), f.height());
        let l = build_layout(&b, 4);
        let mut a = s.clone();
        let ce = evaluate_weights_exact(&mut a, &f, &b, &l, &p);
        let mut c = s.clone();
        let cp = evaluate_weights_pcsir(&mut c, &f, &b, &l, &p);
        assert_eq!(cp.kernel_evaluations, b.bins().len() as u64);
        assert_eq!(b.bins().len(), 100);
        assert!(ce.kernel_evaluations >= 10 * cp.kernel_evaluations);
    }

    #[test]
    fn pcsir_bin_shares_one_factor() {
        let (f, p) = noisy_frame(6);
        let mk = |x, i0| Particle::new(StateVector::new(x, 7.2, 0.0, 0.0, i0), 1.0, 0);
        let mut s =
            ParticleStore::from_particles(vec![mk(10.1, 8.0), mk(10.7, 12.0), mk(10.4, 10.0)]);
        let b = bin_particles(&s, f.width(), f.height());
        let l = build_layout(&b, 1);
        let c = evaluate_weights_pcsir(&mut s, &f, &b, &l, &p);
        assert_eq!(c.kernel_evaluations, 1);
        let want = log_likelihood(&f, &StateVector::new(10.5, 7.5, 0.0, 0.0, 10.0), &p)
            .unwrap()
            .exp();
        assert!(s.weights().all(|w| w == want));
    }
}
