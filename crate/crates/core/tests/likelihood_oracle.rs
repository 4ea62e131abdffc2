use ppf::likelihood::{bin_particles, build_layout, log_likelihoods, LikelihoodMode};
use ppf::models::{Frame, LikelihoodForm, ObservationParams};
use ppf::particle::{Particle, ParticleStore, StateVector};
use ppf::rng::RngStream;

/// Double-double value `hi + lo`.
#[derive(Clone, Copy)]
struct Dd(f64, f64);

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd(s, (a - (s - bb)) + (b - bb))
}

impl Dd {
    fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.0, o.0);
        let lo = s.1 + self.1 + o.1;
        let hi = s.0 + lo;
        Dd(hi, lo - (hi - s.0))
    }

    fn neg(self) -> Dd {
        Dd(-self.0, -self.1)
    }

    fn square(self) -> Dd {
        let p = self.0 * self.0;
        let e = self.0.mul_add(self.0, -p) + 2.0 * self.0 * self.1;
        let hi = p + e;
        Dd(hi, e - (hi - p))
    }
}

/// Scans every pixel of the frame and keeps those inside the ±3σ square,
/// summing the squared residuals in double-double arithmetic.
fn naive(frame: &Frame, s: &StateVector, p: &ObservationParams) -> f64 {
    let r = 3.0 * p.sigma_psf;
    let mut acc = Dd(0.0, 0.0);
    for yi in 0..frame.height() {
        for xi in 0..frame.width() {
            let (dx, dy) = (xi as f64 - s.x_hat, yi as f64 - s.y_hat);
            if dx.abs() > r || dy.abs() > r {
                continue;
            }
            let spot = s.i0 * (-(dx * dx + dy * dy) / (2.0 * p.sigma_psf * p.sigma_psf)).exp();
            let above_bg = two_sum(frame.get(xi, yi), -p.i_bg);
            let resid = above_bg.add(Dd(-spot, 0.0)).square();
            acc = acc.add(match p.form {
                LikelihoodForm::Residual => resid,
                LikelihoodForm::BackgroundReferenced => resid.add(above_bg.square().neg()),
            });
        }
    }
    -(acc.0 + acc.1) / (2.0 * p.sigma_xi * p.sigma_xi)
}

fn random_frame(w: usize, h: usize, bg: f64, noise: f64, rng: &mut RngStream) -> Frame {
    let mut px: Vec<f64> = (0..w * h).map(|_| bg + noise * rng.normal()).collect();
    for _ in 0..3 {
        let (cx, cy, a) = (
            rng.uniform_in(0.0, w as f64),
            rng.uniform_in(0.0, h as f64),
            rng.uniform_in(2.0, 20.0),
        );
        for y in 0..h {
            for x in 0..w {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                px[y * w + x] += a * (-d2 / 2.7).exp();
            }
        }
    }
    Frame::new(w, h, px).unwrap()
}

#[test]
fn patch_evaluation_matches_full_frame_scan() {
    let mut rng = RngStream::new(2024, 7);
    let mut worst: f64 = 0.0;
    for config in 0..100 {
        let (w, h) = (
            16 + (rng.uniform() * 32.0) as usize,
            12 + (rng.uniform() * 32.0) as usize,
        );
        let form = if config % 2 == 0 {
            LikelihoodForm::Residual
        } else {
            LikelihoodForm::BackgroundReferenced
        };
        let params = ObservationParams::new(
            rng.uniform_in(0.7, 2.0),
            rng.uniform_in(0.5, 6.0),
            rng.uniform_in(0.0, 3.0),
        )
        .unwrap()
        .with_form(form);
        let frame = random_frame(w, h, params.i_bg, rng.uniform_in(0.1, 4.0), &mut rng);
        let store = ParticleStore::from_particles(
            (0..1000)
                .map(|i| {
                    let s = StateVector::new(
                        rng.uniform_in(0.0, w as f64),
                        rng.uniform_in(0.0, h as f64),
                        0.0,
                        0.0,
                        rng.uniform_in(0.0, 20.0),
                    );
                    Particle::new(s, 1.0 / 1000.0, i)
                })
                .collect(),
        );
        let threads = 1 + config % 4;
        let binning = bin_particles(&store, w, h);
        let layout = build_layout(&binning, threads);
        let (ll, _) = log_likelihoods(
            &store,
            &frame,
            &binning,
            &layout,
            &params,
            LikelihoodMode::Exact,
        );
        for (p, got) in store.particles().iter().zip(&ll) {
            let want = naive(&frame, &p.state, &params);
            let rel = if want == 0.0 {
                got.abs()
            } else {
                (got - want).abs() / want.abs()
            };
            assert!(
                rel <= 1e-12,
                "config {config}: {got} vs {want} at {:?}",
                p.state
            );
            worst = worst.max(rel);
        }
    }
    println!("largest relative deviation {worst:e}");
}

#[test]
fn pcsir_is_exact_at_pixel_centres() {
    let mut rng = RngStream::new(5, 5);
    for form in [
        LikelihoodForm::Residual,
        LikelihoodForm::BackgroundReferenced,
    ] {
        let params = ObservationParams::new(1.16, 5.0, 1.0)
            .unwrap()
            .with_form(form);
        let (w, h) = (40, 30);
        let frame = random_frame(w, h, 1.0, 5.0, &mut rng);
        let store = ParticleStore::from_particles(
            (0..3000)
                .map(|i| {
                    let x = (rng.uniform() * w as f64).floor() + 0.5;
                    let y = (rng.uniform() * h as f64).floor() + 0.5;
                    Particle::new(
                        StateVector::new(x, y, rng.normal(), rng.normal(), 9.0),
                        1.0 / 3000.0,
                        i,
                    )
                })
                .collect(),
        );
        for threads in [1, 3, 8] {
            let binning = bin_particles(&store, w, h);
            let layout = build_layout(&binning, threads);
            let (exact, ce) = log_likelihoods(
                &store,
                &frame,
                &binning,
                &layout,
                &params,
                LikelihoodMode::Exact,
            );
            let (pc, cp) = log_likelihoods(
                &store,
                &frame,
                &binning,
                &layout,
                &params,
                LikelihoodMode::Pcsir,
            );
            assert_eq!(
                exact.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                pc.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
            assert_eq!(ce.patch_loads, cp.patch_loads);
            assert!(cp.kernel_evaluations <= ce.kernel_evaluations);
            assert_eq!(cp.kernel_evaluations as usize, binning.bins().len());
        }
    }
}

#[test]
fn thread_count_does_not_change_values() {
    let mut rng = RngStream::new(9, 1);
    let params = ObservationParams::new(1.16, 5.0, 1.0).unwrap();
    let frame = random_frame(64, 64, 1.0, 5.0, &mut rng);
    let store = ParticleStore::from_particles(
        (0..5000)
            .map(|i| {
                let s = StateVector::new(
                    rng.uniform_in(0.0, 64.0),
                    rng.uniform_in(0.0, 64.0),
                    0.0,
                    0.0,
                    10.0,
                );
                Particle::new(s, 1.0 / 5000.0, i)
            })
            .collect(),
    );
    let binning = bin_particles(&store, 64, 64);
    let one = log_likelihoods(
        &store,
        &frame,
        &binning,
        &build_layout(&binning, 1),
        &params,
        LikelihoodMode::Exact,
    )
    .0;
    for t in [2, 4, 6, 16] {
        let many = log_likelihoods(
            &store,
            &frame,
            &binning,
            &build_layout(&binning, t),
            &params,
            LikelihoodMode::Exact,
        )
        .0;
        assert_eq!(one, many, "{t} threads");
    }
}
