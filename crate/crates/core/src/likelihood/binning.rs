use crate::particle::ParticleStore;

/// One occupied pixel and the range of its particles in [`PixelBinning::order`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelBin {
    pub x: usize,
    pub y: usize,
    start: usize,
    end: usize,
}

impl PixelBin {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub(crate) fn range(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

/// Partition of particle indices by pixel `(⌊x̂⌋, ⌊ŷ⌋)`.
///
/// Bins are listed in row-major pixel order; within a bin particle indices
/// ascend. Particles outside the frame (or with non-finite positions) are
/// collected in `rejected` instead.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelBinning {
    width: usize,
    height: usize,
    bins: Vec<PixelBin>,
    order: Vec<u32>,
    rejected: Vec<usize>,
}

impl PixelBinning {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bins(&self) -> &[PixelBin] {
        &self.bins
    }

    /// Particle indices of bin `b`.
    pub fn particles_of(&self, b: usize) -> &[u32] {
        &self.order[self.bins[b].range()]
    }

    /// Particle indices grouped bin after bin.
    pub fn order(&self) -> &[u32] {
        &self.order
    }

    pub fn rejected(&self) -> &[usize] {
        &self.rejected
    }

    /// Number of binned particles plus rejects.
    pub fn particle_count(&self) -> usize {
        self.order.len() + self.rejected.len()
    }
}

/// Counting sort of particles into pixels of a `width × height` frame.
pub fn bin_particles(store: &ParticleStore, width: usize, height: usize) -> PixelBinning {
    let n_pix = width * height;
    let mut keys = Vec::with_capacity(store.len());
    let mut rejected = Vec::new();
    let mut counts = vec![0u32; n_pix + 1];
    for (i, p) in store.particles().iter().enumerate() {
        let (x, y) = (p.state.x_hat, p.state.y_hat);
        if x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64 {
            let key = y as usize * width + x as usize;
            counts[key + 1] += 1;
            keys.push((i, key));
        } else {
            rejected.push(i);
        }
    }
    for k in 1..=n_pix {
        counts[k] += counts[k - 1];
    }
    let mut order = vec![0u32; keys.len()];
    let mut cursor = counts.clone();
    for &(i, key) in &keys {
        order[cursor[key] as usize] = i as u32;
        cursor[key] += 1;
    }
    let bins = (0..n_pix)
        .filter(|&k| counts[k + 1] > counts[k])
        .map(|k| PixelBin {
            x: k % width,
            y: k / width,
            start: counts[k] as usize,
            end: counts[k + 1] as usize,
        })
        .collect();
    PixelBinning {
        width,
        height,
        bins,
        order,
        rejected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::particle::{Particle, StateVector};

    fn store_at(points: &[(f64, f64)]) -> ParticleStore {
        ParticleStore::from_particles(
            points
                .iter()
                .map(|&(x, y)| Particle::new(StateVector::new(x, y, 0.0, 0.0, 1.0), 1.0, 0))
                .collect(),
        )
    }

    #[test]
    fn shared_pixel() {
        let b = bin_particles(&store_at(&[(5.2, 7.9); 3]), 16, 16);
        assert_eq!(b.bins().len(), 1);
        assert_eq!((b.bins()[0].x, b.bins()[0].y), (5, 7));
        assert_eq!(b.particles_of(0), &[0, 1, 2]);
    }

    #[test]
    fn origin_and_neighbours() {
        let b = bin_particles(&store_at(&[(0.0, 0.0)]), 4, 4);
        assert_eq!((b.bins()[0].x, b.bins()[0].y), (0, 0));

        let b = bin_particles(&store_at(&[(2.5, 1.5), (1.5, 1.5)]), 4, 4);
        assert_eq!(b.bins().len(), 2);
        assert_eq!((b.bins()[0].x, b.particles_of(0)), (1, &[1u32][..]));
        assert_eq!((b.bins()[1].x, b.particles_of(1)), (2, &[0u32][..]));
    }

    #[test]
    fn rejects_out_of_frame() {
        let b = bin_particles(
            &store_at(&[(-0.5, 1.0), (1.0, 1.0), (4.0, 0.0), (f64::NAN, 0.0)]),
            4,
            4,
        );
        assert_eq!(b.rejected(), &[0, 2, 3]);
        assert_eq!(b.order(), &[1]);
    }

    #[test]
    fn exact_partition() {
        let mut rng = crate::rng::RngStream::new(4, 0);
        let pts: Vec<(f64, f64)> = (0..2000)
            .map(|_| (rng.uniform_in(-2.0, 34.0), rng.uniform_in(-2.0, 22.0)))
            .collect();
        let b = bin_particles(&store_at(&pts), 32, 20);
        let mut seen = vec![0; pts.len()];
        for (k, bin) in b.bins().iter().enumerate() {
            for &i in b.particles_of(k) {
                seen[i as usize] += 1;
                assert_eq!(pts[i as usize].0.floor() as usize, bin.x);
                assert_eq!(pts[i as usize].1.floor() as usize, bin.y);
            }
        }
        for &i in b.rejected() {
            seen[i] += 1;
        }
        assert!(seen.iter().all(|&c| c == 1));
    }
}
