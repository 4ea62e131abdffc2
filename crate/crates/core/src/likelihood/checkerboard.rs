use super::PixelBinning;

/// Splits `threads` into a `tx × ty` grid with `tx ≥ ty`, as square as possible.
pub fn thread_grid(threads: usize) -> (usize, usize) {
    let t = threads.max(1);
    let ty = (1..=t)
        .take_while(|d| d * d <= t)
        .filter(|d| t.is_multiple_of(*d))
        .last()
        .unwrap_or(1);
    (t / ty, ty)
}

/// Tiling of the occupied bounding box and the tile → thread assignment.
///
/// The bounding box of occupied pixels is cut into `gx × gy` near-equal tiles
/// (`gx = 2·tx`, `gy = 2·ty`, so every thread owns four tiles unless the box
/// is smaller than the grid). Tiles are assigned cyclically so that edge
/// neighbours always land on different threads when `threads > 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckerboardLayout {
    threads: usize,
    grid: (usize, usize),
    origin: (usize, usize),
    extent: (usize, usize),
    tiles: (usize, usize),
    bin_thread: Vec<usize>,
    thread_bins: Vec<Vec<usize>>,
}

impl CheckerboardLayout {
    pub fn threads(&self) -> usize {
        self.threads
    }

    /// Thread grid `(tx, ty)`.
    pub fn thread_grid(&self) -> (usize, usize) {
        self.grid
    }

    /// Tile counts `(gx, gy)` along each axis.
    pub fn tile_counts(&self) -> (usize, usize) {
        self.tiles
    }

    /// Bounding box of occupied pixels as `(x0, y0, width, height)`.
    pub fn bounding_box(&self) -> (usize, usize, usize, usize) {
        (self.origin.0, self.origin.1, self.extent.0, self.extent.1)
    }

    /// Tile coordinates of pixel `(x, y)`, which must lie in the bounding box.
    pub fn tile_of(&self, x: usize, y: usize) -> (usize, usize) {
        let tx = (x - self.origin.0) * self.tiles.0 / self.extent.0;
        let ty = (y - self.origin.1) * self.tiles.1 / self.extent.1;
        (tx, ty)
    }

    pub fn thread_of_tile(&self, tx: usize, ty: usize) -> usize {
        let (cols, rows) = self.grid;
        if cols >= 2 && rows >= 2 {
            tx % cols + cols * (ty % rows)
        } else {
            (tx + ty) % self.threads
        }
    }

    /// Thread owning bin `b` of the binning the layout was built from.
    pub fn thread_of_bin(&self, b: usize) -> usize {
        self.bin_thread[b]
    }

    /// Bins owned by `thread`, in bin order.
    pub fn bins_of_thread(&self, thread: usize) -> &[usize] {
        &self.thread_bins[thread]
    }

    /// Particles handled by each thread.
    pub fn thread_loads(&self, binning: &PixelBinning) -> Vec<usize> {
        self.thread_bins
            .iter()
            .map(|bins| bins.iter().map(|&b| binning.bins()[b].len()).sum())
            .collect()
    }
}

/// Builds the checkerboard layout for `threads` workers over the occupied pixels.
pub fn build_layout(binning: &PixelBinning, threads: usize) -> CheckerboardLayout {
    let threads = threads.max(1);
    let grid = thread_grid(threads);
    let bins = binning.bins();
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for b in bins {
        x0 = x0.min(b.x);
        y0 = y0.min(b.y);
        x1 = x1.max(b.x);
        y1 = y1.max(b.y);
    }
    if bins.is_empty() {
        (x0, y0, x1, y1) = (0, 0, 0, 0);
    }
    let extent = (x1 - x0 + 1, y1 - y0 + 1);
    let tiles = ((2 * grid.0).min(extent.0), (2 * grid.1).min(extent.1));
    let mut layout = CheckerboardLayout {
        threads,
        grid,
        origin: (x0, y0),
        extent,
        tiles,
        bin_thread: Vec::with_capacity(bins.len()),
        thread_bins: vec![Vec::new(); threads],
    };
    for (k, b) in bins.iter().enumerate() {
        let (tx, ty) = layout.tile_of(b.x, b.y);
        let t = layout.thread_of_tile(tx, ty);
        layout.bin_thread.push(t);
        layout.thread_bins[t].push(k);
    }
    layout
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::bin_particles;
    use crate::particle::{Particle, ParticleStore, StateVector};
    use crate::rng::RngStream;

    fn store_of(points: impl IntoIterator<Item = (f64, f64)>) -> ParticleStore {
        ParticleStore::from_particles(
            points
                .into_iter()
                .map(|(x, y)| Particle::new(StateVector::new(x, y, 0.0, 0.0, 1.0), 1.0, 0))
                .collect(),
        )
    }

    fn uniform(n: usize, w: f64, h: f64, seed: u64) -> ParticleStore {
        let mut rng = RngStream::new(seed, 0);
        store_of(
            (0..n)
                .map(|_| (rng.uniform_in(0.0, w), rng.uniform_in(0.0, h)))
                .collect::<Vec<_>>(),
        )
    }

    #[test]
    fn grids() {
        assert_eq!(thread_grid(1), (1, 1));
        assert_eq!(thread_grid(2), (2, 1));
        assert_eq!(thread_grid(4), (2, 2));
        assert_eq!(thread_grid(6), (3, 2));
        assert_eq!(thread_grid(7), (7, 1));
        assert_eq!(thread_grid(8), (4, 2));
    }

    #[test]
    fn single_thread_owns_everything() {
        let s = uniform(500, 30.0, 30.0, 1);
        let b = bin_particles(&s, 30, 30);
        let l = build_layout(&b, 1);
        assert_eq!(l.bins_of_thread(0).len(), b.bins().len());
    }

    #[test]
    fn neighbours_differ() {
        for t in 2..=9 {
            let s = uniform(5000, 64.0, 48.0, t as u64);
            let l = build_layout(&bin_particles(&s, 64, 48), t);
            let (gx, gy) = l.tile_counts();
            assert!(gx * gy >= 4 * t);
            for ty in 0..gy {
                for tx in 0..gx {
                    let me = l.thread_of_tile(tx, ty);
                    assert!(me < t);
                    if tx + 1 < gx {
                        assert_ne!(me, l.thread_of_tile(tx + 1, ty), "T={t}");
                    }
                    if ty + 1 < gy {
                        assert_ne!(me, l.thread_of_tile(tx, ty + 1), "T={t}");
                    }
                }
            }
        }
    }

    #[test]
    fn circular_support_two_by_two() {
        // Posterior mass on a disc, as when the filter has locked on.
        let mut rng = RngStream::new(8, 0);
        let mut pts = Vec::new();
        while pts.len() < 4000 {
            let (x, y) = (rng.uniform_in(-6.0, 6.0), rng.uniform_in(-6.0, 6.0));
            if x * x + y * y <= 36.0 {
                pts.push((50.0 + x, 40.0 + y));
            }
        }
        let b = bin_particles(&store_of(pts), 100, 80);
        let l = build_layout(&b, 4);
        assert_eq!(l.thread_grid(), (2, 2));
        assert_eq!(l.tile_counts(), (4, 4));
        // Every thread owns four interleaved tiles and carries particles.
        for ty in 0..4 {
            for tx in 0..4 {
                assert_eq!(l.thread_of_tile(tx, ty), (tx % 2) + 2 * (ty % 2));
            }
        }
        let loads = l.thread_loads(&b);
        assert!(loads.iter().all(|&n| n > 0));
        assert_eq!(loads.iter().sum::<usize>(), 4000);
    }

    #[test]
    fn uniform_balance() {
        for t in [2, 3, 4, 8] {
            let n = 20_000;
            let s = uniform(n, 200.0, 120.0, 100 + t as u64);
            let b = bin_particles(&s, 200, 120);
            let loads = build_layout(&b, t).thread_loads(&b);
            let mean = n as f64 / t as f64;
            for &l in &loads {
                assert!(
                    (l as f64 - mean).abs() <= 0.2 * mean,
                    "T={t} loads={loads:?}"
                );
            }
        }
    }

    #[test]
    fn empty_binning() {
        let b = bin_particles(&ParticleStore::default(), 8, 8);
        let l = build_layout(&b, 4);
        assert!(l.thread_loads(&b).iter().all(|&n| n == 0));
    }
}
