use crate::models::{Frame, ObservationParams, PixelSource};

/// Contiguous copy of the `(2h+1)²` frame region around a pixel, clipped at
/// the frame border, with `h = ⌈3σ_PSF⌉`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePatch {
    pub center: (usize, usize),
    pub halfwidth: usize,
    origin: (usize, usize),
    size: (usize, usize),
    frame_size: (usize, usize),
    data: Vec<f64>,
}

impl ImagePatch {
    /// Top-left corner in frame coordinates.
    pub fn origin(&self) -> (usize, usize) {
        self.origin
    }

    /// Patch size `(width, height)` after clipping.
    pub fn size(&self) -> (usize, usize) {
        self.size
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// True when the frame border cut the patch.
    pub fn is_clipped(&self) -> bool {
        let full = 2 * self.halfwidth + 1;
        self.size != (full, full)
    }

    pub fn contains_pixel(&self, x: usize, y: usize) -> bool {
        x >= self.origin.0
            && y >= self.origin.1
            && x < self.origin.0 + self.size.0
            && y < self.origin.1 + self.size.1
    }
}

impl PixelSource for ImagePatch {
    fn frame_width(&self) -> usize {
        self.frame_size.0
    }

    fn frame_height(&self) -> usize {
        self.frame_size.1
    }

    #[inline]
    fn pixel(&self, x: usize, y: usize) -> f64 {
        debug_assert!(self.contains_pixel(x, y), "pixel ({x}, {y}) outside patch");
        self.data[(y - self.origin.1) * self.size.0 + (x - self.origin.0)]
    }
}

/// Copies the patch centred on pixel `center`; the center must lie in the frame.
pub fn load_patch(frame: &Frame, center: (usize, usize), params: &ObservationParams) -> ImagePatch {
    let h = params.kernel_halfwidth();
    let (cx, cy) = center;
    assert!(
        cx < frame.width() && cy < frame.height(),
        "patch center outside frame"
    );
    let x0 = cx.saturating_sub(h);
    let y0 = cy.saturating_sub(h);
    let x1 = (cx + h).min(frame.width() - 1);
    let y1 = (cy + h).min(frame.height() - 1);
    let (w, hgt) = (x1 - x0 + 1, y1 - y0 + 1);
    let mut data = Vec::with_capacity(w * hgt);
    for y in y0..=y1 {
        let row = y * frame.width();
        data.extend_from_slice(&frame.pixels()[row + x0..=row + x1]);
    }
    ImagePatch {
        center,
        halfwidth: h,
        origin: (x0, y0),
        size: (w, hgt),
        frame_size: (frame.width(), frame.height()),
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Frame {
        Frame::new(w, h, (0..w * h).map(|i| i as f64).collect()).unwrap()
    }

    fn params() -> ObservationParams {
        ObservationParams::new(1.16, 1.0, 0.0).unwrap()
    }

    #[test]
    fn interior_patch_matches_frame() {
        let f = ramp(30, 20);
        let p = load_patch(&f, (10, 9), &params());
        assert_eq!(p.halfwidth, 4);
        assert_eq!(p.size(), (9, 9));
        assert!(!p.is_clipped());
        for y in 5..=13 {
            for x in 6..=14 {
                assert_eq!(p.pixel(x, y), f.get(x, y));
            }
        }
    }

    #[test]
    fn corner_patch_is_clipped() {
        let f = ramp(30, 20);
        let p = load_patch(&f, (0, 0), &params());
        assert_eq!(p.size(), (5, 5));
        assert!(p.is_clipped());
        assert_eq!(p.pixel(4, 4), f.get(4, 4));

        let p = load_patch(&f, (29, 19), &params());
        assert_eq!(p.origin(), (25, 15));
        assert_eq!(p.size(), (5, 5));
    }
}
