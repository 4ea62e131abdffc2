use super::ModelError;
use crate::particle::StateVector;

/// How the squared residuals over the support are turned into a log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LikelihoodForm {
    /// `−(1/2σ_ξ²) Σ (Z − I)²` over the clipped support.
    #[default]
    Residual,
    /// `−(1/2σ_ξ²) Σ [(Z − I)² − (Z − I_bg)²]` over the same support: the
    /// residual measured against the object-free model. This equals the
    /// whole-image Gaussian likelihood up to a factor that does not depend on
    /// the state, so supports of different sizes (near pixel centres or the
    /// image border) compare fairly.
    BackgroundReferenced,
}

impl std::str::FromStr for LikelihoodForm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "residual" => Ok(LikelihoodForm::Residual),
            "referenced" | "background-referenced" | "ratio" => {
                Ok(LikelihoodForm::BackgroundReferenced)
            }
            other => Err(format!(
                "unknown likelihood form `{other}` (expected residual or referenced)"
            )),
        }
    }
}

impl std::fmt::Display for LikelihoodForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LikelihoodForm::Residual => "residual",
            LikelihoodForm::BackgroundReferenced => "referenced",
        })
    }
}

/// Gaussian-PSF appearance model and likelihood peakiness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationParams {
    pub sigma_psf: f64,
    pub sigma_xi: f64,
    pub i_bg: f64,
    pub form: LikelihoodForm,
}

impl ObservationParams {
    pub fn new(sigma_psf: f64, sigma_xi: f64, i_bg: f64) -> Result<Self, ModelError> {
        let p = Self {
            sigma_psf,
            sigma_xi,
            i_bg,
            form: LikelihoodForm::Residual,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_form(self, form: LikelihoodForm) -> Self {
        Self { form, ..self }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.sigma_psf > 0.0 && self.sigma_psf.is_finite()) {
            return Err(ModelError::InvalidParams(format!(
                "sigma_psf = {}",
                self.sigma_psf
            )));
        }
        if !(self.sigma_xi > 0.0 && self.sigma_xi.is_finite()) {
            return Err(ModelError::InvalidParams(format!(
                "sigma_xi = {}",
                self.sigma_xi
            )));
        }
        if !(self.i_bg >= 0.0 && self.i_bg.is_finite()) {
            return Err(ModelError::InvalidParams(format!("i_bg = {}", self.i_bg)));
        }
        Ok(())
    }

    /// Half-width of the likelihood support, `3σ_PSF`, in pixels.
    pub fn support_radius(&self) -> f64 {
        3.0 * self.sigma_psf
    }

    /// `⌈3σ_PSF⌉`: half-width of the square patch that covers the support
    /// of any state lying in a given pixel.
    pub fn kernel_halfwidth(&self) -> usize {
        self.support_radius().ceil() as usize
    }
}

/// Converts an amplitude SNR to decibels.
pub fn snr_to_db(snr: f64) -> f64 {
    20.0 * snr.log10()
}

/// Background-free spot profile `I0·exp(−((x−x0)² + (y−y0)²) / 2σ²)`.
#[inline]
pub fn psf_profile(x: f64, y: f64, x0: f64, y0: f64, i0: f64, sigma_psf: f64) -> f64 {
    let dx = x - x0;
    let dy = y - y0;
    i0 * (-(dx * dx + dy * dy) / (2.0 * sigma_psf * sigma_psf)).exp()
}

/// `I(x, y; x0, y0) = I0·exp(−((x−x0)² + (y−y0)²) / 2σ²) + I_bg`.
#[inline]
pub fn psf_intensity(x: f64, y: f64, x0: f64, y0: f64, i0: f64, params: &ObservationParams) -> f64 {
    psf_profile(x, y, x0, y0, i0, params.sigma_psf) + params.i_bg
}

/// A single image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, ModelError> {
        if width == 0 || height == 0 {
            return Err(ModelError::InvalidParams(format!(
                "frame size {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(ModelError::InvalidParams(format!(
                "{} pixels for a {width}x{height} frame",
                pixels.len()
            )));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidParams("non-finite pixel".into()));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self, ModelError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.pixels[y * self.width + x] = value;
    }

    /// True when `(x, y)` lies in `[0, width) × [0, height)`.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x < self.width as f64 && y < self.height as f64
    }
}

/// Read access to image intensities by absolute frame coordinates.
///
/// Implemented by whole frames and by image patches; the likelihood kernel
/// only ever reads pixels inside the clipped support.
pub trait PixelSource {
    fn frame_width(&self) -> usize;
    fn frame_height(&self) -> usize;
    fn pixel(&self, x: usize, y: usize) -> f64;
}

impl PixelSource for Frame {
    fn frame_width(&self) -> usize {
        self.width
    }

    fn frame_height(&self) -> usize {
        self.height
    }

    #[inline]
    fn pixel(&self, x: usize, y: usize) -> f64 {
        self.get(x, y)
    }
}

/// Integer pixel range `[⌈c − r⌉, ⌊c + r⌋]` clipped to `[0, len)`.
#[inline]
pub(crate) fn support_range(center: f64, radius: f64, len: usize) -> (usize, usize) {
    let lo = (center - radius).ceil().max(0.0) as usize;
    let hi = ((center + radius).floor() as i64)
        .min(len as i64 - 1)
        .max(0) as usize;
    (lo, hi)
}

/// Log-likelihood of `state` against any pixel source; see [`log_likelihood`].
pub fn log_likelihood_in<S: PixelSource + ?Sized>(
    src: &S,
    state: &StateVector,
    params: &ObservationParams,
) -> Result<f64, ModelError> {
    let (w, h) = (src.frame_width(), src.frame_height());
    let (x, y) = (state.x_hat, state.y_hat);
    if !(x >= 0.0 && y >= 0.0 && x < w as f64 && y < h as f64) {
        return Err(ModelError::OutOfBounds {
            x,
            y,
            width: w,
            height: h,
        });
    }
    let r = params.support_radius();
    let (x0, x1) = support_range(x, r, w);
    let (y0, y1) = support_range(y, r, h);
    let mut acc = 0.0;
    match params.form {
        LikelihoodForm::Residual => {
            for yi in y0..=y1 {
                for xi in x0..=x1 {
                    let model = psf_intensity(xi as f64, yi as f64, x, y, state.i0, params);
                    let residual = src.pixel(xi, yi) - model;
                    acc += residual * residual;
                }
            }
        }
        LikelihoodForm::BackgroundReferenced => {
            // (Z − b − g)² − (Z − b)² = g·(g − 2(Z − b))
            for yi in y0..=y1 {
                for xi in x0..=x1 {
                    let g = psf_profile(xi as f64, yi as f64, x, y, state.i0, params.sigma_psf);
                    acc += g * (g - 2.0 * (src.pixel(xi, yi) - params.i_bg));
                }
            }
        }
    }
    Ok(-acc / (2.0 * params.sigma_xi * params.sigma_xi))
}

/// `−(1/2σ_ξ²) Σ [Z(xᵢ, yᵢ) − I(xᵢ, yᵢ; x̂, ŷ)]²` over the integer pixels of the
/// `±3σ_PSF` square around `(x̂, ŷ)`, clipped to the image.
///
/// With [`LikelihoodForm::BackgroundReferenced`] the object-free residual
/// over the same pixels is subtracted inside the sum.
///
/// Fails with [`ModelError::OutOfBounds`] when `(x̂, ŷ)` is outside the frame.
pub fn log_likelihood(
    frame: &Frame,
    state: &StateVector,
    params: &ObservationParams,
) -> Result<f64, ModelError> {
    log_likelihood_in(frame, state, params)
}
