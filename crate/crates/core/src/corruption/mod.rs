//! Image degradations (low light with sensor noise, fixed noise, occlusion,
//! low resolution), the blur + equalisation enhancer, and quality measures.

mod enhance;
mod ops;
pub mod ppm;
mod quality;

pub use enhance::{
    enhance, equalize_luma, gaussian_blur, gaussian_kernel_1d, BLUR_SIGMA, BLUR_SIZE,
};
pub use ops::{add_noise, darken, low_res, noise_sigma, occlude, occlusion_dims, NoiseLevel, Rect};
pub use quality::{
    aggd_fit, brisque_features, ggd_fit, mscn, psnr, BrisqueModel, QualityReport, BRISQUE_FEATURES,
};

use rand::RngCore;
use thiserror::Error;

use crate::scalar::{Real, SplitMix64};
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum CorruptionError {
    #[error("invalid corruption spec: {0}")]
    Spec(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("image error in {path}: {msg}")]
    Image { path: String, msg: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, CorruptionError>;

/// Interleaved RGB raster, `H × W × 3`, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    pixels: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn new(width: usize, height: usize, pixels: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(CorruptionError::Dimension(format!(
                "image must be non-empty, got {}x{}",
                width, height
            )));
        }
        if pixels.len() != width * height * 3 {
            return Err(CorruptionError::Dimension(format!(
                "{}x{} RGB image needs {} values, got {}",
                width,
                height,
                width * height * 3,
                pixels.len()
            )));
        }
        if pixels
            .iter()
            .any(|p| !p.is_finite() || *p < T::zero() || *p > T::one())
        {
            return Err(CorruptionError::Input(
                "pixel values must be finite and within [0, 1]".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            pixels: vec![value.max(T::zero()).min(T::one()); width * height * 3],
        }
    }

    /// Builds from values that may stray outside [0, 1] by clamping them.
    pub fn from_clamped(width: usize, height: usize, mut pixels: Vec<T>) -> Result<Self> {
        for p in &mut pixels {
            *p = if p.is_nan() {
                T::zero()
            } else {
                p.max(T::zero()).min(T::one())
            };
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.pixels[(y * self.width + x) * 3 + c]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|p| p.as_f64()).sum::<f64>() / self.pixels.len() as f64
    }

    /// Planar `[3, H, W]` tensor for the network.
    pub fn to_chw(&self) -> Tensor<T> {
        let hw = self.width * self.height;
        let mut data = vec![T::zero(); 3 * hw];
        for (i, px) in self.pixels.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * hw + i] = px[c];
            }
        }
        Tensor::new(&[3, self.height, self.width], data).expect("non-empty image")
    }

    pub fn cast<U: Real>(&self) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&p| U::lit(p.as_f64())).collect(),
        }
    }

    fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
        }
    }
}

/// A degradation together with the seed that drives its randomness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorruptionMode {
    /// Scale brightness by `r` then add Gaussian noise with
    /// `σ = sqrt(U(0,1) · (b/255)²)`. With `deterministic`, `r = rate`;
    /// otherwise `r = rate · U(0,1)`.
    DarkenNoise {
        rate: f64,
        b: f64,
        deterministic: bool,
    },
    FixedNoise {
        sigma: f64,
    },
    Occlude {
        rate: f64,
    },
    LowRes {
        width: usize,
        height: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionSpec {
    pub mode: CorruptionMode,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(mode: CorruptionMode, seed: u64) -> Result<Self> {
        let spec = Self { mode, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(CorruptionError::Spec(format!(
                    "{} = {} outside [0, 1]",
                    name, v
                )))
            }
        };
        match self.mode {
            CorruptionMode::DarkenNoise { rate, b, .. } => {
                unit("R", rate)?;
                if !(b >= 0.0 && b.is_finite()) {
                    return Err(CorruptionError::Spec(format!("B = {} must be >= 0", b)));
                }
            }
            CorruptionMode::FixedNoise { sigma } => {
                if !(sigma >= 0.0 && sigma.is_finite()) {
                    return Err(CorruptionError::Spec(format!(
                        "sigma = {} must be >= 0",
                        sigma
                    )));
                }
            }
            CorruptionMode::Occlude { rate } => unit("O_r", rate)?,
            CorruptionMode::LowRes { width, height } => {
                if width == 0 || height == 0 {
                    return Err(CorruptionError::Spec("target dims must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Corrupts one sample; randomness comes from `(seed, sample_index)`, so
    /// repeated calls are bit-identical.
    pub fn apply<T: Real>(&self, img: &Image<T>, sample_index: u64) -> Result<Image<T>> {
        self.validate()?;
        let stream = SplitMix64::derive(self.seed, sample_index).next_u64();
        match self.mode {
            CorruptionMode::DarkenNoise {
                rate,
                b,
                deterministic,
            } => {
                let (dark, _) = darken(img, rate, stream, deterministic)?;
                add_noise(&dark, NoiseLevel::Random { b }, stream ^ 0x5EED)
            }
            CorruptionMode::FixedNoise { sigma } => {
                add_noise(img, NoiseLevel::Fixed(sigma), stream)
            }
            CorruptionMode::Occlude { rate } => Ok(occlude(img, rate, stream)?.0),
            CorruptionMode::LowRes { width, height } => low_res(img, width, height),
        }
    }
}
