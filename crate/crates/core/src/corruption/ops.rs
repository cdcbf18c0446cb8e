use rand::Rng;
use rand_distr::StandardNormal;

use super::{CorruptionError, Image, Result};
use crate::scalar::{Real, SplitMix64};

/// Multiplies every channel by `r`. Random mode draws `r = rate · U(0,1)`;
/// deterministic mode uses `r = rate`. Returns the factor applied.
pub fn darken<T: Real>(
    img: &Image<T>,
    rate: f64,
    seed: u64,
    deterministic: bool,
) -> Result<(Image<T>, f64)> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(CorruptionError::Spec(format!(
            "R = {} outside [0, 1]",
            rate
        )));
    }
    let r = if deterministic {
        rate
    } else {
        rate * SplitMix64::new(seed).next_f64()
    };
    let rt = T::lit(r);
    Ok((img.map(|p| p * rt), r))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLevel {
    /// Constant standard deviation on the [0, 1] scale, e.g. 25/255.
    Fixed(f64),
    /// Per-image `σ = sqrt(U(0,1) · (b/255)²)` with `b` on the 8-bit scale.
    Random { b: f64 },
}

/// Draws the noise standard deviation for one image.
pub fn noise_sigma(level: NoiseLevel, rng: &mut SplitMix64) -> Result<f64> {
    match level {
        NoiseLevel::Fixed(s) if s >= 0.0 && s.is_finite() => Ok(s),
        NoiseLevel::Random { b } if b >= 0.0 && b.is_finite() => {
            Ok((rng.next_f64() * (b / 255.0).powi(2)).sqrt())
        }
        other => Err(CorruptionError::Spec(format!(
            "invalid noise level {:?}",
            other
        ))),
    }
}

/// Adds i.i.d. zero-mean Gaussian noise and clamps to [0, 1].
pub fn add_noise<T: Real>(img: &Image<T>, level: NoiseLevel, seed: u64) -> Result<Image<T>> {
    let mut rng = SplitMix64::new(seed);
    let sigma = noise_sigma(level, &mut rng)?;
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let pixels = img
        .pixels()
        .iter()
        .map(|&p| {
            let z: f64 = rng.sample(StandardNormal);
            T::lit((p.as_f64() + sigma * z).clamp(0.0, 1.0))
        })
        .collect();
    Image::new(img.width(), img.height(), pixels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }
}

/// `int(W·√O_r) × int(H·√O_r)`.
pub fn occlusion_dims(width: usize, height: usize, rate: f64) -> (usize, usize) {
    let s = rate.sqrt();
    (
        ((width as f64 * s) as usize).min(width),
        ((height as f64 * s) as usize).min(height),
    )
}

/// Blacks out one rectangle placed uniformly at random fully inside the
/// image.
pub fn occlude<T: Real>(img: &Image<T>, rate: f64, seed: u64) -> Result<(Image<T>, Rect)> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(CorruptionError::Spec(format!(
            "O_r = {} outside [0, 1]",
            rate
        )));
    }
    let (w, h) = occlusion_dims(img.width(), img.height(), rate);
    let mut rng = SplitMix64::new(seed);
    let x = rng.random_range(0..=img.width() - w);
    let y = rng.random_range(0..=img.height() - h);
    let rect = Rect { x, y, w, h };
    let mut pixels = img.pixels().to_vec();
    for row in y..y + h {
        let start = (row * img.width() + x) * 3;
        pixels[start..start + w * 3].fill(T::zero());
    }
    Ok((Image::new(img.width(), img.height(), pixels)?, rect))
}

/// Exact box weights for shrinking an axis of `src` samples to `dst`.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let (lo, hi) = (o as f64 * scale, (o + 1) as f64 * scale);
            let mut taps = Vec::new();
            let mut i = lo.floor() as usize;
            while (i as f64) < hi && i < src {
                let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                if overlap > 0.0 {
                    taps.push((i, overlap / scale));
                }
                i += 1;
            }
            taps
        })
        .collect()
}

/// Area-average downsampling to `width × height`.
pub fn low_res<T: Real>(img: &Image<T>, width: usize, height: usize) -> Result<Image<T>> {
    if width == 0 || height == 0 || width > img.width() || height > img.height() {
        return Err(CorruptionError::Spec(format!(
            "target {}x{} must be non-empty and no larger than {}x{}",
            width,
            height,
            img.width(),
            img.height()
        )));
    }
    if width == img.width() && height == img.height() {
        return Ok(img.clone());
    }
    let wx = area_weights(img.width(), width);
    let wy = area_weights(img.height(), height);
    // rows first, then columns
    let mut tmp = vec![0.0f64; img.height() * width * 3];
    for y in 0..img.height() {
        for (ox, taps) in wx.iter().enumerate() {
            for c in 0..3 {
                tmp[(y * width + ox) * 3 + c] = taps
                    .iter()
                    .map(|&(ix, wgt)| wgt * img.get(ix, y, c).as_f64())
                    .sum();
            }
        }
    }
    let mut out = Vec::with_capacity(width * height * 3);
    for taps in &wy {
        for ox in 0..width {
            for c in 0..3 {
                let v: f64 = taps
                    .iter()
                    .map(|&(iy, wgt)| wgt * tmp[(iy * width + ox) * 3 + c])
                    .sum();
                out.push(T::lit(v));
            }
        }
    }
    Image::from_clamped(width, height, out)
}
