use std::fs;
use std::path::Path;

use libm::tgamma;

use super::{CorruptionError, Image, Result};
use crate::scalar::Real;

pub const BRISQUE_FEATURES: usize = 36;
const MIN_SIDE: usize = 32;
const WINDOW: usize = 7;
const WINDOW_SIGMA: f64 = 7.0 / 6.0;
/// Added to the local std so flat regions give zero rather than 0/0.
const STABILIZER: f64 = 1.0;

/// `10·log10(1 / MSE)` over all channels; `+∞` for identical images.
pub fn psnr<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(CorruptionError::Dimension(format!(
            "psnr needs equal dims, got {}x{} and {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let mse = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| (x.as_f64() - y.as_f64()).powi(2))
        .sum::<f64>()
        / a.pixels().len() as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    })
}

fn gray_255<T: Real>(img: &Image<T>) -> Vec<f64> {
    img.pixels()
        .chunks_exact(3)
        .map(|p| 255.0 * (0.299 * p[0].as_f64() + 0.587 * p[1].as_f64() + 0.114 * p[2].as_f64()))
        .collect()
}

fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let j = i.rem_euclid(period);
    (if j >= n as isize { period - j } else { j }) as usize
}

fn smooth(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * src[y * w + reflect(x as isize + i as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[reflect(y as isize + i as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// Mean-subtracted contrast-normalised coefficients of a `w × h` plane.
pub fn mscn(plane: &[f64], w: usize, h: usize) -> Vec<f64> {
    let k = super::gaussian_kernel_1d(WINDOW, WINDOW_SIGMA);
    // MSCN is shift invariant; centring on one sample makes flat input
    // exactly zero instead of rounding noise
    let origin = plane.first().copied().unwrap_or(0.0);
    let plane: Vec<f64> = plane.iter().map(|v| v - origin).collect();
    let plane = &plane[..];
    let mu = smooth(plane, w, h, &k);
    let sq: Vec<f64> = plane.iter().map(|v| v * v).collect();
    let mu2 = smooth(&sq, w, h, &k);
    plane
        .iter()
        .zip(mu.iter().zip(&mu2))
        .map(|(&v, (&m, &m2))| {
            let sd = (m2 - m * m).max(0.0).sqrt();
            (v - m) / (sd + STABILIZER)
        })
        .collect()
}

/// Candidate shapes for moment matching.
fn shape_grid() -> impl Iterator<Item = f64> {
    (200..=10_000).map(|i| i as f64 * 1e-3)
}

fn argmin_shape(target: f64, ratio: impl Fn(f64) -> f64) -> f64 {
    shape_grid()
        .map(|a| (a, (ratio(a) - target).abs()))
        .filter(|(_, e)| e.is_finite())
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(a, _)| a)
        .unwrap_or(0.0)
}

/// Generalised Gaussian fit `(shape α, variance σ²)`; zeros for all-zero data.
pub fn ggd_fit(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let sigma2 = x.iter().map(|v| v * v).sum::<f64>() / n;
    let mean_abs = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    if !(sigma2 > 0.0 && mean_abs > 0.0) {
        return (0.0, 0.0);
    }
    let rho = sigma2 / (mean_abs * mean_abs);
    let alpha = argmin_shape(rho, |a| {
        tgamma(1.0 / a) * tgamma(3.0 / a) / tgamma(2.0 / a).powi(2)
    });
    (alpha, sigma2)
}

/// Asymmetric generalised Gaussian fit `(α, η, σ_l², σ_r²)`; zeros when
/// either side of the distribution is empty or flat.
pub fn aggd_fit(x: &[f64]) -> (f64, f64, f64, f64) {
    let side = |pred: fn(f64) -> bool| {
        let (s, c) = x
            .iter()
            .filter(|&&v| pred(v))
            .fold((0.0, 0usize), |(s, c), v| (s + v * v, c + 1));
        if c == 0 {
            0.0
        } else {
            s / c as f64
        }
    };
    let left2 = side(|v| v < 0.0);
    let right2 = side(|v| v > 0.0);
    if !(left2 > 0.0 && right2 > 0.0) {
        return (0.0, 0.0, 0.0, 0.0);
    }
    let (sl, sr) = (left2.sqrt(), right2.sqrt());
    let g = sl / sr;
    let n = x.len() as f64;
    let mean_abs = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    let mean_sq = x.iter().map(|v| v * v).sum::<f64>() / n;
    let r_hat = mean_abs * mean_abs / mean_sq;
    let big_r = r_hat * (g.powi(3) + 1.0) * (g + 1.0) / (g * g + 1.0).powi(2);
    let alpha = argmin_shape(big_r, |a| {
        tgamma(2.0 / a).powi(2) / (tgamma(1.0 / a) * tgamma(3.0 / a))
    });
    let eta = (sr - sl) * tgamma(2.0 / alpha) / tgamma(1.0 / alpha)
        * (tgamma(1.0 / alpha) / tgamma(3.0 / alpha)).sqrt();
    (alpha, eta, left2, right2)
}

fn scale_features(plane: &[f64], w: usize, h: usize, out: &mut Vec<f64>) {
    let m = mscn(plane, w, h);
    let (alpha, sigma2) = ggd_fit(&m);
    out.extend([alpha, sigma2]);
    let at = |x: usize, y: usize| m[y * w + x];
    let shifts: [(isize, isize); 4] = [(1, 0), (0, 1), (1, 1), (-1, 1)];
    for (dx, dy) in shifts {
        let mut prod = Vec::with_capacity(w * h);
        for y in 0..h - dy as usize {
            for x in 0..w {
                let x2 = x as isize + dx;
                if x2 < 0 || x2 >= w as isize {
                    continue;
                }
                prod.push(at(x, y) * at(x2 as usize, y + dy as usize));
            }
        }
        let (a, eta, l, r) = aggd_fit(&prod);
        out.extend([a, eta, l, r]);
    }
}

fn halve(plane: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (w2, h2) = (w / 2, h / 2);
    let mut out = Vec::with_capacity(w2 * h2);
    for y in 0..h2 {
        for x in 0..w2 {
            let s = plane[2 * y * w + 2 * x]
                + plane[2 * y * w + 2 * x + 1]
                + plane[(2 * y + 1) * w + 2 * x]
                + plane[(2 * y + 1) * w + 2 * x + 1];
            out.push(s / 4.0);
        }
    }
    (out, w2, h2)
}

/// 18 statistics at full and half scale: MSCN shape and variance, then
/// shape, mean, left and right variance for the horizontal, vertical and
/// two diagonal neighbour products.
pub fn brisque_features<T: Real>(img: &Image<T>) -> Result<Vec<f64>> {
    let (w, h) = (img.width(), img.height());
    if w.min(h) < MIN_SIDE {
        return Err(CorruptionError::Input(format!(
            "BRISQUE needs both sides >= {}, got {}x{}",
            MIN_SIDE, w, h
        )));
    }
    let gray = gray_255(img);
    let mut feats = Vec::with_capacity(BRISQUE_FEATURES);
    scale_features(&gray, w, h, &mut feats);
    let (half, w2, h2) = halve(&gray, w, h);
    scale_features(&half, w2, h2, &mut feats);
    debug_assert_eq!(feats.len(), BRISQUE_FEATURES);
    Ok(feats)
}

/// Linear proxy for the quality regressor: `raw = b + w·f`, score `100 − raw`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrisqueModel {
    pub intercept: f64,
    pub weights: Vec<f64>,
}

impl BrisqueModel {
    /// Text format: intercept on the first line, then 36 weights one per line.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let bad = |msg: String| CorruptionError::Input(format!("{}: {}", origin, msg));
        let values = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .enumerate()
            .map(|(i, l)| {
                l.parse::<f64>()
                    .map_err(|e| bad(format!("value {} '{}': {}", i + 1, l, e)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != BRISQUE_FEATURES + 1 {
            return Err(bad(format!(
                "expected {} numbers, found {}",
                BRISQUE_FEATURES + 1,
                values.len()
            )));
        }
        Ok(Self {
            intercept: values[0],
            weights: values[1..].to_vec(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| CorruptionError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn score(&self, features: &[f64]) -> f64 {
        let raw = self.intercept
            + self
                .weights
                .iter()
                .zip(features)
                .map(|(w, f)| w * f)
                .sum::<f64>();
        100.0 - raw
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub psnr: f64,
    pub brisque_features: Vec<f64>,
    pub brisque_score: Option<f64>,
}

impl QualityReport {
    /// PSNR of `img` against `reference` plus BRISQUE statistics of `img`.
    pub fn measure<T: Real>(
        reference: &Image<T>,
        img: &Image<T>,
        model: Option<&BrisqueModel>,
    ) -> Result<Self> {
        let psnr = psnr(reference, img)?;
        let brisque_features = brisque_features(img)?;
        let brisque_score = model.map(|m| m.score(&brisque_features));
        Ok(Self {
            psnr,
            brisque_features,
            brisque_score,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplace_shape_is_one() {
        // deterministic Laplace quantiles
        let n = 20_000;
        let x: Vec<f64> = (1..n)
            .map(|i| {
                let u = i as f64 / n as f64 - 0.5;
                -u.signum() * (1.0 - 2.0 * u.abs()).ln()
            })
            .collect();
        let (a, _) = ggd_fit(&x);
        assert!((a - 1.0).abs() < 0.05, "{a}");
    }

    #[test]
    fn aggd_symmetric_eta_zero() {
        let x: Vec<f64> = (-500..=500).map(|i| i as f64 / 100.0).collect();
        let (_, eta, l, r) = aggd_fit(&x);
        assert!(eta.abs() < 1e-9);
        assert!((l - r).abs() < 1e-9);
    }

    #[test]
    fn model_parse_counts_values() {
        let text = std::iter::repeat("0.5")
            .take(37)
            .collect::<Vec<_>>()
            .join("\n");
        let m = BrisqueModel::parse(&text, "m").unwrap();
        assert_eq!(m.score(&[2.0; 36]), 100.0 - 0.5 - 36.0);
        assert!(BrisqueModel::parse("1\n2\n", "m").is_err());
    }
}
