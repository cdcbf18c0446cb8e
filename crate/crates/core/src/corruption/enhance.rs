use super::Image;
use crate::scalar::Real;

pub const BLUR_SIZE: usize = 11;
/// `0.3·((size−1)·0.5 − 1) + 0.8` for an 11-tap kernel.
pub const BLUR_SIGMA: f64 = 2.0;

const KR: f64 = 0.299;
const KG: f64 = 0.587;
const KB: f64 = 0.114;
const U_SCALE: f64 = 0.492;
const V_SCALE: f64 = 0.877;
const LEVELS: usize = 256;

/// Normalised 1-D Gaussian taps.
pub fn gaussian_kernel_1d(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let mut k: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Mirror index without repeating the edge sample (`dcb|abcd|cba`).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

/// Separable 11×11 Gaussian blur per channel with reflected borders.
pub fn gaussian_blur<T: Real>(img: &Image<T>) -> Image<T> {
    let k = gaussian_kernel_1d(BLUR_SIZE, BLUR_SIGMA);
    let r = (BLUR_SIZE / 2) as isize;
    let (w, h) = (img.width(), img.height());
    let mut tmp = vec![0.0f64; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                tmp[(y * w + x) * 3 + c] = k
                    .iter()
                    .enumerate()
                    .map(|(i, kv)| {
                        kv * img
                            .get(reflect(x as isize + i as isize - r, w), y, c)
                            .as_f64()
                    })
                    .sum();
            }
        }
    }
    let mut out = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v: f64 = k
                    .iter()
                    .enumerate()
                    .map(|(i, kv)| {
                        kv * tmp[(reflect(y as isize + i as isize - r, h) * w + x) * 3 + c]
                    })
                    .sum();
                out.push(T::lit(v));
            }
        }
    }
    Image::from_clamped(w, h, out).expect("same dims as input")
}

/// Histogram-equalises the luma (Y of YUV) on 256 levels, maps each level to
/// its cumulative frequency, and rebuilds RGB with the original chroma.
pub fn equalize_luma<T: Real>(img: &Image<T>) -> Image<T> {
    let n = img.width() * img.height();
    let mut luma = Vec::with_capacity(n);
    let mut chroma = Vec::with_capacity(n);
    for px in img.pixels().chunks_exact(3) {
        let (r, g, b) = (px[0].as_f64(), px[1].as_f64(), px[2].as_f64());
        let y = KR * r + KG * g + KB * b;
        luma.push(y);
        chroma.push((U_SCALE * (b - y), V_SCALE * (r - y)));
    }
    let level =
        |y: f64| ((y.clamp(0.0, 1.0) * (LEVELS - 1) as f64).round() as usize).min(LEVELS - 1);
    let mut hist = [0usize; LEVELS];
    for &y in &luma {
        hist[level(y)] += 1;
    }
    let mut cdf = [0.0f64; LEVELS];
    let mut running = 0usize;
    for (i, &c) in hist.iter().enumerate() {
        running += c;
        cdf[i] = running as f64 / n as f64;
    }
    let mut out = Vec::with_capacity(n * 3);
    for (&y, &(u, v)) in luma.iter().zip(&chroma) {
        let y2 = cdf[level(y)];
        let r = y2 + v / V_SCALE;
        let b = y2 + u / U_SCALE;
        let g = (y2 - KR * r - KB * b) / KG;
        out.extend([T::lit(r), T::lit(g), T::lit(b)]);
    }
    Image::from_clamped(img.width(), img.height(), out).expect("same dims as input")
}

/// Blur then luma equalisation.
pub fn enhance<T: Real>(img: &Image<T>) -> Image<T> {
    equalize_luma(&gaussian_blur(img))
}
