//! Head annotations to density maps and back to counts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::scalar::Real;
use crate::tensor::Tensor;

/// Side of the square Gaussian stamp.
pub const KERNEL_SIZE: usize = 15;
/// Standard deviation in pixels (variance 4).
pub const DEFAULT_SIGMA: f64 = 2.0;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("head {index} at ({x}, {y}) lies outside the {width}x{height} image")]
    OutOfBounds {
        index: usize,
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("image dimensions must be positive, got {0}x{1}")]
    EmptyImage(usize, usize),
    #[error("invalid kernel width {0}")]
    Sigma(f64),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, AnnotationError>;

/// Head centres in pixel coordinates (`x` = column, `y` = row).
#[derive(Debug, Clone, PartialEq)]
pub struct HeadAnnotations {
    pub points: Vec<(f64, f64)>,
    pub width: usize,
    pub height: usize,
}

impl HeadAnnotations {
    pub fn new(points: Vec<(f64, f64)>, width: usize, height: usize) -> Result<Self> {
        let ann = Self {
            points,
            width,
            height,
        };
        ann.validate()?;
        Ok(ann)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(AnnotationError::EmptyImage(self.width, self.height));
        }
        for (index, &(x, y)) in self.points.iter().enumerate() {
            let inside = x.is_finite()
                && y.is_finite()
                && x >= 0.0
                && y >= 0.0
                && x < self.width as f64
                && y < self.height as f64;
            if !inside {
                return Err(AnnotationError::OutOfBounds {
                    index,
                    x,
                    y,
                    width: self.width,
                    height: self.height,
                });
            }
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.points.len()
    }

    /// CSV with header `x,y`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y\n");
        for (x, y) in &self.points {
            writeln!(s, "{},{}", x, y).expect("writing to a String");
        }
        s
    }

    pub fn from_csv(text: &str, width: usize, height: usize, origin: &str) -> Result<Self> {
        let parse_err = |line: usize, msg: String| AnnotationError::Parse {
            path: origin.to_string(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == "x,y" => {}
            Some((_, header)) => {
                return Err(parse_err(
                    1,
                    format!("expected header 'x,y', got '{}'", header),
                ))
            }
            None => return Err(parse_err(1, "empty file".into())),
        }
        let mut points = Vec::new();
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (xs, ys) = line
                .split_once(',')
                .ok_or_else(|| parse_err(i + 1, format!("expected 'x,y', got '{}'", line)))?;
            let x: f64 = xs
                .trim()
                .parse()
                .map_err(|e| parse_err(i + 1, format!("bad x '{}': {}", xs, e)))?;
            let y: f64 = ys
                .trim()
                .parse()
                .map_err(|e| parse_err(i + 1, format!("bad y '{}': {}", ys, e)))?;
            points.push((x, y));
        }
        Self::new(points, width, height)
    }

    pub fn load(path: &Path, width: usize, height: usize) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| AnnotationError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv(&text, width, height, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|source| AnnotationError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Per-pixel head density, `[H, W]`; the map sums to the head count.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap<T>(Tensor<T>);

impl<T: Real> DensityMap<T> {
    pub fn from_tensor(values: Tensor<T>) -> Self {
        Self(values)
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self(Tensor::zeros(&[height, width]))
    }

    pub fn values(&self) -> &Tensor<T> {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.0
    }

    pub fn width(&self) -> usize {
        self.0.dims()[self.0.dims().len() - 1]
    }

    pub fn height(&self) -> usize {
        self.0.dims()[self.0.dims().len() - 2]
    }

    pub fn at(&self, x: usize, y: usize) -> T {
        self.0.data()[y * self.width() + x]
    }
}

/// Unnormalised Gaussian stamp, `KERNEL_SIZE²` values, row-major.
fn stamp(sigma: f64) -> Vec<f64> {
    let r = (KERNEL_SIZE / 2) as isize;
    let mut k = Vec::with_capacity(KERNEL_SIZE * KERNEL_SIZE);
    for dy in -r..=r {
        for dx in -r..=r {
            let d2 = (dx * dx + dy * dy) as f64;
            k.push((-d2 / (2.0 * sigma * sigma)).exp());
        }
    }
    k
}

pub fn density_from_heads<T: Real>(ann: &HeadAnnotations) -> Result<DensityMap<T>> {
    density_from_heads_with_sigma(ann, DEFAULT_SIGMA)
}

/// Stamps a 15×15 Gaussian at each rounded head position. The part of the
/// stamp that falls inside the image is rescaled to sum to one, so every
/// head contributes exactly unit mass even at the borders.
pub fn density_from_heads_with_sigma<T: Real>(
    ann: &HeadAnnotations,
    sigma: f64,
) -> Result<DensityMap<T>> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(AnnotationError::Sigma(sigma));
    }
    ann.validate()?;
    let (w, h) = (ann.width, ann.height);
    let kernel = stamp(sigma);
    let r = (KERNEL_SIZE / 2) as isize;
    let mut acc = vec![0.0f64; w * h];
    for &(x, y) in &ann.points {
        let cx = (x.round() as isize).min(w as isize - 1);
        let cy = (y.round() as isize).min(h as isize - 1);
        let (y0, y1) = ((cy - r).max(0), (cy + r).min(h as isize - 1));
        let (x0, x1) = ((cx - r).max(0), (cx + r).min(w as isize - 1));
        let mut inside = 0.0;
        for py in y0..=y1 {
            for px in x0..=x1 {
                inside += kernel[((py - cy + r) as usize) * KERNEL_SIZE + (px - cx + r) as usize];
            }
        }
        for py in y0..=y1 {
            for px in x0..=x1 {
                let kv = kernel[((py - cy + r) as usize) * KERNEL_SIZE + (px - cx + r) as usize];
                acc[py as usize * w + px as usize] += kv / inside;
            }
        }
    }
    let values =
        Tensor::new(&[h, w], acc.into_iter().map(T::lit).collect()).expect("validated dims");
    Ok(DensityMap(values))
}

/// Total mass of a density map, i.e. its person count.
pub fn count_from_density<T: Real>(map: &DensityMap<T>) -> T {
    T::lit(map.values().data().iter().map(|v| v.as_f64()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_of_bounds_names_index() {
        let err = HeadAnnotations::new(vec![(1.0, 1.0), (8.0, 2.0)], 8, 8).unwrap_err();
        assert!(matches!(err, AnnotationError::OutOfBounds { index: 1, .. }));
        assert!(err.to_string().contains("head 1"));
    }

    #[test]
    fn csv_round_trip() {
        let ann = HeadAnnotations::new(vec![(1.25, 3.5), (0.0, 7.75)], 10, 10).unwrap();
        let back = HeadAnnotations::from_csv(&ann.to_csv(), 10, 10, "mem").unwrap();
        assert_eq!(back, ann);
    }

    #[test]
    fn csv_errors_carry_line() {
        let err = HeadAnnotations::from_csv("x,y\n1,2\nfoo\n", 10, 10, "a.csv").unwrap_err();
        assert!(err.to_string().starts_with("a.csv:3"));
        assert!(HeadAnnotations::from_csv("a,b\n", 10, 10, "b.csv").is_err());
    }

    #[test]
    fn empty_annotation_gives_zero_map() {
        let ann = HeadAnnotations::new(vec![], 16, 8).unwrap();
        let map = density_from_heads::<f64>(&ann).unwrap();
        assert_eq!(map.values().dims(), &[8, 16]);
        assert_eq!(count_from_density(&map), 0.0);
    }

    #[test]
    fn rejects_bad_sigma() {
        let ann = HeadAnnotations::new(vec![], 4, 4).unwrap();
        assert!(density_from_heads_with_sigma::<f32>(&ann, 0.0).is_err());
    }
}
