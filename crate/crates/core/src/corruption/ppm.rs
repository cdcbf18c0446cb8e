//! Binary PPM (P6, 8-bit) with a linear mapping between bytes and [0, 1].

use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};

use super::{CorruptionError, Image, Result};
use crate::scalar::Real;

fn image_err(path: &Path, e: impl std::fmt::Display) -> CorruptionError {
    CorruptionError::Image {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

pub fn to_bytes<T: Real>(img: &Image<T>) -> Vec<u8> {
    img.pixels()
        .iter()
        .map(|p| (p.as_f64() * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

pub fn from_bytes<T: Real>(width: usize, height: usize, bytes: &[u8]) -> Result<Image<T>> {
    Image::new(
        width,
        height,
        bytes.iter().map(|&b| T::lit(b as f64 / 255.0)).collect(),
    )
}

pub fn read_ppm<T: Real>(path: &Path) -> Result<Image<T>> {
    let bytes = std::fs::read(path).map_err(|source| CorruptionError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let decoded = image::load_from_memory_with_format(&bytes, ImageFormat::Pnm)
        .map_err(|e| image_err(path, e))?
        .to_rgb8();
    let (w, h) = decoded.dimensions();
    from_bytes(w as usize, h as usize, decoded.as_raw())
}

/// Encodes `img` as a complete P6 file in memory.
pub fn encode_ppm<T: Real>(img: &Image<T>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
        .write_image(
            &to_bytes(img),
            img.width() as u32,
            img.height() as u32,
            ExtendedColorType::Rgb8,
        )
        .map_err(|e| CorruptionError::Image {
            path: "<memory>".into(),
            msg: e.to_string(),
        })?;
    Ok(out)
}

pub fn write_ppm<T: Real>(path: &Path, img: &Image<T>) -> Result<()> {
    let bytes = encode_ppm(img)?;
    std::fs::write(path, bytes).map_err(|source| CorruptionError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ppm");
        let px: Vec<f64> = (0..2 * 3 * 3).map(|i| i as f64 * 15.0 / 255.0).collect();
        let img = Image::new(2, 3, px).unwrap();
        write_ppm(&path, &img).unwrap();
        let raw = std::fs::read(&path).unwrap();
        assert!(raw.starts_with(b"P6"));
        assert_eq!(&raw[raw.len() - 18..], &to_bytes(&img)[..]);
        let back: Image<f64> = read_ppm(&path).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn missing_file_is_io_error() {
        let r: Result<Image<f32>> = read_ppm(Path::new("/nonexistent/x.ppm"));
        assert!(matches!(r, Err(CorruptionError::Io { .. })));
    }
}
