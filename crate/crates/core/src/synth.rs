//! Synthetic audiovisual crowd scenes: soft blobs on a plain background,
//! one head point per blob, and a babble track whose loudness grows with
//! the head count.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::audio::wav::{read_wav, write_wav};
use crate::audio::{AudioClip, AudioError, HOP, PATCH_FRAMES, TARGET_RATE, WINDOW};
use crate::corruption::ppm::{read_ppm, write_ppm};
use crate::corruption::{CorruptionError, Image};
use crate::ground_truth::{AnnotationError, HeadAnnotations};
use crate::model::DOWNSAMPLE;
use crate::scalar::{Real, SplitMix64};

/// Samples needed for one 96-frame log-mel patch.
pub const MIN_CLIP_SAMPLES: usize = WINDOW + (PATCH_FRAMES - 1) * HOP;
const ENVELOPE_STEP: usize = 800;
const MANIFEST_HEADER: &str = "image,annotation,audio,count";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    Spec(String),
    #[error("manifest {path}:{line}: {msg}")]
    Manifest {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Image(#[from] CorruptionError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
}

pub type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub n_min: usize,
    pub n_max: usize,
    /// Gaussian radius of a person blob in pixels.
    pub blob_radius: f64,
    /// Peak brightness of a blob.
    pub blob_intensity: f64,
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    /// Clip RMS contributed by one person; a scene of `n` has `rms·√n`.
    pub per_person_rms: f64,
    pub clip_samples: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 256,
            height: 144,
            n_min: 1,
            n_max: 40,
            blob_radius: 2.5,
            blob_intensity: 0.9,
            band_lo_hz: 300.0,
            band_hi_hz: 3000.0,
            per_person_rms: 0.02,
            clip_samples: TARGET_RATE as usize,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SynthError::Spec(m));
        if self.width == 0
            || self.height == 0
            || self.width % DOWNSAMPLE != 0
            || self.height % DOWNSAMPLE != 0
        {
            return bad(format!(
                "dims {}x{} must be positive multiples of {}",
                self.width, self.height, DOWNSAMPLE
            ));
        }
        if self.n_min > self.n_max {
            return bad(format!("n_min {} > n_max {}", self.n_min, self.n_max));
        }
        if !(self.blob_radius > 0.0 && self.blob_radius.is_finite()) {
            return bad(format!("blob radius {} must be > 0", self.blob_radius));
        }
        if !(self.blob_intensity > 0.0 && self.blob_intensity <= 1.0) {
            return bad(format!(
                "blob intensity {} outside (0, 1]",
                self.blob_intensity
            ));
        }
        let nyquist = TARGET_RATE as f64 / 2.0;
        if !(0.0 <= self.band_lo_hz
            && self.band_lo_hz < self.band_hi_hz
            && self.band_hi_hz <= nyquist)
        {
            return bad(format!(
                "band {}-{} Hz must satisfy 0 <= lo < hi <= {}",
                self.band_lo_hz, self.band_hi_hz, nyquist
            ));
        }
        if !(self.per_person_rms > 0.0 && self.per_person_rms.is_finite()) {
            return bad(format!(
                "per-person RMS {} must be > 0",
                self.per_person_rms
            ));
        }
        if self.clip_samples < MIN_CLIP_SAMPLES {
            return bad(format!(
                "clip of {} samples is shorter than one {}-sample patch",
                self.clip_samples, MIN_CLIP_SAMPLES
            ));
        }
        Ok(())
    }
}

/// One generated or loaded scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene<T> {
    pub image: Image<T>,
    pub heads: HeadAnnotations,
    pub audio: AudioClip<T>,
}

impl<T: Real> Scene<T> {
    pub fn count(&self) -> usize {
        self.heads.count()
    }
}

fn render(spec: &SceneSpec, rng: &mut SplitMix64, n: usize) -> (Vec<f64>, Vec<(f64, f64)>) {
    let (w, h) = (spec.width, spec.height);
    let base = rng.uniform(0.15, 0.35);
    let (gx, gy) = (rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05));
    let mut px = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let v = base + gx * (x as f64 / w as f64 - 0.5) + gy * (y as f64 / h as f64 - 0.5);
            px.extend([v, v, v]);
        }
    }
    let r = spec.blob_radius;
    let reach = (3.0 * r).ceil() as isize;
    let mut heads = Vec::with_capacity(n);
    for _ in 0..n {
        let cx = rng.uniform(0.0, w as f64);
        let cy = rng.uniform(0.0, h as f64);
        let tint = [
            rng.uniform(0.6, 1.0),
            rng.uniform(0.6, 1.0),
            rng.uniform(0.6, 1.0),
        ];
        heads.push((cx, cy));
        let (ix, iy) = (cx.floor() as isize, cy.floor() as isize);
        for y in (iy - reach).max(0)..=(iy + reach).min(h as isize - 1) {
            for x in (ix - reach).max(0)..=(ix + reach).min(w as isize - 1) {
                let dx = x as f64 + 0.5 - cx;
                let dy = y as f64 + 0.5 - cy;
                let a = (-(dx * dx + dy * dy) / (2.0 * r * r)).exp();
                let i = (y as usize * w + x as usize) * 3;
                for c in 0..3 {
                    let color = spec.blob_intensity * tint[c];
                    px[i + c] = (1.0 - a) * px[i + c] + a * color;
                }
            }
        }
    }
    (px, heads)
}

/// Sum of `n` independently gated white-noise voices, band-limited and
/// scaled to RMS `per_person_rms·√n`, then clipped to [−1, 1].
fn babble(spec: &SceneSpec, rng: &mut SplitMix64, n: usize) -> Vec<f64> {
    let len = spec.clip_samples;
    if n == 0 {
        return vec![0.0; len];
    }
    let mut mix = vec![0.0f64; len];
    let knots = len / ENVELOPE_STEP + 2;
    for _ in 0..n {
        let gains: Vec<f64> = (0..knots).map(|_| rng.uniform(0.1, 1.0)).collect();
        for (i, m) in mix.iter_mut().enumerate() {
            let k = i / ENVELOPE_STEP;
            let t = (i % ENVELOPE_STEP) as f64 / ENVELOPE_STEP as f64;
            let g = gains[k] + (gains[k + 1] - gains[k]) * t;
            let z: f64 = rng.sample(StandardNormal);
            *m += g * z;
        }
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = mix.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(len).process(&mut buf);
    let bin_hz = TARGET_RATE as f64 / len as f64;
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(len - k) as f64 * bin_hz;
        if f < spec.band_lo_hz || f > spec.band_hi_hz {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let mut out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    let target = spec.per_person_rms * (n as f64).sqrt();
    for v in &mut out {
        *v = (*v * target / rms).clamp(-1.0, 1.0);
    }
    out
}

/// Scene `index` of the family defined by `spec`; a pure function of
/// `(spec, index)`.
pub fn generate_scene<T: Real>(spec: &SceneSpec, index: u64) -> Result<Scene<T>> {
    spec.validate()?;
    let mut rng = SplitMix64::derive(spec.seed, index);
    let n = rng.random_range(spec.n_min..=spec.n_max);
    let mut audio_rng = SplitMix64::new(rng.next_u64());
    let (px, points) = render(spec, &mut rng, n);
    let image = Image::from_clamped(spec.width, spec.height, px)?.cast();
    let heads = HeadAnnotations::new(points, spec.width, spec.height)?;
    let samples = babble(spec, &mut audio_rng, n)
        .into_iter()
        .map(T::lit)
        .collect();
    let audio = AudioClip::mono(samples, TARGET_RATE)?;
    Ok(Scene {
        image,
        heads,
        audio,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub image: String,
    pub annotation: String,
    pub audio: String,
    pub count: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn manifest_to_csv(rows: &[ManifestRow]) -> String {
    let mut s = format!("{}\n", MANIFEST_HEADER);
    for r in rows {
        writeln!(s, "{},{},{},{}", r.image, r.annotation, r.audio, r.count)
            .expect("writing to a String");
    }
    s
}

/// Writes `n_scenes` scenes under `out_dir` (`images/`, `ann/`, `audio/`,
/// `manifest.csv`) and returns the manifest rows.
pub fn generate_dataset(
    spec: &SceneSpec,
    n_scenes: usize,
    out_dir: &Path,
) -> Result<Vec<ManifestRow>> {
    spec.validate()?;
    for sub in ["images", "ann", "audio"] {
        let dir = out_dir.join(sub);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    let mut rows = Vec::with_capacity(n_scenes);
    for i in 0..n_scenes {
        let scene = generate_scene::<f64>(spec, i as u64)?;
        let row = ManifestRow {
            image: format!("images/{:04}.ppm", i),
            annotation: format!("ann/{:04}.csv", i),
            audio: format!("audio/{:04}.wav", i),
            count: scene.count(),
        };
        write_ppm(&out_dir.join(&row.image), &scene.image)?;
        scene.heads.save(&out_dir.join(&row.annotation))?;
        write_wav(&out_dir.join(&row.audio), &scene.audio)?;
        rows.push(row);
    }
    let path = out_dir.join("manifest.csv");
    fs::write(&path, manifest_to_csv(&rows)).map_err(io_err(&path))?;
    Ok(rows)
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestRow>> {
    let path = dir.join("manifest.csv");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let err = |line: usize, msg: String| SynthError::Manifest {
        path: path.display().to_string(),
        line,
        msg,
    };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(MANIFEST_HEADER) {
        return Err(err(1, format!("expected header '{}'", MANIFEST_HEADER)));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let [image, annotation, audio, count] = f[..] else {
            return Err(err(i + 2, format!("expected 4 fields, got {}", f.len())));
        };
        let count = count
            .parse()
            .map_err(|e| err(i + 2, format!("bad count '{}': {}", count, e)))?;
        rows.push(ManifestRow {
            image: image.into(),
            annotation: annotation.into(),
            audio: audio.into(),
            count,
        });
    }
    Ok(rows)
}

/// Reads one manifest row back from disk.
pub fn load_scene<T: Real>(dir: &Path, row: &ManifestRow) -> Result<Scene<T>> {
    let image: Image<T> = read_ppm(&dir.join(&row.image))?;
    let heads = HeadAnnotations::load(&dir.join(&row.annotation), image.width(), image.height())?;
    let audio = read_wav(&dir.join(&row.audio))?;
    Ok(Scene {
        image,
        heads,
        audio,
    })
}

/// Every scene listed in `dir/manifest.csv`.
pub fn load_dataset<T: Real>(dir: &Path) -> Result<Vec<Scene<T>>> {
    read_manifest(dir)?
        .iter()
        .map(|row| load_scene(dir, row))
        .collect()
}
