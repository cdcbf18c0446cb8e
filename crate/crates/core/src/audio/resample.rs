use super::{AudioClip, AudioError, Result};
use crate::scalar::Real;

pub const CAPTURE_RATE: u32 = 48_000;
pub const TARGET_RATE: u32 = 16_000;

const TAPS: usize = 63;
const CUTOFF_HZ: f64 = 7_200.0;
const DECIMATION: usize = 3;

/// Hamming-windowed sinc low-pass for 48 kHz input, normalised to unit DC
/// gain.
pub fn lowpass_taps() -> [f64; TAPS] {
    let fc = CUTOFF_HZ / CAPTURE_RATE as f64;
    let mid = (TAPS - 1) as f64 / 2.0;
    let mut taps = [0.0; TAPS];
    for (i, t) in taps.iter_mut().enumerate() {
        let x = i as f64 - mid;
        let sinc = if x == 0.0 {
            2.0 * fc
        } else {
            (2.0 * std::f64::consts::PI * fc * x).sin() / (std::f64::consts::PI * x)
        };
        let window =
            0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (TAPS - 1) as f64).cos();
        *t = sinc * window;
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Averages channels to mono and brings 48 kHz input to 16 kHz with a
/// zero-phase FIR followed by 3:1 decimation. 16 kHz mono input is returned
/// as is.
pub fn downmix_resample<T: Real>(clip: &AudioClip<T>) -> Result<AudioClip<T>> {
    let rate = clip.sample_rate();
    if rate != CAPTURE_RATE && rate != TARGET_RATE {
        return Err(AudioError::Format(format!(
            "sample rate {} Hz (expected {} or {})",
            rate, CAPTURE_RATE, TARGET_RATE
        )));
    }
    let mono: Vec<T> = if clip.n_channels() == 1 {
        clip.channels()[0].clone()
    } else {
        let half = T::lit(0.5);
        clip.channels()[0]
            .iter()
            .zip(&clip.channels()[1])
            .map(|(&l, &r)| (l + r) * half)
            .collect()
    };
    if rate == TARGET_RATE {
        return AudioClip::mono(mono, TARGET_RATE);
    }

    let taps: Vec<T> = lowpass_taps().iter().map(|&t| T::lit(t)).collect();
    let half = (TAPS / 2) as isize;
    let n = mono.len();
    let out_len = n.div_ceil(DECIMATION);
    let mut out = Vec::with_capacity(out_len);
    for m in 0..out_len {
        let centre = (m * DECIMATION) as isize;
        let mut acc = T::zero();
        for (j, &h) in taps.iter().enumerate() {
            let idx = centre + j as isize - half;
            if idx >= 0 && (idx as usize) < n {
                acc += h * mono[idx as usize];
            }
        }
        out.push(acc);
    }
    AudioClip::mono(out, TARGET_RATE)
}
