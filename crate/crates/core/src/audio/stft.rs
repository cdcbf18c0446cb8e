use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{AudioClip, AudioError, Result, TARGET_RATE};
use crate::scalar::Real;
use crate::tensor::Tensor;

pub const WINDOW: usize = 400;
pub const HOP: usize = 160;
pub const FFT_LEN: usize = 512;
pub const N_BINS: usize = FFT_LEN / 2 + 1;

/// Periodic (DFT-even) Hann window.
pub fn periodic_hann<T: Real>(len: usize) -> Vec<T> {
    (0..len)
        .map(|n| {
            let phase = 2.0 * std::f64::consts::PI * n as f64 / len as f64;
            T::lit(0.5 - 0.5 * phase.cos())
        })
        .collect()
}

/// Magnitude STFT of a 16 kHz mono clip: `[frames, 257]`.
pub fn stft<T: Real>(clip: &AudioClip<T>) -> Result<Tensor<T>> {
    if clip.n_channels() != 1 || clip.sample_rate() != TARGET_RATE {
        return Err(AudioError::Format(format!(
            "stft expects mono {} Hz, got {} channel(s) at {} Hz",
            TARGET_RATE,
            clip.n_channels(),
            clip.sample_rate()
        )));
    }
    let x = &clip.channels()[0];
    if x.len() < WINDOW {
        return Err(AudioError::TooShort(format!(
            "{} samples, one window needs {}",
            x.len(),
            WINDOW
        )));
    }
    let frames = (x.len() - WINDOW) / HOP + 1;
    let window = periodic_hann::<T>(WINDOW);
    let fft = FftPlanner::<T>::new().plan_fft_forward(FFT_LEN);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); FFT_LEN];
    let mut scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];
    let mut out = Vec::with_capacity(frames * N_BINS);
    for f in 0..frames {
        let seg = &x[f * HOP..f * HOP + WINDOW];
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = if i < WINDOW {
                Complex::new(seg[i] * window[i], T::zero())
            } else {
                Complex::new(T::zero(), T::zero())
            };
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        out.extend(buf[..N_BINS].iter().map(|c| c.norm()));
    }
    Ok(Tensor::new(&[frames, N_BINS], out).expect("frame count is positive"))
}
