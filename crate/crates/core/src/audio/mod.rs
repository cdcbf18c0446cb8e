//! Ambient-sound front-end: 48 kHz stereo capture down to a 96×64 log-mel
//! patch.

mod mel;
mod resample;
mod stft;
pub mod wav;

pub use mel::{
    hz_to_mel, log_mel, mel_filterbank, LogMelPatch, LOG_OFFSET, MEL_BANDS, MEL_HIGH_HZ,
    MEL_LOW_HZ, PATCH_FRAMES,
};
pub use resample::{downmix_resample, lowpass_taps, CAPTURE_RATE, TARGET_RATE};
pub use stft::{periodic_hann, stft, FFT_LEN, HOP, N_BINS, WINDOW};

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("unsupported audio format: {0}")]
    Format(String),
    #[error("input too short: {0}")]
    TooShort(String),
    #[error("invalid clip: {0}")]
    Invalid(String),
    #[error("wav error in {path}: {source}")]
    Wav {
        path: String,
        #[source]
        source: hound::Error,
    },
}

pub type Result<T> = std::result::Result<T, AudioError>;

/// Multi-channel PCM clip with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip<T> {
    channels: Vec<Vec<T>>,
    sample_rate: u32,
}

impl<T: Real> AudioClip<T> {
    pub fn new(channels: Vec<Vec<T>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() || channels.len() > 2 {
            return Err(AudioError::Invalid(format!(
                "expected 1 or 2 channels, got {}",
                channels.len()
            )));
        }
        let n = channels[0].len();
        if channels.iter().any(|c| c.len() != n) {
            return Err(AudioError::Invalid("channels differ in length".into()));
        }
        if channels.iter().flatten().any(|s| !s.is_finite()) {
            return Err(AudioError::Invalid("non-finite sample".into()));
        }
        if sample_rate == 0 {
            return Err(AudioError::Invalid("sample rate must be positive".into()));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn mono(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn channels(&self) -> &[Vec<T>] {
        &self.channels
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> T {
        let n = self.len() * self.n_channels();
        if n == 0 {
            return T::zero();
        }
        let ss: T = self.channels.iter().flatten().map(|&s| s * s).sum();
        (ss / T::from_usize_lossy(n)).sqrt()
    }
}

/// Resample → STFT → log-mel. Deterministic for a given clip.
pub fn pipeline<T: Real>(clip: &AudioClip<T>) -> Result<LogMelPatch<T>> {
    let mono = downmix_resample(clip)?;
    let spec = stft(&mono)?;
    log_mel(&spec)
}
