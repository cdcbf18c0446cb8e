use super::{AudioError, Result, FFT_LEN, N_BINS, TARGET_RATE};
use crate::scalar::Real;
use crate::tensor::Tensor;

pub const MEL_BANDS: usize = 64;
pub const PATCH_FRAMES: usize = 96;
pub const MEL_LOW_HZ: f64 = 125.0;
pub const MEL_HIGH_HZ: f64 = 7_500.0;
pub const LOG_OFFSET: f64 = 0.01;

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

/// `[257, 64]` triangular filters with unit peak, laid out equally in mel
/// between 125 Hz and 7.5 kHz. The DC bin carries no weight.
pub fn mel_filterbank<T: Real>() -> Tensor<T> {
    let lo = hz_to_mel(MEL_LOW_HZ);
    let hi = hz_to_mel(MEL_HIGH_HZ);
    let mut edges: Vec<f64> = (0..MEL_BANDS + 2)
        .map(|i| lo + (hi - lo) * i as f64 / (MEL_BANDS + 1) as f64)
        .collect();
    edges[MEL_BANDS + 1] = hi;
    let bin_hz = TARGET_RATE as f64 / FFT_LEN as f64;
    let mut w = vec![T::zero(); N_BINS * MEL_BANDS];
    for bin in 1..N_BINS {
        let m = hz_to_mel(bin as f64 * bin_hz);
        for band in 0..MEL_BANDS {
            let (l, c, u) = (edges[band], edges[band + 1], edges[band + 2]);
            let rise = (m - l) / (c - l);
            let fall = (u - m) / (u - c);
            let v = rise.min(fall).max(0.0);
            w[bin * MEL_BANDS + band] = T::lit(v);
        }
    }
    Tensor::new(&[N_BINS, MEL_BANDS], w).expect("static shape")
}

/// 96×64 log-mel patch (time × band).
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelPatch<T>(Tensor<T>);

impl<T: Real> LogMelPatch<T> {
    pub fn new(values: Tensor<T>) -> Result<Self> {
        if values.dims() != [PATCH_FRAMES, MEL_BANDS] {
            return Err(AudioError::Invalid(format!(
                "log-mel patch must be {}x{}, got {:?}",
                PATCH_FRAMES,
                MEL_BANDS,
                values.dims()
            )));
        }
        if !values.is_finite() {
            return Err(AudioError::Invalid("non-finite log-mel value".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &Tensor<T> {
        &self.0
    }

    /// `[1, 96, 64]` view for the audio CNN.
    pub fn to_input(&self) -> Tensor<T> {
        self.0
            .clone()
            .reshape(&[1, PATCH_FRAMES, MEL_BANDS])
            .expect("same element count")
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.0
    }
}

/// Mel energies of squared magnitudes, `ln(energy + 0.01)`, first 96 frames.
pub fn log_mel<T: Real>(spec: &Tensor<T>) -> Result<LogMelPatch<T>> {
    let [frames, bins] = spec.dims()[..] else {
        return Err(AudioError::Invalid(format!(
            "spectrogram must be [frames, {}], got {:?}",
            N_BINS,
            spec.dims()
        )));
    };
    if bins != N_BINS {
        return Err(AudioError::Invalid(format!(
            "spectrogram has {} bins, expected {}",
            bins, N_BINS
        )));
    }
    if frames < PATCH_FRAMES {
        return Err(AudioError::TooShort(format!(
            "{} frames, patch needs {}",
            frames, PATCH_FRAMES
        )));
    }
    let power: Vec<T> = spec.data()[..PATCH_FRAMES * N_BINS]
        .iter()
        .map(|&m| m * m)
        .collect();
    let bank = mel_filterbank::<T>();
    let mut mel = vec![T::zero(); PATCH_FRAMES * MEL_BANDS];
    T::gemm(
        PATCH_FRAMES,
        N_BINS,
        MEL_BANDS,
        T::one(),
        (&power, N_BINS as isize, 1),
        (bank.data(), MEL_BANDS as isize, 1),
        T::zero(),
        (&mut mel, MEL_BANDS as isize, 1),
    );
    let offset = T::lit(LOG_OFFSET);
    let values = mel.into_iter().map(|e| (e + offset).ln()).collect();
    LogMelPatch::new(Tensor::new(&[PATCH_FRAMES, MEL_BANDS], values).expect("static shape"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_anchor() {
        // 2595·log10(1 + 1000/700) = 999.985; the HTK constants are rounded
        assert!((hz_to_mel(1000.0) - 1000.0).abs() < 0.02);
        assert_eq!(hz_to_mel(0.0), 0.0);
    }

    #[test]
    fn filters_are_unimodal_and_cover_the_band() {
        let bank = mel_filterbank::<f64>();
        let bin_hz = TARGET_RATE as f64 / FFT_LEN as f64;
        for band in 0..MEL_BANDS {
            let col: Vec<f64> = (0..N_BINS)
                .map(|b| bank.data()[b * MEL_BANDS + band])
                .collect();
            assert!(col.iter().all(|&v| (0.0..=1.0).contains(&v)));
            let peak = col
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert!(col[peak] > 0.0, "band {band} is empty");
            assert!(col[..=peak].windows(2).all(|w| w[0] <= w[1]));
            assert!(col[peak..].windows(2).all(|w| w[0] >= w[1]));
            if band + 1 < MEL_BANDS {
                let overlap = (0..N_BINS)
                    .any(|b| col[b] > 0.0 && bank.data()[b * MEL_BANDS + band + 1] > 0.0);
                assert!(overlap, "bands {band} and {} do not overlap", band + 1);
            }
        }
        for bin in 0..N_BINS {
            let f = bin as f64 * bin_hz;
            let total: f64 = bank.data()[bin * MEL_BANDS..(bin + 1) * MEL_BANDS]
                .iter()
                .sum();
            if f > MEL_LOW_HZ && f < MEL_HIGH_HZ {
                assert!(total > 0.0, "bin {bin} ({f} Hz) uncovered");
            }
            if f <= MEL_LOW_HZ || f >= MEL_HIGH_HZ {
                assert_eq!(total, 0.0, "bin {bin} ({f} Hz) outside the band");
            }
        }
    }

    #[test]
    fn zero_spectrogram_gives_log_floor() {
        let patch = log_mel(&Tensor::<f64>::zeros(&[98, N_BINS])).unwrap();
        assert!(patch.values().data().iter().all(|&v| v == LOG_OFFSET.ln()));
    }

    #[test]
    fn too_few_frames() {
        assert!(matches!(
            log_mel(&Tensor::<f32>::zeros(&[95, N_BINS])),
            Err(AudioError::TooShort(_))
        ));
    }
}
