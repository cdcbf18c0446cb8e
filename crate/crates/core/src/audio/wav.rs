//! 16-bit PCM WAV files, samples scaled by 1/32768.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioClip, AudioError, Result, CAPTURE_RATE, TARGET_RATE};
use crate::scalar::Real;

fn wav_err(path: &Path) -> impl FnOnce(hound::Error) -> AudioError + '_ {
    move |source| AudioError::Wav {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_wav<T: Real>(path: &Path) -> Result<AudioClip<T>> {
    let mut reader = WavReader::open(path).map_err(wav_err(path))?;
    let spec = reader.spec();
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(AudioError::Format(format!(
            "{}: only 16-bit integer PCM is supported",
            path.display()
        )));
    }
    if spec.channels == 0 || spec.channels > 2 {
        return Err(AudioError::Format(format!(
            "{}: {} channels",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_rate != CAPTURE_RATE && spec.sample_rate != TARGET_RATE {
        return Err(AudioError::Format(format!(
            "{}: sample rate {} Hz",
            path.display(),
            spec.sample_rate
        )));
    }
    let nch = spec.channels as usize;
    let mut channels = vec![Vec::new(); nch];
    let scale = T::lit(1.0 / 32768.0);
    for (i, s) in reader.samples::<i16>().enumerate() {
        let s = s.map_err(wav_err(path))?;
        channels[i % nch].push(T::lit(s as f64) * scale);
    }
    AudioClip::new(channels, spec.sample_rate)
}

/// Quantises to 16 bits with rounding and saturation.
pub fn to_pcm16<T: Real>(x: T) -> i16 {
    let v = (x.as_f64() * 32768.0).round();
    v.clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

pub fn write_wav<T: Real>(path: &Path, clip: &AudioClip<T>) -> Result<()> {
    let spec = WavSpec {
        channels: clip.n_channels() as u16,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(wav_err(path))?;
    for i in 0..clip.len() {
        for ch in clip.channels() {
            writer
                .write_sample(to_pcm16(ch[i]))
                .map_err(wav_err(path))?;
        }
    }
    writer.finalize().map_err(wav_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stereo_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let l: Vec<f64> = (0..300).map(|i| (i as f64 * 0.01).sin() * 0.5).collect();
        let r: Vec<f64> = l.iter().map(|v| -v).collect();
        let clip = AudioClip::new(vec![l.clone(), r], CAPTURE_RATE).unwrap();
        write_wav(&path, &clip).unwrap();
        let back = read_wav::<f64>(&path).unwrap();
        assert_eq!(back.n_channels(), 2);
        assert_eq!(back.sample_rate(), CAPTURE_RATE);
        for (a, b) in back.channels()[0].iter().zip(&l) {
            assert!((a - b).abs() <= 0.5 / 32768.0 + 1e-12);
        }
    }

    #[test]
    fn pcm_saturates() {
        assert_eq!(to_pcm16(1.0f64), i16::MAX);
        assert_eq!(to_pcm16(-1.0f64), i16::MIN);
        assert_eq!(to_pcm16(0.0f32), 0);
    }

    #[test]
    fn rejects_unsupported_rate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.wav");
        let clip = AudioClip::<f32>::mono(vec![0.0; 10], 22_050).unwrap();
        write_wav(&path, &clip).unwrap();
        assert!(matches!(read_wav::<f32>(&path), Err(AudioError::Format(_))));
    }
}
