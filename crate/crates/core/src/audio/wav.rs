//! Mono 16-bit PCM WAV ingestion at 16 kHz.

use std::path::Path;

use super::AudioError;

/// Sample rate every waveform in the pipeline must use.
pub const SAMPLE_RATE_HZ: u32 = 16_000;

/// A mono waveform with amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self, AudioError> {
        if sample_rate_hz != SAMPLE_RATE_HZ {
            return Err(AudioError::SampleRate(sample_rate_hz));
        }
        if samples.is_empty() {
            return Err(AudioError::Empty);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite(i));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform, AudioError> {
    let reader = hound::WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(AudioError::Format(format!(
            "expected mono, got {} channels",
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(AudioError::Format(format!(
            "expected 16-bit PCM, got {:?} {} bits",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    if spec.sample_rate != SAMPLE_RATE_HZ {
        return Err(AudioError::SampleRate(spec.sample_rate));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<Result<Vec<_>, _>>()?;
    Waveform::new(samples, spec.sample_rate)
}

pub fn write_wav(path: impl AsRef<Path>, wave: &Waveform) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path.as_ref(), spec)?;
    for &s in &wave.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_rate_and_empty() {
        assert!(matches!(
            Waveform::new(vec![0.0; 10], 44_100),
            Err(AudioError::SampleRate(44_100))
        ));
        assert!(matches!(
            Waveform::new(vec![], SAMPLE_RATE_HZ),
            Err(AudioError::Empty)
        ));
        assert!(matches!(
            Waveform::new(vec![0.0, f64::NAN], SAMPLE_RATE_HZ),
            Err(AudioError::NonFinite(1))
        ));
    }

    #[test]
    fn wav_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let samples: Vec<f64> = (0..1600).map(|i| (i as f64 * 0.01).sin() * 0.5).collect();
        let w = Waveform::new(samples.clone(), SAMPLE_RATE_HZ).unwrap();
        write_wav(&path, &w).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.samples().len(), samples.len());
        for (a, b) in back.samples().iter().zip(&samples) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn rejects_stereo_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: SAMPLE_RATE_HZ,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..20 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        assert!(matches!(read_wav(&path), Err(AudioError::Format(_))));
    }
}
