//! Log mel filterbank (fbank) features.
//!
//! 25 ms Hann window every 10 ms, 512-point FFT, power spectrum, HTK-scale
//! triangular filters spanning 0 Hz to Nyquist, natural log with a floor clamp.
//! The frame axis is padded with floor rows (or truncated) to a fixed length.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::wav::{Waveform, SAMPLE_RATE_HZ};
use super::AudioError;

#[derive(Debug, Clone, PartialEq)]
pub struct FbankConfig {
    pub n_mels: usize,
    pub window_ms: f64,
    pub hop_ms: f64,
    pub n_fft: usize,
    pub target_frames: usize,
    pub log_floor: f64,
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for FbankConfig {
    fn default() -> Self {
        Self {
            n_mels: 128,
            window_ms: 25.0,
            hop_ms: 10.0,
            n_fft: 512,
            target_frames: 1024,
            log_floor: 1e-10,
            f_min: 0.0,
            f_max: SAMPLE_RATE_HZ as f64 / 2.0,
        }
    }
}

impl FbankConfig {
    pub fn window_len(&self) -> usize {
        (self.window_ms * SAMPLE_RATE_HZ as f64 / 1000.0).round() as usize
    }

    pub fn hop_len(&self) -> usize {
        (self.hop_ms * SAMPLE_RATE_HZ as f64 / 1000.0).round() as usize
    }

    pub fn validate(&self) -> Result<(), AudioError> {
        if self.window_ms <= self.hop_ms {
            return Err(AudioError::Config("window must be longer than hop".into()));
        }
        if self.n_fft < self.window_len() {
            return Err(AudioError::Config(format!(
                "n_fft {} shorter than window {}",
                self.n_fft,
                self.window_len()
            )));
        }
        if self.n_mels == 0 || self.target_frames == 0 {
            return Err(AudioError::Config("n_mels and target_frames must be > 0".into()));
        }
        if !(self.log_floor > 0.0) {
            return Err(AudioError::Config("log_floor must be > 0".into()));
        }
        if !(self.f_min >= 0.0 && self.f_max > self.f_min) {
            return Err(AudioError::Config("invalid filter frequency span".into()));
        }
        Ok(())
    }
}

/// `frames × n_mels` log energies.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    pub frames: Array2<f64>,
}

impl LogMelSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn n_mels(&self) -> usize {
        self.frames.ncols()
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Center frequency (Hz) of every mel filter.
pub fn mel_center_frequencies(cfg: &FbankConfig) -> Vec<f64> {
    mel_edges(cfg)[1..=cfg.n_mels].iter().map(|&m| mel_to_hz(m)).collect()
}

fn mel_edges(cfg: &FbankConfig) -> Vec<f64> {
    let lo = hz_to_mel(cfg.f_min);
    let hi = hz_to_mel(cfg.f_max);
    let n = cfg.n_mels + 2;
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Triangular filters evaluated on the mel axis, `n_mels × (n_fft/2 + 1)`.
pub fn mel_filterbank(cfg: &FbankConfig) -> Array2<f64> {
    let n_bins = cfg.n_fft / 2 + 1;
    let edges = mel_edges(cfg);
    let mut fb = Array2::zeros((cfg.n_mels, n_bins));
    for b in 0..n_bins {
        let mel = hz_to_mel(b as f64 * SAMPLE_RATE_HZ as f64 / cfg.n_fft as f64);
        for m in 0..cfg.n_mels {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            let w = if mel > l && mel <= c {
                (mel - l) / (c - l)
            } else if mel > c && mel < r {
                (r - mel) / (r - c)
            } else {
                0.0
            };
            fb[[m, b]] = w;
        }
    }
    fb
}

/// Symmetric Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Reusable extractor holding the FFT plan, window and filterbank.
pub struct FbankExtractor {
    cfg: FbankConfig,
    window: Vec<f64>,
    filters: Array2<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl FbankExtractor {
    pub fn new(cfg: FbankConfig) -> Result<Self, AudioError> {
        cfg.validate()?;
        let window = hann_window(cfg.window_len());
        let filters = mel_filterbank(&cfg);
        let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
        Ok(Self {
            cfg,
            window,
            filters,
            fft,
        })
    }

    pub fn config(&self) -> &FbankConfig {
        &self.cfg
    }

    /// Number of analysis frames before padding/truncation.
    pub fn natural_frames(&self, n_samples: usize) -> usize {
        let win = self.cfg.window_len();
        if n_samples < win {
            0
        } else {
            (n_samples - win) / self.cfg.hop_len() + 1
        }
    }

    pub fn compute(&self, wave: &Waveform) -> Result<LogMelSpectrogram, AudioError> {
        let samples = wave.samples();
        let win = self.cfg.window_len();
        if samples.len() <= win {
            return Err(AudioError::TooShort {
                samples: samples.len(),
                window: win,
            });
        }
        let hop = self.cfg.hop_len();
        let n_natural = self.natural_frames(samples.len());
        let n_out = self.cfg.target_frames;
        let floor_log = self.cfg.log_floor.ln();
        let n_bins = self.cfg.n_fft / 2 + 1;

        let mut out = Array2::from_elem((n_out, self.cfg.n_mels), floor_log);
        let mut buf = vec![Complex::new(0.0, 0.0); self.cfg.n_fft];
        let mut power = vec![0.0; n_bins];
        for f in 0..n_natural.min(n_out) {
            let start = f * hop;
            for (i, slot) in buf.iter_mut().enumerate() {
                *slot = if i < win {
                    Complex::new(samples[start + i] * self.window[i], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.fft.process(&mut buf);
            for (p, c) in power.iter_mut().zip(&buf[..n_bins]) {
                *p = c.norm_sqr();
            }
            for m in 0..self.cfg.n_mels {
                let energy: f64 = self
                    .filters
                    .row(m)
                    .iter()
                    .zip(&power)
                    .map(|(w, p)| w * p)
                    .sum();
                out[[f, m]] = energy.max(self.cfg.log_floor).ln();
            }
        }
        Ok(LogMelSpectrogram { frames: out })
    }
}

pub fn compute_fbank(wave: &Waveform, cfg: &FbankConfig) -> Result<LogMelSpectrogram, AudioError> {
    FbankExtractor::new(cfg.clone())?.compute(wave)
}

fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

/// Writes `path` as an 8-byte header (`frames`, `mels` as little-endian u32)
/// followed by row-major little-endian f32 values, plus a `path.manifest`
/// key=value sidecar.
pub fn save_spectrogram(
    path: impl AsRef<Path>,
    spec: &LogMelSpectrogram,
    source: &str,
) -> Result<(), AudioError> {
    let path = path.as_ref();
    let (frames, mels) = spec.frames.dim();
    let mut bytes = Vec::with_capacity(8 + frames * mels * 4);
    bytes.extend_from_slice(&(frames as u32).to_le_bytes());
    bytes.extend_from_slice(&(mels as u32).to_le_bytes());
    for v in spec.frames.iter() {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    let mut m = fs::File::create(manifest_path(path))?;
    writeln!(m, "format=fbank-f32le")?;
    writeln!(m, "frames={frames}")?;
    writeln!(m, "mels={mels}")?;
    writeln!(m, "sample_rate_hz={SAMPLE_RATE_HZ}")?;
    writeln!(m, "source={source}")?;
    Ok(())
}

pub fn load_spectrogram(path: impl AsRef<Path>) -> Result<LogMelSpectrogram, AudioError> {
    let bytes = fs::read(path.as_ref())?;
    if bytes.len() < 8 {
        return Err(AudioError::Format("spectrogram file shorter than header".into()));
    }
    let frames = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let mels = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != frames * mels * 4 {
        return Err(AudioError::Format(format!(
            "expected {} payload bytes for {frames}x{mels}, found {}",
            frames * mels * 4,
            body.len()
        )));
    }
    let values: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let frames = Array2::from_shape_vec((frames, mels), values)
        .map_err(|e| AudioError::Format(e.to_string()))?;
    Ok(LogMelSpectrogram { frames })
}
