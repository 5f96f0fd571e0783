//! Non-overlapping square tiling of a spectrogram.

use ndarray::{s, Array2, Array3};

use super::fbank::LogMelSpectrogram;
use super::AudioError;

pub const PATCH_SIDE: usize = 16;

/// `[time_patches][freq_patches][patch_side * patch_side]`, each patch
/// flattened row-major (time row, then frequency column).
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub patches: Array3<f64>,
    pub patch_side: usize,
}

impl PatchGrid {
    pub fn time_patches(&self) -> usize {
        self.patches.dim().0
    }

    pub fn freq_patches(&self) -> usize {
        self.patches.dim().1
    }

    pub fn n_patches(&self) -> usize {
        self.time_patches() * self.freq_patches()
    }

    /// Patches as rows of a `(time*freq) × side²` matrix, time-major.
    pub fn as_rows(&self) -> Array2<f64> {
        let (t, f, v) = self.patches.dim();
        self.patches
            .to_shape((t * f, v))
            .expect("contiguous patch grid")
            .to_owned()
    }

    /// Inverse of [`patchify`].
    pub fn reassemble(&self) -> LogMelSpectrogram {
        let side = self.patch_side;
        let (tp, fp, _) = self.patches.dim();
        let mut frames = Array2::zeros((tp * side, fp * side));
        for t in 0..tp {
            for f in 0..fp {
                let tile = self.patches.slice(s![t, f, ..]);
                for i in 0..side {
                    for j in 0..side {
                        frames[[t * side + i, f * side + j]] = tile[i * side + j];
                    }
                }
            }
        }
        LogMelSpectrogram { frames }
    }
}

pub fn patchify(spec: &LogMelSpectrogram) -> Result<PatchGrid, AudioError> {
    patchify_with(spec, PATCH_SIDE)
}

pub fn patchify_with(spec: &LogMelSpectrogram, side: usize) -> Result<PatchGrid, AudioError> {
    let (rows, cols) = spec.frames.dim();
    if side == 0 || rows % side != 0 || cols % side != 0 || rows == 0 || cols == 0 {
        return Err(AudioError::Shape(format!(
            "{rows}x{cols} spectrogram is not divisible into {side}x{side} patches"
        )));
    }
    let (tp, fp) = (rows / side, cols / side);
    let mut patches = Array3::zeros((tp, fp, side * side));
    for t in 0..tp {
        for f in 0..fp {
            for i in 0..side {
                for j in 0..side {
                    patches[[t, f, i * side + j]] = spec.frames[[t * side + i, f * side + j]];
                }
            }
        }
    }
    Ok(PatchGrid {
        patches,
        patch_side: side,
    })
}
