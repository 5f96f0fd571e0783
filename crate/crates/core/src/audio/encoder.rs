//! Toy patch encoder, frequency-mean/2x-time pooling and the audio projection.
//!
//! The encoder is a single linear map over flattened 16x16 patches plus a
//! learned per-patch positional offset. It stands in for a pretrained
//! spectrogram transformer; only its output geometry matters downstream.

use ndarray::{Array1, Array2, Array3, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::patch::PatchGrid;
use super::AudioError;

/// Nominal clip length the token rate is quoted against.
pub const CLIP_SECONDS: f64 = 10.0;

/// `time × freq × d_audio` embeddings, one per patch.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGrid {
    pub cells: Array3<f64>,
}

impl EmbeddingGrid {
    pub fn dim(&self) -> (usize, usize, usize) {
        self.cells.dim()
    }
}

/// Audio tokens in temporal order.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioTokenSequence {
    pub tokens: Array2<f64>,
}

impl AudioTokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.tokens.ncols()
    }

    pub fn frame_rate_hz(&self) -> f64 {
        self.len() as f64 / CLIP_SECONDS
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchEncoder {
    /// `d_audio × patch_values`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    /// `n_patches × d_audio`, indexed time-major.
    pub pos: Array2<f64>,
    pub use_position: bool,
    /// Fixed input normalization: `(x - input_shift) / input_scale`.
    pub input_shift: f64,
    pub input_scale: f64,
}

#[derive(Debug, Clone)]
pub struct PatchEncoderGrads {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub pos: Array2<f64>,
}

impl PatchEncoder {
    pub const DEFAULT_SHIFT: f64 = -6.0;
    pub const DEFAULT_SCALE: f64 = 8.0;

    pub fn new_random(
        patch_values: usize,
        n_patches: usize,
        d_audio: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w = Normal::new(0.0, (1.0 / patch_values as f64).sqrt()).unwrap();
        let p = Normal::new(0.0, 0.02).unwrap();
        Self {
            weight: Array2::from_shape_fn((d_audio, patch_values), |_| w.sample(rng)),
            bias: Array1::zeros(d_audio),
            pos: Array2::from_shape_fn((n_patches, d_audio), |_| p.sample(rng)),
            use_position: true,
            input_shift: Self::DEFAULT_SHIFT,
            input_scale: Self::DEFAULT_SCALE,
        }
    }

    pub fn d_audio(&self) -> usize {
        self.weight.nrows()
    }

    pub fn patch_values(&self) -> usize {
        self.weight.ncols()
    }

    fn check(&self, grid: &PatchGrid) -> Result<(), AudioError> {
        let values = grid.patches.dim().2;
        if values != self.patch_values() {
            return Err(AudioError::Shape(format!(
                "encoder expects {}-value patches, grid has {values}",
                self.patch_values()
            )));
        }
        if self.use_position && grid.n_patches() != self.pos.nrows() {
            return Err(AudioError::Shape(format!(
                "encoder has {} positional offsets, grid has {} patches",
                self.pos.nrows(),
                grid.n_patches()
            )));
        }
        if self.bias.len() != self.d_audio() || self.pos.ncols() != self.d_audio() {
            return Err(AudioError::Shape("encoder parameter shapes disagree".into()));
        }
        Ok(())
    }

    pub fn normalized_rows(&self, grid: &PatchGrid) -> Array2<f64> {
        let (shift, scale) = (self.input_shift, self.input_scale);
        grid.as_rows().mapv_into(|v| (v - shift) / scale)
    }

    /// Row-wise encoding of pre-normalized patch rows, `n_patches × d_audio`.
    pub fn forward_rows(&self, rows: &Array2<f64>) -> Array2<f64> {
        let mut e = rows.dot(&self.weight.t());
        e += &self.bias;
        if self.use_position {
            e += &self.pos;
        }
        e
    }

    /// Gradients given `d_out` (`n_patches × d_audio`) and the normalized input rows.
    pub fn backward_rows(&self, rows: &Array2<f64>, d_out: &Array2<f64>) -> PatchEncoderGrads {
        PatchEncoderGrads {
            weight: d_out.t().dot(rows),
            bias: d_out.sum_axis(Axis(0)),
            pos: if self.use_position {
                d_out.clone()
            } else {
                Array2::zeros(self.pos.raw_dim())
            },
        }
    }
}

impl PatchEncoderGrads {
    pub fn zeros_like(enc: &PatchEncoder) -> Self {
        Self {
            weight: Array2::zeros(enc.weight.raw_dim()),
            bias: Array1::zeros(enc.bias.raw_dim()),
            pos: Array2::zeros(enc.pos.raw_dim()),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.weight += &other.weight;
        self.bias += &other.bias;
        self.pos += &other.pos;
    }

    pub fn scale(&mut self, s: f64) {
        self.weight *= s;
        self.bias *= s;
        self.pos *= s;
    }
}

pub fn encode_patches(grid: &PatchGrid, enc: &PatchEncoder) -> Result<EmbeddingGrid, AudioError> {
    enc.check(grid)?;
    let rows = enc.forward_rows(&enc.normalized_rows(grid));
    let (t, f) = (grid.time_patches(), grid.freq_patches());
    let cells = rows
        .into_shape_with_order((t, f, enc.d_audio()))
        .map_err(|e| AudioError::Shape(e.to_string()))?;
    Ok(EmbeddingGrid { cells })
}

/// Frequency mean pooling followed by 2x temporal mean downsampling:
/// token `t` is the mean of the `2 * freq` cells in time rows `2t` and `2t+1`.
pub fn pool_tokens(grid: &EmbeddingGrid) -> Result<AudioTokenSequence, AudioError> {
    let (t, f, d) = grid.dim();
    if t == 0 || t % 2 != 0 || f == 0 {
        return Err(AudioError::Shape(format!(
            "pooling needs an even, non-zero time axis and non-empty frequency axis, got {t}x{f}"
        )));
    }
    let mut tokens = Array2::zeros((t / 2, d));
    let norm = 1.0 / (2 * f) as f64;
    for k in 0..t / 2 {
        let mut row = tokens.row_mut(k);
        for tt in [2 * k, 2 * k + 1] {
            for ff in 0..f {
                row.scaled_add(norm, &grid.cells.slice(ndarray::s![tt, ff, ..]));
            }
        }
    }
    Ok(AudioTokenSequence { tokens })
}

/// [`pool_tokens`] on time-major rows (`time*freq × d`).
pub(crate) fn pool_rows(rows: &Array2<f64>, freq: usize) -> Array2<f64> {
    let (n, d) = rows.dim();
    let n_tokens = n / (2 * freq);
    let norm = 1.0 / (2 * freq) as f64;
    let mut tokens = Array2::zeros((n_tokens, d));
    for k in 0..n_tokens {
        let block = rows.slice(ndarray::s![k * 2 * freq..(k + 1) * 2 * freq, ..]);
        let mut row = tokens.row_mut(k);
        for r in block.rows() {
            row.scaled_add(norm, &r);
        }
    }
    tokens
}

/// Adjoint of [`pool_rows`].
pub(crate) fn unpool_rows(d_tokens: &Array2<f64>, freq: usize) -> Array2<f64> {
    let (n_tokens, d) = d_tokens.dim();
    let norm = 1.0 / (2 * freq) as f64;
    let mut out = Array2::zeros((n_tokens * 2 * freq, d));
    for k in 0..n_tokens {
        let src = d_tokens.row(k);
        for r in k * 2 * freq..(k + 1) * 2 * freq {
            out.row_mut(r).scaled_add(norm, &src);
        }
    }
    out
}

/// Affine map `d_audio → d_model` applied per token.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionLayer {
    /// `d_model × d_audio`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct ProjectionGrads {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl ProjectionLayer {
    pub fn zeros(d_audio: usize, d_model: usize) -> Self {
        Self {
            weight: Array2::zeros((d_model, d_audio)),
            bias: Array1::zeros(d_model),
        }
    }

    pub fn new_random(d_audio: usize, d_model: usize, rng: &mut impl Rng) -> Self {
        let n = Normal::new(0.0, (1.0 / d_audio as f64).sqrt()).unwrap();
        Self {
            weight: Array2::from_shape_fn((d_model, d_audio), |_| n.sample(rng)),
            bias: Array1::zeros(d_model),
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.weight.nrows()
    }

    pub(crate) fn forward_rows(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight.t());
        y += &self.bias;
        y
    }

    pub(crate) fn backward_rows(&self, x: &Array2<f64>, dy: &Array2<f64>) -> (ProjectionGrads, Array2<f64>) {
        let grads = ProjectionGrads {
            weight: dy.t().dot(x),
            bias: dy.sum_axis(Axis(0)),
        };
        (grads, dy.dot(&self.weight))
    }
}

impl ProjectionGrads {
    pub fn zeros_like(p: &ProjectionLayer) -> Self {
        Self {
            weight: Array2::zeros(p.weight.raw_dim()),
            bias: Array1::zeros(p.bias.raw_dim()),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.weight += &other.weight;
        self.bias += &other.bias;
    }

    pub fn scale(&mut self, s: f64) {
        self.weight *= s;
        self.bias *= s;
    }
}

pub fn project_tokens(
    tokens: &AudioTokenSequence,
    proj: &ProjectionLayer,
) -> Result<AudioTokenSequence, AudioError> {
    if tokens.dim() != proj.d_in() || proj.bias.len() != proj.d_out() {
        return Err(AudioError::Shape(format!(
            "projection maps {} → {}, tokens have dimension {}",
            proj.d_in(),
            proj.d_out(),
            tokens.dim()
        )));
    }
    Ok(AudioTokenSequence {
        tokens: proj.forward_rows(&tokens.tokens),
    })
}
