//! The full trainable path: patch encoder → pooling → projection → frozen
//! decoder with query/key adapters.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{Array2, ArrayViewD, ArrayViewMutD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::AudioLmConfig;
use super::decoder::{Decoder, DecoderGrads};
use super::loss::{next_token_loss, next_token_loss_grad, shifted_targets};
use super::ModelError;
use crate::audio::{
    pool_rows, unpool_rows, AudioTokenSequence, PatchEncoder, PatchEncoderGrads, PatchGrid, ProjectionGrads,
    ProjectionLayer,
};

/// Which non-LM parameters receive updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainableSet {
    ProjectionOnly,
    AllNonLm,
}

impl TrainableSet {
    pub fn encoder(self) -> bool {
        self == TrainableSet::AllNonLm
    }

    pub fn adapters(self) -> bool {
        self == TrainableSet::AllNonLm
    }
}

/// One supervised sequence: audio patches plus `x_1..x_T` with a mask over
/// the positions whose prediction is scored.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub patches: Arc<PatchGrid>,
    pub text_tokens: Vec<u32>,
    pub loss_mask: Vec<bool>,
}

impl TrainingExample {
    pub fn new(patches: Arc<PatchGrid>, text_tokens: Vec<u32>, loss_mask: Vec<bool>) -> Result<Self, ModelError> {
        if text_tokens.len() != loss_mask.len() {
            return Err(ModelError::Shape(format!(
                "{} text tokens but {} mask entries",
                text_tokens.len(),
                loss_mask.len()
            )));
        }
        if !loss_mask.iter().skip(1).any(|&m| m) {
            return Err(ModelError::EmptyMask);
        }
        Ok(Self {
            patches,
            text_tokens,
            loss_mask,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub encoder: Option<PatchEncoderGrads>,
    pub projection: ProjectionGrads,
    pub decoder: Option<DecoderGrads>,
}

impl Gradients {
    pub fn add_assign(&mut self, o: &Gradients) {
        match (&mut self.encoder, &o.encoder) {
            (Some(a), Some(b)) => a.add_assign(b),
            (a @ None, Some(b)) => *a = Some(b.clone()),
            _ => {}
        }
        self.projection.add_assign(&o.projection);
        match (&mut self.decoder, &o.decoder) {
            (Some(a), Some(b)) => a.add_assign(b),
            (a @ None, Some(b)) => *a = Some(b.clone()),
            _ => {}
        }
    }

    pub fn scale(&mut self, s: f64) {
        if let Some(e) = &mut self.encoder {
            e.scale(s);
        }
        self.projection.scale(s);
        if let Some(d) = &mut self.decoder {
            d.scale(s);
        }
    }

    pub fn named(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = Vec::new();
        if let Some(e) = &self.encoder {
            out.push(("encoder.weight".to_string(), e.weight.view().into_dyn()));
            out.push(("encoder.bias".to_string(), e.bias.view().into_dyn()));
            out.push(("encoder.pos".to_string(), e.pos.view().into_dyn()));
        }
        out.push(("projection.weight".to_string(), self.projection.weight.view().into_dyn()));
        out.push(("projection.bias".to_string(), self.projection.bias.view().into_dyn()));
        if let Some(d) = &self.decoder {
            out.extend(d.named().into_iter().map(|(n, g)| (n, g.view().into_dyn())));
        }
        out
    }

    pub fn global_norm(&self) -> f64 {
        self.named()
            .iter()
            .map(|(_, g)| g.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioLm {
    pub cfg: AudioLmConfig,
    pub encoder: PatchEncoder,
    pub projection: ProjectionLayer,
    pub decoder: Decoder,
}

impl AudioLm {
    pub fn new_random(cfg: AudioLmConfig, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let decoder = Decoder::new_random(cfg.decoder.clone(), &mut rng)?;
        let encoder = PatchEncoder::new_random(cfg.patch_values, cfg.n_patches(), cfg.d_audio, &mut rng);
        let projection = ProjectionLayer::new_random(cfg.d_audio, cfg.decoder.d_model, &mut rng);
        Ok(Self {
            cfg,
            encoder,
            projection,
            decoder,
        })
    }

    fn check_grid(&self, grid: &PatchGrid) -> Result<(), ModelError> {
        let (t, f, v) = grid.patches.dim();
        if t != self.cfg.time_patches || f != self.cfg.freq_patches || v != self.cfg.patch_values {
            return Err(ModelError::Shape(format!(
                "patch grid {t}x{f}x{v} does not match model geometry {}x{}x{}",
                self.cfg.time_patches, self.cfg.freq_patches, self.cfg.patch_values
            )));
        }
        Ok(())
    }

    /// Projected audio tokens in model width (`32 × d_model` by default).
    pub fn audio_tokens(&self, grid: &PatchGrid) -> Result<AudioTokenSequence, ModelError> {
        self.check_grid(grid)?;
        let rows = self.encoder.normalized_rows(grid);
        let pooled = pool_rows(&self.encoder.forward_rows(&rows), self.cfg.freq_patches);
        Ok(AudioTokenSequence {
            tokens: self.projection.forward_rows(&pooled),
        })
    }

    pub fn logits(&self, grid: &PatchGrid, text: &[u32]) -> Result<Array2<f64>, ModelError> {
        let prefix = self.audio_tokens(grid)?;
        Ok(self.decoder.forward(&prefix.tokens, text, true)?.0)
    }

    pub fn loss(&self, ex: &TrainingExample) -> Result<f64, ModelError> {
        let logits = self.logits(&ex.patches, &ex.text_tokens)?;
        let (targets, mask) = shifted_targets(&ex.text_tokens, &ex.loss_mask);
        let loss = next_token_loss(&logits, &targets, &mask)?;
        if !loss.is_finite() {
            return Err(ModelError::NonFinite("loss".into()));
        }
        Ok(loss)
    }

    pub fn loss_and_grads(&self, ex: &TrainingExample, set: TrainableSet) -> Result<(f64, Gradients), ModelError> {
        self.check_grid(&ex.patches)?;
        let freq = self.cfg.freq_patches;
        let rows = self.encoder.normalized_rows(&ex.patches);
        let pooled = pool_rows(&self.encoder.forward_rows(&rows), freq);
        let prefix = self.projection.forward_rows(&pooled);
        let (logits, cache) = self.decoder.forward(&prefix, &ex.text_tokens, true)?;
        let (targets, mask) = shifted_targets(&ex.text_tokens, &ex.loss_mask);
        let (loss, dlogits) = next_token_loss_grad(&logits, &targets, &mask)?;
        if !loss.is_finite() {
            return Err(ModelError::NonFinite("loss".into()));
        }
        let (dec_grads, d_prefix) = self.decoder.backward(&cache, &dlogits);
        let (proj_grads, d_pooled) = self.projection.backward_rows(&pooled, &d_prefix);
        let encoder = set
            .encoder()
            .then(|| self.encoder.backward_rows(&rows, &unpool_rows(&d_pooled, freq)));
        Ok((
            loss,
            Gradients {
                encoder,
                projection: proj_grads,
                decoder: set.adapters().then_some(dec_grads),
            },
        ))
    }

    /// Mean loss and mean gradient over a batch, accumulated in input order.
    pub fn batch_loss_and_grads(&self, batch: &[&TrainingExample], set: TrainableSet) -> Result<(f64, Gradients), ModelError> {
        let mut total = 0.0;
        let mut acc: Option<Gradients> = None;
        for ex in batch {
            let (l, g) = self.loss_and_grads(ex, set)?;
            total += l;
            match &mut acc {
                Some(a) => a.add_assign(&g),
                None => acc = Some(g),
            }
        }
        let mut grads = acc.ok_or_else(|| ModelError::Shape("empty batch".into()))?;
        let inv = 1.0 / batch.len() as f64;
        grads.scale(inv);
        Ok((total * inv, grads))
    }

    /// Trainable tensors of the given set, named like [`Gradients::named`].
    pub fn trainable_tensors_mut(&mut self, set: TrainableSet) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let mut out = Vec::new();
        if set.encoder() {
            out.push(("encoder.weight".to_string(), self.encoder.weight.view_mut().into_dyn()));
            out.push(("encoder.bias".to_string(), self.encoder.bias.view_mut().into_dyn()));
            out.push(("encoder.pos".to_string(), self.encoder.pos.view_mut().into_dyn()));
        }
        out.push(("projection.weight".to_string(), self.projection.weight.view_mut().into_dyn()));
        out.push(("projection.bias".to_string(), self.projection.bias.view_mut().into_dyn()));
        if set.adapters() {
            out.extend(
                self.decoder
                    .adapter_tensors_mut()
                    .into_iter()
                    .map(|(n, t)| (n, t.view_mut().into_dyn())),
            );
        }
        out
    }

    pub fn trainable_param_count(&mut self, set: TrainableSet) -> usize {
        self.trainable_tensors_mut(set).iter().map(|(_, t)| t.len()).sum()
    }

    /// Plain gradient descent on the tensors of `set`; everything else is untouched.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64, set: TrainableSet) -> Result<(), ModelError> {
        let named: HashMap<String, ArrayViewD<'_, f64>> = grads.named().into_iter().collect();
        for (name, mut param) in self.trainable_tensors_mut(set) {
            let g = named
                .get(&name)
                .ok_or_else(|| ModelError::Shape(format!("missing gradient for {name}")))?;
            param.scaled_add(-lr, g);
        }
        Ok(())
    }
}
