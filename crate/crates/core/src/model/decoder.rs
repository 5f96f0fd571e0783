//! Pre-norm causal transformer decoder over `[audio prefix ; text]`.
//!
//! Every base tensor is frozen. Query and key projections carry LoRA
//! adapters; the backward pass produces adapter gradients and the gradient
//! with respect to the audio prefix, nothing else.

use ndarray::{s, Array2};
use rand::Rng;

use super::config::{DecoderConfig, LoraTarget};
use super::lora::{LoraGrads, LoraLinear};
use super::tensor::{gaussian, rmsnorm_backward, rmsnorm_rows, silu, silu_grad, softmax_prefix};
use super::ModelError;
use crate::audio::AudioTokenSequence;

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayer {
    pub query: LoraLinear,
    pub key: LoraLinear,
    /// `d × d`
    pub value: Array2<f64>,
    /// `d × d`
    pub output: Array2<f64>,
    /// `d_ff × d`
    pub up: Array2<f64>,
    /// `d × d_ff`
    pub down: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    pub cfg: DecoderConfig,
    /// `vocab × d`
    pub tok_emb: Array2<f64>,
    /// `max_seq_len × d`
    pub pos_emb: Array2<f64>,
    pub layers: Vec<DecoderLayer>,
    /// `vocab × d`
    pub lm_head: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerLoraGrads {
    pub query: Option<LoraGrads>,
    pub key: Option<LoraGrads>,
}

#[derive(Debug, Clone)]
pub struct DecoderGrads {
    pub layers: Vec<LayerLoraGrads>,
}

struct LayerCache {
    n1: Array2<f64>,
    r1: ndarray::Array1<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    zq: Array2<f64>,
    zk: Array2<f64>,
    probs: Vec<Array2<f64>>,
    n2: Array2<f64>,
    r2: ndarray::Array1<f64>,
    u: Array2<f64>,
}

/// Activations kept from a forward pass for [`Decoder::backward`].
pub struct DecoderCache {
    n_prefix: usize,
    adapters: bool,
    layers: Vec<LayerCache>,
    nf: Array2<f64>,
    rf: ndarray::Array1<f64>,
}

impl Decoder {
    pub fn new_random(cfg: DecoderConfig, rng: &mut impl Rng) -> Result<Self, ModelError> {
        cfg.validate_instantiable()?;
        let d = cfg.d_model;
        let inv = (1.0 / d as f64).sqrt();
        let tok_emb = gaussian(cfg.vocab_size, d, 1.0, rng);
        let pos_emb = gaussian(cfg.max_seq_len, d, 0.5, rng);
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for _ in 0..cfg.n_layers {
            let query = LoraLinear::init(gaussian(d, d, inv, rng), cfg.lora_rank, cfg.lora_alpha, rng)?;
            let key = LoraLinear::init(gaussian(d, d, inv, rng), cfg.lora_rank, cfg.lora_alpha, rng)?;
            layers.push(DecoderLayer {
                query,
                key,
                value: gaussian(d, d, inv, rng),
                output: gaussian(d, d, inv, rng),
                up: gaussian(cfg.d_ff, d, inv, rng),
                down: gaussian(d, cfg.d_ff, (1.0 / cfg.d_ff as f64).sqrt(), rng),
            });
        }
        let lm_head = gaussian(cfg.vocab_size, d, 4.0 * inv, rng);
        Ok(Self {
            cfg,
            tok_emb,
            pos_emb,
            layers,
            lm_head,
        })
    }

    pub fn d_model(&self) -> usize {
        self.cfg.d_model
    }

    fn adapted(&self, t: LoraTarget) -> bool {
        self.cfg.has_target(t)
    }

    /// Named frozen tensors in a stable order.
    pub fn base_tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = vec![
            ("decoder.tok_emb".to_string(), &self.tok_emb),
            ("decoder.pos_emb".to_string(), &self.pos_emb),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("decoder.layers.{i}.query.weight"), &l.query.weight));
            out.push((format!("decoder.layers.{i}.key.weight"), &l.key.weight));
            out.push((format!("decoder.layers.{i}.value"), &l.value));
            out.push((format!("decoder.layers.{i}.output"), &l.output));
            out.push((format!("decoder.layers.{i}.up"), &l.up));
            out.push((format!("decoder.layers.{i}.down"), &l.down));
        }
        out.push(("decoder.lm_head".to_string(), &self.lm_head));
        out
    }

    pub fn base_tensors_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out = vec![
            ("decoder.tok_emb".to_string(), &mut self.tok_emb),
            ("decoder.pos_emb".to_string(), &mut self.pos_emb),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.push((format!("decoder.layers.{i}.query.weight"), &mut l.query.weight));
            out.push((format!("decoder.layers.{i}.key.weight"), &mut l.key.weight));
            out.push((format!("decoder.layers.{i}.value"), &mut l.value));
            out.push((format!("decoder.layers.{i}.output"), &mut l.output));
            out.push((format!("decoder.layers.{i}.up"), &mut l.up));
            out.push((format!("decoder.layers.{i}.down"), &mut l.down));
        }
        out.push(("decoder.lm_head".to_string(), &mut self.lm_head));
        out
    }

    /// Named adapter tensors (only configured targets) in a stable order.
    pub fn adapter_tensors_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let (q, k) = (self.adapted(LoraTarget::Query), self.adapted(LoraTarget::Key));
        let mut out = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            if q {
                out.push((format!("decoder.layers.{i}.query.lora_a"), &mut l.query.lora_a));
                out.push((format!("decoder.layers.{i}.query.lora_b"), &mut l.query.lora_b));
            }
            if k {
                out.push((format!("decoder.layers.{i}.key.lora_a"), &mut l.key.lora_a));
                out.push((format!("decoder.layers.{i}.key.lora_b"), &mut l.key.lora_b));
            }
        }
        out
    }

    /// Base and adapter tensors together, as `(base, adapters)`, in the
    /// orders of [`Decoder::base_tensors_mut`] and [`Decoder::adapter_tensors_mut`].
    pub fn split_tensors_mut(&mut self) -> (Vec<(String, &mut Array2<f64>)>, Vec<(String, &mut Array2<f64>)>) {
        let (q, k) = (self.adapted(LoraTarget::Query), self.adapted(LoraTarget::Key));
        let mut base = vec![
            ("decoder.tok_emb".to_string(), &mut self.tok_emb),
            ("decoder.pos_emb".to_string(), &mut self.pos_emb),
        ];
        let mut adapters = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            let DecoderLayer { query, key, value, output, up, down } = l;
            base.push((format!("decoder.layers.{i}.query.weight"), &mut query.weight));
            base.push((format!("decoder.layers.{i}.key.weight"), &mut key.weight));
            base.push((format!("decoder.layers.{i}.value"), value));
            base.push((format!("decoder.layers.{i}.output"), output));
            base.push((format!("decoder.layers.{i}.up"), up));
            base.push((format!("decoder.layers.{i}.down"), down));
            if q {
                adapters.push((format!("decoder.layers.{i}.query.lora_a"), &mut query.lora_a));
                adapters.push((format!("decoder.layers.{i}.query.lora_b"), &mut query.lora_b));
            }
            if k {
                adapters.push((format!("decoder.layers.{i}.key.lora_a"), &mut key.lora_a));
                adapters.push((format!("decoder.layers.{i}.key.lora_b"), &mut key.lora_b));
            }
        }
        base.push(("decoder.lm_head".to_string(), &mut self.lm_head));
        (base, adapters)
    }

    /// Logits (`text_len × vocab`) for every text position given an audio
    /// prefix already in model width.
    pub fn forward(&self, prefix: &Array2<f64>, text: &[u32], adapters: bool) -> Result<(Array2<f64>, DecoderCache), ModelError> {
        let d = self.cfg.d_model;
        let n_prefix = prefix.nrows();
        let len = n_prefix + text.len();
        if prefix.ncols() != d {
            return Err(ModelError::Shape(format!("prefix width {} != d_model {d}", prefix.ncols())));
        }
        if len > self.cfg.max_seq_len {
            return Err(ModelError::SequenceTooLong {
                len,
                max: self.cfg.max_seq_len,
            });
        }
        if text.is_empty() {
            return Err(ModelError::Shape("empty text sequence".into()));
        }
        if let Some(&bad) = text.iter().find(|&&t| t as usize >= self.cfg.vocab_size) {
            return Err(ModelError::Shape(format!("token id {bad} outside vocabulary")));
        }

        let mut h = Array2::zeros((len, d));
        h.slice_mut(s![..n_prefix, ..]).assign(prefix);
        for (i, &t) in text.iter().enumerate() {
            h.row_mut(n_prefix + i).assign(&self.tok_emb.row(t as usize));
        }
        h += &self.pos_emb.slice(s![..len, ..]);

        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, cache) = self.layer_forward(layer, &h, adapters);
            h = next;
            caches.push(cache);
        }
        let (nf, rf) = rmsnorm_rows(&h);
        let logits = nf.slice(s![n_prefix.., ..]).dot(&self.lm_head.t());
        Ok((
            logits,
            DecoderCache {
                n_prefix,
                adapters,
                layers: caches,
                nf,
                rf,
            },
        ))
    }

    fn layer_forward(&self, layer: &DecoderLayer, h: &Array2<f64>, adapters: bool) -> (Array2<f64>, LayerCache) {
        let cfg = &self.cfg;
        let (len, d) = h.dim();
        let (hd, heads) = (cfg.head_dim(), cfg.n_heads);
        let scale = 1.0 / (hd as f64).sqrt();

        let (n1, r1) = rmsnorm_rows(h);
        let (q, zq) = layer.query.forward_rows(&n1, adapters && self.adapted(LoraTarget::Query));
        let (k, zk) = layer.key.forward_rows(&n1, adapters && self.adapted(LoraTarget::Key));
        let v = n1.dot(&layer.value.t());

        let mut o = Array2::zeros((len, d));
        let mut probs = Vec::with_capacity(heads);
        for hh in 0..heads {
            let cols = s![.., hh * hd..(hh + 1) * hd];
            let qh = q.slice(cols);
            let kh = k.slice(cols);
            let mut p = qh.dot(&kh.t()) * scale;
            for (i, mut row) in p.rows_mut().into_iter().enumerate() {
                softmax_prefix(row.as_slice_mut().expect("contiguous"), i + 1);
            }
            o.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
            probs.push(p);
        }
        let mut h2 = h + &o.dot(&layer.output.t());
        let (n2, r2) = rmsnorm_rows(&h2);
        let u = n2.dot(&layer.up.t());
        let g = u.mapv(silu);
        h2 += &g.dot(&layer.down.t());
        (
            h2,
            LayerCache {
                n1,
                r1,
                q,
                k,
                v,
                zq,
                zk,
                probs,
                n2,
                r2,
                u,
            },
        )
    }

    /// Backpropagates `dlogits` (`text_len × vocab`). Returns adapter
    /// gradients and the gradient with respect to the audio prefix.
    pub fn backward(&self, cache: &DecoderCache, dlogits: &Array2<f64>) -> (DecoderGrads, Array2<f64>) {
        let n_prefix = cache.n_prefix;
        let (len, d) = cache.nf.dim();
        let mut dnf = Array2::zeros((len, d));
        dnf.slice_mut(s![n_prefix.., ..]).assign(&dlogits.dot(&self.lm_head));
        let mut dh = rmsnorm_backward(&cache.nf, &cache.rf, &dnf);

        let mut grads = Vec::with_capacity(self.layers.len());
        for (layer, lc) in self.layers.iter().zip(&cache.layers).rev() {
            let (g, prev) = self.layer_backward(layer, lc, &dh, cache.adapters);
            dh = prev;
            grads.push(g);
        }
        grads.reverse();
        let d_prefix = dh.slice(s![..n_prefix, ..]).to_owned();
        (DecoderGrads { layers: grads }, d_prefix)
    }

    fn layer_backward(&self, layer: &DecoderLayer, c: &LayerCache, dh_out: &Array2<f64>, adapters: bool) -> (LayerLoraGrads, Array2<f64>) {
        let cfg = &self.cfg;
        let (hd, heads) = (cfg.head_dim(), cfg.n_heads);
        let scale = 1.0 / (hd as f64).sqrt();
        let (len, d) = dh_out.dim();

        // MLP branch
        let dg = dh_out.dot(&layer.down);
        let mut du = dg;
        ndarray::Zip::from(&mut du).and(&c.u).for_each(|x, &u| *x *= silu_grad(u));
        let dn2 = du.dot(&layer.up);
        let dh2 = dh_out + &rmsnorm_backward(&c.n2, &c.r2, &dn2);

        // attention branch
        let d_o = dh2.dot(&layer.output);
        let mut dq = Array2::zeros((len, d));
        let mut dk = Array2::zeros((len, d));
        let mut dv = Array2::zeros((len, d));
        for hh in 0..heads {
            let cols = s![.., hh * hd..(hh + 1) * hd];
            let p = &c.probs[hh];
            let doh = d_o.slice(cols);
            let mut dp = doh.dot(&c.v.slice(cols).t());
            dv.slice_mut(cols).assign(&p.t().dot(&doh));
            for (mut dpr, pr) in dp.rows_mut().into_iter().zip(p.rows()) {
                let dot = dpr.dot(&pr);
                ndarray::Zip::from(&mut dpr).and(&pr).for_each(|x, &pv| *x = pv * (*x - dot));
            }
            let ds = dp;
            dq.slice_mut(cols).assign(&(ds.dot(&c.k.slice(cols)) * scale));
            dk.slice_mut(cols).assign(&(ds.t().dot(&c.q.slice(cols)) * scale));
        }

        let mut dn1 = dv.dot(&layer.value);
        let ad_q = adapters && self.adapted(LoraTarget::Query);
        let ad_k = adapters && self.adapted(LoraTarget::Key);
        let query = if ad_q {
            let (g, dx) = layer.query.backward_rows(&c.n1, &c.zq, &dq);
            dn1 += &dx;
            Some(g)
        } else {
            dn1 += &dq.dot(&layer.query.weight);
            None
        };
        let key = if ad_k {
            let (g, dx) = layer.key.backward_rows(&c.n1, &c.zk, &dk);
            dn1 += &dx;
            Some(g)
        } else {
            dn1 += &dk.dot(&layer.key.weight);
            None
        };
        let dh = dh2 + rmsnorm_backward(&c.n1, &c.r1, &dn1);
        (LayerLoraGrads { query, key }, dh)
    }
}

impl DecoderGrads {
    pub fn add_assign(&mut self, o: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&o.layers) {
            for (x, y) in [(&mut a.query, &b.query), (&mut a.key, &b.key)] {
                match (x.as_mut(), y) {
                    (Some(x), Some(y)) => x.add_assign(y),
                    (None, Some(y)) => *x = Some(y.clone()),
                    _ => {}
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            if let Some(g) = l.query.as_mut() {
                g.scale(s);
            }
            if let Some(g) = l.key.as_mut() {
                g.scale(s);
            }
        }
    }

    /// Gradient tensors named like [`Decoder::adapter_tensors_mut`].
    pub fn named(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            if let Some(g) = &l.query {
                out.push((format!("decoder.layers.{i}.query.lora_a"), &g.a));
                out.push((format!("decoder.layers.{i}.query.lora_b"), &g.b));
            }
            if let Some(g) = &l.key {
                out.push((format!("decoder.layers.{i}.key.lora_a"), &g.a));
                out.push((format!("decoder.layers.{i}.key.lora_b"), &g.b));
            }
        }
        out
    }
}

/// Runs the decoder on projected audio tokens plus text, returning one logits
/// row per text position.
pub fn decoder_forward(audio: &AudioTokenSequence, text: &[u32], decoder: &Decoder) -> Result<Array2<f64>, ModelError> {
    decoder.forward(&audio.tokens, text, true).map(|(l, _)| l)
}
