//! On-disk model state: a `manifest.txt` of `key=value` lines (config plus
//! a tensor table) next to `weights.f32` holding little-endian f32 values.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::ArrayViewMutD;

use super::audio_lm::AudioLm;
use super::config::{AudioLmConfig, DecoderConfig, LoraTarget};
use super::ModelError;

const FORMAT: &str = "ltu-checkpoint-v1";
const MANIFEST: &str = "manifest.txt";
const WEIGHTS: &str = "weights.f32";

#[derive(Debug, Clone, PartialEq)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset in values (not bytes) into the weights file.
    offset: usize,
}

#[derive(Debug, Clone)]
struct Manifest {
    /// True when only trainable (non-LM) tensors are stored.
    adapters_only: bool,
    config: AudioLmConfig,
    input_shift: f64,
    input_scale: f64,
    use_position: bool,
    tensors: Vec<TensorEntry>,
}

impl Manifest {
    fn to_text(&self) -> String {
        let c = &self.config;
        let d = &c.decoder;
        let targets: Vec<&str> = d
            .lora_targets
            .iter()
            .map(|t| match t {
                LoraTarget::Query => "query",
                LoraTarget::Key => "key",
            })
            .collect();
        let mut out = format!(
            "format={FORMAT}\nadapters_only={}\nn_layers={}\nn_heads={}\nd_model={}\nd_ff={}\nvocab_size={}\n\
             max_seq_len={}\nlora_rank={}\nlora_alpha={}\nlora_targets={}\nd_audio={}\npatch_values={}\n\
             time_patches={}\nfreq_patches={}\ninput_shift={}\ninput_scale={}\nuse_position={}\n",
            self.adapters_only,
            d.n_layers,
            d.n_heads,
            d.d_model,
            d.d_ff,
            d.vocab_size,
            d.max_seq_len,
            d.lora_rank,
            d.lora_alpha,
            targets.join(","),
            c.d_audio,
            c.patch_values,
            c.time_patches,
            c.freq_patches,
            self.input_shift,
            self.input_scale,
            self.use_position,
        );
        for t in &self.tensors {
            let shape: Vec<String> = t.shape.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!("tensor.{}={WEIGHTS}:{}:{}\n", t.name, t.offset, shape.join("x")));
        }
        out
    }

    fn parse(text: &str) -> Result<Self, ModelError> {
        let bad = |m: String| ModelError::Checkpoint(m);
        let mut kv = BTreeMap::new();
        let mut tensors = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("manifest line {}: expected key=value", n + 1)))?;
            if let Some(name) = k.strip_prefix("tensor.") {
                let parts: Vec<&str> = v.split(':').collect();
                if parts.len() != 3 || parts[0] != WEIGHTS {
                    return Err(bad(format!("manifest line {}: bad tensor entry {v:?}", n + 1)));
                }
                let offset = parts[1].parse().map_err(|_| bad(format!("bad offset for {name}")))?;
                let shape = parts[2]
                    .split('x')
                    .map(|d| d.parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| bad(format!("bad shape for {name}")))?;
                tensors.push(TensorEntry {
                    name: name.to_string(),
                    shape,
                    offset,
                });
            } else {
                kv.insert(k.to_string(), v.to_string());
            }
        }
        let get = |k: &str| kv.get(k).cloned().ok_or_else(|| bad(format!("manifest missing {k}")));
        fn num<T: std::str::FromStr>(k: &str, v: String) -> Result<T, ModelError> {
            v.parse().map_err(|_| ModelError::Checkpoint(format!("bad value for {k}: {v:?}")))
        }
        if get("format")? != FORMAT {
            return Err(bad(format!("unknown format {:?}", get("format")?)));
        }
        let lora_targets = get("lora_targets")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| match s {
                "query" => Ok(LoraTarget::Query),
                "key" => Ok(LoraTarget::Key),
                other => Err(bad(format!("unknown LoRA target {other:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let decoder = DecoderConfig {
            n_layers: num("n_layers", get("n_layers")?)?,
            n_heads: num("n_heads", get("n_heads")?)?,
            d_model: num("d_model", get("d_model")?)?,
            d_ff: num("d_ff", get("d_ff")?)?,
            vocab_size: num("vocab_size", get("vocab_size")?)?,
            max_seq_len: num("max_seq_len", get("max_seq_len")?)?,
            lora_rank: num("lora_rank", get("lora_rank")?)?,
            lora_alpha: num("lora_alpha", get("lora_alpha")?)?,
            lora_targets,
        };
        Ok(Self {
            adapters_only: num("adapters_only", get("adapters_only")?)?,
            config: AudioLmConfig {
                decoder,
                d_audio: num("d_audio", get("d_audio")?)?,
                patch_values: num("patch_values", get("patch_values")?)?,
                time_patches: num("time_patches", get("time_patches")?)?,
                freq_patches: num("freq_patches", get("freq_patches")?)?,
            },
            input_shift: num("input_shift", get("input_shift")?)?,
            input_scale: num("input_scale", get("input_scale")?)?,
            use_position: num("use_position", get("use_position")?)?,
            tensors,
        })
    }
}

fn tensors_mut(model: &mut AudioLm, adapters_only: bool) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
    let mut out = vec![
        ("encoder.weight".to_string(), model.encoder.weight.view_mut().into_dyn()),
        ("encoder.bias".to_string(), model.encoder.bias.view_mut().into_dyn()),
        ("encoder.pos".to_string(), model.encoder.pos.view_mut().into_dyn()),
        ("projection.weight".to_string(), model.projection.weight.view_mut().into_dyn()),
        ("projection.bias".to_string(), model.projection.bias.view_mut().into_dyn()),
    ];
    let (base, adapters) = model.decoder.split_tensors_mut();
    if !adapters_only {
        out.extend(base.into_iter().map(|(n, t)| (n, t.view_mut().into_dyn())));
    }
    out.extend(adapters.into_iter().map(|(n, t)| (n, t.view_mut().into_dyn())));
    out
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ModelError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn save(model: &AudioLm, dir: &Path, adapters_only: bool) -> Result<(), ModelError> {
    fs::create_dir_all(dir)?;
    let mut copy = model.clone();
    let mut blob = Vec::new();
    let mut tensors = Vec::new();
    let mut offset = 0;
    for (name, t) in tensors_mut(&mut copy, adapters_only) {
        tensors.push(TensorEntry {
            name,
            shape: t.shape().to_vec(),
            offset,
        });
        offset += t.len();
        for v in t.iter() {
            blob.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let manifest = Manifest {
        adapters_only,
        config: model.cfg.clone(),
        input_shift: model.encoder.input_shift,
        input_scale: model.encoder.input_scale,
        use_position: model.encoder.use_position,
        tensors,
    };
    write_atomic(&dir.join(WEIGHTS), &blob)?;
    write_atomic(&dir.join(MANIFEST), manifest.to_text().as_bytes())
}

/// Writes every tensor, frozen base included.
pub fn save_checkpoint(model: &AudioLm, dir: &Path) -> Result<(), ModelError> {
    save(model, dir, false)
}

/// Writes only encoder, projection and adapter tensors.
pub fn save_adapters(model: &AudioLm, dir: &Path) -> Result<(), ModelError> {
    save(model, dir, true)
}

fn read_manifest(dir: &Path) -> Result<(Manifest, Vec<f64>), ModelError> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let manifest = Manifest::parse(&text)?;
    let bytes = fs::read(dir.join(WEIGHTS))?;
    if bytes.len() % 4 != 0 {
        return Err(ModelError::Checkpoint("weights file length is not a multiple of 4".into()));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64)
        .collect();
    Ok((manifest, values))
}

fn fill(model: &mut AudioLm, manifest: &Manifest, values: &[f64]) -> Result<(), ModelError> {
    let mut targets = tensors_mut(model, manifest.adapters_only);
    if targets.len() != manifest.tensors.len() {
        return Err(ModelError::Checkpoint(format!(
            "checkpoint has {} tensors, model expects {}",
            manifest.tensors.len(),
            targets.len()
        )));
    }
    for ((name, t), e) in targets.iter_mut().zip(&manifest.tensors) {
        if *name != e.name || t.shape() != e.shape.as_slice() {
            return Err(ModelError::Checkpoint(format!(
                "tensor {} {:?} does not match model tensor {name} {:?}",
                e.name,
                e.shape,
                t.shape()
            )));
        }
        let src = values
            .get(e.offset..e.offset + t.len())
            .ok_or_else(|| ModelError::Checkpoint(format!("weights file too short for {name}")))?;
        for (d, s) in t.iter_mut().zip(src) {
            *d = *s;
        }
    }
    Ok(())
}

/// Restores a model written by [`save_checkpoint`].
pub fn load_checkpoint(dir: &Path) -> Result<AudioLm, ModelError> {
    let (manifest, values) = read_manifest(dir)?;
    if manifest.adapters_only {
        return Err(ModelError::Checkpoint("directory holds adapters only; load them onto a base model".into()));
    }
    let mut model = AudioLm::new_random(manifest.config.clone(), 0)?;
    model.encoder.input_shift = manifest.input_shift;
    model.encoder.input_scale = manifest.input_scale;
    model.encoder.use_position = manifest.use_position;
    fill(&mut model, &manifest, &values)?;
    Ok(model)
}

/// Overwrites the trainable tensors of `model` from an adapter directory
/// (a full checkpoint also works; its base tensors are ignored).
pub fn load_adapters(model: &mut AudioLm, dir: &Path) -> Result<(), ModelError> {
    let (mut manifest, values) = read_manifest(dir)?;
    if manifest.config != model.cfg {
        return Err(ModelError::Checkpoint("adapter config differs from the base model".into()));
    }
    if !manifest.adapters_only {
        let keep = |n: &str| !n.starts_with("decoder.") || n.contains(".lora_");
        manifest.tensors.retain(|e| keep(&e.name));
        manifest.adapters_only = true;
    }
    fill(model, &manifest, &values)
}
