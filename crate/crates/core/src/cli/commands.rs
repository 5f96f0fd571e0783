//! Subcommand handlers.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{CliError, Command, LlmArgs, Preset, ProviderKind};
use crate::audio::{read_wav, write_wav, AudioFrontend, PatchGrid};
use crate::curriculum::{
    build_examples, default_curriculum, load_curriculum, run_curriculum, scale_curriculum, write_reports, TrainerConfig,
    DESK_FACTOR,
};
use crate::eval::{
    eval_caption, eval_classify, eval_judge, eval_probes, EmbeddingProvider, HashedBowProvider, LabelSet, OrderExtractor,
    Prediction, RemoteProvider, Truth,
};
use crate::forge::{
    compute_dataset_stats, forge_closed, forge_open, gen_feature_bank, read_jsonl, sample_audioset, to_jsonl,
    validate_manifest, write_atomic, write_jsonl, AudioMeta, QAPair, QuestionBank, UnanswerableDetector,
};
use crate::llm::{HttpClient, HttpConfig, LlmClient, MockClient, RateLimitedClient, RetryingClient};
use crate::model::{generate, load_checkpoint, save_checkpoint, AudioLm, AudioLmConfig, ByteTokenizer, GenerationConfig};
use crate::synth::synth_clip;

pub(super) fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Synth { n, seed, out } => synth(n, seed, &out),
        Command::ForgeClosed { meta, out, seed } => {
            let metas: Vec<AudioMeta> = rows(&meta)?;
            let pairs = forge_closed(&metas, &QuestionBank::default(), seed)?;
            write_jsonl(&out, &pairs)?;
            log::info!("{} closed-ended pairs from {} clips -> {}", pairs.len(), metas.len(), out.display());
            Ok(())
        }
        Command::ForgeOpen { meta, out, llm } => {
            let metas: Vec<AudioMeta> = rows(&meta)?;
            let report = with_llm(&llm, |c| Ok(forge_open(&metas, c, &UnanswerableDetector::default())?))?;
            write_jsonl(&out, &report.pairs)?;
            log::info!(
                "{} open-ended pairs from {} calls ({} parse warnings) -> {}",
                report.pairs.len(),
                report.client_calls,
                report.parse_warnings,
                out.display()
            );
            Ok(())
        }
        Command::ForgeFeatures { labels, out, llm } => {
            let classes = read_labels(&labels)?;
            let report = with_llm(&llm, |c| Ok(gen_feature_bank(&classes, c, Some(&out))?))?;
            report.bank.save(&out)?;
            if report.long_descriptions > 0 {
                log::warn!("{} descriptions are longer than ten words", report.long_descriptions);
            }
            if !report.missing.is_empty() {
                for (class, err) in &report.missing {
                    log::error!("{class}: {err}");
                }
                return Err(CliError::Runtime(format!("{} classes incomplete", report.missing.len())));
            }
            log::info!("{} classes -> {}", report.bank.classes.len(), out.display());
            Ok(())
        }
        Command::SampleAudioset { meta, n, out } => {
            let metas: Vec<AudioMeta> = rows(&meta)?;
            let mut labels_of = BTreeMap::new();
            let mut counts: BTreeMap<String, u64> = BTreeMap::new();
            for m in &metas {
                let labels: BTreeSet<String> = m.events.iter().map(|e| e.label.clone()).collect();
                for l in &labels {
                    *counts.entry(l.clone()).or_default() += 1;
                }
                labels_of.insert(m.audio_id.clone(), labels.into_iter().collect::<Vec<_>>());
            }
            let ids = sample_audioset(&counts, &labels_of, n)?;
            let mut text = ids.join("\n");
            text.push('\n');
            write_atomic(&out, text.as_bytes())?;
            log::info!("{} of {} audios -> {}", ids.len(), metas.len(), out.display());
            Ok(())
        }
        Command::Stats { manifest, out } => {
            let pairs: Vec<QAPair> = rows(&manifest)?;
            emit(out.as_deref(), &compute_dataset_stats(&pairs)?)
        }
        Command::Validate { manifest } => {
            let report = validate_manifest(&manifest)?;
            for v in &report.violations {
                println!("line {}: {}", v.line, v.message);
            }
            println!("{} rows, {} violations", report.rows, report.violations.len());
            if report.violations.is_empty() {
                Ok(())
            } else {
                Err(CliError::Invalid(format!("{} has {} violations", manifest.display(), report.violations.len())))
            }
        }
        Command::Train {
            manifest,
            audio_dir,
            ckpt,
            curriculum,
            factor,
            preset,
            batch_size,
            lr_scale,
            init_ckpt,
            reports,
            seed,
        } => {
            let stages = match &curriculum {
                Some(p) => scale_curriculum(&load_curriculum(p)?, factor.unwrap_or(1.0))?,
                None => scale_curriculum(&default_curriculum(), factor.unwrap_or(DESK_FACTOR))?,
            };
            let mut cfg = match preset {
                Preset::Desk => TrainerConfig::desk(),
                Preset::Full => TrainerConfig::preset(),
            };
            cfg.seed = seed;
            if let Some(b) = batch_size {
                cfg.batch_size = b;
            }
            if let Some(s) = lr_scale {
                cfg.lr_scale = s;
            }
            cfg.validate()?;
            let pairs: Vec<QAPair> = rows(&manifest)?;
            let ids: BTreeSet<&str> = pairs.iter().map(|p| p.audio_id.as_str()).collect();
            let audio = load_audio(&audio_dir, ids)?;
            let (rows, skipped) = build_examples(&pairs, &audio, cfg.text_cutoff)?;
            if !skipped.is_empty() {
                log::warn!("{} rows have no answer token within the text cutoff and are skipped", skipped.len());
            }
            let mut model = match &init_ckpt {
                Some(p) => load_checkpoint(p)?,
                None => AudioLm::new_random(AudioLmConfig::toy(), seed)?,
            };
            fs::create_dir_all(&ckpt)?;
            let stage_reports = run_curriculum(&mut model, &rows, &stages, &cfg, Some(&ckpt))?;
            save_checkpoint(&model, &ckpt)?;
            let reports = reports.unwrap_or_else(|| ckpt.join("reports.jsonl"));
            write_reports(&reports, &stage_reports)?;
            log::info!("checkpoint -> {}, reports -> {}", ckpt.display(), reports.display());
            Ok(())
        }
        Command::Answer {
            ckpt,
            audio,
            question,
            manifest,
            audio_dir,
            out,
            temperature,
            top_k,
            top_p,
            repetition_penalty,
            max_new_tokens,
            seed,
        } => {
            let gen = GenerationConfig {
                temperature,
                top_k,
                top_p,
                repetition_penalty,
                max_new_tokens,
                seed,
            };
            gen.validate()?;
            let model = load_checkpoint(&ckpt)?;
            let preds = match (manifest, audio) {
                (Some(manifest), _) => {
                    let pairs: Vec<QAPair> = rows(&manifest)?;
                    let dir = audio_dir.ok_or_else(|| CliError::Invalid("--manifest needs --audio-dir".into()))?;
                    let grids = load_audio(&dir, pairs.iter().map(|p| p.audio_id.as_str()).collect())?;
                    let mut preds = Vec::with_capacity(pairs.len());
                    for (i, p) in pairs.iter().enumerate() {
                        let g = GenerationConfig {
                            seed: seed.wrapping_add(i as u64),
                            ..gen.clone()
                        };
                        preds.push(answer_one(&model, &grids[&p.audio_id], &p.audio_id, &p.question, &g)?);
                        if (i + 1) % 50 == 0 {
                            log::info!("answered {}/{}", i + 1, pairs.len());
                        }
                    }
                    preds
                }
                (None, Some(path)) => {
                    let question = question.ok_or_else(|| CliError::Invalid("--question is required".into()))?;
                    let grid = AudioFrontend::default().patches(&read_wav(&path)?)?;
                    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                    vec![answer_one(&model, &grid, &id, &question, &gen)?]
                }
                (None, None) => return Err(CliError::Invalid("give --audio or --manifest".into())),
            };
            let text = to_jsonl(&preds)?;
            match out {
                Some(p) => Ok(write_atomic(&p, text.as_bytes())?),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::EvalClassify {
            predictions,
            truth,
            labels,
            multi_label,
            provider,
            api_key_env,
            out,
        } => {
            let names = read_labels(&labels)?;
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let set = LabelSet::new(&refs, multi_label)?;
            let preds: Vec<Prediction> = rows(&predictions)?;
            let truths: Vec<Truth> = rows(&truth)?;
            let p = make_provider(provider, &api_key_env)?;
            emit(out.as_deref(), &eval_classify(&preds, &truths, &set, p.as_ref())?)
        }
        Command::EvalCaption { predictions, truth, out } => {
            let preds: Vec<Prediction> = rows(&predictions)?;
            let truths: Vec<Truth> = rows(&truth)?;
            emit(out.as_deref(), &eval_caption(&preds, &truths)?)
        }
        Command::EvalJudge { predictions, out, llm } => {
            let preds: Vec<Prediction> = rows(&predictions)?;
            let report = with_llm(&llm, |c| Ok(eval_judge(&preds, c)?))?;
            emit(out.as_deref(), &report)
        }
        Command::Probe {
            predictions,
            truth,
            provider,
            api_key_env,
            out,
        } => {
            let preds: Vec<Prediction> = rows(&predictions)?;
            let truths: Vec<Truth> = rows(&truth)?;
            let p = make_provider(provider, &api_key_env)?;
            emit(out.as_deref(), &eval_probes(&preds, &truths, p.as_ref(), &OrderExtractor::default())?)
        }
    }
}

fn synth(n: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::Invalid("--n must be at least 1".into()));
    }
    fs::create_dir_all(out)?;
    let mut metas = Vec::with_capacity(n);
    for i in 0..n {
        let clip = synth_clip(seed, i)?;
        write_wav(out.join(format!("{}.wav", clip.meta.audio_id)), &clip.wave)?;
        metas.push(clip.meta);
    }
    write_jsonl(&out.join("meta.jsonl"), &metas)?;
    log::info!("{n} clips -> {}", out.display());
    Ok(())
}

fn answer_one(
    model: &AudioLm,
    grid: &PatchGrid,
    audio_id: &str,
    question: &str,
    gen: &GenerationConfig,
) -> Result<Prediction, CliError> {
    let prompt = ByteTokenizer.encode_prompt(question);
    let ids = generate(model, grid, &prompt, gen)?;
    Ok(Prediction {
        audio_id: audio_id.to_string(),
        question: question.to_string(),
        output: ByteTokenizer.decode(&ids),
    })
}

fn load_audio(dir: &Path, ids: BTreeSet<&str>) -> Result<HashMap<String, Arc<PatchGrid>>, CliError> {
    let frontend = AudioFrontend::default();
    let mut out = HashMap::with_capacity(ids.len());
    for id in ids {
        let path: PathBuf = dir.join(format!("{id}.wav"));
        let wave = read_wav(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        out.insert(id.to_string(), Arc::new(frontend.patches(&wave)?));
    }
    log::info!("loaded {} clips from {}", out.len(), dir.display());
    Ok(out)
}

/// JSON-lines rows with the file name attached to any error.
fn rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    read_jsonl(path).map_err(|e| match CliError::from(e) {
        CliError::Invalid(m) => CliError::Invalid(format!("{}: {m}", path.display())),
        CliError::Runtime(m) => CliError::Runtime(format!("{}: {m}", path.display())),
    })
}

fn read_labels(path: &Path) -> Result<Vec<String>, CliError> {
    let labels: Vec<String> = fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if labels.is_empty() {
        return Err(CliError::Invalid(format!("{} lists no labels", path.display())));
    }
    Ok(labels)
}

fn make_provider(kind: ProviderKind, api_key_env: &str) -> Result<Box<dyn EmbeddingProvider>, CliError> {
    Ok(match kind {
        ProviderKind::Hashed => Box::new(HashedBowProvider::default()),
        ProviderKind::Remote => {
            let client = HttpClient::new(HttpConfig {
                api_key_env: api_key_env.to_string(),
                ..HttpConfig::default()
            })?;
            Box::new(RemoteProvider::new(client, 1536))
        }
    })
}

/// Runs `f` against the mock or the HTTP client, as the flags select.
fn with_llm<R>(a: &LlmArgs, f: impl FnOnce(&dyn LlmClient) -> Result<R, CliError>) -> Result<R, CliError> {
    if a.mock_llm {
        let mock = match &a.fixtures {
            Some(p) => MockClient::replay(MockClient::load_fixtures(p)?).with_templates(),
            None => MockClient::new(),
        };
        let r = f(&mock);
        log::info!("mock client served {} calls offline", mock.call_count());
        r
    } else {
        let http = HttpClient::new(HttpConfig {
            api_key_env: a.api_key_env.clone(),
            ..HttpConfig::default()
        })?;
        f(&RetryingClient::new(RateLimitedClient::new(http, a.rate_limit)))
    }
}

/// Pretty JSON to `out` (atomically) or standard output.
fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    match out {
        Some(p) => {
            write_atomic(p, text.as_bytes())?;
            log::info!("report -> {}", p.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}
