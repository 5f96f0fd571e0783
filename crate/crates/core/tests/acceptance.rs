//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use ltu::audio::{encode_patches, pool_tokens, AudioFrontend, PatchEncoder, Waveform};
use ltu::curriculum::{
    build_examples, default_curriculum, run_curriculum, run_stage, scale_curriculum, StageConfig, StageReport,
    TaskFilter, TrainerConfig, DESK_FACTOR,
};
use ltu::eval::{
    accuracy, average_precision, caption_overlap_f1, counting_probe, eval_classify, micro_f1, pearson,
    ExactMatchProvider, LabelSet, Prediction, Truth,
};
use ltu::forge::{
    ambulance_meta, build_aig_prompt, compute_dataset_stats, detect_unanswerable, parse_aig_response,
    sample_audioset, serialize_meta, stats_from_task_counts, QAPair, TaskKind,
};
use ltu::model::{
    alignment_losses, contrastive_loss, count_lora_params, finite_diff_check, generate, perturb_adapters, AlignmentBatch,
    AudioLm, AudioLmConfig, ByteTokenizer, DecoderConfig, GenerationConfig, Sampler, TrainableSet, TrainingExample,
    EOS,
};
use ltu::synth::SynthCorpus;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn shape_chain() -> Outcome {
    let t = Instant::now();
    let wave = Waveform::new(
        (0..160_000).map(|i| 0.3 * (2.0 * PI * 440.0 * i as f64 / 16_000.0).sin()).collect(),
        16_000,
    )
    .map_err(err)?;
    let front = AudioFrontend::default();
    let fb = front.fbank(&wave).map_err(err)?;
    check(fb.frames.dim() == (1024, 128), format!("fbank {:?}", fb.frames.dim()))?;
    let grid = front.patches(&wave).map_err(err)?;
    let (tp, fp, v) = grid.patches.dim();
    check((tp, fp, v) == (64, 8, 256), format!("patch grid {tp}x{fp}x{v}"))?;
    let enc = PatchEncoder::new_random(256, 512, 768, &mut ChaCha8Rng::seed_from_u64(0));
    let tokens = pool_tokens(&encode_patches(&grid, &enc).map_err(err)?).map_err(err)?;
    check(tokens.len() == 32, format!("{} tokens", tokens.len()))?;
    check((tokens.frame_rate_hz() - 3.2).abs() < 1e-12, format!("{} Hz", tokens.frame_rate_hz()))?;
    let secs = t.elapsed().as_secs_f64();
    check(secs < 1.0, format!("took {secs:.2}s"))?;
    Ok(format!("1024x128 fbank, {} patches, 32 tokens at 3.2 Hz in {secs:.2}s", tp * fp))
}

fn lora_count() -> Outcome {
    let n = count_lora_params(&DecoderConfig::llama_7b_geometry());
    check(n == 4_194_304, format!("got {n}"))?;
    Ok(format!("{n}"))
}

fn gradient_check() -> Outcome {
    let t = Instant::now();
    let mut m = AudioLm::new_random(AudioLmConfig::toy(), 3).map_err(err)?;
    perturb_adapters(&mut m, 0.02, 7);
    let corpus = SynthCorpus::generate(1, 7).map_err(err)?;
    let grid = corpus.patches.values().next().cloned().ok_or("no clip")?;
    let (ids, mask) = ByteTokenizer.encode_pair("What sound is heard?", "A siren wails.", 108);
    let ex = TrainingExample::new(grid, ids, mask).map_err(err)?;
    let r = finite_diff_check(&m, &ex, TrainableSet::AllNonLm, 4, 1e-5, 7).map_err(err)?;
    let tensors: BTreeSet<&str> = r.entries.iter().map(|e| e.tensor.as_str()).collect();
    let worst = r.max_rel_error();
    let secs = t.elapsed().as_secs_f64();
    check(worst < 1e-4, format!("max rel error {worst:.3e} at {:?}", r.worst()))?;
    check(secs < 60.0, format!("took {secs:.1}s"))?;
    Ok(format!("max rel error {worst:.2e} over {} tensors, {secs:.1}s", tensors.len()))
}

struct DeskRun {
    before: AudioLm,
    after: AudioLm,
    reports: Vec<StageReport>,
    secs: f64,
}

fn desk_run() -> Result<DeskRun, String> {
    let t = Instant::now();
    let corpus = SynthCorpus::generate(60, 1).map_err(err)?;
    let pairs = corpus.closed_pairs(200, 1).map_err(err)?;
    if pairs.len() != 200 {
        return Err(format!("corpus has {} pairs", pairs.len()));
    }
    let cfg = TrainerConfig::desk();
    let (rows, _) = build_examples(&pairs, &corpus.patches, cfg.text_cutoff).map_err(err)?;
    let stages = scale_curriculum(&default_curriculum(), DESK_FACTOR).map_err(err)?;
    let before = AudioLm::new_random(AudioLmConfig::toy(), 0).map_err(err)?;
    let mut after = before.clone();
    let reports = run_curriculum(&mut after, &rows, &stages, &cfg, None).map_err(err)?;
    Ok(DeskRun { before, after, reports, secs: t.elapsed().as_secs_f64() })
}

fn frozen_base(run: &Result<DeskRun, String>) -> Outcome {
    let run = run.as_ref().map_err(|e| format!("curriculum run failed: {e}"))?;
    for ((name, a), (_, b)) in run.after.decoder.base_tensors().iter().zip(run.before.decoder.base_tensors()) {
        check(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()), format!("{name} changed"))?;
    }
    let m = AudioLm::new_random(AudioLmConfig::toy(), 1).map_err(err)?;
    let corpus = SynthCorpus::generate(1, 2).map_err(err)?;
    let grid = corpus.patches.values().next().ok_or("no clip")?;
    let prefix = m.audio_tokens(grid).map_err(err)?;
    let text = ByteTokenizer.encode_prompt("Write an audio caption describing the sound.");
    let (with, _) = m.decoder.forward(&prefix.tokens, &text, true).map_err(err)?;
    let (without, _) = m.decoder.forward(&prefix.tokens, &text, false).map_err(err)?;
    let ulps = with.iter().zip(without.iter()).filter(|(a, b)| a.to_bits() != b.to_bits()).count();
    check(ulps == 0, format!("{ulps} logits differ with B = 0"))?;
    Ok(format!("{} base tensors bit-identical; B=0 forward differs in 0 of {} logits", run.after.decoder.base_tensors().len(), with.len()))
}

fn curriculum_fidelity() -> Outcome {
    let c = default_curriculum();
    let want = [
        (1, TrainableSet::ProjectionOnly, TaskFilter::ClfAndDesc, 1_200_000, 1e-3, 2),
        (2, TrainableSet::AllNonLm, TaskFilter::ClfAndDesc, 1_200_000, 1e-4, 2),
        (3, TrainableSet::AllNonLm, TaskFilter::AllClosed, 1_900_000, 1e-4, 1),
        (4, TrainableSet::AllNonLm, TaskFilter::All, 5_600_000, 1e-4, 1),
    ];
    check(c.len() == 4, format!("{} stages", c.len()))?;
    for (s, (stage, trainable, tasks, n, lr, epochs)) in c.iter().zip(want) {
        let expected = StageConfig { stage, trainable, tasks, n_samples: n, lr, epochs };
        check(*s == expected, format!("stage {stage}: {s:?}"))?;
    }
    Ok("4 stages match field-for-field".into())
}

fn desk_training(run: &Result<DeskRun, String>) -> Outcome {
    let t = Instant::now();
    let run = run.as_ref().map_err(|e| format!("curriculum run failed: {e}"))?;
    let first = run.reports[0].epoch_mean_loss[0];
    let stage4 = run.reports.iter().find(|r| r.stage == 4).ok_or("no stage 4")?;
    let last = stage4.epoch_mean_loss.iter().sum::<f64>() / stage4.epoch_mean_loss.len() as f64;
    let reduction = 1.0 - last / first;

    let corpus = SynthCorpus::generate(4, 3).map_err(err)?;
    let pairs = corpus.closed_pairs(10, 3).map_err(err)?;
    let (rows, _) = build_examples(&pairs, &corpus.patches, 108).map_err(err)?;
    check(rows.len() == 10, format!("overfit set has {} rows", rows.len()))?;
    let cfg = TrainerConfig { batch_size: 5, lr_scale: 1.0, max_grad_norm: Some(1.0), ..TrainerConfig::preset() };
    let stage = StageConfig {
        stage: 4,
        trainable: TrainableSet::AllNonLm,
        tasks: TaskFilter::All,
        n_samples: 10,
        lr: 1.0,
        epochs: 200,
    };
    let mut m = AudioLm::new_random(AudioLmConfig::toy(), 5).map_err(err)?;
    let overfit = run_stage(&mut m, &rows, &stage, &cfg).map_err(err)?;
    let overfit_loss = *overfit.epoch_mean_loss.last().ok_or("no epochs")?;
    let total = run.secs + t.elapsed().as_secs_f64();

    check(reduction >= 0.5, format!("stage-4 mean {last:.3} vs first epoch {first:.3}: {:.0}% reduction", 100.0 * reduction))?;
    check(overfit_loss < 0.1, format!("overfit loss {overfit_loss:.4}"))?;
    check(total < 600.0, format!("took {total:.0}s"))?;
    Ok(format!(
        "loss {first:.2} -> stage-4 mean {last:.2} ({:.0}% lower); overfit {overfit_loss:.4}; {total:.0}s",
        100.0 * reduction
    ))
}

fn alignment_loss() -> Outcome {
    let e = Array2::eye(2);
    let l = contrastive_loss(&e, &e, 0.05).map_err(err)?;
    let want = (-20f64).exp().ln_1p();
    check((l - want).abs() < 1e-12, format!("contrastive {l:e} vs {want:e}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let n = rng.gen_range(2..10);
        let d = rng.gen_range(2..16);
        let a = Array2::from_shape_fn((n, d), |_| rng.gen_range(-2.0..2.0));
        let t = Array2::from_shape_fn((n, d), |_| rng.gen_range(-2.0..2.0));
        let r = alignment_losses(&AlignmentBatch::new(a, t)).map_err(err)?;
        check(r.total == r.contrastive + 10.0 * r.mse, format!("sum identity: {r:?}"))?;
        let gap = (r.total - r.contrastive - 10.0 * r.mse).abs();
        check(gap <= 4.0 * f64::EPSILON * r.total.abs(), format!("difference off by {gap:e}: {r:?}"))?;
    }
    Ok(format!("contrastive {l:.3e}; total == contrastive + 10 mse bit-for-bit on 200 batches"))
}

fn sampler_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for case in 0..100 {
        let classes: Vec<String> = (0..rng.gen_range(1..=10)).map(|c| format!("class{c}")).collect();
        let counts: BTreeMap<String, u64> = classes.iter().map(|c| (c.clone(), rng.gen_range(1..6))).collect();
        let n_audio = rng.gen_range(1..=50);
        let labels_of: BTreeMap<String, Vec<String>> = (0..n_audio)
            .map(|a| {
                let k = rng.gen_range(1..=3);
                (format!("clip{a:02}"), (0..k).map(|_| classes.choose(&mut rng).cloned().unwrap_or_default()).collect())
            })
            .collect();
        let n = rng.gen_range(0..=n_audio);
        let mut weighted: Vec<(String, f64)> = labels_of
            .iter()
            .map(|(a, ls)| {
                let distinct: BTreeSet<&String> = ls.iter().collect();
                (a.clone(), distinct.iter().map(|l| 1.0 / counts[*l] as f64).sum())
            })
            .collect();
        weighted.sort_by(|x, y| y.1.partial_cmp(&x.1).expect("finite").then(x.0.cmp(&y.0)));
        let oracle: Vec<String> = weighted.into_iter().take(n).map(|w| w.0).collect();
        let got = sample_audioset(&counts, &labels_of, n).map_err(err)?;
        check(got == oracle, format!("case {case}: {got:?} vs {oracle:?}"))?;
    }
    Ok("100 instances match exactly".into())
}

fn prompt_fidelity() -> Outcome {
    let golden = include_str!("../fixtures/ambulance_aig_prompt.txt");
    let meta = include_str!("../fixtures/ambulance_meta.txt").trim_end();
    let prompt = build_aig_prompt(&ambulance_meta());
    check(prompt == golden, "prompt differs from the golden fixture")?;
    check(serialize_meta(&ambulance_meta()) == meta, "meta string differs")?;
    Ok(format!("{} prompt bytes identical", prompt.len()))
}

fn stats_fidelity() -> Outcome {
    let counts = BTreeMap::from([
        (TaskKind::Classification, 345_000),
        (TaskKind::AcousticFeatures, 845_000),
        (TaskKind::Caption, 430_000),
        (TaskKind::Temporal, 297_000),
        (TaskKind::OpenEnded, 3_764_000),
    ]);
    let s = stats_from_task_counts(&counts).map_err(err)?;
    check((s.closed.percent - 33.8).abs() <= 0.1, format!("closed {:.2}%", s.closed.percent))?;
    check((s.open.percent - 66.2).abs() <= 0.1, format!("open {:.2}%", s.open.percent))?;
    // per-task counts are rounded to thousands, so the sum may be 1K off
    check(s.total_pairs.abs_diff(5_682_000) <= 1_000, format!("total {}", s.total_pairs))?;

    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for i in 0..1000 {
        let n = rng.gen_range(1..60);
        let m: Vec<QAPair> = (0..n)
            .map(|_| QAPair {
                audio_id: "a".into(),
                question: format!("q{}", rng.gen_range(0..12)),
                answer: format!("a{}", rng.gen_range(0..30)),
                task: TaskKind::OpenEnded,
                closed: false,
                unanswerable: false,
            })
            .collect();
        let s = compute_dataset_stats(&m).map_err(err)?;
        let mut qc: HashMap<&str, usize> = HashMap::new();
        let mut ac: HashMap<&str, usize> = HashMap::new();
        for p in &m {
            *qc.entry(&p.question).or_default() += 1;
            *ac.entry(&p.answer).or_default() += 1;
        }
        let once = |c: &HashMap<&str, usize>| c.values().filter(|&&v| v == 1).count() as f64 / n as f64;
        let distinct = |c: &HashMap<&str, usize>| c.len() as f64 / n as f64;
        check(
            s.unique_question_fraction == once(&qc)
                && s.unique_answer_fraction == once(&ac)
                && s.distinct_question_fraction == distinct(&qc)
                && s.distinct_answer_fraction == distinct(&ac),
            format!("manifest {i} disagrees"),
        )?;
    }
    Ok(format!(
        "{:.1}% closed / {:.1}% open of {}K; 1000 manifests exact",
        s.closed.percent,
        s.open.percent,
        s.total_pairs / 1000
    ))
}

fn close(a: f64, b: f64, what: &str) -> Result<(), String> {
    check((a - b).abs() < 1e-9, format!("{what}: {a} vs {b}"))
}

fn metrics() -> Outcome {
    close(average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).ok_or("no AP")?, (1.0 + 2.0 / 3.0) / 2.0, "AP")?;
    close(average_precision(&[0.9, 0.8, 0.7], &[false, true, true]).ok_or("no AP")?, (0.5 + 2.0 / 3.0) / 2.0, "reversed AP")?;

    let set = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    let f1 = micro_f1(&[set(&["a"]), set(&["b"]), set(&[])], &[set(&["a"]), set(&[]), set(&["b"])]).map_err(err)?;
    close(f1, 0.5, "micro-F1")?;

    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let preds: Vec<bool> = (0..10_000).map(|_| rng.gen()).collect();
    let truths: Vec<bool> = (0..10_000).map(|_| rng.gen()).collect();
    let acc = accuracy(&preds, &truths).map_err(err)?;
    check((acc - 0.5).abs() <= 0.02, format!("random accuracy {acc}"))?;

    close(pearson(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).map_err(err)?, 0.6, "pearson")?;
    let answers: Vec<String> = ["one", "two", "two", "four"].iter().map(|s| s.to_string()).collect();
    let r = counting_probe(&answers, &[1, 2, 3, 4]).map_err(err)?;
    // closed form on x = (1,2,2,4), y = (1,2,3,4)
    let (x, y) = ([1.0, 2.0, 2.0, 4.0], [1.0, 2.0, 3.0, 4.0]);
    let (mx, my) = (2.25, 2.5);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    close(r.pearson, sxy / (sxx * syy).sqrt(), "counting pearson")?;

    close(
        caption_overlap_f1("a dog barks", &["the dog barks loudly".to_string()]).map_err(err)?,
        2.0 * (2.0 / 3.0) * 0.5 / (2.0 / 3.0 + 0.5),
        "caption F1",
    )?;

    let names = ["Siren", "Dog bark", "Rain", "Church bell"];
    let labels = LabelSet::new(&names, false).map_err(err)?;
    let (mut p, mut t) = (Vec::new(), Vec::new());
    for i in 0..40 {
        let l = names[rng.gen_range(0..names.len())];
        p.push(Prediction { audio_id: format!("{i}"), question: "q".into(), output: l.into() });
        t.push(Truth { audio_id: format!("{i}"), labels: Some(vec![l.into()]), ..Default::default() });
    }
    let rep = eval_classify(&p, &t, &labels, &ExactMatchProvider::default()).map_err(err)?;
    check(rep.accuracy == Some(1.0), format!("exact-match accuracy {:?}", rep.accuracy))?;
    Ok(format!("AP, micro-F1, Pearson, caption F1 exact; random accuracy {acc:.3}; exact-match accuracy 1.0"))
}

fn sampler_distribution() -> Outcome {
    let logits = [0.3, -1.2, 1.7, 0.0];
    let z: f64 = logits.iter().map(|l: &f64| l.exp()).sum();
    let mut sampler = Sampler::new(GenerationConfig {
        temperature: 1.0,
        top_k: logits.len(),
        top_p: 1.0,
        repetition_penalty: 1.0,
        max_new_tokens: 1,
        seed: 2024,
    })
    .map_err(err)?;
    let n = 100_000;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        counts[sampler.next_token(&logits, &[]) as usize] += 1;
    }
    let tv = 0.5 * counts.iter().zip(&logits).map(|(&c, l)| (c as f64 / n as f64 - l.exp() / z).abs()).sum::<f64>();
    check(tv < 0.01, format!("total variation {tv:.4}"))?;

    let m = AudioLm::new_random(AudioLmConfig::toy(), 9).map_err(err)?;
    let corpus = SynthCorpus::generate(1, 9).map_err(err)?;
    let grid = corpus.patches.values().next().ok_or("no clip")?;
    let prompt = ByteTokenizer.encode_prompt("What can be heard?");
    let cfg = GenerationConfig { max_new_tokens: 12, repetition_penalty: 1.0, ..GenerationConfig::greedy() };
    let out = generate(&m, grid, &prompt, &cfg).map_err(err)?;
    let mut ids = prompt.clone();
    let mut greedy = Vec::new();
    for _ in 0..12 {
        let l = m.logits(grid, &ids).map_err(err)?;
        let row = l.row(l.nrows() - 1);
        let best = (0..row.len()).fold(0, |b, i| if row[i] > row[b] { i } else { b }) as u32;
        if best == EOS {
            break;
        }
        greedy.push(best);
        ids.push(best);
    }
    check(out == greedy, format!("{out:?} vs greedy {greedy:?}"))?;
    Ok(format!("TV {tv:.4} over 1e5 draws; temperature 0 equals greedy over {} tokens", out.len()))
}

fn unanswerable() -> Outcome {
    check(detect_unanswerable("It cannot be determined from the audio that the bell is a church bell."), "first phrasing")?;
    check(
        detect_unanswerable("The audio clip does not provide enough information to determine the type of the bell."),
        "second phrasing",
    )?;
    check(!detect_unanswerable("The bell is rung three times."), "factual answer flagged")?;
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut planted = 0usize;
    let mut lines = Vec::new();
    for i in 0..500 {
        let a = if rng.gen_bool(0.07) {
            planted += 1;
            "The audio does not provide enough information to say.".to_string()
        } else {
            format!("Sound number {i} is a dog barking.")
        };
        lines.push(serde_json::json!({"q": format!("Question {i}?"), "a": a}).to_string());
    }
    let pairs = parse_aig_response("mix", &lines.join("\n")).map_err(err)?.pairs;
    let frac = compute_dataset_stats(&pairs).map_err(err)?.unanswerable_fraction;
    let want = planted as f64 / 500.0;
    check(frac == want, format!("measured {frac} vs planted {want}"))?;
    Ok(format!("both phrasings detected; fraction {frac} equals planted"))
}

fn run(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
    });
    match outcome {
        Ok(detail) => {
            println!("PASS {name}: {detail}");
            true
        }
        Err(why) => {
            println!("FAIL {name}: {why}");
            false
        }
    }
}

fn main() -> ExitCode {
    let desk = catch_unwind(desk_run).unwrap_or_else(|_| Err("curriculum run panicked".into()));
    let results = [
        run("shape chain", shape_chain),
        run("LoRA parameter count", lora_count),
        run("gradient correctness", gradient_check),
        run("frozen-base invariance", || frozen_base(&desk)),
        run("curriculum fidelity", curriculum_fidelity),
        run("desk-scale training", || desk_training(&desk)),
        run("alignment loss", alignment_loss),
        run("sampler oracle", sampler_oracle),
        run("prompt fidelity", prompt_fidelity),
        run("stats fidelity", stats_fidelity),
        run("evaluation metrics", metrics),
        run("sampler distribution", sampler_distribution),
        run("unanswerable detection", unanswerable),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
