use std::sync::Arc;

use ltu::audio::{patchify, project_tokens, AudioTokenSequence, LogMelSpectrogram, PatchGrid, ProjectionLayer};
use ltu::model::{
    alignment_losses, contrastive_loss, count_lora_params, finite_diff_check, generate, perturb_adapters,
    truncated_distribution, AlignmentBatch, AudioLm, AudioLmConfig, ByteTokenizer, DecoderConfig, GenerationConfig,
    Sampler, TrainableSet, TrainingExample,
};
use ndarray::{array, Array1, Array2, Axis};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(seed: u64) -> PatchGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    patchify(&LogMelSpectrogram {
        frames: Array2::from_shape_fn((1024, 128), |_| rng.gen_range(-20.0..5.0)),
    })
    .unwrap()
}

fn model() -> AudioLm {
    AudioLm::new_random(AudioLmConfig::toy(), 11).unwrap()
}

#[test]
fn lora_count_on_7b_geometry() {
    assert_eq!(count_lora_params(&DecoderConfig::llama_7b_geometry()), 4_194_304);
}

#[test]
fn zero_b_adapters_leave_forward_bit_identical() {
    let m = model();
    let prefix = m.audio_tokens(&grid(1)).unwrap();
    let text = ByteTokenizer.encode_prompt("what is this sound?");
    let (with, _) = m.decoder.forward(&prefix.tokens, &text, true).unwrap();
    let (without, _) = m.decoder.forward(&prefix.tokens, &text, false).unwrap();
    assert!(with.iter().zip(without.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn projection_hand_oracle() {
    let p = ProjectionLayer {
        weight: array![[1.0, 2.0], [0.0, -1.0], [3.0, 0.5]],
        bias: array![0.5, 0.0, -1.0],
    };
    let t = AudioTokenSequence { tokens: array![[1.0, 1.0], [2.0, -2.0]] };
    let out = project_tokens(&t, &p).unwrap();
    assert_eq!(out.tokens, array![[3.5, -1.0, 2.5], [-1.5, 2.0, 4.0]]);
    let zero = ProjectionLayer::zeros(2, 3);
    assert!(project_tokens(&t, &zero).unwrap().tokens.iter().all(|&v| v == 0.0));
}

#[test]
fn reordering_audio_tokens_changes_logits() {
    let m = model();
    let g = grid(2);
    let mut swapped = g.clone();
    let (a, b) = (swapped.patches.index_axis(Axis(0), 0).to_owned(), swapped.patches.index_axis(Axis(0), 40).to_owned());
    swapped.patches.index_axis_mut(Axis(0), 0).assign(&b);
    swapped.patches.index_axis_mut(Axis(0), 40).assign(&a);
    let text = ByteTokenizer.encode_prompt("order?");
    let l1 = m.logits(&g, &text).unwrap();
    let l2 = m.logits(&swapped, &text).unwrap();
    assert!(l1.iter().zip(l2.iter()).any(|(x, y)| (x - y).abs() > 1e-9));
}

#[test]
fn gradients_match_finite_differences() {
    let mut m = model();
    perturb_adapters(&mut m, 0.02, 7);
    let (ids, mask) = ByteTokenizer.encode_pair("what?", "a dog barks", 64);
    let ex = TrainingExample::new(Arc::new(grid(3)), ids, mask).unwrap();
    let r = finite_diff_check(&m, &ex, TrainableSet::AllNonLm, 3, 1e-5, 7).unwrap();
    assert!(r.max_rel_error() < 1e-4, "{:?}", r.worst());
}

#[test]
fn greedy_generation_is_the_argmax_chain() {
    let m = model();
    let g = grid(4);
    let prompt = ByteTokenizer.encode_prompt("describe");
    let cfg = GenerationConfig {
        max_new_tokens: 8,
        repetition_penalty: 1.0,
        ..GenerationConfig::greedy()
    };
    let out = generate(&m, &g, &prompt, &cfg).unwrap();
    let mut ids = prompt.clone();
    let mut manual = Vec::new();
    for _ in 0..8 {
        let l = m.logits(&g, &ids).unwrap();
        let last = l.row(l.nrows() - 1);
        let best = last.iter().enumerate().fold(0, |b, (i, v)| if *v > last[b] { i } else { b }) as u32;
        if best == ltu::model::EOS {
            break;
        }
        manual.push(best);
        ids.push(best);
    }
    assert_eq!(out, manual);
}

#[test]
fn generate_draws_first_token_with_the_sampler() {
    let m = model();
    let g = grid(5);
    let prompt = ByteTokenizer.encode_prompt("hi");
    let l = m.logits(&g, &prompt).unwrap();
    let last = l.row(l.nrows() - 1).to_vec();
    for seed in 0..20 {
        let cfg = GenerationConfig {
            temperature: 1.5,
            top_k: 260,
            top_p: 1.0,
            repetition_penalty: 1.0,
            max_new_tokens: 1,
            seed,
        };
        let want = Sampler::new(cfg.clone()).unwrap().next_token(&last, &[]);
        let got = generate(&m, &g, &prompt, &cfg).unwrap();
        if want == ltu::model::EOS {
            assert!(got.is_empty());
        } else {
            assert_eq!(got, vec![want]);
        }
    }
}

#[test]
fn sampler_matches_softmax_in_distribution() {
    let logits = [1.0, 0.2, -0.5, 2.0];
    let z: f64 = logits.iter().map(|l: &f64| l.exp()).sum();
    let exact: Vec<f64> = logits.iter().map(|l| l.exp() / z).collect();
    let mut s = Sampler::new(GenerationConfig {
        temperature: 1.0,
        top_k: 4,
        top_p: 1.0,
        repetition_penalty: 1.0,
        max_new_tokens: 1,
        seed: 99,
    })
    .unwrap();
    let n = 100_000;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        counts[s.next_token(&logits, &[]) as usize] += 1;
    }
    let tv: f64 = 0.5 * counts.iter().zip(&exact).map(|(&c, p)| (c as f64 / n as f64 - p).abs()).sum::<f64>();
    assert!(tv < 0.01, "total variation {tv}");
}

#[test]
fn contrastive_orthonormal_value() {
    let e = array![[1.0, 0.0], [0.0, 1.0]];
    let l = contrastive_loss(&e, &e, 0.05).unwrap();
    assert!((l - (-20f64).exp().ln_1p()).abs() < 1e-12);
}

fn permute_rows(m: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn(m.dim(), |(i, j)| m[[perm[i], j]])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn distribution_ignores_logit_shift(
        logits in prop::collection::vec(-8.0f64..8.0, 2..40),
        c in -50.0f64..50.0,
        t in 0.1f64..3.0,
        k in 1usize..40,
        p in 0.05f64..1.0,
    ) {
        let shifted: Vec<f64> = logits.iter().map(|l| l + c).collect();
        let a = truncated_distribution(&logits, t, k, p);
        let b = truncated_distribution(&shifted, t, k, p);
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.0, y.0);
            prop_assert!((x.1 - y.1).abs() < 1e-9);
        }
        prop_assert!((a.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(a.len() <= k);
    }

    #[test]
    fn alignment_is_permutation_invariant(seed in any::<u64>(), n in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let audio = Array2::from_shape_fn((n, 6), |_| rng.gen_range(-1.0..1.0));
        let text = Array2::from_shape_fn((n, 6), |_| rng.gen_range(-1.0..1.0));
        let mut perm: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng);
        let a = alignment_losses(&AlignmentBatch::new(audio.clone(), text.clone())).unwrap();
        let b = alignment_losses(&AlignmentBatch::new(permute_rows(&audio, &perm), permute_rows(&text, &perm))).unwrap();
        prop_assert!((a.total - b.total).abs() < 1e-10);
        prop_assert_eq!(a.total, a.contrastive + 10.0 * a.mse);
    }

    #[test]
    fn zero_temperature_ignores_shift_and_picks_argmax(
        logits in prop::collection::vec(-8.0f64..8.0, 2..30),
        seed in any::<u64>(),
    ) {
        let mut s = Sampler::new(GenerationConfig { seed, repetition_penalty: 1.0, ..GenerationConfig::greedy() }).unwrap();
        let best = Array1::from(logits.clone()).iter().enumerate().fold(0, |b, (i, v)| if *v > logits[b] { i } else { b });
        prop_assert_eq!(s.next_token(&logits, &[]) as usize, best);
    }
}
