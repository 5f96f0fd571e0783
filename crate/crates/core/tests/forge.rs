use std::collections::{BTreeMap, BTreeSet, HashMap};

use ltu::forge::{
    ambulance_meta, build_aig_prompt, compute_dataset_stats, forge_closed, gen_closed_qa, parse_aig_response,
    sample_audioset, serialize_meta, AudioMeta, QAPair, QuestionBank, SoundEvent, TaskKind,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn ambulance_prompt_matches_golden_fixture() {
    let golden = include_str!("../fixtures/ambulance_aig_prompt.txt");
    assert_eq!(build_aig_prompt(&ambulance_meta()), golden);
    let meta = include_str!("../fixtures/ambulance_meta.txt");
    assert_eq!(serialize_meta(&ambulance_meta()), meta.trim_end());
}

#[test]
fn ambulance_closed_answers() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let pairs = gen_closed_qa(&ambulance_meta(), &QuestionBank::default(), &mut rng).unwrap();
    let by_task = |t: TaskKind| pairs.iter().filter(|p| p.task == t).collect::<Vec<_>>();
    assert_eq!(
        by_task(TaskKind::Classification)[0].answer,
        "Ambulance (siren); Traffic noise, roadway noise; Accelerating, revving, vroom; Generic impact sounds"
    );
    let temporal = by_task(TaskKind::Temporal);
    assert_eq!(temporal.len(), 3);
    assert!(temporal[0].answer.contains("Generic impact sounds: [6.7s-6.8s]"));
    assert_eq!(temporal[2].answer, "Ambulance (siren) begins and ends first.");
    assert!(pairs.iter().all(|p| p.closed && !p.unanswerable && p.validate().is_ok()));
}

#[test]
fn unanswerable_phrasings_are_flagged() {
    let text = r#"{"q": "What kind of bell is it?", "a": "It cannot be determined from the audio what kind of bell it is."}
{"q": "Who rings it?", "a": "The audio clip does not provide enough information to determine who rings it."}
{"q": "How many rings?", "a": "Three."}"#;
    let r = parse_aig_response("c", text).unwrap();
    assert_eq!(r.pairs.iter().map(|p| p.unanswerable).collect::<Vec<_>>(), vec![true, true, false]);
}

#[test]
fn planted_unanswerable_fraction() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut lines = Vec::new();
    let mut planted = 0;
    for i in 0..400 {
        let a = if rng.gen_bool(0.06) {
            planted += 1;
            format!("Answer {i}: the audio does not provide enough information.")
        } else {
            format!("Answer {i}: a dog barks.")
        };
        lines.push(serde_json::json!({"q": format!("Q{i}?"), "a": a}).to_string());
    }
    let pairs = parse_aig_response("x", &lines.join("\n")).unwrap().pairs;
    let stats = compute_dataset_stats(&pairs).unwrap();
    assert_eq!(stats.unanswerable_fraction, planted as f64 / 400.0);
}

#[test]
fn forge_closed_is_seed_deterministic() {
    let metas: Vec<AudioMeta> = (0..5)
        .map(|i| AudioMeta {
            audio_id: format!("m{i}"),
            events: vec![
                SoundEvent::new("Dog").with_feature("Sharp").at(0.0, 1.5 + i as f64),
                SoundEvent::new("Rain").with_feature("Steady").at(0.5, 4.0),
            ],
            captions: vec![format!("caption {i}")],
            source: String::new(),
        })
        .collect();
    let a = forge_closed(&metas, &QuestionBank::default(), 3).unwrap();
    let b = forge_closed(&metas, &QuestionBank::default(), 3).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 5 * 6);
}

fn random_manifest(rng: &mut ChaCha8Rng) -> Vec<QAPair> {
    let n = rng.gen_range(1..40);
    (0..n)
        .map(|_| {
            let task = [TaskKind::Classification, TaskKind::Caption, TaskKind::Temporal, TaskKind::OpenEnded]
                [rng.gen_range(0..4)];
            QAPair {
                audio_id: "a".into(),
                question: format!("q{}", rng.gen_range(0..10)),
                answer: format!("a{}", rng.gen_range(0..25)),
                task,
                closed: task.is_closed(),
                unanswerable: rng.gen_bool(0.1),
            }
        })
        .collect()
}

#[test]
fn stats_agree_with_set_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..1000 {
        let m = random_manifest(&mut rng);
        let s = compute_dataset_stats(&m).unwrap();
        let n = m.len() as f64;
        let mut q_counts: HashMap<&str, usize> = HashMap::new();
        for p in &m {
            *q_counts.entry(&p.question).or_default() += 1;
        }
        let once = m.iter().filter(|p| q_counts[p.question.as_str()] == 1).count() as f64;
        let distinct: BTreeSet<&str> = m.iter().map(|p| p.answer.as_str()).collect();
        assert_eq!(s.unique_question_fraction, once / n);
        assert_eq!(s.distinct_answer_fraction, distinct.len() as f64 / n);
        let closed = m.iter().filter(|p| p.closed).count() as f64;
        assert!((s.closed.percent - 100.0 * closed / n).abs() < 1e-9);
        assert!((s.closed.percent + s.open.percent - 100.0).abs() < 1e-9);
        assert_eq!(s.total_pairs as usize, m.len());
    }
}

#[test]
fn sampler_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..100 {
        let classes: Vec<String> = (0..rng.gen_range(1..6)).map(|c| format!("c{c}")).collect();
        let n_audio = rng.gen_range(1..12);
        let mut labels_of = BTreeMap::new();
        for a in 0..n_audio {
            let k = rng.gen_range(1..=classes.len());
            let ls: Vec<String> = (0..k).map(|_| classes[rng.gen_range(0..classes.len())].clone()).collect();
            labels_of.insert(format!("a{a:02}"), ls);
        }
        let counts: BTreeMap<String, u64> = classes.iter().map(|c| (c.clone(), rng.gen_range(1..50))).collect();
        let want_n = rng.gen_range(0..=n_audio);

        // oracle: weight every audio, then pick the heaviest by repeated scans
        let mut weight: Vec<(String, f64)> = labels_of
            .iter()
            .map(|(a, ls)| {
                let set: BTreeSet<&String> = ls.iter().collect();
                (a.clone(), set.iter().map(|l| 1.0 / counts[*l] as f64).sum())
            })
            .collect();
        let mut oracle = Vec::new();
        for _ in 0..want_n {
            let mut best = 0;
            for i in 1..weight.len() {
                if weight[i].1 > weight[best].1 {
                    best = i;
                }
            }
            oracle.push(weight.remove(best).0);
        }
        assert_eq!(sample_audioset(&counts, &labels_of, want_n).unwrap(), oracle);
    }
}

proptest! {
    #[test]
    fn closed_answers_list_every_label(
        spans in prop::collection::vec((0u32..80, 1u32..40, 0usize..5), 1..6),
        seed in any::<u64>(),
    ) {
        let names = ["Dog", "Rain", "Siren", "Bell", "Drum"];
        let events: Vec<SoundEvent> = spans
            .iter()
            .map(|&(on, len, k)| SoundEvent::new(names[k]).with_feature("Loud").at(on as f64 / 10.0, (on + len) as f64 / 10.0))
            .collect();
        let m = AudioMeta { audio_id: "p".into(), events, captions: vec![], source: String::new() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs = gen_closed_qa(&m, &QuestionBank::default(), &mut rng).unwrap();
        let clf = pairs.iter().find(|p| p.task == TaskKind::Classification).unwrap();
        let distinct: BTreeSet<&str> = m.events.iter().map(|e| e.label.as_str()).collect();
        prop_assert_eq!(clf.answer.split("; ").count(), distinct.len());
        prop_assert!(pairs.iter().all(|p| p.closed && p.validate().is_ok()));
        let temporal = pairs.iter().filter(|p| p.task == TaskKind::Temporal).count();
        prop_assert_eq!(temporal, if distinct.len() >= 2 { 3 } else { 2 });
    }
}
