use moodshift::classifier::{
    cross_entropy, sequence_logits, sequence_loss_grad, softmax, train, CellKind, ClassifierModel, EmotionLabel, LabeledCorpus,
    LstmParams, TrainConfig,
};
use moodshift::synth::{synthetic_corpus, synthetic_embedding};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss(p: &LstmParams, inputs: &[&[f64]], label: usize) -> f64 {
    cross_entropy(&softmax(&sequence_logits(p, inputs)), label)
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..20 {
        let cell = if case % 4 == 3 { CellKind::Rnn } else { CellKind::Lstm };
        let (input_dim, hidden) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let mut p = LstmParams::init(cell, input_dim, hidden, &mut rng);
        for v in &mut p.data {
            *v *= 2.0;
        }
        let seq: Vec<Vec<f64>> =
            (0..rng.random_range(1..=3)).map(|_| (0..input_dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let inputs: Vec<&[f64]> = seq.iter().map(Vec::as_slice).collect();
        let label = rng.random_range(0..7);

        let mut grad = vec![0.0; p.data.len()];
        sequence_loss_grad(&p, &inputs, label, 1.0, &mut grad);
        let h = 1e-5;
        for (name, range) in p.tensors() {
            let (mut diff, mut scale) = (0.0f64, 0.0f64);
            for i in range {
                let keep = p.data[i];
                p.data[i] = keep + h;
                let up = loss(&p, &inputs, label);
                p.data[i] = keep - h;
                let down = loss(&p, &inputs, label);
                p.data[i] = keep;
                let numeric = (up - down) / (2.0 * h);
                diff += (grad[i] - numeric).powi(2);
                scale += grad[i].powi(2) + numeric.powi(2);
            }
            let rel = diff.sqrt() / scale.sqrt().max(1e-10);
            assert!(rel < 1e-4, "case {case} {cell:?} {name}: relative error {rel:e}");
        }
    }
}

#[test]
fn synthetic_corpus_trains_deterministically() {
    let corpus = synthetic_corpus(100, 7);
    let store = synthetic_embedding(50, 7);
    let cfg = TrainConfig::default();
    let a = train(&corpus, &store, &cfg).unwrap();
    assert!(a.train_meta.train_accuracy >= 0.9, "{:?}", a.train_meta);
    assert_eq!(a.train_meta.loss_history.len(), 30);
    let b = train(&corpus, &store, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.classify("I'm not feeling well today").label, EmotionLabel::Sadness);
    let (tr, te) = a.evaluate_split(&corpus).unwrap();
    assert_eq!((tr, te), (a.train_meta.train_accuracy, a.train_meta.test_accuracy));
}

#[test]
fn zero_epochs_is_near_chance() {
    let corpus = synthetic_corpus(100, 7);
    let store = synthetic_embedding(50, 7);
    let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
    let m = train(&corpus, &store, &cfg).unwrap();
    assert!((m.train_meta.train_accuracy - 1.0 / 7.0).abs() <= 0.05 + 1e-9, "{}", m.train_meta.train_accuracy);
}

#[test]
fn tiny_corpus_is_memorized() {
    let words = [
        ("joy", EmotionLabel::Happy),
        ("grief", EmotionLabel::Sadness),
        ("rage", EmotionLabel::Anger),
        ("dread", EmotionLabel::Fear),
        ("blush", EmotionLabel::Shame),
        ("gross", EmotionLabel::Disgust),
        ("whoa", EmotionLabel::Surprise),
    ];
    let mut items = Vec::new();
    for (w, l) in words {
        items.push((format!("pure {w}"), l));
        items.push((format!("{w} again"), l));
    }
    let corpus = LabeledCorpus::new(items.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut vectors = String::new();
    for w in ["pure", "again"].into_iter().chain(words.iter().map(|(w, _)| *w)) {
        let v: Vec<String> = (0..8).map(|_| format!("{:.4}", rng.random_range(-1.0..1.0))).collect();
        vectors.push_str(&format!("{w} {}\n", v.join(" ")));
    }
    let store = moodshift::embedding::EmbeddingStore::from_reader(vectors.as_bytes()).unwrap();
    let cfg = TrainConfig { epochs: 200, hidden_dim: 8, batch_size: 4, lr: 1e-2, test_fraction: 0.0, ..TrainConfig::default() };
    let m = train(&corpus, &store, &cfg).unwrap();
    assert_eq!(m.evaluate(&items).unwrap(), 1.0);
}

#[test]
fn empty_text_is_flagged_low_confidence() {
    let store = synthetic_embedding(8, 1);
    let m = ClassifierModel::from_embedding(LstmParams::zeros(CellKind::Lstm, 8, 4), store, 16);
    let c = m.classify("");
    assert_eq!(c.label.code(), 0);
    assert!(c.low_confidence);
    assert!(c.probabilities.iter().all(|&p| (p - 1.0 / 7.0).abs() < 1e-12));
}

#[test]
fn saved_model_classifies_identically() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synthetic_corpus(10, 3);
    let store = synthetic_embedding(12, 3);
    let m = train(&corpus, &store, &TrainConfig { epochs: 2, hidden_dim: 6, ..TrainConfig::default() }).unwrap();
    let path = dir.path().join("m.json");
    m.save(&path).unwrap();
    let back = ClassifierModel::load(&path).unwrap();
    for text in ["so happy today", "I'm not feeling well today", "", "zzz qqq"] {
        assert_eq!(m.classify(text), back.classify(text));
    }
}
