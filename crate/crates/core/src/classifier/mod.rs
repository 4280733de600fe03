//! Recurrent emotion classifier over frozen pre-trained word vectors.
//!
//! Text is normalized and encoded ([`crate::text`]), embedded with a fixed
//! table, run through a single recurrent layer, and read out from the final
//! hidden state into a softmax over the seven [`EmotionLabel`]s. Training
//! minimizes mean cross-entropy with Adam over shuffled mini-batches.

mod cell;
mod corpus;
mod label;

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cell::{cross_entropy, lstm_step, sequence_logits, sequence_loss_grad, softmax, CellKind, LstmParams, ShapeMismatch};
pub use corpus::{LabeledCorpus, Split};
pub use label::{argmax, EmotionLabel, ParseLabelError, NUM_EMOTIONS};

use crate::embedding::EmbeddingStore;
use crate::optim::{Adam, AdamState};
use crate::text::{self, EncodedText, Vocabulary, DEFAULT_MAX_LEN, PAD, UNK};

pub const MODEL_FORMAT: &str = "emomodel/1";

/// Classifications whose top probability falls below this are flagged.
pub const LOW_CONFIDENCE: f64 = 0.25;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("EmptyCorpus: the training corpus has no items")]
    EmptyCorpus,
    #[error("EmptySplit: cannot evaluate on an empty split")]
    EmptySplit,
    #[error("BadLabel: line {line}: unknown label {label:?}")]
    BadLabel { line: usize, label: String },
    #[error("BadHeader: expected `label,text`, found `{0}`")]
    BadHeader(String),
    #[error("VersionMismatch: expected {MODEL_FORMAT}, found {0:?}")]
    VersionMismatch(String),
    #[error("CorruptModel: {0}")]
    CorruptModel(String),
    #[error(transparent)]
    Shape(#[from] ShapeMismatch),
    #[error("CsvError: {0}")]
    Csv(#[from] csv::Error),
    #[error("JsonError: {0}")]
    Json(#[from] serde_json::Error),
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
}

impl ClassifierError {
    pub fn kind(&self) -> &'static str {
        match self {
            ClassifierError::EmptyCorpus => "EmptyCorpus",
            ClassifierError::EmptySplit => "EmptySplit",
            ClassifierError::BadLabel { .. } => "BadLabel",
            ClassifierError::BadHeader(_) => "BadHeader",
            ClassifierError::VersionMismatch(_) => "VersionMismatch",
            ClassifierError::CorruptModel(_) => "CorruptModel",
            ClassifierError::Shape(_) => "ShapeMismatch",
            ClassifierError::Csv(_) => "CsvError",
            ClassifierError::Json(_) => "JsonError",
            ClassifierError::Io(_) => "IoError",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub hidden_dim: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub lr: f64,
    pub max_len: usize,
    pub cell: CellKind,
    pub test_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            hidden_dim: 64,
            batch_size: 32,
            seed: 0,
            lr: 1e-3,
            max_len: DEFAULT_MAX_LEN,
            cell: CellKind::Lstm,
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainMeta {
    pub epochs: usize,
    pub seed: u64,
    pub test_fraction: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub train_size: usize,
    pub test_size: usize,
    /// Mean training loss after each epoch.
    #[serde(default)]
    pub loss_history: Vec<f64>,
}

/// A trained classifier: recurrent parameters, vocabulary, and the frozen
/// embedding rows aligned with vocabulary indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub params: LstmParams,
    pub vocab: Vocabulary,
    pub embedding: EmbeddingStore,
    pub max_len: usize,
    pub train_meta: TrainMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub label: EmotionLabel,
    pub probabilities: [f64; NUM_EMOTIONS],
    pub low_confidence: bool,
}

impl ClassifierModel {
    /// Builds a model whose vocabulary is exactly the rows of `embedding`.
    pub fn from_embedding(params: LstmParams, embedding: EmbeddingStore, max_len: usize) -> Self {
        let vocab = Vocabulary::from_words(embedding.words()[2..].iter().cloned());
        ClassifierModel { params, vocab, embedding, max_len, train_meta: TrainMeta::default() }
    }

    pub fn encode(&self, text: &str) -> EncodedText {
        text::encode(&text::normalize(text), &self.vocab, self.max_len)
    }

    fn inputs(&self, ids: &[u32]) -> Vec<Vec<f64>> {
        ids.iter().map(|&id| self.embedding.row(id as usize).iter().map(|&v| f64::from(v)).collect()).collect()
    }

    /// Class probabilities for an encoded text. Padding positions are skipped.
    pub fn forward(&self, enc: &EncodedText) -> [f64; NUM_EMOTIONS] {
        let rows = self.inputs(enc.tokens());
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let probs = softmax(&sequence_logits(&self.params, &refs));
        let mut out = [0.0; NUM_EMOTIONS];
        out.copy_from_slice(&probs);
        out
    }

    pub fn classify(&self, text: &str) -> Classification {
        let probabilities = self.forward(&self.encode(text));
        let label = EmotionLabel::from_code(argmax(&probabilities)).expect("7 classes");
        let top = probabilities[label.code()];
        Classification { label, probabilities, low_confidence: top < LOW_CONFIDENCE }
    }

    /// Fraction of argmax-correct predictions.
    pub fn evaluate(&self, items: &[(String, EmotionLabel)]) -> Result<f64, ClassifierError> {
        if items.is_empty() {
            return Err(ClassifierError::EmptySplit);
        }
        let correct = items.iter().filter(|(t, l)| self.classify(t).label == *l).count();
        Ok(correct as f64 / items.len() as f64)
    }

    /// Train and test accuracy on `corpus` under the split recorded at training time.
    pub fn evaluate_split(&self, corpus: &LabeledCorpus) -> Result<(f64, f64), ClassifierError> {
        let split = corpus.stratified_split(self.train_meta.test_fraction, self.train_meta.seed);
        Ok((self.evaluate(&corpus.select(&split.train))?, self.evaluate(&corpus.select(&split.test))?))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
        let file = ModelFile::from_model(self);
        let bytes = serde_json::to_vec(&file)?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifierError> {
        let bytes = std::fs::read(path)?;
        Self::from_json(&bytes)
    }

    pub fn to_json(&self) -> Result<Vec<u8>, ClassifierError> {
        Ok(serde_json::to_vec(&ModelFile::from_model(self))?)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ClassifierError> {
        let probe: serde_json::Value = serde_json::from_slice(bytes)?;
        let format = probe.get("format").and_then(|v| v.as_str()).unwrap_or_default();
        if format != MODEL_FORMAT {
            return Err(ClassifierError::VersionMismatch(format.to_string()));
        }
        let file: ModelFile = serde_json::from_value(probe)?;
        file.into_model()
    }
}

#[derive(Serialize, Deserialize)]
struct VocabEntry {
    word: String,
    index: u32,
    freq: u64,
}

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    cell: CellKind,
    input_dim: usize,
    hidden_dim: usize,
    max_len: usize,
    labels: Vec<EmotionLabel>,
    vocab: Vec<VocabEntry>,
    embedding_words: Vec<String>,
    embedding: Vec<f32>,
    tensors: Vec<NamedTensor>,
    train_meta: TrainMeta,
}

impl ModelFile {
    fn from_model(m: &ClassifierModel) -> Self {
        let p = &m.params;
        let tensors = p
            .tensors()
            .into_iter()
            .map(|(name, range)| {
                let cols = match name.as_bytes()[0] {
                    b'W' if name == "W_y" => p.hidden_dim,
                    b'W' => p.input_dim,
                    b'U' => p.hidden_dim,
                    _ => 1,
                };
                let rows = range.len() / cols;
                let shape = if cols == 1 { vec![rows] } else { vec![rows, cols] };
                NamedTensor { name, shape, values: p.data[range].to_vec() }
            })
            .collect();
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            cell: p.cell,
            input_dim: p.input_dim,
            hidden_dim: p.hidden_dim,
            max_len: m.max_len,
            labels: EmotionLabel::ALL.to_vec(),
            vocab: m
                .vocab
                .ordered_words()
                .into_iter()
                .map(|(w, i)| VocabEntry { word: w.to_string(), index: i, freq: m.vocab.frequency(w) })
                .collect(),
            embedding_words: m.embedding.words().to_vec(),
            embedding: m.embedding.matrix().to_vec(),
            tensors,
            train_meta: m.train_meta.clone(),
        }
    }

    fn into_model(self) -> Result<ClassifierModel, ClassifierError> {
        let corrupt = |msg: &str| ClassifierError::CorruptModel(msg.to_string());
        if self.labels != EmotionLabel::ALL {
            return Err(corrupt("label order differs from the canonical order"));
        }
        let mut params = LstmParams::zeros(self.cell, self.input_dim, self.hidden_dim);
        let layout = params.tensors();
        if layout.len() != self.tensors.len() {
            return Err(corrupt("tensor count"));
        }
        for ((name, range), t) in layout.into_iter().zip(self.tensors) {
            if name != t.name || range.len() != t.values.len() {
                return Err(ClassifierError::CorruptModel(format!("tensor {name}")));
            }
            params.data[range].copy_from_slice(&t.values);
        }
        if !params.is_finite() {
            return Err(corrupt("non-finite parameter"));
        }
        let rows = self.embedding_words.len();
        if rows < 2 || rows * self.input_dim != self.embedding.len() || self.embedding_words[0] != PAD || self.embedding_words[1] != UNK {
            return Err(corrupt("embedding table"));
        }
        let embedding = EmbeddingStore::from_parts(self.input_dim, self.embedding_words, self.embedding);
        let mut freq = HashMap::new();
        let mut pairs = Vec::with_capacity(self.vocab.len());
        for e in self.vocab {
            if e.index as usize >= rows {
                return Err(corrupt("vocabulary index outside the embedding table"));
            }
            if e.freq > 0 {
                freq.insert(e.word.clone(), e.freq);
            }
            pairs.push((e.word, e.index));
        }
        let vocab = Vocabulary::from_pairs(pairs).with_frequencies(freq);
        Ok(ClassifierModel { params, vocab, embedding, max_len: self.max_len, train_meta: self.train_meta })
    }
}

/// Classifier vocabulary: corpus words that have a vector, most frequent
/// first (ties lexicographic), with their corpus counts.
pub fn corpus_vocabulary(corpus: &LabeledCorpus, store: &EmbeddingStore) -> (Vec<String>, HashMap<String, u64>) {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for (t, _) in &corpus.items {
        for tok in text::normalize(t).into_inner() {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let mut words: Vec<(String, u64)> = counts.into_iter().filter(|(w, _)| store.contains(w) && w != PAD && w != UNK).collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let freq = words.iter().cloned().collect();
    (words.into_iter().map(|(w, _)| w).collect(), freq)
}

/// Mean cross-entropy over `batch` and its gradient with respect to every parameter.
pub fn batch_loss_grad(params: &LstmParams, embedding: &EmbeddingStore, batch: &[(&[u32], usize)]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.data.len()];
    let weight = 1.0 / batch.len().max(1) as f64;
    let mut loss = 0.0;
    for (ids, label) in batch {
        let rows: Vec<Vec<f64>> =
            ids.iter().map(|&id| embedding.row(id as usize).iter().map(|&v| f64::from(v)).collect()).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        loss += sequence_loss_grad(params, &refs, *label, weight, &mut grad);
    }
    (loss * weight, grad)
}

/// Trains a classifier on the train side of a stratified split of `corpus`.
pub fn train(corpus: &LabeledCorpus, store: &EmbeddingStore, cfg: &TrainConfig) -> Result<ClassifierModel, ClassifierError> {
    if corpus.is_empty() {
        return Err(ClassifierError::EmptyCorpus);
    }
    let (words, freq) = corpus_vocabulary(corpus, store);
    let embedding = store.subset(words.iter().map(String::as_str));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = LstmParams::init(cfg.cell, store.dim(), cfg.hidden_dim, &mut rng);
    let mut model = ClassifierModel::from_embedding(params, embedding, cfg.max_len);
    model.vocab = model.vocab.clone().with_frequencies(freq);

    let split = corpus.stratified_split(cfg.test_fraction, cfg.seed);
    let encoded: Vec<(EncodedText, usize)> =
        corpus.items.iter().map(|(t, l)| (model.encode(t), l.code())).collect();

    let adam = Adam { lr: cfg.lr, ..Adam::classifier() };
    let mut state = AdamState::zeros(model.params.data.len());
    let mut order = split.train.clone();
    let batch_size = cfg.batch_size.max(1);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<(&[u32], usize)> = chunk.iter().map(|&i| (encoded[i].0.tokens(), encoded[i].1)).collect();
            let (loss, grad) = batch_loss_grad(&model.params, &model.embedding, &batch);
            adam.step(&mut model.params.data, &grad, &mut state);
            epoch_loss += loss * chunk.len() as f64;
        }
        let mean = epoch_loss / order.len().max(1) as f64;
        log::debug!("epoch {} loss {:.4}", epoch + 1, mean);
        history.push(mean);
    }

    let accuracy = |idx: &[usize]| -> f64 {
        if idx.is_empty() {
            return 0.0;
        }
        let hits = idx.iter().filter(|&&i| argmax(&model.forward(&encoded[i].0)) == encoded[i].1).count();
        hits as f64 / idx.len() as f64
    };
    model.train_meta = TrainMeta {
        epochs: cfg.epochs,
        seed: cfg.seed,
        test_fraction: cfg.test_fraction,
        train_accuracy: accuracy(&split.train),
        test_accuracy: accuracy(&split.test),
        train_size: split.train.len(),
        test_size: split.test.len(),
        loss_history: history,
    };
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_store() -> EmbeddingStore {
        EmbeddingStore::from_reader("good 1 0 0\nbad 0 1 0\nfine 0.5 0.5 0\nscary 0 0 1\n".as_bytes()).unwrap()
    }

    #[test]
    fn zero_model_is_uniform() {
        let store = tiny_store();
        let m = ClassifierModel::from_embedding(LstmParams::zeros(CellKind::Lstm, 3, 4), store, 8);
        for text in ["good", "", "bad scary fine"] {
            let c = m.classify(text);
            for p in c.probabilities {
                assert!((p - 1.0 / 7.0).abs() < 1e-12);
            }
            assert_eq!(c.label, EmotionLabel::Happy);
            assert!(c.low_confidence);
        }
    }

    #[test]
    fn unknown_tokens_equal_unk_sequence() {
        let store = tiny_store();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = ClassifierModel::from_embedding(LstmParams::init(CellKind::Lstm, 3, 4, &mut rng), store, 8);
        let unk = EncodedText { ids: vec![1, 0, 0, 0, 0, 0, 0, 0], length: 1 };
        assert_eq!(m.forward(&m.encode("xqzvvwk")), m.forward(&unk));
        let unk2 = EncodedText { ids: vec![1, 1, 0, 0, 0, 0, 0, 0], length: 2 };
        assert_eq!(m.forward(&m.encode("qqqqqqq wwwwwww")), m.forward(&unk2));
    }

    #[test]
    fn empty_corpus_and_split_errors() {
        let store = tiny_store();
        assert!(matches!(train(&LabeledCorpus::default(), &store, &TrainConfig::default()), Err(ClassifierError::EmptyCorpus)));
        let m = ClassifierModel::from_embedding(LstmParams::zeros(CellKind::Lstm, 3, 2), store, 4);
        assert!(matches!(m.evaluate(&[]), Err(ClassifierError::EmptySplit)));
    }

    #[test]
    fn uniform_model_on_balanced_split_scores_one_seventh() {
        let store = tiny_store();
        let m = ClassifierModel::from_embedding(LstmParams::zeros(CellKind::Lstm, 3, 2), store, 4);
        let items: Vec<_> = EmotionLabel::ALL.iter().map(|&l| ("good".to_string(), l)).collect();
        assert!((m.evaluate(&items).unwrap() - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn model_file_round_trip() {
        let store = tiny_store();
        let items = vec![
            ("good good".to_string(), EmotionLabel::Happy),
            ("bad".to_string(), EmotionLabel::Sadness),
            ("scary".to_string(), EmotionLabel::Fear),
        ];
        let cfg = TrainConfig { epochs: 2, hidden_dim: 3, test_fraction: 0.0, ..Default::default() };
        let m = train(&LabeledCorpus::new(items), &store, &cfg).unwrap();
        let bytes = m.to_json().unwrap();
        let back = ClassifierModel::from_json(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json().unwrap(), bytes);

        let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        v["format"] = "emomodel/2".into();
        let err = ClassifierModel::from_json(&serde_json::to_vec(&v).unwrap()).unwrap_err();
        assert!(matches!(err, ClassifierError::VersionMismatch(_)));
    }
}
