use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::label::EmotionLabel;
use super::ClassifierError;

/// Labeled texts, read from a `label,text` CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledCorpus {
    pub items: Vec<(String, EmotionLabel)>,
}

/// Disjoint train/test index sets covering a corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

#[derive(Deserialize)]
struct Row {
    label: String,
    text: String,
}

impl LabeledCorpus {
    pub fn new(items: Vec<(String, EmotionLabel)>) -> Self {
        LabeledCorpus { items }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifierError> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, ClassifierError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["label", "text"] {
            return Err(ClassifierError::BadHeader(headers.iter().collect::<Vec<_>>().join(",")));
        }
        let mut items = Vec::new();
        for (n, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row?;
            let label = row
                .label
                .trim()
                .parse::<EmotionLabel>()
                .map_err(|e| ClassifierError::BadLabel { line: n + 2, label: e.0 })?;
            items.push((row.text, label));
        }
        Ok(LabeledCorpus { items })
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), ClassifierError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["label", "text"])?;
        for (text, label) in &self.items {
            w.write_record([label.name(), text.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn class_counts(&self) -> [usize; 7] {
        let mut counts = [0; 7];
        for (_, l) in &self.items {
            counts[l.code()] += 1;
        }
        counts
    }

    /// Per-class seeded shuffle, sending `round(n * test_fraction)` items of
    /// each class to the test side.
    pub fn stratified_split(&self, test_fraction: f64, seed: u64) -> Split {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for label in EmotionLabel::ALL {
            let mut idx: Vec<usize> =
                self.items.iter().enumerate().filter(|(_, (_, l))| *l == label).map(|(i, _)| i).collect();
            idx.shuffle(&mut rng);
            let n_test = ((idx.len() as f64) * test_fraction).round() as usize;
            test.extend_from_slice(&idx[..n_test]);
            train.extend_from_slice(&idx[n_test..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        Split { train, test, seed }
    }

    pub fn select(&self, indices: &[usize]) -> Vec<(String, EmotionLabel)> {
        indices.iter().map(|&i| self.items[i].clone()).collect()
    }
}
