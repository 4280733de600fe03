//! Text normalization, spelling correction and vocabulary encoding.
//!
//! Raw text is lowercased, every character that is not a letter, digit or
//! apostrophe becomes a separator, and purely numeric tokens collapse to the
//! `<num>` sentinel. Tokens are then mapped to vocabulary indices, with
//! out-of-vocabulary words routed through a bounded Damerau-Levenshtein
//! spelling corrector before falling back to `<unk>`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const NUM: &str = "<num>";

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

/// Sequence capacity used when nothing else is configured.
pub const DEFAULT_MAX_LEN: usize = 64;

/// Largest edit distance the spelling corrector will bridge.
pub const MAX_CORRECTION_DISTANCE: usize = 2;

/// A normalized, lowercase token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn new(tokens: Vec<String>) -> Self {
        TokenSequence(tokens)
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Space-joined form; normalizing it again yields the same sequence.
    pub fn join(&self) -> String {
        self.0.join(" ")
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSequence {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenSequence(iter.into_iter().map(Into::into).collect())
    }
}

/// Fixed-capacity index encoding of a token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedText {
    pub ids: Vec<u32>,
    /// Number of real (non-padding) positions at the front of `ids`.
    pub length: usize,
}

impl EncodedText {
    pub fn max_len(&self) -> usize {
        self.ids.len()
    }

    /// The non-padding prefix.
    pub fn tokens(&self) -> &[u32] {
        &self.ids[..self.length]
    }
}

fn is_word_char(c: char) -> bool {
    (c.is_alphabetic() && !c.is_uppercase()) || c.is_numeric() || c == '\''
}

fn is_number(token: &str) -> bool {
    let mut digits = 0usize;
    let mut dots = 0usize;
    for c in token.chars() {
        if c == '.' {
            dots += 1;
        } else if c.is_numeric() {
            digits += 1;
        } else {
            return false;
        }
    }
    digits > 0 && dots <= 1 && !token.starts_with('.') && !token.ends_with('.')
}

fn push_token(raw: &str, out: &mut Vec<String>) {
    if raw.is_empty() {
        return;
    }
    if is_number(raw) {
        out.push(NUM.to_string());
        return;
    }
    // A '.' only survives scanning between two digits; outside a number it separates.
    for piece in raw.split('.') {
        let piece = piece.trim_matches('\'');
        if piece.is_empty() {
            continue;
        }
        if is_number(piece) {
            out.push(NUM.to_string());
        } else {
            out.push(piece.to_string());
        }
    }
}

/// Lowercases, strips punctuation and whitespace, and replaces numbers.
pub fn normalize(text: &str) -> TokenSequence {
    let lowered = text.to_lowercase();
    let chars: Vec<char> = lowered.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    let sentinel: Vec<char> = NUM.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if chars[i..].starts_with(&sentinel) {
            push_token(&current, &mut tokens);
            current.clear();
            tokens.push(NUM.to_string());
            i += sentinel.len();
            continue;
        }
        let c = chars[i];
        let keep_dot = c == '.'
            && i > 0
            && chars[i - 1].is_numeric()
            && chars.get(i + 1).is_some_and(|n| n.is_numeric());
        if is_word_char(c) || keep_dot {
            current.push(c);
        } else {
            push_token(&current, &mut tokens);
            current.clear();
        }
        i += 1;
    }
    push_token(&current, &mut tokens);
    TokenSequence(tokens)
}

/// Word-to-index mapping with optional corpus frequencies.
///
/// Indices 0 and 1 are reserved for `<pad>` and `<unk>`; they are never
/// offered as spelling corrections.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Vocabulary {
    index: HashMap<String, u32>,
    #[serde(default)]
    freq: HashMap<String, u64>,
}

impl Vocabulary {
    /// Builds a vocabulary from explicit `(word, index)` pairs.
    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, u32)>,
        S: Into<String>,
    {
        let mut index: HashMap<String, u32> = pairs.into_iter().map(|(w, i)| (w.into(), i)).collect();
        index.entry(PAD.to_string()).or_insert(PAD_ID);
        index.entry(UNK.to_string()).or_insert(UNK_ID);
        Vocabulary { index, freq: HashMap::new() }
    }

    /// Builds a vocabulary whose words receive indices 2, 3, ... in order.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut index = HashMap::new();
        index.insert(PAD.to_string(), PAD_ID);
        index.insert(UNK.to_string(), UNK_ID);
        let mut next = 2u32;
        for w in words {
            let w = w.into();
            if let std::collections::hash_map::Entry::Vacant(e) = index.entry(w) {
                e.insert(next);
                next += 1;
            }
        }
        Vocabulary { index, freq: HashMap::new() }
    }

    pub fn with_frequencies(mut self, freq: HashMap<String, u64>) -> Self {
        self.freq = freq;
        self
    }

    pub fn get(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn frequency(&self, word: &str) -> u64 {
        self.freq.get(word).copied().unwrap_or(0)
    }

    /// One past the largest index in use.
    pub fn size(&self) -> usize {
        self.index.values().max().map_or(2, |&m| m as usize + 1)
    }

    /// Words that may be returned by spelling correction.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str).filter(|w| !is_sentinel(w))
    }

    /// Words ordered by their index.
    pub fn ordered_words(&self) -> Vec<(&str, u32)> {
        let mut v: Vec<(&str, u32)> = self.index.iter().map(|(w, &i)| (w.as_str(), i)).collect();
        v.sort_by_key(|&(_, i)| i);
        v
    }
}

fn is_sentinel(word: &str) -> bool {
    word == PAD || word == UNK || word == NUM
}

/// Unrestricted Damerau-Levenshtein distance over Unicode scalar values.
pub fn damerau_levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (n, m) = (a.len(), b.len());
    let max = n + m;
    // (n + 2) x (m + 2) table with a sentinel border.
    let w = m + 2;
    let mut d = vec![0usize; (n + 2) * w];
    d[0] = max;
    for i in 0..=n {
        d[(i + 1) * w] = max;
        d[(i + 1) * w + 1] = i;
    }
    for j in 0..=m {
        d[j + 1] = max;
        d[w + j + 1] = j;
    }
    let mut last_row: HashMap<char, usize> = HashMap::new();
    for i in 1..=n {
        let mut last_col = 0;
        for j in 1..=m {
            let i1 = *last_row.get(&b[j - 1]).unwrap_or(&0);
            let j1 = last_col;
            let cost = if a[i - 1] == b[j - 1] {
                last_col = j;
                0
            } else {
                1
            };
            let substitute = d[i * w + j] + cost;
            let insert = d[(i + 1) * w + j] + 1;
            let delete = d[i * w + j + 1] + 1;
            let transpose = d[i1 * w + j1] + (i - i1 - 1) + 1 + (j - j1 - 1);
            d[(i + 1) * w + j + 1] = substitute.min(insert).min(delete).min(transpose);
        }
        last_row.insert(a[i - 1], i);
    }
    d[(n + 1) * w + m + 1]
}

/// Returns `token` if known, else the closest vocabulary word within
/// [`MAX_CORRECTION_DISTANCE`] edits, else `<unk>`.
///
/// Ties go to the more frequent word, then to the lexicographically smaller one.
pub fn correct_spelling(token: &str, vocab: &Vocabulary) -> String {
    if vocab.contains(token) && !is_sentinel(token) {
        return token.to_string();
    }
    let len = token.chars().count();
    let mut best: Option<(usize, u64, &str)> = None;
    for word in vocab.words() {
        let wlen = word.chars().count();
        if wlen.abs_diff(len) > MAX_CORRECTION_DISTANCE {
            continue;
        }
        let dist = damerau_levenshtein(token, word);
        if dist > MAX_CORRECTION_DISTANCE {
            continue;
        }
        let freq = vocab.frequency(word);
        let better = match best {
            None => true,
            Some((bd, bf, bw)) => (dist, std::cmp::Reverse(freq), word) < (bd, std::cmp::Reverse(bf), bw),
        };
        if better {
            best = Some((dist, freq, word));
        }
    }
    best.map_or_else(|| UNK.to_string(), |(_, _, w)| w.to_string())
}

fn lookup(token: &str, vocab: &Vocabulary) -> u32 {
    if let Some(id) = vocab.get(token) {
        return id;
    }
    if is_sentinel(token) {
        return UNK_ID;
    }
    let corrected = correct_spelling(token, vocab);
    vocab.get(&corrected).unwrap_or(UNK_ID)
}

/// Maps tokens to indices, truncating from the tail and right-padding with `<pad>`.
///
/// # Panics
///
/// Panics if `max_len` is zero.
pub fn encode(tokens: &TokenSequence, vocab: &Vocabulary, max_len: usize) -> EncodedText {
    assert!(max_len >= 1, "max_len must be at least 1");
    let mut ids: Vec<u32> = tokens.tokens().iter().take(max_len).map(|t| lookup(t, vocab)).collect();
    let length = ids.len();
    ids.resize(max_len, PAD_ID);
    EncodedText { ids, length }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(
            normalize("I'm NOT feeling well today!!").into_inner(),
            toks(&["i'm", "not", "feeling", "well", "today"])
        );
        assert_eq!(normalize("Room 101 is cold").into_inner(), toks(&["room", NUM, "is", "cold"]));
        assert!(normalize("").is_empty());
    }

    #[test]
    fn numbers_and_apostrophes() {
        assert_eq!(normalize("pi is 3.14, ok").into_inner(), toks(&["pi", "is", NUM, "ok"]));
        assert_eq!(normalize("'quoted' words''").into_inner(), toks(&["quoted", "words"]));
        assert_eq!(normalize("v1.2.3 mp3").into_inner(), toks(&["v1", NUM, NUM, "mp3"]));
        assert_eq!(normalize("end.").into_inner(), toks(&["end"]));
        assert_eq!(normalize("<num> and <NUM>").into_inner(), toks(&[NUM, "and", NUM]));
    }

    #[test]
    fn spelling_examples() {
        let vocab = Vocabulary::from_words(["feeling", "well", "sad"]);
        assert_eq!(correct_spelling("feeling", &vocab), "feeling");
        assert_eq!(correct_spelling("feelng", &vocab), "feeling");
        assert_eq!(correct_spelling("xqzvv", &vocab), UNK);
    }

    #[test]
    fn spelling_tie_breaks() {
        let mut freq = HashMap::new();
        freq.insert("bat".to_string(), 3);
        freq.insert("cat".to_string(), 10);
        let vocab = Vocabulary::from_words(["bat", "cat", "hat"]).with_frequencies(freq);
        // All three are one substitution from "xat"; cat is most frequent.
        assert_eq!(correct_spelling("xat", &vocab), "cat");
        let vocab = Vocabulary::from_words(["hat", "bat"]);
        assert_eq!(correct_spelling("xat", &vocab), "bat");
    }

    #[test]
    fn damerau_transposition_counts_once() {
        assert_eq!(damerau_levenshtein("ab", "ba"), 1);
        assert_eq!(damerau_levenshtein("ca", "abc"), 2);
        assert_eq!(damerau_levenshtein("", "abc"), 3);
        assert_eq!(damerau_levenshtein("kitten", "sitting"), 3);
    }

    #[test]
    fn encode_examples() {
        let vocab = Vocabulary::from_pairs([("not", 5), ("well", 9)]);
        let e = encode(&TokenSequence::default(), &vocab, 4);
        assert_eq!((e.ids, e.length), (vec![0, 0, 0, 0], 0));
        let e = encode(&["not", "well"].into_iter().collect(), &vocab, 4);
        assert_eq!((e.ids, e.length), (vec![5, 9, 0, 0], 2));
        let vocab = Vocabulary::from_pairs([("a", 2), ("b", 3), ("c", 4)]);
        let e = encode(&["a", "b", "c"].into_iter().collect(), &vocab, 2);
        assert_eq!((e.ids, e.length), (vec![2, 3], 2));
    }

    #[test]
    fn encode_routes_sentinels_and_typos() {
        let vocab = Vocabulary::from_words(["feeling"]);
        let e = encode(&[NUM, "feelng", "zzzzzzz"].into_iter().collect(), &vocab, 3);
        assert_eq!(e.ids, vec![UNK_ID, 2, UNK_ID]);
    }
}
