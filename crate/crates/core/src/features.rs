//! TF-IDF featurization over a fitted unigram vocabulary.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, BufRead, BufReader, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Corpus, Label};

pub const VOCAB_SCHEMA: &str = "satd-vocabulary/1";

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("cannot fit a vocabulary on an empty corpus")]
    EmptyCorpus,
    #[error("min_df must be at least 1")]
    BadMinDf,
    #[error("vocabulary file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Splits normalized text on whitespace. Inside each token only
/// alphanumeric characters survive (`todo:` -> `todo`, `non-javadoc` ->
/// `nonjavadoc`); tokens shorter than two characters and purely numeric
/// tokens are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let t: String = raw.chars().filter(|c| c.is_alphanumeric()).collect();
            if t.chars().count() < 2 || t.chars().all(|c| c.is_numeric()) {
                None
            } else {
                Some(t)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    terms: Vec<String>,
    doc_freq: Vec<u32>,
    n_docs: usize,
    term_index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    terms: Vec<String>,
    doc_freq: Vec<u32>,
    n_docs: usize,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::from_parts(r.terms, r.doc_freq, r.n_docs)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            terms: v.terms,
            doc_freq: v.doc_freq,
            n_docs: v.n_docs,
        }
    }
}

impl Vocabulary {
    fn from_parts(terms: Vec<String>, doc_freq: Vec<u32>, n_docs: usize) -> Self {
        let term_index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            terms,
            doc_freq,
            n_docs,
            term_index,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.term_index.get(term).copied()
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn doc_freq(&self, index: usize) -> u32 {
        self.doc_freq[index]
    }

    /// Smoothed inverse document frequency.
    pub fn idf(&self, index: usize) -> f64 {
        ((1.0 + self.n_docs as f64) / (1.0 + self.doc_freq[index] as f64)).ln() + 1.0
    }

    /// Content hash used to tie models and explanations to a vocabulary.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.n_docs.to_le_bytes());
        for (t, df) in self.terms.iter().zip(&self.doc_freq) {
            h.update(t.as_bytes());
            h.update([0u8]);
            h.update(df.to_le_bytes());
        }
        hex::encode(&h.finalize()[..16])
    }

    /// `term<TAB>index<TAB>doc_freq` rows after a schema header.
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# {VOCAB_SCHEMA} n_docs={}", self.n_docs)?;
        for (i, (t, df)) in self.terms.iter().zip(&self.doc_freq).enumerate() {
            writeln!(out, "{t}\t{i}\t{df}")?;
        }
        out.flush()
    }

    pub fn read_text<R: io::Read>(reader: R) -> Result<Self, FeatureError> {
        let mut lines = BufReader::new(reader).lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| FeatureError::Format("empty file".into()))?;
        let rest = header
            .strip_prefix("# ")
            .and_then(|h| h.strip_prefix(VOCAB_SCHEMA))
            .ok_or_else(|| FeatureError::Format(format!("expected `{VOCAB_SCHEMA}` header")))?;
        let n_docs = rest
            .trim()
            .strip_prefix("n_docs=")
            .and_then(|v| v.parse::<usize>().ok())
            .ok_or_else(|| FeatureError::Format("missing n_docs".into()))?;
        let mut terms = Vec::new();
        let mut doc_freq = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line?;
            let parts: Vec<&str> = line.split('\t').collect();
            let bad = || FeatureError::Format(format!("row {}: malformed `{line}`", row + 1));
            if parts.len() != 3 {
                return Err(bad());
            }
            let idx: usize = parts[1].parse().map_err(|_| bad())?;
            if idx != terms.len() {
                return Err(FeatureError::Format(format!(
                    "row {}: index {idx} out of sequence",
                    row + 1
                )));
            }
            terms.push(parts[0].to_string());
            doc_freq.push(parts[2].parse().map_err(|_| bad())?);
        }
        Ok(Vocabulary::from_parts(terms, doc_freq, n_docs))
    }
}

/// Terms present in at least `min_df` documents, indexed lexicographically.
pub fn fit_vocabulary<D: AsRef<[S]>, S: AsRef<str>>(docs: &[D], min_df: usize) -> Result<Vocabulary, FeatureError> {
    if min_df == 0 {
        return Err(FeatureError::BadMinDf);
    }
    if docs.is_empty() {
        return Err(FeatureError::EmptyCorpus);
    }
    let mut df: BTreeMap<&str, u32> = BTreeMap::new();
    let mut seen: Vec<&str> = Vec::new();
    for doc in docs {
        seen.clear();
        seen.extend(doc.as_ref().iter().map(|t| t.as_ref()));
        seen.sort_unstable();
        seen.dedup();
        for t in &seen {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let (terms, doc_freq): (Vec<String>, Vec<u32>) = df
        .into_iter()
        .filter(|&(_, c)| c as usize >= min_df)
        .map(|(t, c)| (t.to_string(), c))
        .unzip();
    Ok(Vocabulary::from_parts(terms, doc_freq, docs.len()))
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    indices: Vec<u32>,
    values: Vec<f64>,
    dim: usize,
}

impl FeatureVector {
    pub fn zeros(dim: usize) -> Self {
        FeatureVector {
            indices: Vec::new(),
            values: Vec::new(),
            dim,
        }
    }

    /// Builds from (index, value) pairs; pairs are sorted and duplicate
    /// indices summed. Exact zeros are dropped.
    pub fn from_pairs(dim: usize, mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut indices: Vec<u32> = Vec::with_capacity(pairs.len());
        let mut values: Vec<f64> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            assert!((i as usize) < dim, "index {i} out of range for dim {dim}");
            if indices.last() == Some(&i) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(i);
                values.push(v);
            }
        }
        let mut fv = FeatureVector { indices, values, dim };
        fv.drop_zeros();
        fv
    }

    pub fn from_dense(values: &[f64]) -> Self {
        let pairs = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (i as u32, v))
            .collect();
        FeatureVector::from_pairs(values.len(), pairs)
    }

    fn drop_zeros(&mut self) {
        if self.values.iter().all(|&v| v != 0.0) {
            return;
        }
        let mut k = 0;
        for j in 0..self.values.len() {
            if self.values[j] != 0.0 {
                self.indices[k] = self.indices[j];
                self.values[k] = self.values[j];
                k += 1;
            }
        }
        self.indices.truncate(k);
        self.values.truncate(k);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.indices.binary_search(&(index as u32)) {
            Ok(p) => self.values[p],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            d[i] = v;
        }
        d
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.squared_norm().sqrt()
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        let (mut a, mut b, mut s) = (0, 0, 0.0);
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    s += self.values[a] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        s
    }

    /// `self + t * (other - self)` over the union of both supports.
    pub fn lerp(&self, other: &FeatureVector, t: f64) -> FeatureVector {
        debug_assert_eq!(self.dim, other.dim);
        let mut indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        let (mut a, mut b) = (0, 0);
        loop {
            let ia = self.indices.get(a).copied();
            let ib = other.indices.get(b).copied();
            let (idx, x, y) = match (ia, ib) {
                (None, None) => break,
                (Some(i), None) => {
                    a += 1;
                    (i, self.values[a - 1], 0.0)
                }
                (None, Some(j)) => {
                    b += 1;
                    (j, 0.0, other.values[b - 1])
                }
                (Some(i), Some(j)) if i < j => {
                    a += 1;
                    (i, self.values[a - 1], 0.0)
                }
                (Some(i), Some(j)) if j < i => {
                    b += 1;
                    (j, 0.0, other.values[b - 1])
                }
                (Some(i), Some(_)) => {
                    a += 1;
                    b += 1;
                    (i, self.values[a - 1], other.values[b - 1])
                }
            };
            indices.push(idx);
            values.push(x + t * (y - x));
        }
        let mut fv = FeatureVector {
            indices,
            values,
            dim: self.dim,
        };
        fv.drop_zeros();
        fv
    }
}

/// TF-IDF vector with L2 normalization. Out-of-vocabulary tokens are ignored.
pub fn vectorize<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> FeatureVector {
    let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
    for t in tokens {
        if let Some(i) = vocab.index_of(t.as_ref()) {
            *tf.entry(i).or_insert(0.0) += 1.0;
        }
    }
    let mut indices = Vec::with_capacity(tf.len());
    let mut values = Vec::with_capacity(tf.len());
    for (i, c) in tf {
        indices.push(i as u32);
        values.push(c * vocab.idf(i));
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut values {
            *v /= norm;
        }
    }
    FeatureVector {
        indices,
        values,
        dim: vocab.len(),
    }
}

/// Rows with binary labels. "Minority" is whichever class has fewer rows
/// (SATD on ties).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    vectors: Vec<FeatureVector>,
    labels: Vec<Label>,
    dim: usize,
    satd_count: usize,
}

impl LabeledMatrix {
    pub fn new(dim: usize, vectors: Vec<FeatureVector>, labels: Vec<Label>) -> Self {
        assert_eq!(vectors.len(), labels.len(), "vectors and labels differ in length");
        for v in &vectors {
            assert_eq!(v.dim(), dim, "vector dimension mismatch");
        }
        let satd_count = labels.iter().filter(|l| l.is_satd()).count();
        LabeledMatrix {
            vectors,
            labels,
            dim,
            satd_count,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[FeatureVector] {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> &FeatureVector {
        &self.vectors[i]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn count(&self, label: Label) -> usize {
        match label {
            Label::Satd => self.satd_count,
            Label::NonSatd => self.len() - self.satd_count,
        }
    }

    pub fn minority_label(&self) -> Label {
        if self.count(Label::Satd) <= self.count(Label::NonSatd) {
            Label::Satd
        } else {
            Label::NonSatd
        }
    }

    pub fn minority_count(&self) -> usize {
        self.count(self.minority_label())
    }

    pub fn majority_count(&self) -> usize {
        self.count(self.minority_label().other())
    }

    pub fn rows_with(&self, label: Label) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == label).collect()
    }

    /// Appends rows; used by the samplers to add synthetics.
    pub fn extended(&self, extra: Vec<FeatureVector>, label: Label) -> LabeledMatrix {
        let mut vectors = self.vectors.clone();
        let mut labels = self.labels.clone();
        labels.extend(std::iter::repeat_n(label, extra.len()));
        vectors.extend(extra);
        LabeledMatrix::new(self.dim, vectors, labels)
    }

    pub fn select(&self, rows: &[usize]) -> LabeledMatrix {
        LabeledMatrix::new(
            self.dim,
            rows.iter().map(|&i| self.vectors[i].clone()).collect(),
            rows.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// Per-feature mean over all rows.
    pub fn feature_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        if self.is_empty() {
            return m;
        }
        for v in &self.vectors {
            for (i, x) in v.iter() {
                m[i] += x;
            }
        }
        let n = self.len() as f64;
        for x in &mut m {
            *x /= n;
        }
        m
    }
}

/// Tokenized documents of a corpus, in record order.
pub fn corpus_tokens(corpus: &Corpus) -> Vec<Vec<String>> {
    corpus.records().iter().map(|r| tokenize(&r.text)).collect()
}

pub fn build_dataset(corpus: &Corpus, vocab: &Vocabulary) -> Result<LabeledMatrix, FeatureError> {
    if corpus.is_empty() {
        return Err(FeatureError::EmptyCorpus);
    }
    let vectors = corpus
        .records()
        .iter()
        .map(|r| vectorize(&tokenize(&r.text), vocab))
        .collect();
    let labels = corpus.records().iter().map(|r| r.label).collect();
    Ok(LabeledMatrix::new(vocab.len(), vectors, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CommentRecord;
    use proptest::prelude::*;

    fn docs(xs: &[&[&str]]) -> Vec<Vec<String>> {
        xs.iter()
            .map(|d| d.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    #[test]
    fn tokenize_rules() {
        assert_eq!(tokenize("todo fix 123 x"), ["todo", "fix"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("hack hack"), ["hack", "hack"]);
        assert_eq!(tokenize("todo: non-javadoc $non-nls-1$"), ["todo", "nonjavadoc", "nonnls1"]);
    }

    #[test]
    fn fit_min_df() {
        let d = docs(&[&["a", "b"], &["b"]]);
        let v = fit_vocabulary(&d, 1).unwrap();
        assert_eq!(v.index_of("a"), Some(0));
        assert_eq!(v.index_of("b"), Some(1));
        assert_eq!((v.doc_freq(0), v.doc_freq(1)), (1, 2));
        let v2 = fit_vocabulary(&d, 2).unwrap();
        assert_eq!(v2.len(), 1);
        assert_eq!(v2.index_of("b"), Some(0));
    }

    #[test]
    fn fit_counts_documents_not_occurrences() {
        let v = fit_vocabulary(&docs(&[&["a", "a", "a"]]), 1).unwrap();
        assert_eq!(v.doc_freq(0), 1);
    }

    #[test]
    fn fit_empty_is_error() {
        let d: Vec<Vec<String>> = vec![];
        assert!(matches!(fit_vocabulary(&d, 1), Err(FeatureError::EmptyCorpus)));
    }

    #[test]
    fn vectorize_cases() {
        let v = fit_vocabulary(&docs(&[&["a", "b"], &["a", "b"], &["c"]]), 1).unwrap();
        assert_eq!(vectorize(&["zzz"], &v).nnz(), 0);
        let one = vectorize(&["c"], &v);
        assert_eq!(one.iter().collect::<Vec<_>>(), [(2, 1.0)]);
        let two = vectorize(&["a", "b"], &v);
        let h = 1.0 / 2f64.sqrt();
        for (_, x) in two.iter() {
            assert!((x - h).abs() < 1e-15);
        }
    }

    #[test]
    fn idf_is_smoothed() {
        let v = fit_vocabulary(&docs(&[&["a"], &["a", "b"], &["c"]]), 1).unwrap();
        assert!((v.idf(0) - ((4.0f64 / 3.0).ln() + 1.0)).abs() < 1e-15);
        assert!((v.idf(1) - (2.0f64.ln() + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn build_dataset_counts() {
        let recs: Vec<CommentRecord> = (0..10)
            .map(|i| CommentRecord {
                project_id: "p".into(),
                text: if i == 0 { "todo hack".into() } else { format!("value number{i}") },
                label: if i == 0 { Label::Satd } else { Label::NonSatd },
            })
            .collect();
        let c = Corpus::new(recs);
        let v = fit_vocabulary(&corpus_tokens(&c), 1).unwrap();
        let m = build_dataset(&c, &v).unwrap();
        assert_eq!(m.minority_count(), 1);
        assert_eq!(m.majority_count(), 9);
        assert_eq!(m.minority_label(), Label::Satd);
        assert!(matches!(build_dataset(&Corpus::default(), &v), Err(FeatureError::EmptyCorpus)));
    }

    #[test]
    fn vocabulary_text_roundtrip() {
        let v = fit_vocabulary(&docs(&[&["todo", "fix"], &["fix"]]), 1).unwrap();
        let mut buf = Vec::new();
        v.write_text(&mut buf).unwrap();
        let s = String::from_utf8(buf.clone()).unwrap();
        assert!(s.contains("fix\t0\t2\n"));
        let back = Vocabulary::read_text(buf.as_slice()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.fingerprint(), v.fingerprint());
        assert!(Vocabulary::read_text("bogus\n".as_bytes()).is_err());
    }

    #[test]
    fn lerp_union_support() {
        let a = FeatureVector::from_pairs(4, vec![(0, 1.0), (2, 2.0)]);
        let b = FeatureVector::from_pairs(4, vec![(1, 4.0), (2, 4.0)]);
        let c = a.lerp(&b, 0.5);
        assert_eq!(c.to_dense(), vec![0.5, 2.0, 3.0, 0.0]);
        assert_eq!(a.lerp(&b, 0.0), a);
    }

    proptest! {
        #[test]
        fn vectorize_is_unit_or_zero(toks in proptest::collection::vec("[a-e]{2}", 0..12)) {
            let v = fit_vocabulary(&docs(&[&["aa", "bb", "cc"], &["aa", "dd"]]), 1).unwrap();
            let x = vectorize(&toks, &v);
            let n = x.norm();
            prop_assert!(n.abs() < 1e-12 || (n - 1.0).abs() < 1e-12);
            prop_assert!(x.indices().windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(x, vectorize(&toks, &v));
        }
    }
}
