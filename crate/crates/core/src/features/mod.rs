//! Document featurization: sparse TF-IDF over word n-grams, raw n-gram
//! counts, and dense vectors loaded from a precomputed embedding file.

mod porter;
mod tokenize;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::{Error, Result};

pub use porter::stem;
pub use tokenize::{token_spans, tokenize, TokenSpan};

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub dimension: usize,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn zeros(dimension: usize) -> Self {
        Self {
            dimension,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a vector from (index, value) pairs in any order. Entries at
    /// the same index are summed; zeros are dropped.
    pub fn from_pairs(dimension: usize, pairs: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for (i, v) in pairs {
            assert!((i as usize) < dimension, "index {i} out of range {dimension}");
            *acc.entry(i).or_default() += v;
        }
        let (indices, values) = acc.into_iter().filter(|(_, v)| *v != 0.0).unzip();
        Self {
            dimension,
            indices,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "representation", rename_all = "snake_case")]
pub enum FeatureVector {
    Sparse(SparseVector),
    Dense { values: Vec<f64> },
}

impl FeatureVector {
    pub fn dense(values: Vec<f64>) -> Self {
        FeatureVector::Dense { values }
    }

    pub fn dimension(&self) -> usize {
        match self {
            FeatureVector::Sparse(s) => s.dimension,
            FeatureVector::Dense { values } => values.len(),
        }
    }

    /// Non-zero (for sparse) or all (for dense) entries.
    pub fn entries(&self) -> Box<dyn Iterator<Item = (usize, f64)> + '_> {
        match self {
            FeatureVector::Sparse(s) => Box::new(s.indices.iter().map(|&i| i as usize).zip(s.values.iter().copied())),
            FeatureVector::Dense { values } => Box::new(values.iter().copied().enumerate()),
        }
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        match self {
            FeatureVector::Sparse(s) => s
                .indices
                .iter()
                .zip(&s.values)
                .map(|(&i, v)| weights[i as usize] * v)
                .sum(),
            FeatureVector::Dense { values } => values.iter().zip(weights).map(|(v, w)| v * w).sum(),
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.entries().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.entries().all(|(_, v)| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    Tfidf,
    Embedding,
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tfidf" => Ok(FeatureMode::Tfidf),
            "embedding" => Ok(FeatureMode::Embedding),
            other => Err(Error::UnknownName {
                kind: "feature mode",
                name: other.to_string(),
            }),
        }
    }
}

impl std::fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeatureMode::Tfidf => "tfidf",
            FeatureMode::Embedding => "embedding",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct VocabularyConfig {
    pub orders: BTreeSet<usize>,
    pub min_df: u32,
    pub stem: bool,
}

impl Default for VocabularyConfig {
    fn default() -> Self {
        Self {
            orders: BTreeSet::from([1, 2, 3]),
            min_df: 1,
            stem: true,
        }
    }
}

/// N-gram vocabulary with document frequencies. Column indices follow the
/// lexicographic order of the n-gram strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub ngram_to_index: BTreeMap<String, u32>,
    pub document_frequency: Vec<u32>,
    pub n_documents: u32,
    pub ngram_orders: BTreeSet<usize>,
    pub stem: bool,
}

fn ngrams(tokens: &[String], orders: &BTreeSet<usize>) -> Vec<String> {
    let mut out = Vec::new();
    for &n in orders {
        if n == 0 || tokens.len() < n {
            continue;
        }
        out.extend(tokens.windows(n).map(|w| w.join(" ")));
    }
    out
}

impl Vocabulary {
    pub fn fit<'a>(texts: impl IntoIterator<Item = &'a str>, config: &VocabularyConfig) -> Result<Self> {
        if config.orders.is_empty() || config.orders.iter().any(|n| !(1..=3).contains(n)) {
            return Err(Error::InvalidConfig(format!(
                "n-gram orders must be a non-empty subset of {{1,2,3}}, got {:?}",
                config.orders
            )));
        }
        let mut df: BTreeMap<String, u32> = BTreeMap::new();
        let mut n_documents = 0u32;
        for text in texts {
            n_documents += 1;
            let tokens = tokenize(text, config.stem);
            let unique: BTreeSet<String> = ngrams(&tokens, &config.orders).into_iter().collect();
            for g in unique {
                *df.entry(g).or_default() += 1;
            }
        }
        if n_documents == 0 {
            return Err(Error::EmptyCollection);
        }
        let mut ngram_to_index = BTreeMap::new();
        let mut document_frequency = Vec::new();
        for (g, count) in df.into_iter().filter(|(_, c)| *c >= config.min_df.max(1)) {
            ngram_to_index.insert(g, document_frequency.len() as u32);
            document_frequency.push(count);
        }
        Ok(Self {
            ngram_to_index,
            document_frequency,
            n_documents,
            ngram_orders: config.orders.clone(),
            stem: config.stem,
        })
    }

    pub fn fit_documents(docs: &[Document], config: &VocabularyConfig) -> Result<Self> {
        Self::fit(docs.iter().map(|d| d.text.as_str()), config)
    }

    pub fn len(&self) -> usize {
        self.document_frequency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.document_frequency.is_empty()
    }

    pub fn idf(&self, index: usize) -> f64 {
        let n = f64::from(self.n_documents);
        let df = f64::from(self.document_frequency[index]);
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }

    /// Raw in-vocabulary n-gram counts; out-of-vocabulary n-grams are dropped.
    pub fn counts(&self, text: &str) -> SparseVector {
        let tokens = tokenize(text, self.stem);
        let pairs = ngrams(&tokens, &self.ngram_orders)
            .into_iter()
            .filter_map(|g| self.ngram_to_index.get(&g).map(|&i| (i, 1.0)));
        SparseVector::from_pairs(self.len(), pairs)
    }

    /// L2-normalized tf × smoothed idf.
    pub fn tfidf(&self, text: &str) -> SparseVector {
        let mut v = self.counts(text);
        for (i, value) in v.indices.iter().zip(v.values.iter_mut()) {
            *value *= self.idf(*i as usize);
        }
        let norm = v.values.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.values.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

pub fn vectorize_tfidf(doc: &Document, vocab: &Vocabulary) -> FeatureVector {
    FeatureVector::Sparse(vocab.tfidf(&doc.text))
}

pub fn vectorize_counts(doc: &Document, vocab: &Vocabulary) -> FeatureVector {
    FeatureVector::Sparse(vocab.counts(&doc.text))
}

#[derive(Debug, Deserialize, Serialize)]
struct EmbeddingRow {
    doc_id: String,
    vector: Vec<f64>,
}

/// Loads `{"doc_id": ..., "vector": [...]}` rows. Documents absent from the
/// file are simply absent from the map.
pub fn load_embeddings(path: &Path, expected_dim: usize) -> Result<BTreeMap<String, FeatureVector>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: EmbeddingRow = serde_json::from_str(&line).map_err(|source| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        if row.vector.len() != expected_dim {
            return Err(Error::InvalidRecord {
                doc_id: row.doc_id,
                reason: format!("embedding has dimension {}, expected {expected_dim}", row.vector.len()),
            });
        }
        if row.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidRecord {
                doc_id: row.doc_id,
                reason: "embedding contains a non-finite value".into(),
            });
        }
        if out.contains_key(&row.doc_id) {
            return Err(Error::InvalidRecord {
                doc_id: row.doc_id,
                reason: "duplicate embedding".into(),
            });
        }
        out.insert(row.doc_id, FeatureVector::dense(row.vector));
    }
    Ok(out)
}

pub fn write_embeddings<'a>(
    writer: &mut impl std::io::Write,
    rows: impl IntoIterator<Item = (&'a str, &'a [f64])>,
) -> Result<()> {
    crate::io::write_jsonl(
        writer,
        rows.into_iter().map(|(doc_id, vector)| EmbeddingRow {
            doc_id: doc_id.to_string(),
            vector: vector.to_vec(),
        }),
    )
}

/// Maps a document to the feature space a model was trained in. `None`
/// means the document cannot be represented (for example, no embedding).
pub trait Featurizer: Send + Sync {
    fn featurize(&self, doc: &Document) -> Option<FeatureVector>;
    fn dimension(&self) -> usize;
}

pub struct TfIdfFeaturizer(pub Vocabulary);

impl Featurizer for TfIdfFeaturizer {
    fn featurize(&self, doc: &Document) -> Option<FeatureVector> {
        Some(vectorize_tfidf(doc, &self.0))
    }

    fn dimension(&self) -> usize {
        self.0.len()
    }
}

pub struct CountFeaturizer(pub Vocabulary);

impl Featurizer for CountFeaturizer {
    fn featurize(&self, doc: &Document) -> Option<FeatureVector> {
        Some(vectorize_counts(doc, &self.0))
    }

    fn dimension(&self) -> usize {
        self.0.len()
    }
}

pub struct EmbeddingFeaturizer {
    pub vectors: HashMap<String, FeatureVector>,
    pub dim: usize,
}

impl EmbeddingFeaturizer {
    pub fn new(vectors: impl IntoIterator<Item = (String, FeatureVector)>, dim: usize) -> Self {
        Self {
            vectors: vectors.into_iter().collect(),
            dim,
        }
    }
}

impl Featurizer for EmbeddingFeaturizer {
    fn featurize(&self, doc: &Document) -> Option<FeatureVector> {
        self.vectors.get(&doc.doc_id).cloned()
    }

    fn dimension(&self) -> usize {
        self.dim
    }
}

/// For models that score by document id only.
pub struct NoFeatures;

impl Featurizer for NoFeatures {
    fn featurize(&self, _doc: &Document) -> Option<FeatureVector> {
        Some(FeatureVector::Sparse(SparseVector::zeros(0)))
    }

    fn dimension(&self) -> usize {
        0
    }
}
