//! Ingesting raw posts into a cleaned, deduplicated document collection.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::features::tokenize;
use crate::{Error, Result};

/// Serializes a binary label as 0/1 and accepts 0/1 or booleans.
pub mod label01 {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Bool(bool),
        Int(u64),
    }

    fn convert<E: serde::de::Error>(r: Repr) -> Result<bool, E> {
        match r {
            Repr::Bool(b) => Ok(b),
            Repr::Int(0) => Ok(false),
            Repr::Int(1) => Ok(true),
            Repr::Int(n) => Err(E::custom(format!("label must be 0 or 1, got {n}"))),
        }
    }

    pub fn serialize<S: Serializer>(value: &Option<bool>, s: S) -> Result<S::Ok, S::Error> {
        match value {
            Some(b) => s.serialize_u8(u8::from(*b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<bool>, D::Error> {
        Option::<Repr>::deserialize(d)?.map(convert).transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    #[serde(default)]
    pub user_id: Option<String>,
    /// `Some(true)` for hateful.
    #[serde(default, with = "label01")]
    pub gold_label: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            text: text.into(),
            user_id: None,
            gold_label: None,
            created_at: None,
        }
    }

    pub fn with_label(mut self, hateful: bool) -> Self {
        self.gold_label = Some(hateful);
        self
    }

    /// Number of Unicode scalar values in the text; span offsets index these.
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

/// An ordered, deduplicated set of documents.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentCollection {
    documents: Vec<Document>,
    source_note: String,
    index: HashMap<String, usize>,
}

impl DocumentCollection {
    /// Validates id uniqueness, non-empty text and text uniqueness.
    pub fn new(documents: Vec<Document>, source_note: impl Into<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(documents.len());
        let mut texts = HashSet::with_capacity(documents.len());
        for (i, doc) in documents.iter().enumerate() {
            if doc.text.trim().is_empty() {
                return Err(Error::InvalidRecord {
                    doc_id: doc.doc_id.clone(),
                    reason: "empty text".into(),
                });
            }
            if index.insert(doc.doc_id.clone(), i).is_some() {
                return Err(Error::InvalidRecord {
                    doc_id: doc.doc_id.clone(),
                    reason: "duplicate doc_id".into(),
                });
            }
            if !texts.insert(doc.text.as_str()) {
                return Err(Error::InvalidRecord {
                    doc_id: doc.doc_id.clone(),
                    reason: "duplicate text".into(),
                });
            }
        }
        Ok(Self {
            documents,
            source_note: source_note.into(),
            index,
        })
    }

    pub fn empty() -> Self {
        Self {
            documents: Vec::new(),
            source_note: String::new(),
            index: HashMap::new(),
        }
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn source_note(&self) -> &str {
        &self.source_note
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.documents.iter()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.index.get(doc_id).map(|&i| &self.documents[i])
    }

    pub fn position(&self, doc_id: &str) -> Option<usize> {
        self.index.get(doc_id).copied()
    }

    /// Errors naming the first document without a gold label.
    pub fn require_gold_labels(&self) -> Result<Vec<bool>> {
        self.documents
            .iter()
            .map(|d| {
                d.gold_label.ok_or_else(|| Error::InvalidRecord {
                    doc_id: d.doc_id.clone(),
                    reason: "missing gold label".into(),
                })
            })
            .collect()
    }

    pub fn load_jsonl(path: &Path) -> Result<Self> {
        let docs: Vec<Document> = crate::io::read_jsonl(path)?;
        Self::new(docs, path.display().to_string())
    }

    pub fn write_jsonl(&self, writer: &mut impl std::io::Write) -> Result<()> {
        crate::io::write_jsonl(writer, &self.documents)
    }
}

impl<'a> IntoIterator for &'a DocumentCollection {
    type Item = &'a Document;
    type IntoIter = std::slice::Iter<'a, Document>;

    fn into_iter(self) -> Self::IntoIter {
        self.documents.iter()
    }
}

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(?:https?://|www\.)\S+").unwrap())
}

fn mention_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(^|\s)@\w+:?").unwrap())
}

fn retweet_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^rt(?:\s+|:\s*|$)").unwrap())
}

/// True when the post carries a leading retweet marker.
pub fn is_retweet(raw: &str) -> bool {
    retweet_re().is_match(raw.trim_start())
}

fn clean_once(text: &str) -> String {
    let no_urls = url_re().replace_all(text, " ");
    let no_mentions = mention_re().replace_all(&no_urls, "$1");
    let mut collapsed = no_mentions.split_whitespace().collect::<Vec<_>>().join(" ");
    while let Some(m) = retweet_re().find(&collapsed) {
        collapsed = collapsed[m.end()..].trim_start().to_string();
    }
    collapsed
}

/// Removes URLs, @-mentions (with a directly attached colon) and leading
/// retweet markers, collapses whitespace and NFC-normalizes. Emojis are kept.
/// The output is a fixed point: cleaning it again changes nothing.
pub fn clean_text(raw: &str) -> String {
    let mut text: String = raw.nfc().collect();
    loop {
        let next = clean_once(&text);
        if next == text {
            return next;
        }
        text = next;
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    #[serde(alias = "doc_id", deserialize_with = "id_string")]
    id: String,
    text: String,
    #[serde(default, alias = "user_id")]
    user: Option<String>,
    #[serde(default, alias = "gold_label", with = "label01")]
    label: Option<bool>,
    #[serde(default)]
    created_at: Option<String>,
}

fn id_string<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    match serde_json::Value::deserialize(d)? {
        serde_json::Value::String(s) if !s.is_empty() => Ok(s),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        other => Err(serde::de::Error::custom(format!("bad id {other}"))),
    }
}

/// Counts of records dropped during ingest, by reason.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub read: usize,
    pub kept: usize,
    pub malformed: usize,
    pub retweet: usize,
    pub empty: usize,
    pub duplicate: usize,
    pub duplicate_id: usize,
    pub filtered: usize,
}

/// Ingest options. `accept` is the pluggable language (or any other)
/// filter applied to cleaned text.
pub struct IngestOptions<'a> {
    pub accept: &'a (dyn Fn(&str) -> bool + Sync),
    pub source_note: String,
}

impl Default for IngestOptions<'_> {
    fn default() -> Self {
        Self {
            accept: &|_| true,
            source_note: String::new(),
        }
    }
}

/// Cleans and deduplicates a stream of raw JSON lines. Malformed lines are
/// counted and skipped; they never abort the stream.
pub fn ingest<I, S>(lines: I, options: &IngestOptions<'_>) -> (DocumentCollection, IngestReport)
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut report = IngestReport::default();
    let mut documents = Vec::new();
    let mut seen_text = HashSet::new();
    let mut seen_id = HashSet::new();
    for line in lines {
        let line = line.as_ref();
        if line.trim().is_empty() {
            continue;
        }
        report.read += 1;
        let Ok(record) = serde_json::from_str::<RawRecord>(line) else {
            report.malformed += 1;
            continue;
        };
        if is_retweet(&record.text) {
            report.retweet += 1;
            continue;
        }
        let text = clean_text(&record.text);
        if text.is_empty() {
            report.empty += 1;
            continue;
        }
        if !(options.accept)(&text) {
            report.filtered += 1;
            continue;
        }
        if seen_text.contains(&text) {
            report.duplicate += 1;
            continue;
        }
        if !seen_id.insert(record.id.clone()) {
            report.duplicate_id += 1;
            continue;
        }
        seen_text.insert(text.clone());
        documents.push(Document {
            doc_id: record.id,
            text,
            user_id: record.user,
            gold_label: record.label,
            created_at: record.created_at,
        });
    }
    report.kept = documents.len();
    let collection =
        DocumentCollection::new(documents, options.source_note.clone()).expect("ingest enforces collection invariants");
    (collection, report)
}

/// Like [`ingest`], reading lines from `reader`. Lines that are not valid
/// UTF-8 count as malformed.
pub fn ingest_reader(reader: impl BufRead, options: &IngestOptions<'_>) -> (DocumentCollection, IngestReport) {
    let mut unreadable = 0;
    let lines = reader.split(b'\n').filter_map(|l| match l.map(String::from_utf8) {
        Ok(Ok(s)) => Some(s),
        _ => {
            unreadable += 1;
            None
        }
    });
    let (collection, mut report) = ingest(lines, options);
    report.read += unreadable;
    report.malformed += unreadable;
    (collection, report)
}

/// Lowercase hate-word terms. Multiword terms match contiguous token runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HateLexicon {
    terms: BTreeSet<String>,
    sequences: Vec<Vec<String>>,
    source_note: String,
}

impl HateLexicon {
    /// Lowercases and deduplicates `terms`. Terms that contain no token
    /// characters are dropped; an empty result is an error.
    pub fn new(terms: impl IntoIterator<Item = impl AsRef<str>>, source_note: impl Into<String>) -> Result<Self> {
        let terms: BTreeSet<String> = terms
            .into_iter()
            .map(|t| t.as_ref().trim().to_lowercase())
            .filter(|t| !tokenize(t, false).is_empty())
            .collect();
        if terms.is_empty() {
            return Err(Error::InvalidInput("hate lexicon has no terms".into()));
        }
        let sequences = terms.iter().map(|t| tokenize(t, false)).collect();
        Ok(Self {
            terms,
            sequences,
            source_note: source_note.into(),
        })
    }

    /// One term per line; blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str, source_note: impl Into<String>) -> Result<Self> {
        Self::new(
            text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')),
            source_note,
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path.display().to_string())
    }

    pub fn terms(&self) -> &BTreeSet<String> {
        &self.terms
    }

    pub fn source_note(&self) -> &str {
        &self.source_note
    }

    pub fn union(&self, other: &HateLexicon) -> HateLexicon {
        HateLexicon::new(self.terms.iter().chain(other.terms.iter()), "union").expect("both sides non-empty")
    }

    pub fn matches_text(&self, text: &str) -> bool {
        let tokens = tokenize(text, false);
        self.sequences
            .iter()
            .any(|seq| tokens.windows(seq.len()).any(|w| w == seq.as_slice()))
    }
}

impl fmt::Display for HateLexicon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} terms from {}", self.terms.len(), self.source_note)
    }
}

pub fn contains_hate_word(doc: &Document, lexicon: &HateLexicon) -> bool {
    lexicon.matches_text(&doc.text)
}
