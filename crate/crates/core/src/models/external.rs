use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BinaryClassifier, ClassifierFamily, Example, FeatureEncoding, TrainingConfig};
use crate::features::FeatureVector;
use crate::{Error, Result};

/// Scores computed outside this toolkit (for example by a fine-tuned
/// transformer), trusted as probabilities and looked up by document id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalScores {
    pub scores: BTreeMap<String, f64>,
}

impl ExternalScores {
    pub fn new(scores: BTreeMap<String, f64>) -> Result<Self> {
        for (doc_id, s) in &scores {
            validate_score(doc_id, *s)?;
        }
        Ok(Self { scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

fn validate_score(doc_id: &str, score: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::InvalidRecord {
            doc_id: doc_id.to_string(),
            reason: format!("score {score} outside [0, 1]"),
        });
    }
    Ok(())
}

impl BinaryClassifier for ExternalScores {
    fn kind(&self) -> &'static str {
        "external_scores"
    }

    fn dimension(&self) -> Option<usize> {
        None
    }

    fn predict(&self, doc_id: &str, _features: &FeatureVector) -> Result<f64> {
        self.scores
            .get(doc_id)
            .copied()
            .ok_or_else(|| Error::MissingScore(doc_id.to_string()))
    }

    fn parameters(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plain data serializes")
    }
}

#[derive(Deserialize)]
struct ScoreRow {
    doc_id: String,
    score: f64,
}

/// Reads `{"doc_id": ..., "score": ...}` rows into an adapter classifier.
pub fn load_external_scores(path: &Path) -> Result<ExternalScores> {
    let rows: Vec<ScoreRow> = crate::io::read_jsonl(path)?;
    let mut scores = BTreeMap::new();
    for row in rows {
        validate_score(&row.doc_id, row.score)?;
        if scores.insert(row.doc_id.clone(), row.score).is_some() {
            return Err(Error::DuplicateScore(row.doc_id));
        }
    }
    Ok(ExternalScores { scores })
}

pub struct ExternalScoresFamily;

impl ClassifierFamily for ExternalScoresFamily {
    fn name(&self) -> &'static str {
        "external_scores"
    }

    fn encoding(&self) -> FeatureEncoding {
        FeatureEncoding::DocId
    }

    fn train(&self, _examples: &[Example<'_>], _config: &TrainingConfig) -> Result<Box<dyn BinaryClassifier>> {
        Err(Error::InvalidConfig(
            "external scores are loaded from a file, not trained".into(),
        ))
    }

    fn restore(&self, parameters: serde_json::Value) -> Result<Box<dyn BinaryClassifier>> {
        let m: ExternalScores = serde_json::from_value(parameters)?;
        Ok(Box::new(ExternalScores::new(m.scores)?))
    }
}
