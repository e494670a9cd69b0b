//! Threshold pooling over an ensemble of classifiers.
//!
//! Every (dataset, classifier) pair yields one model. A document becomes a
//! candidate when any model scores it at or above the threshold, and the
//! candidates are downsampled uniformly at random to the annotation budget.
//! Lower thresholds admit more candidates and therefore more randomness.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{contains_hate_word, DocumentCollection, HateLexicon};
use crate::features::{CountFeaturizer, Featurizer, NoFeatures, TfIdfFeaturizer, Vocabulary, VocabularyConfig};
use crate::models::{BinaryClassifier, ClassifierRegistry, Example, FeatureEncoding, TrainingConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    pub budget: usize,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_threshold() -> f64 {
    0.5
}

impl PoolConfig {
    pub fn new(threshold: f64, budget: usize, rng_seed: u64) -> Self {
        Self {
            threshold,
            budget,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidConfig(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if self.budget == 0 {
            return Err(Error::InvalidConfig("budget must be at least 1".into()));
        }
        Ok(())
    }
}

/// A trained model together with the featurizer of its training space.
pub struct PoolMember {
    pub name: String,
    pub model: Box<dyn BinaryClassifier>,
    pub featurizer: Box<dyn Featurizer>,
}

impl PoolMember {
    pub fn new(name: impl Into<String>, model: Box<dyn BinaryClassifier>, featurizer: Box<dyn Featurizer>) -> Self {
        Self {
            name: name.into(),
            model,
            featurizer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHits {
    pub name: String,
    /// Positions (in collection order) of documents scoring at or above the
    /// threshold.
    pub hits: Vec<usize>,
    /// Documents this model could not score; treated as below threshold.
    pub unscored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolResult {
    pub selected: Vec<String>,
    pub candidate_count: usize,
    pub models: Vec<ModelHits>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl PoolResult {
    pub fn per_model_hit_counts(&self) -> Vec<(String, usize)> {
        self.models.iter().map(|m| (m.name.clone(), m.hits.len())).collect()
    }
}

fn score_member(member: &PoolMember, collection: &DocumentCollection, threshold: f64) -> Result<ModelHits> {
    let outcomes: Vec<Result<Option<bool>>> = collection
        .documents()
        .par_iter()
        .map(|doc| {
            let Some(x) = member.featurizer.featurize(doc) else {
                return Ok(None);
            };
            match member.model.predict(&doc.doc_id, &x) {
                Ok(p) => Ok(Some(p >= threshold)),
                Err(Error::MissingScore(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut hits = Vec::new();
    let mut unscored = 0;
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome? {
            Some(true) => hits.push(i),
            Some(false) => {}
            None => unscored += 1,
        }
    }
    Ok(ModelHits {
        name: member.name.clone(),
        hits,
        unscored,
    })
}

/// Unions every model's above-threshold documents and samples
/// `min(budget, |candidates|)` of them without replacement.
pub fn build_pool(collection: &DocumentCollection, members: &[PoolMember], config: &PoolConfig) -> Result<PoolResult> {
    config.validate()?;
    if collection.is_empty() {
        return Err(Error::EmptyCollection);
    }
    if members.is_empty() {
        return Err(Error::InvalidConfig("pool needs at least one model".into()));
    }
    let models = members
        .iter()
        .map(|m| score_member(m, collection, config.threshold))
        .collect::<Result<Vec<_>>>()?;
    for m in models.iter().filter(|m| m.unscored > 0) {
        tracing::warn!(model = %m.name, unscored = m.unscored, "documents without a score treated as below threshold");
    }
    let candidates: Vec<usize> = models
        .iter()
        .flat_map(|m| m.hits.iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let amount = config.budget.min(candidates.len());
    let selected = index::sample(&mut rng, candidates.len(), amount)
        .into_iter()
        .map(|k| collection.documents()[candidates[k]].doc_id.clone())
        .collect();
    let diagnostic = candidates
        .is_empty()
        .then(|| format!("no document scored at or above threshold {}", config.threshold));
    Ok(PoolResult {
        selected,
        candidate_count: candidates.len(),
        models,
        diagnostic,
    })
}

/// Trains every classifier family on every prior dataset, each in the
/// feature space of a vocabulary fitted to that dataset.
pub fn train_pool_members(
    datasets: &[(String, DocumentCollection)],
    families: &[&str],
    registry: &ClassifierRegistry,
    vocabulary: &VocabularyConfig,
    training: &TrainingConfig,
) -> Result<Vec<PoolMember>> {
    let mut members = Vec::new();
    for (dataset_name, dataset) in datasets {
        let labels = dataset.require_gold_labels()?;
        let vocab = Vocabulary::fit_documents(dataset.documents(), vocabulary)?;
        for &family_name in families {
            let family = registry.get(family_name)?;
            let featurizer: Box<dyn Featurizer> = match family.encoding() {
                FeatureEncoding::Tfidf => Box::new(TfIdfFeaturizer(vocab.clone())),
                FeatureEncoding::Counts => Box::new(CountFeaturizer(vocab.clone())),
                FeatureEncoding::DocId => Box::new(NoFeatures),
            };
            let xs: Vec<_> = dataset
                .iter()
                .map(|d| featurizer.featurize(d).expect("vocabulary featurizers cover every document"))
                .collect();
            let examples: Vec<Example> = xs.iter().zip(&labels).map(|(x, y)| (x, *y)).collect();
            let model = registry.train(family_name, &examples, training)?;
            members.push(PoolMember::new(format!("{family_name}@{dataset_name}"), model, featurizer));
        }
    }
    Ok(members)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolReport {
    pub selected: usize,
    pub candidate_count: usize,
    /// Fraction of selected documents containing a lexicon term; `None` when
    /// nothing was selected.
    pub lexicon_fraction: Option<f64>,
    pub per_model_hits: Vec<(String, usize)>,
    pub unscored: Vec<(String, usize)>,
    /// `overlap[i][j]`: candidates hit by both model i and model j.
    pub overlap: Vec<Vec<usize>>,
}

pub fn stratify_report(result: &PoolResult, collection: &DocumentCollection, lexicon: &HateLexicon) -> PoolReport {
    let flagged = result
        .selected
        .iter()
        .filter(|id| collection.get(id).is_some_and(|d| contains_hate_word(d, lexicon)))
        .count();
    let lexicon_fraction = (!result.selected.is_empty()).then(|| flagged as f64 / result.selected.len() as f64);
    let sets: Vec<BTreeSet<usize>> = result.models.iter().map(|m| m.hits.iter().copied().collect()).collect();
    let overlap = sets
        .iter()
        .map(|a| sets.iter().map(|b| a.intersection(b).count()).collect())
        .collect();
    PoolReport {
        selected: result.selected.len(),
        candidate_count: result.candidate_count,
        lexicon_fraction,
        per_model_hits: result.per_model_hit_counts(),
        unscored: result.models.iter().map(|m| (m.name.clone(), m.unscored)).collect(),
        overlap,
    }
}
