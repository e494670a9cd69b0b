//! The active-learning selection loop.
//!
//! A model is trained on labeled seed documents; then, while at least one
//! full batch of budget remains, the current model scores every unjudged
//! document, a [`SelectionStrategy`] picks the next batch, the batch is
//! labeled, and the model is retrained from scratch on everything judged so
//! far. The loop is strictly sequential.

mod strategy;

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, DocumentCollection};
use crate::features::{FeatureMode, FeatureVector, Vocabulary, VocabularyConfig};
use crate::metrics;
use crate::models::{BinaryClassifier, ClassifierRegistry, Example, TrainingConfig};
use crate::{Error, Result};

pub use strategy::{entropy, Cal, Candidate, Sal, SelectionStrategy, Spl, StrategyRegistry};

fn default_classifier() -> String {
    "logistic_regression".into()
}

fn default_batch_size() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ALConfig {
    /// Registry name: `cal`, `sal` or `spl`.
    pub strategy: String,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub budget: usize,
    #[serde(default)]
    pub seed_doc_ids: Vec<String>,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_feature_mode")]
    pub feature_mode: FeatureMode,
    #[serde(default = "default_classifier")]
    pub classifier: String,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub vocabulary: VocabularyConfig,
}

fn default_feature_mode() -> FeatureMode {
    FeatureMode::Tfidf
}

impl ALConfig {
    pub fn new(strategy: &str, batch_size: usize, budget: usize) -> Self {
        Self {
            strategy: strategy.to_string(),
            batch_size,
            budget,
            seed_doc_ids: Vec::new(),
            rng_seed: 0,
            feature_mode: FeatureMode::Tfidf,
            classifier: default_classifier(),
            training: TrainingConfig::default(),
            vocabulary: VocabularyConfig::default(),
        }
    }

    pub fn validate(&self, collection: &DocumentCollection) -> Result<()> {
        self.validate_with(collection, &ClassifierRegistry::default())
    }

    /// Like [`ALConfig::validate`], resolving the classifier in `classifiers`.
    pub fn validate_with(&self, collection: &DocumentCollection, classifiers: &ClassifierRegistry) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.budget == 0 {
            return bad("budget must be at least 1".into());
        }
        if self.budget > collection.len() {
            return bad(format!(
                "budget {} exceeds collection size {}",
                self.budget,
                collection.len()
            ));
        }
        if self.seed_doc_ids.len() > self.budget {
            return bad(format!(
                "{} seed documents exceed budget {}",
                self.seed_doc_ids.len(),
                self.budget
            ));
        }
        let mut seen = HashSet::new();
        for id in &self.seed_doc_ids {
            if collection.get(id).is_none() {
                return bad(format!("seed document {id} not in collection"));
            }
            if !seen.insert(id) {
                return bad(format!("seed document {id} listed twice"));
            }
        }
        StrategyRegistry::default().get(&self.strategy)?;
        classifiers.get(&self.classifier)?;
        self.training.validate()
    }
}

/// Featurizes a whole collection for the loop. TF-IDF vocabularies are
/// fitted once on the full (unlabeled) collection.
pub fn featurize_collection(
    collection: &DocumentCollection,
    mode: FeatureMode,
    vocabulary: &VocabularyConfig,
    embeddings: Option<&BTreeMap<String, FeatureVector>>,
) -> Result<Vec<FeatureVector>> {
    match mode {
        FeatureMode::Tfidf => {
            let vocab = Vocabulary::fit_documents(collection.documents(), vocabulary)?;
            Ok(collection
                .documents()
                .par_iter()
                .map(|d| FeatureVector::Sparse(vocab.tfidf(&d.text)))
                .collect())
        }
        FeatureMode::Embedding => {
            let embeddings =
                embeddings.ok_or_else(|| Error::InvalidConfig("embedding mode needs an embedding file".into()))?;
            collection
                .iter()
                .map(|d| {
                    embeddings.get(&d.doc_id).cloned().ok_or_else(|| Error::InvalidRecord {
                        doc_id: d.doc_id.clone(),
                        reason: "no embedding".into(),
                    })
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgedDoc {
    pub doc_id: String,
    pub label: bool,
    /// 0 for seeds.
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub iteration: usize,
    pub doc_ids: Vec<String>,
    /// Model probabilities at selection time, when the strategy used them.
    pub probabilities: Vec<Option<f64>>,
}

/// Serializable loop state: everything needed to resume exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ALState {
    pub judged: Vec<JudgedDoc>,
    pub remaining_budget: usize,
    pub iteration: usize,
    pub history: Vec<SelectionRecord>,
    pub rng: ChaCha8Rng,
}

impl ALState {
    pub fn labels(&self) -> BTreeMap<&str, bool> {
        self.judged.iter().map(|j| (j.doc_id.as_str(), j.label)).collect()
    }

    pub fn positives(&self) -> usize {
        self.judged.iter().filter(|j| j.label).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: ALConfig,
    pub state: ALState,
}

/// Source of labels for selected documents.
pub trait LabelOracle {
    fn label(&mut self, doc: &Document) -> Result<bool>;
}

impl<F: FnMut(&Document) -> Result<bool>> LabelOracle for F {
    fn label(&mut self, doc: &Document) -> Result<bool> {
        self(doc)
    }
}

/// Answers from the document's gold label.
pub struct GoldOracle;

impl LabelOracle for GoldOracle {
    fn label(&mut self, doc: &Document) -> Result<bool> {
        doc.gold_label.ok_or_else(|| Error::OracleFailed {
            doc_id: doc.doc_id.clone(),
            reason: "no gold label".into(),
        })
    }
}

pub struct ActiveLearner {
    collection: Arc<DocumentCollection>,
    features: Arc<Vec<FeatureVector>>,
    config: ALConfig,
    strategy: &'static dyn SelectionStrategy,
    classifiers: Arc<ClassifierRegistry>,
    state: ALState,
    judged_set: HashSet<usize>,
    model: Option<Box<dyn BinaryClassifier>>,
}

fn default_registry() -> Arc<ClassifierRegistry> {
    static REGISTRY: std::sync::OnceLock<Arc<ClassifierRegistry>> = std::sync::OnceLock::new();
    REGISTRY.get_or_init(|| Arc::new(ClassifierRegistry::default())).clone()
}

fn strategy_by_name(name: &str) -> Result<&'static dyn SelectionStrategy> {
    static REGISTRY: std::sync::OnceLock<StrategyRegistry> = std::sync::OnceLock::new();
    REGISTRY.get_or_init(StrategyRegistry::default).get(name)
}

impl std::fmt::Debug for ActiveLearner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ActiveLearner")
            .field("config", &self.config)
            .field("judged", &self.state.judged.len())
            .field("remaining_budget", &self.state.remaining_budget)
            .finish()
    }
}

impl ActiveLearner {
    /// Starts a loop from labeled seeds (`config.seed_doc_ids` in order) and
    /// trains the initial model.
    pub fn new(
        collection: Arc<DocumentCollection>,
        features: Arc<Vec<FeatureVector>>,
        config: ALConfig,
        seed_labels: &[bool],
    ) -> Result<Self> {
        Self::with_registry(collection, features, config, seed_labels, default_registry())
    }

    /// Like [`ActiveLearner::new`] with classifier families from `classifiers`.
    pub fn with_registry(
        collection: Arc<DocumentCollection>,
        features: Arc<Vec<FeatureVector>>,
        config: ALConfig,
        seed_labels: &[bool],
        classifiers: Arc<ClassifierRegistry>,
    ) -> Result<Self> {
        config.validate_with(&collection, &classifiers)?;
        if seed_labels.len() != config.seed_doc_ids.len() {
            return Err(Error::InvalidConfig(format!(
                "{} seed labels for {} seed documents",
                seed_labels.len(),
                config.seed_doc_ids.len()
            )));
        }
        if !(seed_labels.contains(&true) && seed_labels.contains(&false)) {
            return Err(Error::InvalidConfig(
                "seeds must include at least one hateful and one non-hateful document".into(),
            ));
        }
        let judged: Vec<JudgedDoc> = config
            .seed_doc_ids
            .iter()
            .zip(seed_labels)
            .map(|(id, &label)| JudgedDoc {
                doc_id: id.clone(),
                label,
                iteration: 0,
            })
            .collect();
        let state = ALState {
            remaining_budget: config.budget - judged.len(),
            judged,
            iteration: 0,
            history: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
        };
        let mut learner = Self::assemble(collection, features, config, state, classifiers)?;
        learner.model()?;
        Ok(learner)
    }

    pub fn resume(
        collection: Arc<DocumentCollection>,
        features: Arc<Vec<FeatureVector>>,
        checkpoint: Checkpoint,
    ) -> Result<Self> {
        let Checkpoint { config, state } = checkpoint;
        config.validate(&collection)?;
        if state.remaining_budget + state.judged.len() != config.budget {
            return Err(Error::InvalidInput("checkpoint budget accounting is inconsistent".into()));
        }
        let mut learner = Self::assemble(collection, features, config, state, default_registry())?;
        learner.model()?;
        Ok(learner)
    }

    fn assemble(
        collection: Arc<DocumentCollection>,
        features: Arc<Vec<FeatureVector>>,
        config: ALConfig,
        state: ALState,
        classifiers: Arc<ClassifierRegistry>,
    ) -> Result<Self> {
        if features.len() != collection.len() {
            return Err(Error::FeatureMismatch(format!(
                "{} feature vectors for {} documents",
                features.len(),
                collection.len()
            )));
        }
        let strategy = strategy_by_name(&config.strategy)?;
        let mut judged_set = HashSet::new();
        for j in &state.judged {
            let pos = collection.position(&j.doc_id).ok_or_else(|| Error::InvalidRecord {
                doc_id: j.doc_id.clone(),
                reason: "judged document not in collection".into(),
            })?;
            if !judged_set.insert(pos) {
                return Err(Error::InvalidRecord {
                    doc_id: j.doc_id.clone(),
                    reason: "judged twice".into(),
                });
            }
        }
        Ok(Self {
            collection,
            features,
            config,
            strategy,
            classifiers,
            state,
            judged_set,
            model: None,
        })
    }

    pub fn config(&self) -> &ALConfig {
        &self.config
    }

    pub fn state(&self) -> &ALState {
        &self.state
    }

    pub fn collection(&self) -> &DocumentCollection {
        &self.collection
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            state: self.state.clone(),
        }
    }

    pub fn is_judged(&self, doc_id: &str) -> bool {
        self.collection
            .position(doc_id)
            .is_some_and(|p| self.judged_set.contains(&p))
    }

    /// Size of the next batch: a full batch, or every unjudged document
    /// when fewer than that remain.
    pub fn next_batch_size(&self) -> usize {
        self.config
            .batch_size
            .min(self.collection.len() - self.judged_set.len())
    }

    /// True once the remaining budget cannot pay for the next batch, or
    /// nothing is left to judge.
    pub fn is_exhausted(&self) -> bool {
        let next = self.next_batch_size();
        next == 0 || self.state.remaining_budget < next
    }

    /// The model trained on every judged document, retraining if labels
    /// arrived since the last fit.
    pub fn model(&mut self) -> Result<&dyn BinaryClassifier> {
        if self.model.is_none() {
            let examples: Vec<Example> = self
                .state
                .judged
                .iter()
                .map(|j| (&self.features[self.collection.position(&j.doc_id).expect("validated")], j.label))
                .collect();
            let model = self
                .classifiers
                .train(&self.config.classifier, &examples, &self.config.training)?;
            self.model = Some(model);
        }
        Ok(self.model.as_deref().expect("just trained"))
    }

    /// p(hateful | x) for every document, in collection order.
    pub fn score_all(&mut self) -> Result<Vec<f64>> {
        self.model()?;
        let model = self.model.as_deref().expect("trained");
        self.collection
            .documents()
            .par_iter()
            .zip(self.features.par_iter())
            .map(|(d, x)| model.predict(&d.doc_id, x))
            .collect()
    }

    /// Chooses the next batch without recording it. Returns an empty batch
    /// once the budget is exhausted. When fewer unjudged documents remain
    /// than the batch size, all of them are returned.
    pub fn propose(&mut self) -> Result<Vec<String>> {
        Ok(self.propose_scored()?.into_iter().map(|(id, _)| id).collect())
    }

    fn propose_scored(&mut self) -> Result<Vec<(String, Option<f64>)>> {
        if self.is_exhausted() {
            return Ok(Vec::new());
        }
        let scores = if self.strategy.needs_scores() {
            Some(self.score_all()?)
        } else {
            None
        };
        let candidates: Vec<Candidate> = self
            .collection
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.judged_set.contains(i))
            .map(|(i, d)| Candidate {
                doc_id: &d.doc_id,
                probability: scores.as_ref().map(|s| s[i]),
            })
            .collect();
        let picked = self
            .strategy
            .select(&candidates, self.config.batch_size, &mut self.state.rng);
        Ok(picked
            .into_iter()
            .map(|k| (candidates[k].doc_id.to_string(), candidates[k].probability))
            .collect())
    }

    /// Records labels for a proposed batch, decrements the budget and marks
    /// the model for retraining.
    pub fn commit(&mut self, labels: &[(String, bool)]) -> Result<()> {
        self.commit_with_scores(labels, None)
    }

    fn commit_with_scores(&mut self, labels: &[(String, bool)], probabilities: Option<Vec<Option<f64>>>) -> Result<()> {
        if labels.is_empty() {
            return Ok(());
        }
        if labels.len() > self.config.batch_size || labels.len() > self.state.remaining_budget {
            return Err(Error::InvalidInput(format!(
                "batch of {} exceeds batch size {} or remaining budget {}",
                labels.len(),
                self.config.batch_size,
                self.state.remaining_budget
            )));
        }
        let mut positions = Vec::with_capacity(labels.len());
        for (id, _) in labels {
            let pos = self.collection.position(id).ok_or_else(|| Error::InvalidRecord {
                doc_id: id.clone(),
                reason: "not in collection".into(),
            })?;
            if self.judged_set.contains(&pos) || positions.contains(&pos) {
                return Err(Error::InvalidRecord {
                    doc_id: id.clone(),
                    reason: "already judged".into(),
                });
            }
            positions.push(pos);
        }
        self.state.iteration += 1;
        let iteration = self.state.iteration;
        self.judged_set.extend(positions);
        self.state.judged.extend(labels.iter().map(|(id, label)| JudgedDoc {
            doc_id: id.clone(),
            label: *label,
            iteration,
        }));
        self.state.remaining_budget -= labels.len();
        self.state.history.push(SelectionRecord {
            iteration,
            doc_ids: labels.iter().map(|(id, _)| id.clone()).collect(),
            probabilities: probabilities.unwrap_or_else(|| vec![None; labels.len()]),
        });
        self.model = None;
        Ok(())
    }

    /// One iteration: select, label through `oracle`, record. Returns the
    /// number of documents judged (0 when exhausted). If the oracle fails,
    /// nothing from the batch is recorded and the RNG is rewound, so the
    /// loop can be resumed as if the iteration never started.
    pub fn step(&mut self, oracle: &mut dyn LabelOracle) -> Result<usize> {
        let rng_before = self.state.rng.clone();
        let batch = self.propose_scored()?;
        let mut labels = Vec::with_capacity(batch.len());
        for (id, _) in &batch {
            let doc = self.collection.get(id).expect("proposed from collection");
            match oracle.label(doc) {
                Ok(label) => labels.push((id.clone(), label)),
                Err(e) => {
                    self.state.rng = rng_before;
                    return Err(match e {
                        e @ Error::OracleFailed { .. } => e,
                        other => Error::OracleFailed {
                            doc_id: id.clone(),
                            reason: other.to_string(),
                        },
                    });
                }
            }
        }
        let probabilities = batch.iter().map(|(_, p)| *p).collect();
        self.commit_with_scores(&labels, Some(probabilities))?;
        Ok(labels.len())
    }

    /// Steps until the budget is exhausted or no unjudged document remains.
    pub fn run(&mut self, oracle: &mut dyn LabelOracle) -> Result<()> {
        while self.step(oracle)? > 0 {}
        Ok(())
    }

    /// F1 of the hateful class when judged documents keep their human label
    /// and the current model labels the rest at `threshold`.
    pub fn hybrid_f1(&mut self, gold: &[bool], threshold: f64) -> Result<f64> {
        let scores = self.score_all()?;
        let judged = self.state.labels();
        let assembled: Vec<bool> = self
            .collection
            .iter()
            .zip(&scores)
            .map(|(d, p)| judged.get(d.doc_id.as_str()).copied().unwrap_or(*p >= threshold))
            .collect();
        Ok(metrics::class_metrics(&assembled, gold, true)?.f1)
    }
}

/// Failure inside [`run_loop`], with the learner when it had been created.
#[derive(Debug)]
pub struct LoopError {
    pub error: Error,
    pub learner: Option<Box<ActiveLearner>>,
}

impl std::fmt::Display for LoopError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for LoopError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Labels the seeds through `oracle`, then runs the loop to exhaustion.
pub fn run_loop(
    collection: Arc<DocumentCollection>,
    features: Arc<Vec<FeatureVector>>,
    oracle: &mut dyn LabelOracle,
    config: ALConfig,
) -> std::result::Result<ActiveLearner, LoopError> {
    let fail = |error| LoopError { error, learner: None };
    config.validate(&collection).map_err(fail)?;
    let seed_labels = config
        .seed_doc_ids
        .iter()
        .map(|id| oracle.label(collection.get(id).expect("validated")))
        .collect::<Result<Vec<bool>>>()
        .map_err(fail)?;
    let mut learner = ActiveLearner::new(collection, features, config, &seed_labels).map_err(fail)?;
    match learner.run(oracle) {
        Ok(()) => Ok(learner),
        Err(error) => Err(LoopError {
            error,
            learner: Some(Box::new(learner)),
        }),
    }
}

/// Chooses `per_class` hateful and `per_class` non-hateful seed documents
/// uniformly at random from gold labels, hateful ones first.
pub fn sample_seeds(collection: &DocumentCollection, per_class: usize, rng_seed: u64) -> Result<Vec<String>> {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let labels = collection.require_gold_labels()?;
    let mut out = Vec::with_capacity(2 * per_class);
    for class in [true, false] {
        let pool: Vec<&str> = collection
            .iter()
            .zip(&labels)
            .filter(|(_, l)| **l == class)
            .map(|(d, _)| d.doc_id.as_str())
            .collect();
        if pool.len() < per_class {
            return Err(Error::InvalidInput(format!(
                "need {per_class} seeds of class {class}, only {} available",
                pool.len()
            )));
        }
        out.extend(pool.choose_multiple(&mut rng, per_class).map(|s| s.to_string()));
    }
    Ok(out)
}

/// Expected final number of judged documents when the pool never runs dry.
pub fn expected_judged(seeds: usize, batch_size: usize, budget: usize) -> usize {
    seeds + batch_size * ((budget - seeds) / batch_size)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(n: usize) -> Arc<DocumentCollection> {
        let docs = (0..n)
            .map(|i| {
                let hateful = i % 5 == 0;
                let text = if hateful {
                    format!("vile slur number{i}")
                } else {
                    format!("nice weather number{i}")
                };
                Document::new(format!("d{i:03}"), text).with_label(hateful)
            })
            .collect();
        Arc::new(DocumentCollection::new(docs, "fixture").unwrap())
    }

    fn setup(strategy: &str, u: usize, budget: usize) -> (Arc<DocumentCollection>, Arc<Vec<FeatureVector>>, ALConfig) {
        let c = fixture(40);
        let mut cfg = ALConfig::new(strategy, u, budget);
        cfg.seed_doc_ids = vec!["d000".into(), "d001".into()];
        let x = featurize_collection(&c, cfg.feature_mode, &cfg.vocabulary, None).unwrap();
        (c, Arc::new(x), cfg)
    }

    #[test]
    fn budget_equal_to_seeds_runs_no_iterations() {
        let (c, x, cfg) = setup("cal", 1, 2);
        let l = run_loop(c, x, &mut GoldOracle, cfg).unwrap();
        assert_eq!(l.state().judged.len(), 2);
        assert_eq!(l.state().iteration, 0);
    }

    #[test]
    fn one_batch_of_budget_runs_one_iteration() {
        let (c, x, cfg) = setup("sal", 3, 5);
        let l = run_loop(c, x, &mut GoldOracle, cfg).unwrap();
        assert_eq!(l.state().iteration, 1);
        assert_eq!(l.state().judged.len(), 5);
    }

    #[test]
    fn final_count_follows_batch_arithmetic() {
        for (u, b) in [(1, 10), (3, 12), (4, 17), (7, 39)] {
            let (c, x, cfg) = setup("spl", u, b);
            let l = run_loop(c, x, &mut GoldOracle, cfg).unwrap();
            assert_eq!(l.state().judged.len(), expected_judged(2, u, b), "u={u} b={b}");
            assert_eq!(l.state().remaining_budget + l.state().judged.len(), b);
        }
    }

    #[test]
    fn pool_smaller_than_batch_takes_the_rest() {
        let (c, x, cfg) = setup("cal", 7, 40);
        let l = run_loop(c, x, &mut GoldOracle, cfg).unwrap();
        // 38 unjudged after seeds: five batches of 7, then the last 3
        assert_eq!(l.state().judged.len(), 40);
        assert_eq!(l.state().history.last().unwrap().doc_ids.len(), 3);
    }

    #[test]
    fn seeds_must_cover_both_classes() {
        let (c, x, mut cfg) = setup("cal", 1, 5);
        cfg.seed_doc_ids = vec!["d001".into(), "d002".into()];
        let err = run_loop(c, x, &mut GoldOracle, cfg).unwrap_err();
        assert!(matches!(err.error, Error::InvalidConfig(_)));
    }

    #[test]
    fn invalid_configs() {
        let (c, _, cfg) = setup("cal", 1, 5);
        let mut too_small = cfg.clone();
        too_small.budget = 1;
        assert!(too_small.validate(&c).is_err());
        let mut unknown = cfg.clone();
        unknown.strategy = "qbc".into();
        assert!(unknown.validate(&c).is_err());
        let mut huge = cfg.clone();
        huge.budget = 41;
        assert!(huge.validate(&c).is_err());
        let mut missing = cfg;
        missing.seed_doc_ids.push("nope".into());
        assert!(missing.validate(&c).is_err());
    }

    #[test]
    fn oracle_failure_preserves_resumable_state() {
        let (c, x, cfg) = setup("spl", 2, 20);
        let mut calls = 0;
        let mut flaky = |d: &Document| {
            calls += 1;
            if calls == 9 {
                Err(Error::InvalidInput("annotator went home".into()))
            } else {
                Ok(d.gold_label.unwrap())
            }
        };
        let err = run_loop(c.clone(), x.clone(), &mut flaky, cfg.clone()).unwrap_err();
        assert!(matches!(err.error, Error::OracleFailed { .. }));
        let mut learner = *err.learner.unwrap();
        // seeds (2 calls) + 3 full batches (6 calls); the 9th call failed
        assert_eq!(learner.state().judged.len(), 8);
        assert_eq!(learner.state().remaining_budget, 12);
        learner.run(&mut GoldOracle).unwrap();
        let clean = run_loop(c, x, &mut GoldOracle, cfg).unwrap();
        assert_eq!(learner.state(), clean.state());
    }

    #[test]
    fn checkpoint_resume_matches_uninterrupted_run() {
        let (c, x, cfg) = setup("cal", 1, 15);
        let seeds = [true, false];
        let mut a = ActiveLearner::new(c.clone(), x.clone(), cfg.clone(), &seeds).unwrap();
        for _ in 0..4 {
            a.step(&mut GoldOracle).unwrap();
        }
        let json = serde_json::to_string(&a.checkpoint()).unwrap();
        let mut b = ActiveLearner::resume(c.clone(), x.clone(), serde_json::from_str(&json).unwrap()).unwrap();
        a.run(&mut GoldOracle).unwrap();
        b.run(&mut GoldOracle).unwrap();
        assert_eq!(a.state(), b.state());
    }

    #[test]
    fn commit_rejects_rejudging() {
        let (c, x, cfg) = setup("cal", 2, 10);
        let mut l = ActiveLearner::new(c, x, cfg, &[true, false]).unwrap();
        assert!(l.commit(&[("d000".into(), true)]).is_err());
        assert!(l.commit(&[("d005".into(), true), ("d005".into(), true)]).is_err());
        assert!(l
            .commit(&[("d005".into(), true), ("d006".into(), false), ("d007".into(), false)])
            .is_err());
        l.commit(&[("d005".into(), true)]).unwrap();
        assert!(l.is_judged("d005"));
        assert_eq!(l.state().remaining_budget, 7);
    }

    #[test]
    fn seed_sampling_is_class_balanced() {
        let c = fixture(40);
        let seeds = sample_seeds(&c, 3, 4).unwrap();
        assert_eq!(seeds.len(), 6);
        let labels: Vec<bool> = seeds.iter().map(|s| c.get(s).unwrap().gold_label.unwrap()).collect();
        assert_eq!(labels, [true, true, true, false, false, false]);
        assert_eq!(seeds, sample_seeds(&c, 3, 4).unwrap());
        assert!(sample_seeds(&c, 9, 4).is_err());
    }
}
