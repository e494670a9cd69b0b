//! Retrospective evaluation of selection strategies on gold-labeled data,
//! plus a synthetic labeled corpus for desk-scale experiments.
//!
//! Each run starts from randomly drawn seeds, lets a simulated annotator
//! answer from gold labels, and records how much of the hateful content has
//! been judged and how good the hybrid human+machine labeling is at a series
//! of judging-cost checkpoints.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::active_learning::{sample_seeds, ALConfig, ActiveLearner, LabelOracle, StrategyRegistry};
use crate::corpus::{Document, DocumentCollection};
use crate::features::{token_spans, FeatureMode, FeatureVector};
use crate::metrics::trapezoid_auc;
use crate::models::ClassifierRegistry;
use crate::{Error, Result};

/// Token inventory and mixing for [`make_synthetic_corpus`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VocabSpec {
    /// Tokens indicative of the hateful class.
    pub positive_tokens: usize,
    /// Tokens indicative of the non-hateful class.
    pub negative_tokens: usize,
    /// Tokens shared by both classes.
    pub noise_tokens: usize,
    pub min_length: usize,
    pub max_length: usize,
    /// Probability that a token is drawn from the class-indicative set
    /// rather than the shared set.
    pub signal_strength: f64,
    /// Share of non-hateful documents that draw indicative tokens from the
    /// hateful set at half the signal strength instead of their own set.
    pub confuser_rate: f64,
}

impl Default for VocabSpec {
    fn default() -> Self {
        Self {
            positive_tokens: 3,
            negative_tokens: 30,
            noise_tokens: 300,
            min_length: 6,
            max_length: 12,
            signal_strength: 0.15,
            confuser_rate: 0.0,
        }
    }
}

impl VocabSpec {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.positive_tokens == 0 || self.negative_tokens == 0 || self.noise_tokens == 0 {
            return bad("every token set needs at least one token");
        }
        if self.min_length == 0 || self.min_length > self.max_length {
            return bad("document lengths must satisfy 1 <= min_length <= max_length");
        }
        if !(0.0..=1.0).contains(&self.signal_strength) || !(0.0..=1.0).contains(&self.confuser_rate) {
            return bad("signal_strength and confuser_rate must lie in [0, 1]");
        }
        Ok(())
    }
}

fn positive_token(i: usize) -> String {
    format!("hx{i}")
}

fn negative_token(i: usize) -> String {
    format!("nx{i}")
}

fn noise_token(i: usize) -> String {
    format!("w{i}")
}

/// Labeled documents with exactly `round(n_docs · positive_rate)` hateful
/// ones. Each token comes from the document's class-indicative set with
/// probability `signal_strength`, otherwise from the shared set.
pub fn make_synthetic_corpus(
    n_docs: usize,
    positive_rate: f64,
    vocab: &VocabSpec,
    rng_seed: u64,
) -> Result<DocumentCollection> {
    vocab.validate()?;
    if !(positive_rate > 0.0 && positive_rate < 1.0) {
        return Err(Error::InvalidConfig(format!("positive_rate {positive_rate} outside (0, 1)")));
    }
    let n_pos = (n_docs as f64 * positive_rate).round() as usize;
    if n_pos == 0 || n_pos == n_docs {
        return Err(Error::InvalidConfig(format!(
            "{n_docs} documents at rate {positive_rate} leave a class empty"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut positives = vec![false; n_docs];
    for i in rand::seq::index::sample(&mut rng, n_docs, n_pos) {
        positives[i] = true;
    }
    let mut seen = BTreeSet::new();
    let mut docs = Vec::with_capacity(n_docs);
    for (i, &hateful) in positives.iter().enumerate() {
        let confuser = !hateful && rng.gen_bool(vocab.confuser_rate);
        let mut attempts = 0;
        let text = loop {
            let len = rng.gen_range(vocab.min_length..=vocab.max_length);
            let tokens: Vec<String> = (0..len)
                .map(|_| {
                    if confuser {
                        if rng.gen_bool(vocab.signal_strength / 2.0) {
                            positive_token(rng.gen_range(0..vocab.positive_tokens))
                        } else {
                            noise_token(rng.gen_range(0..vocab.noise_tokens))
                        }
                    } else if rng.gen_bool(vocab.signal_strength) {
                        if hateful {
                            positive_token(rng.gen_range(0..vocab.positive_tokens))
                        } else {
                            negative_token(rng.gen_range(0..vocab.negative_tokens))
                        }
                    } else {
                        noise_token(rng.gen_range(0..vocab.noise_tokens))
                    }
                })
                .collect();
            let text = tokens.join(" ");
            if seen.insert(text.clone()) {
                break text;
            }
            attempts += 1;
            if attempts > 1000 {
                return Err(Error::InvalidConfig("vocabulary too small for distinct documents".into()));
            }
        };
        docs.push(Document::new(format!("syn-{:05}", i + 1), text).with_label(hateful));
    }
    DocumentCollection::new(docs, format!("synthetic corpus, seed {rng_seed}"))
}

/// Dense document vectors: the normalized mean of a random vector per
/// distinct token, so documents sharing tokens lie close together.
pub fn make_synthetic_embeddings(
    collection: &DocumentCollection,
    dim: usize,
    rng_seed: u64,
) -> Result<BTreeMap<String, FeatureVector>> {
    if dim == 0 {
        return Err(Error::InvalidConfig("embedding dimension must be at least 1".into()));
    }
    let vocab: BTreeSet<String> = collection
        .iter()
        .flat_map(|d| token_spans(&d.text).into_iter().map(|t| t.token))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let table: HashMap<String, Vec<f64>> = vocab
        .into_iter()
        .map(|t| (t, (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect();
    collection
        .iter()
        .map(|d| {
            let mut v = vec![0.0; dim];
            for t in token_spans(&d.text) {
                for (a, b) in v.iter_mut().zip(&table[&t.token]) {
                    *a += b;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
            }
            Ok((d.doc_id.clone(), FeatureVector::dense(v)))
        })
        .collect()
}

/// Parameters of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpusSpec {
    pub n_docs: usize,
    pub positive_rate: f64,
    #[serde(default)]
    pub vocab: VocabSpec,
    #[serde(default)]
    pub rng_seed: u64,
}

impl SyntheticCorpusSpec {
    pub fn generate(&self) -> Result<DocumentCollection> {
        make_synthetic_corpus(self.n_docs, self.positive_rate, &self.vocab, self.rng_seed)
    }
}

/// A synthetic corpus together with the simulation to run on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticExperiment {
    pub corpus: SyntheticCorpusSpec,
    pub simulation: SimulationSpec,
}

impl SyntheticExperiment {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

fn default_checkpoints() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub strategies: Vec<String>,
    pub feature_modes: Vec<FeatureMode>,
    /// Judging-cost fractions in (0, 1], strictly increasing.
    #[serde(default = "default_checkpoints")]
    pub checkpoints: Vec<f64>,
    pub repetitions: usize,
    /// Run `r` uses seed `base_seed + r` for seed sampling and selection.
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_seeds_per_class")]
    pub seeds_per_class: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Probability that the simulated annotator flips a gold label.
    #[serde(default)]
    pub label_noise: f64,
    /// Template for every run; strategy, budget, seeds, seed and feature
    /// mode are filled in per run.
    pub al: ALConfig,
}

fn default_seeds_per_class() -> usize {
    5
}

fn default_threshold() -> f64 {
    0.5
}

impl SimulationSpec {
    pub fn new(strategies: &[&str], repetitions: usize) -> Self {
        Self {
            strategies: strategies.iter().map(|s| s.to_string()).collect(),
            feature_modes: vec![FeatureMode::Tfidf],
            checkpoints: default_checkpoints(),
            repetitions,
            base_seed: 0,
            seeds_per_class: default_seeds_per_class(),
            threshold: default_threshold(),
            label_noise: 0.0,
            al: ALConfig::new("cal", 1, 1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.strategies.is_empty() || self.feature_modes.is_empty() {
            return bad("need at least one strategy and one feature mode".into());
        }
        let registry = StrategyRegistry::default();
        for s in &self.strategies {
            registry.get(s)?;
        }
        if self.checkpoints.is_empty() {
            return bad("need at least one checkpoint".into());
        }
        if self.checkpoints.iter().any(|c| !(*c > 0.0 && *c <= 1.0)) {
            return bad("checkpoints must lie in (0, 1]".into());
        }
        if self.checkpoints.windows(2).any(|w| w[1] <= w[0]) {
            return bad("checkpoints must strictly increase".into());
        }
        if self.seeds_per_class == 0 {
            return bad("seeds_per_class must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) || !(0.0..=1.0).contains(&self.label_noise) {
            return bad("threshold and label_noise must lie in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub strategy: String,
    pub feature_mode: FeatureMode,
    pub seed: u64,
    pub cost_fraction: f64,
    pub f1_hybrid: f64,
    pub hate_found_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAuc {
    pub strategy: String,
    pub feature_mode: FeatureMode,
    pub seed: u64,
    pub auc_f1_hybrid: f64,
    pub auc_hate_found: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucSummary {
    pub strategy: String,
    pub feature_mode: FeatureMode,
    pub runs: usize,
    pub mean_auc_f1_hybrid: f64,
    pub mean_auc_hate_found: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    /// Per run: the seed-set point followed by one point per checkpoint.
    pub curves: Vec<CurvePoint>,
    pub runs: Vec<RunAuc>,
    pub summary: Vec<AucSummary>,
}

impl SimulationResult {
    pub fn summary_for(&self, strategy: &str, mode: FeatureMode) -> Option<&AucSummary> {
        self.summary
            .iter()
            .find(|s| s.strategy.eq_ignore_ascii_case(strategy) && s.feature_mode == mode)
    }

    /// Mean of `metric` over runs of one strategy and mode at the first
    /// point whose cost reaches `cost`.
    pub fn mean_at(&self, strategy: &str, mode: FeatureMode, cost: f64, metric: impl Fn(&CurvePoint) -> f64) -> Option<f64> {
        let mut by_seed: BTreeMap<u64, f64> = BTreeMap::new();
        for p in self
            .curves
            .iter()
            .filter(|p| p.strategy.eq_ignore_ascii_case(strategy) && p.feature_mode == mode)
        {
            if p.cost_fraction + 1e-12 >= cost {
                by_seed.entry(p.seed).or_insert_with(|| metric(p));
            }
        }
        (!by_seed.is_empty()).then(|| by_seed.values().sum::<f64>() / by_seed.len() as f64)
    }

    /// CSV with a header row, one line per curve point.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("strategy,feature_mode,seed,cost_fraction,f1_hybrid,hate_found_fraction\n");
        for p in &self.curves {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.strategy, p.feature_mode, p.seed, p.cost_fraction, p.f1_hybrid, p.hate_found_fraction
            ));
        }
        out
    }
}

/// Gold lookup with optional label flips drawn from a seeded generator.
struct SimulatedAnnotator<'a> {
    gold: &'a HashMap<&'a str, bool>,
    noise: f64,
    rng: ChaCha8Rng,
}

impl LabelOracle for SimulatedAnnotator<'_> {
    fn label(&mut self, doc: &Document) -> Result<bool> {
        let label = *self.gold.get(doc.doc_id.as_str()).ok_or_else(|| Error::OracleFailed {
            doc_id: doc.doc_id.clone(),
            reason: "no gold label".into(),
        })?;
        Ok(if self.noise > 0.0 && self.rng.gen_bool(self.noise) {
            !label
        } else {
            label
        })
    }
}

/// Runs every (strategy, feature mode, repetition) combination with the
/// built-in classifier families.
pub fn simulate(
    collection: &DocumentCollection,
    spec: &SimulationSpec,
    embeddings: Option<&BTreeMap<String, FeatureVector>>,
) -> Result<SimulationResult> {
    simulate_with(collection, spec, embeddings, Arc::new(ClassifierRegistry::default()))
}

pub fn simulate_with(
    collection: &DocumentCollection,
    spec: &SimulationSpec,
    embeddings: Option<&BTreeMap<String, FeatureVector>>,
    classifiers: Arc<ClassifierRegistry>,
) -> Result<SimulationResult> {
    spec.validate()?;
    let gold = collection.require_gold_labels()?;
    let collection = Arc::new(collection.clone());
    let mut featurized = Vec::new();
    for &mode in &spec.feature_modes {
        let features = crate::active_learning::featurize_collection(&collection, mode, &spec.al.vocabulary, embeddings)?;
        featurized.push((mode, Arc::new(features)));
    }
    let mut jobs = Vec::new();
    for strategy in &spec.strategies {
        for (mode, features) in &featurized {
            for r in 0..spec.repetitions {
                jobs.push((strategy.clone(), *mode, features.clone(), spec.base_seed + r as u64));
            }
        }
    }
    let outcomes = jobs
        .into_par_iter()
        .map(|(strategy, mode, features, seed)| {
            run_one(&collection, features, &gold, &strategy, mode, seed, spec, classifiers.clone())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut curves = Vec::new();
    let mut runs = Vec::new();
    for (points, auc) in outcomes {
        curves.extend(points);
        runs.push(auc);
    }
    let mut summary: Vec<AucSummary> = Vec::new();
    for run in &runs {
        match summary
            .iter_mut()
            .find(|s| s.strategy == run.strategy && s.feature_mode == run.feature_mode)
        {
            Some(s) => {
                s.runs += 1;
                s.mean_auc_f1_hybrid += run.auc_f1_hybrid;
                s.mean_auc_hate_found += run.auc_hate_found;
            }
            None => summary.push(AucSummary {
                strategy: run.strategy.clone(),
                feature_mode: run.feature_mode,
                runs: 1,
                mean_auc_f1_hybrid: run.auc_f1_hybrid,
                mean_auc_hate_found: run.auc_hate_found,
            }),
        }
    }
    for s in &mut summary {
        s.mean_auc_f1_hybrid /= s.runs as f64;
        s.mean_auc_hate_found /= s.runs as f64;
    }
    Ok(SimulationResult { curves, runs, summary })
}

#[allow(clippy::too_many_arguments)]
fn run_one(
    collection: &Arc<DocumentCollection>,
    features: Arc<Vec<FeatureVector>>,
    gold: &[bool],
    strategy: &str,
    mode: FeatureMode,
    seed: u64,
    spec: &SimulationSpec,
    classifiers: Arc<ClassifierRegistry>,
) -> Result<(Vec<CurvePoint>, RunAuc)> {
    let n = collection.len();
    let total_positive = gold.iter().filter(|g| **g).count();
    let gold_by_id: HashMap<&str, bool> = collection.iter().map(|d| d.doc_id.as_str()).zip(gold.iter().copied()).collect();
    let mut config = spec.al.clone();
    config.strategy = strategy.to_string();
    config.budget = n;
    config.seed_doc_ids = sample_seeds(collection, spec.seeds_per_class, seed)?;
    config.rng_seed = seed;
    config.feature_mode = mode;
    let mut oracle = SimulatedAnnotator {
        gold: &gold_by_id,
        noise: spec.label_noise,
        rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_a11),
    };
    let seed_labels = config
        .seed_doc_ids
        .iter()
        .map(|id| oracle.label(collection.get(id).expect("sampled from collection")))
        .collect::<Result<Vec<_>>>()?;
    let mut learner = ActiveLearner::with_registry(collection.clone(), features, config, &seed_labels, classifiers)?;

    let sample = |learner: &mut ActiveLearner| -> Result<CurvePoint> {
        let judged = &learner.state().judged;
        let found = judged.iter().filter(|j| gold_by_id[j.doc_id.as_str()]).count();
        let cost_fraction = judged.len() as f64 / n as f64;
        Ok(CurvePoint {
            strategy: strategy.to_string(),
            feature_mode: mode,
            seed,
            cost_fraction,
            f1_hybrid: learner.hybrid_f1(gold, spec.threshold)?,
            hate_found_fraction: found as f64 / total_positive as f64,
        })
    };

    let mut points = vec![sample(&mut learner)?];
    let targets: Vec<usize> = spec
        .checkpoints
        .iter()
        .map(|c| ((c * n as f64).round() as usize).max(1))
        .collect();
    let mut next = 0;
    loop {
        let judged = learner.state().judged.len();
        while next < targets.len() && targets[next] <= judged {
            points.push(sample(&mut learner)?);
            next += 1;
        }
        if next == targets.len() || learner.step(&mut oracle)? == 0 {
            break;
        }
    }
    // Checkpoints beyond what the budget allows are sampled at the end state.
    while next < targets.len() {
        points.push(sample(&mut learner)?);
        next += 1;
    }

    let auc = |metric: fn(&CurvePoint) -> f64| -> Result<f64> {
        let mut curve: Vec<(f64, f64)> = Vec::with_capacity(points.len());
        for p in &points {
            if curve.last().is_none_or(|(x, _)| p.cost_fraction > *x) {
                curve.push((p.cost_fraction, metric(p)));
            }
        }
        if curve.len() < 2 {
            return Ok(0.0);
        }
        trapezoid_auc(&curve)
    };
    let run = RunAuc {
        strategy: strategy.to_string(),
        feature_mode: mode,
        seed,
        auc_f1_hybrid: auc(|p| p.f1_hybrid)?,
        auc_hate_found: auc(|p| p.hate_found_fraction)?,
    };
    Ok((points, run))
}
