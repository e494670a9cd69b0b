//! Corpus and model evaluation measures.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::{self_consistent, AggregatedLabel, Annotation};
use crate::corpus::{contains_hate_word, Document, HateLexicon};
use crate::features::FeatureVector;
use crate::models::BinaryClassifier;
use crate::{Error, Result};

/// Items × categories rating counts with a constant number of raters per item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementTable {
    counts: Vec<Vec<u64>>,
    raters: u64,
}

impl AgreementTable {
    pub fn new(counts: Vec<Vec<u64>>) -> Result<Self> {
        let first = counts
            .first()
            .ok_or_else(|| Error::InvalidInput("agreement table has no items".into()))?;
        let categories = first.len();
        let raters: u64 = first.iter().sum();
        if raters < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 raters per item, got {raters}")));
        }
        for (i, row) in counts.iter().enumerate() {
            if row.len() != categories {
                return Err(Error::InvalidInput(format!("item {i} has {} categories, expected {categories}", row.len())));
            }
            let sum: u64 = row.iter().sum();
            if sum != raters {
                return Err(Error::InvalidInput(format!("item {i} has {sum} ratings, expected {raters}")));
            }
        }
        Ok(Self { counts, raters })
    }

    /// Builds a table from per-item category assignments (one entry per rater).
    pub fn from_ratings(ratings: &[Vec<usize>], categories: usize) -> Result<Self> {
        let counts = ratings
            .iter()
            .map(|item| {
                let mut row = vec![0u64; categories];
                for &c in item {
                    *row.get_mut(c)
                        .ok_or_else(|| Error::InvalidInput(format!("category {c} out of range 0..{categories}")))? += 1;
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(counts)
    }

    /// Binary final-judgment table (non-hateful, hateful) over documents
    /// carrying exactly `raters` annotations; others are skipped.
    pub fn from_annotations(grouped: &BTreeMap<String, Vec<Annotation>>, raters: usize) -> Result<Self> {
        let rows = grouped
            .values()
            .filter(|anns| anns.len() == raters)
            .map(|anns| {
                let yes = anns.iter().filter(|a| a.final_hateful).count() as u64;
                vec![raters as u64 - yes, yes]
            })
            .collect();
        Self::new(rows)
    }

    pub fn items(&self) -> usize {
        self.counts.len()
    }

    pub fn categories(&self) -> usize {
        self.counts[0].len()
    }

    pub fn raters(&self) -> u64 {
        self.raters
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.counts
    }

    /// Share of all ratings falling in each category.
    pub fn category_proportions(&self) -> Vec<f64> {
        let total = (self.items() as u64 * self.raters) as f64;
        (0..self.categories())
            .map(|q| self.counts.iter().map(|r| r[q]).sum::<u64>() as f64 / total)
            .collect()
    }
}

/// Mean pairwise agreement per item.
pub fn raw_agreement(table: &AgreementTable) -> f64 {
    let r = table.raters;
    let pairs = (r * (r - 1)) as f64;
    let total: f64 = table
        .counts
        .iter()
        .map(|row| row.iter().map(|&n| n * n.saturating_sub(1)).sum::<u64>() as f64 / pairs)
        .sum();
    total / table.items() as f64
}

/// Fleiss' kappa. Returns 1.0 when chance agreement is already perfect.
pub fn fleiss_kappa(table: &AgreementTable) -> f64 {
    let p_bar = raw_agreement(table);
    let p_e: f64 = table.category_proportions().iter().map(|p| p * p).sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return 1.0;
    }
    (p_bar - p_e) / (1.0 - p_e)
}

/// Gwet's first-order agreement coefficient.
pub fn gwet_ac1(table: &AgreementTable) -> Result<f64> {
    let q = table.categories();
    if q < 2 {
        return Err(Error::InvalidInput("AC1 needs at least 2 categories".into()));
    }
    let p_bar = raw_agreement(table);
    let p_e = table.category_proportions().iter().map(|p| p * (1.0 - p)).sum::<f64>() / (q - 1) as f64;
    Ok((p_bar - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold members of the class.
    pub support: usize,
}

/// One-vs-rest precision, recall and F1 for `class`. Zero denominators give 0.
pub fn class_metrics(predictions: &[bool], gold: &[bool], class: bool) -> Result<ClassMetrics> {
    if predictions.len() != gold.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            gold.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &g) in predictions.iter().zip(gold) {
        match (p == class, g == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ClassMetrics {
        precision,
        recall,
        f1,
        support: tp + fn_,
    })
}

pub fn prevalence(labels: &[bool]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::InvalidInput("prevalence of an empty label set".into()));
    }
    Ok(labels.iter().filter(|l| **l).count() as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageDefinition {
    /// Hateful posts beyond the lexicon, relative to lexicon-matching ones.
    #[default]
    RelativeToLexicon,
    /// Hateful posts without a lexicon match, as a share of all hateful posts.
    ShareOfHateful,
}

/// Percentage of hateful posts found beyond a lexicon, from `n_total`
/// hateful posts of which `n_with_lexicon` contain a lexicon term.
pub fn relative_coverage(n_total: usize, n_with_lexicon: usize) -> Result<f64> {
    relative_coverage_with(n_total, n_with_lexicon, CoverageDefinition::RelativeToLexicon)
}

pub fn relative_coverage_with(n_total: usize, n_with_lexicon: usize, definition: CoverageDefinition) -> Result<f64> {
    if n_with_lexicon > n_total {
        return Err(Error::InvalidInput(format!(
            "{n_with_lexicon} lexicon matches exceed {n_total} hateful posts"
        )));
    }
    let denominator = match definition {
        CoverageDefinition::RelativeToLexicon => n_with_lexicon,
        CoverageDefinition::ShareOfHateful => n_total,
    };
    if denominator == 0 {
        return Err(Error::RelativeCoverageUndefined);
    }
    Ok(100.0 * (n_total - n_with_lexicon) as f64 / denominator as f64)
}

/// Splits documents by lexicon match: (without hate words, with hate words).
pub fn partition_by_lexicon<'a>(docs: &'a [Document], lexicon: &HateLexicon) -> (Vec<&'a Document>, Vec<&'a Document>) {
    docs.iter().partition(|d| !contains_hate_word(d, lexicon))
}

/// Hateful-class F1 when judged documents take their human label and the
/// model labels the rest at `threshold`.
pub fn hybrid_f1(
    docs: &[Document],
    features: &[FeatureVector],
    judged: &BTreeMap<String, bool>,
    model: &dyn BinaryClassifier,
    gold: &[bool],
    threshold: f64,
) -> Result<f64> {
    if docs.len() != features.len() || docs.len() != gold.len() {
        return Err(Error::InvalidInput("documents, features and gold labels differ in length".into()));
    }
    let assembled = docs
        .iter()
        .zip(features)
        .map(|(d, x)| match judged.get(&d.doc_id) {
            Some(label) => Ok(*label),
            None => Ok(model.predict(&d.doc_id, x)? >= threshold),
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(class_metrics(&assembled, gold, true)?.f1)
}

/// Area under a piecewise-linear curve whose x values strictly increase.
pub fn trapezoid_auc(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidInput("trapezoid rule needs at least 2 points".into()));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidInput("curve contains non-finite values".into()));
    }
    points
        .windows(2)
        .map(|w| {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if x1 <= x0 {
                return Err(Error::InvalidInput(format!("x values must strictly increase ({x0} then {x1})")));
            }
            Ok((x1 - x0) * (y0 + y1) / 2.0)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfConsistencyCounts {
    pub annotations: usize,
    pub consistent_annotations: usize,
    pub documents: usize,
    pub consistent_documents: usize,
}

impl SelfConsistencyCounts {
    pub fn annotation_rate(&self) -> Option<f64> {
        (self.annotations > 0).then(|| self.consistent_annotations as f64 / self.annotations as f64)
    }

    pub fn document_rate(&self) -> Option<f64> {
        (self.documents > 0).then(|| self.consistent_documents as f64 / self.documents as f64)
    }
}

/// Self-consistency counted per annotation and per aggregated document.
pub fn self_consistency_counts(annotations: &[Annotation], labels: &[AggregatedLabel]) -> SelfConsistencyCounts {
    SelfConsistencyCounts {
        annotations: annotations.len(),
        consistent_annotations: annotations.iter().filter(|a| self_consistent(a)).count(),
        documents: labels.len(),
        consistent_documents: labels.iter().filter(|l| l.consistent).count(),
    }
}

/// Index split preserving the class ratio: each class is shuffled and its
/// first `round(test_fraction · size)` members go to the test side.
pub fn stratified_split(labels: &[bool], test_fraction: f64, rng_seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::InvalidInput(format!("test fraction {test_fraction} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in [true, false] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        let n_test = (test_fraction * members.len() as f64).round() as usize;
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionMetrics {
    pub documents: usize,
    pub hateful: ClassMetrics,
    pub non_hateful: ClassMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionedReport {
    pub without_hate_words: Option<PartitionMetrics>,
    pub with_hate_words: Option<PartitionMetrics>,
    pub all: PartitionMetrics,
}

/// Per-class metrics overall and within each lexicon partition. Empty
/// partitions are reported as `None`.
pub fn partitioned_report(
    docs: &[Document],
    predictions: &[bool],
    gold: &[bool],
    lexicon: &HateLexicon,
) -> Result<PartitionedReport> {
    if docs.len() != predictions.len() || docs.len() != gold.len() {
        return Err(Error::InvalidInput("documents, predictions and gold labels differ in length".into()));
    }
    let part = |keep: &dyn Fn(&Document) -> bool| -> Result<Option<PartitionMetrics>> {
        let idx: Vec<usize> = (0..docs.len()).filter(|&i| keep(&docs[i])).collect();
        if idx.is_empty() {
            return Ok(None);
        }
        let p: Vec<bool> = idx.iter().map(|&i| predictions[i]).collect();
        let g: Vec<bool> = idx.iter().map(|&i| gold[i]).collect();
        Ok(Some(PartitionMetrics {
            documents: idx.len(),
            hateful: class_metrics(&p, &g, true)?,
            non_hateful: class_metrics(&p, &g, false)?,
        }))
    };
    Ok(PartitionedReport {
        without_hate_words: part(&|d| !contains_hate_word(d, lexicon))?,
        with_hate_words: part(&|d| contains_hate_word(d, lexicon))?,
        all: part(&|_| true)?.ok_or_else(|| Error::InvalidInput("no documents to evaluate".into()))?,
    })
}
