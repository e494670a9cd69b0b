use std::collections::BTreeMap;

use anyhow::{bail, Result};
use rarepool_core::annotation::{
    aggregate_collection, filter_consistent, group_by_doc, AggregatedLabel, AggregationConfig, Annotation,
};
use rarepool_core::corpus::{contains_hate_word, Document, DocumentCollection, HateLexicon};
use rarepool_core::metrics::{
    self, partitioned_report, relative_coverage_with, AgreementTable, CoverageDefinition, PartitionedReport,
    SelfConsistencyCounts,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub items: usize,
    pub raters: usize,
    pub raw_agreement: f64,
    pub fleiss_kappa: f64,
    pub gwet_ac1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationReport {
    pub documents: usize,
    pub kept: usize,
    pub discarded: usize,
    /// Documents whose annotation count differs from the expected one.
    pub incomplete: usize,
    pub self_consistency: SelfConsistencyCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub definition: CoverageDefinition,
    pub hateful: usize,
    pub hateful_with_lexicon: usize,
    pub percent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelOrigin {
    /// Majority labels of consistent, fully annotated documents.
    Annotations,
    /// Labels stored in the collection.
    Gold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub documents: usize,
    pub labels_from: LabelOrigin,
    pub labeled: usize,
    pub hateful: usize,
    pub prevalence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreement: Option<AgreementReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregation: Option<AggregationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_coverage: Option<CoverageReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<PartitionedReport>,
}

#[derive(Debug, Clone, Default)]
pub struct ReportInputs<'a> {
    pub annotations: Option<&'a [Annotation]>,
    pub aggregation: AggregationConfig,
    pub lexicon: Option<&'a HateLexicon>,
    /// Predicted labels by document id.
    pub predictions: Option<&'a BTreeMap<String, bool>>,
    pub coverage: CoverageDefinition,
}

/// Aggregated labels split into kept and discarded, plus per-document
/// bookkeeping shared by the `aggregate` and `metrics` commands.
#[derive(Debug, Clone)]
pub struct AggregationOutcome {
    pub all: Vec<AggregatedLabel>,
    pub kept: Vec<AggregatedLabel>,
    pub discarded: Vec<AggregatedLabel>,
    pub report: AggregationReport,
}

pub fn run_aggregation(
    collection: &DocumentCollection,
    annotations: &[Annotation],
    config: &AggregationConfig,
) -> Result<AggregationOutcome> {
    let all = aggregate_collection(collection, annotations, config)?;
    let incomplete = all
        .iter()
        .filter(|l| l.annotator_count != config.expected_annotators)
        .count();
    let filtered = filter_consistent(all.clone());
    let report = AggregationReport {
        documents: all.len(),
        kept: filtered.kept.len(),
        discarded: filtered.discarded.len(),
        incomplete,
        self_consistency: metrics::self_consistency_counts(annotations, &all),
    };
    Ok(AggregationOutcome {
        all,
        kept: filtered.kept,
        discarded: filtered.discarded,
        report,
    })
}

/// Agreement, prevalence, relative coverage and partitioned classification
/// metrics for one collection.
pub fn dataset_report(collection: &DocumentCollection, inputs: &ReportInputs<'_>) -> Result<DatasetReport> {
    let mut agreement = None;
    let mut aggregation = None;
    let (labels_from, labeled): (LabelOrigin, Vec<(&Document, bool)>) = match inputs.annotations {
        Some(anns) => {
            let raters = inputs.aggregation.expected_annotators;
            let table = AgreementTable::from_annotations(&group_by_doc(anns), raters)?;
            agreement = Some(AgreementReport {
                items: table.items(),
                raters,
                raw_agreement: metrics::raw_agreement(&table),
                fleiss_kappa: metrics::fleiss_kappa(&table),
                gwet_ac1: metrics::gwet_ac1(&table)?,
            });
            let outcome = run_aggregation(collection, anns, &inputs.aggregation)?;
            aggregation = Some(outcome.report);
            let labeled = outcome
                .kept
                .iter()
                .map(|l| (collection.get(&l.doc_id).expect("aggregated from collection"), l.final_label.is_hateful()))
                .collect();
            (LabelOrigin::Annotations, labeled)
        }
        None => {
            let gold = collection.require_gold_labels()?;
            (LabelOrigin::Gold, collection.iter().zip(gold).collect())
        }
    };
    let hateful = labeled.iter().filter(|(_, l)| *l).count();
    let prevalence = if labeled.is_empty() {
        None
    } else {
        Some(metrics::prevalence(&labeled.iter().map(|(_, l)| *l).collect::<Vec<_>>())?)
    };

    let relative_coverage = inputs.lexicon.map(|lex| {
        let with = labeled
            .iter()
            .filter(|(d, l)| *l && contains_hate_word(d, lex))
            .count();
        let (percent, note) = match relative_coverage_with(hateful, with, inputs.coverage) {
            Ok(p) => (Some(p), None),
            Err(e) => (None, Some(e.to_string())),
        };
        CoverageReport {
            definition: inputs.coverage,
            hateful,
            hateful_with_lexicon: with,
            percent,
            note,
        }
    });

    let classification = match (inputs.predictions, inputs.lexicon) {
        (Some(preds), Some(lex)) => {
            let mut docs = Vec::new();
            let mut p = Vec::new();
            let mut g = Vec::new();
            for (d, label) in &labeled {
                let Some(pred) = preds.get(&d.doc_id) else {
                    bail!("no prediction for document {}", d.doc_id);
                };
                docs.push((*d).clone());
                p.push(*pred);
                g.push(*label);
            }
            Some(partitioned_report(&docs, &p, &g, lex)?)
        }
        (Some(_), None) => bail!("partitioned classification metrics need a lexicon"),
        _ => None,
    };

    Ok(DatasetReport {
        documents: collection.len(),
        labels_from,
        labeled: labeled.len(),
        hateful,
        prevalence,
        agreement,
        aggregation,
        relative_coverage,
        classification,
    })
}
