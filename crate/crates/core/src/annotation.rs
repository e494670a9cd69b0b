//! The structured annotation schema, per-annotator self-consistency and
//! per-document aggregation.
//!
//! An annotation decomposes the hateful/non-hateful decision into evidence:
//! highlighted violent or derogatory language (or an implicit-action flag),
//! a highlighted or named target, and the targeted group. The direct final
//! judgment is recorded separately so the two can be compared.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, DocumentCollection};
use crate::features::token_spans;
use crate::{Error, Result};

/// Half-open range of Unicode scalar values in the document's cleaned text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImplicitAction {
    IncitingViolence,
    DerogatoryLanguage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TargetGroup {
    Body,
    Gender,
    Ideology,
    Race,
    Religion,
    SexualOrientation,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub doc_id: String,
    pub worker_id: String,
    #[serde(default)]
    pub violence_spans: Vec<Span>,
    #[serde(default)]
    pub derogatory_spans: Vec<Span>,
    #[serde(default)]
    pub implicit_action: Option<ImplicitAction>,
    #[serde(default)]
    pub target_spans: Vec<Span>,
    #[serde(default)]
    pub implicit_target_name: Option<String>,
    #[serde(default)]
    pub target_group: Option<TargetGroup>,
    pub final_hateful: bool,
    #[serde(default)]
    pub explanation: Option<String>,
    /// Set by the annotator for pornographic content; the interface forces
    /// `final_hateful` to false when it is checked.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub pornographic: bool,
}

impl Annotation {
    pub fn new(doc_id: impl Into<String>, worker_id: impl Into<String>, final_hateful: bool) -> Self {
        Self {
            doc_id: doc_id.into(),
            worker_id: worker_id.into(),
            violence_spans: Vec::new(),
            derogatory_spans: Vec::new(),
            implicit_action: None,
            target_spans: Vec::new(),
            implicit_target_name: None,
            target_group: None,
            final_hateful,
            explanation: None,
            pornographic: false,
        }
    }

    pub fn spans(&self, field: SpanField) -> Vec<Span> {
        match field {
            SpanField::Violence => self.violence_spans.clone(),
            SpanField::Derogatory => self.derogatory_spans.clone(),
            SpanField::Target => self.target_spans.clone(),
            SpanField::Any => [&self.violence_spans, &self.derogatory_spans, &self.target_spans]
                .into_iter()
                .flatten()
                .copied()
                .collect(),
        }
    }

    /// Checks span bounds against the document text (`text_len` scalar
    /// values) and that spans within one field do not overlap.
    pub fn validate(&self, text_len: usize) -> Result<()> {
        for field in [&self.violence_spans, &self.derogatory_spans, &self.target_spans] {
            let mut sorted = field.clone();
            sorted.sort();
            for s in &sorted {
                if s.start >= s.end || s.end > text_len {
                    return Err(Error::InvalidSpan {
                        start: s.start,
                        end: s.end,
                        len: text_len,
                    });
                }
            }
            if let Some(w) = sorted.windows(2).find(|w| w[1].start < w[0].end) {
                return Err(Error::InvalidInput(format!(
                    "overlapping spans {}..{} and {}..{}",
                    w[0].start, w[0].end, w[1].start, w[1].end
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanField {
    Violence,
    Derogatory,
    Target,
    /// All three fields combined.
    Any,
}

/// Hateful by the annotator's own evidence: some violent or derogatory
/// language (explicit or implicit) and some target (explicit or implicit).
pub fn infer_hateful(a: &Annotation) -> bool {
    let action = !a.violence_spans.is_empty() || !a.derogatory_spans.is_empty() || a.implicit_action.is_some();
    let target = !a.target_spans.is_empty() || a.implicit_target_name.is_some();
    action && target
}

pub fn self_consistent(a: &Annotation) -> bool {
    a.final_hateful == infer_hateful(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalLabel {
    Hateful,
    NonHateful,
}

impl FinalLabel {
    pub fn is_hateful(self) -> bool {
        self == FinalLabel::Hateful
    }
}

/// A target group, or no majority among annotators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GroupDecision {
    Body,
    Gender,
    Ideology,
    Race,
    Religion,
    SexualOrientation,
    Other,
    Undecided,
}

impl From<TargetGroup> for GroupDecision {
    fn from(g: TargetGroup) -> Self {
        match g {
            TargetGroup::Body => GroupDecision::Body,
            TargetGroup::Gender => GroupDecision::Gender,
            TargetGroup::Ideology => GroupDecision::Ideology,
            TargetGroup::Race => GroupDecision::Race,
            TargetGroup::Religion => GroupDecision::Religion,
            TargetGroup::SexualOrientation => GroupDecision::SexualOrientation,
            TargetGroup::Other => GroupDecision::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Explicitness {
    Explicit,
    Implicit,
    Undecided,
}

/// Per-annotator explicitness: a highlighted target is explicit, a named
/// one implicit.
fn explicitness_vote(a: &Annotation) -> Option<Explicitness> {
    if !a.target_spans.is_empty() {
        Some(Explicitness::Explicit)
    } else if a.implicit_target_name.is_some() {
        Some(Explicitness::Implicit)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatedLabel {
    pub doc_id: String,
    pub final_label: FinalLabel,
    pub consistent: bool,
    pub target_group: Option<GroupDecision>,
    pub explicitness: Option<Explicitness>,
    pub annotator_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregationConfig {
    /// Annotators expected per document.
    pub expected_annotators: usize,
    /// When set, a document is inconsistent if any single annotator is.
    pub strict_consistency: bool,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self {
            expected_annotators: 3,
            strict_consistency: false,
        }
    }
}

/// The value holding a strict majority of `votes` (abstentions included in
/// the total), if any.
fn strict_majority<T: Eq + std::hash::Hash + Copy>(votes: impl IntoIterator<Item = Option<T>>) -> Option<T> {
    let mut counts: HashMap<T, usize> = HashMap::new();
    let mut total = 0;
    for v in votes {
        total += 1;
        if let Some(v) = v {
            *counts.entry(v).or_default() += 1;
        }
    }
    counts.into_iter().find(|(_, c)| 2 * c > total).map(|(v, _)| v)
}

fn majority_hateful(votes: impl IntoIterator<Item = bool>) -> bool {
    strict_majority(votes.into_iter().map(Some)) == Some(true)
}

/// Majority vote over one document's annotations. Even splits resolve to
/// non-hateful; group and explicitness without a strict majority resolve
/// to `UNDECIDED`.
pub fn aggregate(doc: &Document, annotations: &[Annotation], config: &AggregationConfig) -> Result<AggregatedLabel> {
    if annotations.is_empty() {
        return Err(Error::InvalidInput(format!("no annotations for document {}", doc.doc_id)));
    }
    if let Some(a) = annotations.iter().find(|a| a.doc_id != doc.doc_id) {
        return Err(Error::ForeignAnnotation {
            expected: doc.doc_id.clone(),
            found: a.doc_id.clone(),
        });
    }
    let hateful = majority_hateful(annotations.iter().map(|a| a.final_hateful));
    let consistent = if config.strict_consistency {
        annotations.iter().all(self_consistent)
    } else {
        hateful == majority_hateful(annotations.iter().map(infer_hateful))
    };
    let (target_group, explicitness) = if hateful {
        let group = strict_majority(annotations.iter().map(|a| a.target_group.map(GroupDecision::from)))
            .unwrap_or(GroupDecision::Undecided);
        let explicit = strict_majority(annotations.iter().map(explicitness_vote)).unwrap_or(Explicitness::Undecided);
        (Some(group), Some(explicit))
    } else {
        (None, None)
    };
    Ok(AggregatedLabel {
        doc_id: doc.doc_id.clone(),
        final_label: if hateful {
            FinalLabel::Hateful
        } else {
            FinalLabel::NonHateful
        },
        consistent,
        target_group,
        explicitness,
        annotator_count: annotations.len(),
    })
}

/// Groups annotations by document, preserving first-seen order within each.
pub fn group_by_doc(annotations: &[Annotation]) -> BTreeMap<String, Vec<Annotation>> {
    let mut out: BTreeMap<String, Vec<Annotation>> = BTreeMap::new();
    for a in annotations {
        out.entry(a.doc_id.clone()).or_default().push(a.clone());
    }
    out
}

/// Aggregates every annotated document, in collection order.
pub fn aggregate_collection(
    collection: &DocumentCollection,
    annotations: &[Annotation],
    config: &AggregationConfig,
) -> Result<Vec<AggregatedLabel>> {
    let grouped = group_by_doc(annotations);
    if let Some(id) = grouped.keys().find(|id| collection.get(id).is_none()) {
        return Err(Error::InvalidRecord {
            doc_id: id.clone(),
            reason: "annotated document not in collection".into(),
        });
    }
    collection
        .iter()
        .filter_map(|d| grouped.get(&d.doc_id).map(|anns| aggregate(d, anns, config)))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyFilter {
    pub kept: Vec<AggregatedLabel>,
    pub discarded: Vec<AggregatedLabel>,
}

/// Splits labels into consistent (kept) and inconsistent (discarded).
pub fn filter_consistent(labels: Vec<AggregatedLabel>) -> ConsistencyFilter {
    let (kept, discarded) = labels.into_iter().partition(|l| l.consistent);
    ConsistencyFilter { kept, discarded }
}

/// One 0/1 value per token (unstemmed tokenization): 1 when every character
/// of the token lies inside some span of `field`. Annotators without spans
/// get all zeros.
pub fn rationale_token_labels(doc: &Document, annotation: &Annotation, field: SpanField) -> Result<Vec<u8>> {
    let len = doc.char_len();
    let spans = annotation.spans(field);
    let mut covered = vec![false; len];
    for s in &spans {
        if s.start >= s.end || s.end > len {
            return Err(Error::InvalidSpan {
                start: s.start,
                end: s.end,
                len,
            });
        }
        covered[s.start..s.end].iter_mut().for_each(|c| *c = true);
    }
    Ok(token_spans(&doc.text)
        .iter()
        .map(|t| u8::from(covered[t.start..t.end].iter().all(|c| *c)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ann(worker: &str, hateful: bool) -> Annotation {
        Annotation::new("d", worker, hateful)
    }

    fn evidenced(worker: &str, group: TargetGroup) -> Annotation {
        Annotation {
            derogatory_spans: vec![Span::new(8, 13)],
            target_spans: vec![Span::new(0, 3)],
            target_group: Some(group),
            ..ann(worker, true)
        }
    }

    fn doc() -> Document {
        Document::new("d", "you are trash")
    }

    #[test]
    fn inference_needs_action_and_target() {
        assert!(infer_hateful(&evidenced("w", TargetGroup::Race)));
        let no_target = Annotation {
            derogatory_spans: vec![Span::new(8, 13)],
            ..ann("w", true)
        };
        assert!(!infer_hateful(&no_target));
        assert!(!self_consistent(&no_target));
        assert!(!infer_hateful(&ann("w", false)));
        assert!(self_consistent(&ann("w", false)));
        let implicit = Annotation {
            implicit_action: Some(ImplicitAction::IncitingViolence),
            implicit_target_name: Some("immigrants".into()),
            ..ann("w", true)
        };
        assert!(infer_hateful(&implicit));
    }

    #[test]
    fn majority_group() {
        let anns = [
            evidenced("a", TargetGroup::Race),
            evidenced("b", TargetGroup::Race),
            Annotation {
                target_group: Some(TargetGroup::Gender),
                ..ann("c", false)
            },
        ];
        let l = aggregate(&doc(), &anns, &AggregationConfig::default()).unwrap();
        assert_eq!(l.final_label, FinalLabel::Hateful);
        assert!(l.consistent);
        assert_eq!(l.target_group, Some(GroupDecision::Race));
        assert_eq!(l.annotator_count, 3);
    }

    #[test]
    fn three_distinct_groups_undecided() {
        let anns = [
            evidenced("a", TargetGroup::Race),
            evidenced("b", TargetGroup::Gender),
            evidenced("c", TargetGroup::Ideology),
        ];
        let l = aggregate(&doc(), &anns, &AggregationConfig::default()).unwrap();
        assert_eq!(l.target_group, Some(GroupDecision::Undecided));
        assert_eq!(l.explicitness, Some(Explicitness::Explicit));
    }

    #[test]
    fn final_votes_without_evidence_are_inconsistent() {
        let anns = [ann("a", true), ann("b", true), ann("c", false)];
        let l = aggregate(&doc(), &anns, &AggregationConfig::default()).unwrap();
        assert_eq!(l.final_label, FinalLabel::Hateful);
        assert!(!l.consistent);
    }

    #[test]
    fn even_split_is_non_hateful() {
        let anns = [evidenced("a", TargetGroup::Race), ann("b", false)];
        let l = aggregate(&doc(), &anns, &AggregationConfig::default()).unwrap();
        assert_eq!(l.final_label, FinalLabel::NonHateful);
        assert_eq!(l.target_group, None);
        assert_eq!(l.explicitness, None);
    }

    #[test]
    fn strict_mode_flags_any_inconsistent_annotator() {
        let anns = [
            evidenced("a", TargetGroup::Race),
            evidenced("b", TargetGroup::Race),
            ann("c", true),
        ];
        let lenient = aggregate(&doc(), &anns, &AggregationConfig::default()).unwrap();
        assert!(lenient.consistent);
        let strict = AggregationConfig {
            strict_consistency: true,
            ..Default::default()
        };
        assert!(!aggregate(&doc(), &anns, &strict).unwrap().consistent);
    }

    #[test]
    fn foreign_and_missing_annotations_rejected() {
        let other = Annotation::new("zzz", "w", false);
        assert!(matches!(
            aggregate(&doc(), &[other], &AggregationConfig::default()),
            Err(Error::ForeignAnnotation { .. })
        ));
        assert!(aggregate(&doc(), &[], &AggregationConfig::default()).is_err());
    }

    #[test]
    fn explicitness_votes() {
        let implicit = |w: &str| Annotation {
            implicit_action: Some(ImplicitAction::DerogatoryLanguage),
            implicit_target_name: Some("them".into()),
            target_group: Some(TargetGroup::Religion),
            ..ann(w, true)
        };
        let anns = [implicit("a"), implicit("b"), evidenced("c", TargetGroup::Religion)];
        let l = aggregate(&doc(), &anns, &AggregationConfig::default()).unwrap();
        assert_eq!(l.explicitness, Some(Explicitness::Implicit));
        assert_eq!(l.target_group, Some(GroupDecision::Religion));
        let anns = [implicit("a"), evidenced("b", TargetGroup::Religion), ann("c", true)];
        let l = aggregate(&doc(), &anns, &AggregationConfig::default()).unwrap();
        assert_eq!(l.explicitness, Some(Explicitness::Undecided));
    }

    #[test]
    fn filter_counts() {
        let mk = |i: usize, consistent: bool| AggregatedLabel {
            doc_id: format!("d{i}"),
            final_label: FinalLabel::NonHateful,
            consistent,
            target_group: None,
            explicitness: None,
            annotator_count: 3,
        };
        let labels: Vec<_> = (0..10).map(|i| mk(i, i != 3 && i != 7)).collect();
        let f = filter_consistent(labels.clone());
        assert_eq!((f.kept.len(), f.discarded.len()), (8, 2));
        assert!(filter_consistent(labels.iter().map(|l| mk(0, true).clone_with(l)).collect())
            .discarded
            .is_empty());
        assert!(filter_consistent(vec![mk(1, false), mk(2, false)]).kept.is_empty());
    }

    impl AggregatedLabel {
        fn clone_with(&self, other: &AggregatedLabel) -> AggregatedLabel {
            AggregatedLabel {
                doc_id: other.doc_id.clone(),
                ..self.clone()
            }
        }
    }

    #[test]
    fn rationale_tokens() {
        let d = doc();
        let full = Annotation {
            derogatory_spans: vec![Span::new(8, 13)],
            ..ann("w", true)
        };
        assert_eq!(rationale_token_labels(&d, &full, SpanField::Derogatory).unwrap(), [0, 0, 1]);
        let partial = Annotation {
            derogatory_spans: vec![Span::new(8, 11)],
            ..ann("w", true)
        };
        assert_eq!(rationale_token_labels(&d, &partial, SpanField::Derogatory).unwrap(), [0, 0, 0]);
        assert_eq!(rationale_token_labels(&d, &ann("w", false), SpanField::Any).unwrap(), [0, 0, 0]);
        let oob = Annotation {
            target_spans: vec![Span::new(10, 20)],
            ..ann("w", true)
        };
        assert!(rationale_token_labels(&d, &oob, SpanField::Target).is_err());
    }

    #[test]
    fn rationale_adjacent_spans_cover_a_token() {
        let d = doc();
        let split = Annotation {
            derogatory_spans: vec![Span::new(8, 10), Span::new(10, 13)],
            ..ann("w", true)
        };
        assert_eq!(rationale_token_labels(&d, &split, SpanField::Derogatory).unwrap(), [0, 0, 1]);
    }

    #[test]
    fn span_validation() {
        let a = Annotation {
            target_spans: vec![Span::new(0, 5), Span::new(4, 8)],
            ..ann("w", true)
        };
        assert!(a.validate(13).is_err());
        let b = Annotation {
            target_spans: vec![Span::new(0, 5)],
            derogatory_spans: vec![Span::new(4, 8)],
            ..ann("w", true)
        };
        assert!(b.validate(13).is_ok());
        assert!(b.validate(6).is_err());
        let empty = Annotation {
            violence_spans: vec![Span::new(3, 3)],
            ..ann("w", true)
        };
        assert!(empty.validate(13).is_err());
    }

    #[test]
    fn wire_format() {
        let a = evidenced("w1", TargetGroup::SexualOrientation);
        let json = serde_json::to_value(&a).unwrap();
        assert_eq!(json["target_group"], "SEXUAL_ORIENTATION");
        assert_eq!(json["target_spans"][0]["end"], 3);
        assert!(json.get("pornographic").is_none());
        let l = aggregate(&doc(), &[a], &AggregationConfig::default()).unwrap();
        let json = serde_json::to_value(&l).unwrap();
        assert_eq!(json["final_label"], "hateful");
        assert_eq!(json["explicitness"], "EXPLICIT");
    }

    fn arb_annotation() -> impl Strategy<Value = Annotation> {
        (any::<bool>(), any::<bool>(), any::<bool>(), any::<bool>(), 0usize..8).prop_map(
            |(final_hateful, action, target, named, group)| {
                let groups = [
                    TargetGroup::Body,
                    TargetGroup::Gender,
                    TargetGroup::Ideology,
                    TargetGroup::Race,
                    TargetGroup::Religion,
                    TargetGroup::SexualOrientation,
                    TargetGroup::Other,
                ];
                Annotation {
                    derogatory_spans: if action { vec![Span::new(8, 13)] } else { vec![] },
                    target_spans: if target { vec![Span::new(0, 3)] } else { vec![] },
                    implicit_target_name: named.then(|| "x".to_string()),
                    target_group: groups.get(group).copied(),
                    ..Annotation::new("d", "w", final_hateful)
                }
            },
        )
    }

    proptest! {
        #[test]
        fn aggregate_is_permutation_invariant(anns in prop::collection::vec(arb_annotation(), 1..6), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut shuffled = anns.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            for strict in [false, true] {
                let cfg = AggregationConfig { strict_consistency: strict, ..Default::default() };
                prop_assert_eq!(aggregate(&doc(), &anns, &cfg).unwrap(), aggregate(&doc(), &shuffled, &cfg).unwrap());
            }
        }

        #[test]
        fn inferred_hateful_copies_aggregate_consistently(a in arb_annotation()) {
            prop_assume!(infer_hateful(&a));
            let a = Annotation { final_hateful: true, ..a };
            let l = aggregate(&doc(), &[a.clone(), a.clone(), a], &AggregationConfig::default()).unwrap();
            prop_assert_eq!(l.final_label, FinalLabel::Hateful);
            prop_assert!(l.consistent);
        }

        #[test]
        fn rationale_length_matches_tokens(a in arb_annotation()) {
            let d = doc();
            for field in [SpanField::Violence, SpanField::Derogatory, SpanField::Target, SpanField::Any] {
                prop_assert_eq!(rationale_token_labels(&d, &a, field).unwrap().len(), 3);
            }
        }

        #[test]
        fn filter_partitions_input(flags in prop::collection::vec(any::<bool>(), 0..30)) {
            let labels: Vec<AggregatedLabel> = flags.iter().enumerate().map(|(i, c)| AggregatedLabel {
                doc_id: format!("d{i}"), final_label: FinalLabel::Hateful, consistent: *c,
                target_group: None, explicitness: None, annotator_count: 3,
            }).collect();
            let f = filter_consistent(labels.clone());
            prop_assert_eq!(f.kept.len() + f.discarded.len(), labels.len());
            prop_assert!(f.kept.iter().all(|l| l.consistent));
            prop_assert!(f.discarded.iter().all(|l| !l.consistent));
            let mut ids: Vec<_> = f.kept.iter().chain(&f.discarded).map(|l| l.doc_id.clone()).collect();
            ids.sort();
            let mut expected: Vec<_> = labels.iter().map(|l| l.doc_id.clone()).collect();
            expected.sort();
            prop_assert_eq!(ids, expected);
        }
    }
}
