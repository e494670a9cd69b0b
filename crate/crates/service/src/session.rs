use std::collections::{BTreeMap, HashSet, VecDeque};
use std::sync::Arc;

use rarepool_core::active_learning::{ALConfig, ActiveLearner};
use rarepool_core::annotation::{
    aggregate, infer_hateful, self_consistent, AggregatedLabel, AggregationConfig, Annotation,
};
use rarepool_core::corpus::DocumentCollection;
use rarepool_core::features::FeatureVector;
use rarepool_core::metrics::{self_consistency_counts, SelfConsistencyCounts};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, ServiceError};

pub const CONTENT_WARNING: &str = "Content notice: the posts in this session may contain slurs, threats and \
other abusive language directed at people because of who they are. Pause or stop whenever you need to. \
If the material affects you, consider reaching out to a support service.";

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    /// The annotator's final judgment.
    #[default]
    Final,
    /// The label implied by the highlighted evidence.
    Inferred,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    /// Name of a collection registered with the service.
    pub collection: String,
    pub al: ALConfig,
    /// Labels for `al.seed_doc_ids`; gold labels are used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_labels: Option<Vec<bool>>,
    #[serde(default = "one")]
    pub annotators_per_doc: usize,
    #[serde(default)]
    pub label_source: LabelSource,
    #[serde(default)]
    pub strict_consistency: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommittedLabel {
    pub doc_id: String,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        session_id: String,
        collection_fingerprint: String,
        config: SessionConfig,
    },
    BatchProposed {
        doc_ids: Vec<String>,
    },
    Annotation {
        annotation: Annotation,
    },
    BatchCommitted {
        labels: Vec<CommittedLabel>,
    },
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Exhausted,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentView {
    pub doc_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextBatch {
    pub session_id: String,
    pub status: SessionStatus,
    /// Documents of the outstanding batch this worker can still annotate.
    pub documents: Vec<DocumentView>,
    /// The whole outstanding batch.
    pub batch: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitAck {
    pub doc_id: String,
    pub worker_id: String,
    pub consistent: bool,
    pub inferred_hateful: bool,
    pub batch_complete: bool,
    pub status: SessionStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub collection: String,
    pub strategy: String,
    pub status: SessionStatus,
    pub batch_size: usize,
    pub annotators_per_doc: usize,
    pub budget_total: usize,
    pub budget_spent: usize,
    pub budget_remaining: usize,
    pub outstanding: Vec<String>,
    pub fully_annotated: usize,
    pub hateful_by_majority: usize,
    pub prevalence: Option<f64>,
    pub consistency: SelfConsistencyCounts,
    pub content_warning: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExportLine {
    Seed { doc_id: String, label: bool },
    Annotation(Annotation),
    Aggregated(AggregatedLabel),
}

/// Digest of document ids and texts, recorded so a log is never replayed
/// against a different collection.
pub fn collection_fingerprint(collection: &DocumentCollection) -> String {
    let mut hasher = Sha256::new();
    for d in collection.iter() {
        hasher.update(d.doc_id.as_bytes());
        hasher.update([0]);
        hasher.update(d.text.as_bytes());
        hasher.update([b'\n']);
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// One live annotation session. Every mutation returns the events that
/// describe it; replaying those events on a fresh session reproduces it.
#[derive(Debug)]
pub struct Session {
    id: String,
    config: SessionConfig,
    aggregation: AggregationConfig,
    collection: Arc<DocumentCollection>,
    learner: ActiveLearner,
    seeds: Vec<(String, bool)>,
    annotations: Vec<Annotation>,
    keys: HashSet<(String, String)>,
    per_doc: BTreeMap<String, Vec<usize>>,
    completed: Vec<String>,
    outstanding: Vec<String>,
    aborted: bool,
}

impl Session {
    /// Validates `config`, trains the seed model and returns the session
    /// with its creation event.
    pub fn create(
        id: String,
        mut config: SessionConfig,
        collection: Arc<DocumentCollection>,
        features: Arc<Vec<FeatureVector>>,
    ) -> Result<(Self, Event)> {
        if !valid_session_id(&id) {
            return Err(ServiceError::BadRequest(format!(
                "session id `{id}` must be 1-64 characters of letters, digits, '-' or '_'"
            )));
        }
        if config.annotators_per_doc == 0 {
            return Err(ServiceError::BadRequest("annotators_per_doc must be at least 1".into()));
        }
        config.al.validate(&collection)?;
        let seed_labels = match &config.seed_labels {
            Some(labels) => labels.clone(),
            None => config
                .al
                .seed_doc_ids
                .iter()
                .map(|id| {
                    collection.get(id).and_then(|d| d.gold_label).ok_or_else(|| {
                        ServiceError::BadRequest(format!("seed document {id} has no label and none was supplied"))
                    })
                })
                .collect::<Result<Vec<bool>>>()?,
        };
        config.seed_labels = Some(seed_labels);
        config.session_id = Some(id.clone());
        let event = Event::Created {
            session_id: id,
            collection_fingerprint: collection_fingerprint(&collection),
            config,
        };
        let session = Self::from_created(&event, collection, features)?;
        Ok((session, event))
    }

    fn from_created(
        event: &Event,
        collection: Arc<DocumentCollection>,
        features: Arc<Vec<FeatureVector>>,
    ) -> Result<Self> {
        let Event::Created {
            session_id,
            collection_fingerprint: fingerprint,
            config,
        } = event
        else {
            return Err(ServiceError::Internal("log does not start with a creation event".into()));
        };
        if *fingerprint != collection_fingerprint(&collection) {
            return Err(ServiceError::Internal(format!(
                "session {session_id}: collection `{}` changed since the session was created",
                config.collection
            )));
        }
        let seed_labels = config.seed_labels.clone().unwrap_or_default();
        let learner = ActiveLearner::new(collection.clone(), features, config.al.clone(), &seed_labels)?;
        let seeds = config.al.seed_doc_ids.iter().cloned().zip(seed_labels).collect();
        Ok(Self {
            id: session_id.clone(),
            aggregation: AggregationConfig {
                expected_annotators: config.annotators_per_doc,
                strict_consistency: config.strict_consistency,
            },
            config: config.clone(),
            collection,
            learner,
            seeds,
            annotations: Vec::new(),
            keys: HashSet::new(),
            per_doc: BTreeMap::new(),
            completed: Vec::new(),
            outstanding: Vec::new(),
            aborted: false,
        })
    }

    /// Rebuilds a session from its logged events. Also returns commit
    /// events implied by the log but missing from it (a crash between the
    /// annotation and its commit), which the caller should append.
    pub fn replay(
        events: &[Event],
        collection: Arc<DocumentCollection>,
        features: Arc<Vec<FeatureVector>>,
    ) -> Result<(Self, Vec<Event>)> {
        let first = events
            .first()
            .ok_or_else(|| ServiceError::Internal("empty session log".into()))?;
        let mut session = Self::from_created(first, collection, features)?;
        let mut pending: VecDeque<Event> = VecDeque::new();
        let diverged = |i: usize, what: &str| ServiceError::Internal(format!("replay diverged at event {}: {what}", i + 1));
        for (i, event) in events.iter().enumerate().skip(1) {
            match event {
                Event::Created { .. } => return Err(diverged(i, "second creation event")),
                Event::BatchProposed { .. } => {
                    if !pending.is_empty() {
                        return Err(diverged(i, "batch proposed before previous commit"));
                    }
                    let produced = session.open_batch()?;
                    if produced.as_ref() != Some(event) {
                        return Err(diverged(i, "different batch proposed"));
                    }
                }
                Event::Annotation { annotation } => {
                    let (_, produced) = session.submit(annotation.clone())?;
                    pending.extend(produced.into_iter().filter(|e| matches!(e, Event::BatchCommitted { .. })));
                }
                Event::BatchCommitted { .. } => {
                    if pending.pop_front().as_ref() != Some(event) {
                        return Err(diverged(i, "different batch committed"));
                    }
                }
                Event::Aborted => {
                    session.aborted = true;
                }
            }
        }
        Ok((session, pending.into()))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn status(&self) -> SessionStatus {
        if self.aborted {
            SessionStatus::Aborted
        } else if self.outstanding.is_empty() && self.learner.is_exhausted() {
            SessionStatus::Exhausted
        } else {
            SessionStatus::Active
        }
    }

    pub fn outstanding(&self) -> &[String] {
        &self.outstanding
    }

    fn open_batch(&mut self) -> Result<Option<Event>> {
        if self.aborted || !self.outstanding.is_empty() || self.learner.is_exhausted() {
            return Ok(None);
        }
        let doc_ids = self.learner.propose()?;
        if doc_ids.is_empty() {
            return Ok(None);
        }
        self.outstanding = doc_ids.clone();
        Ok(Some(Event::BatchProposed { doc_ids }))
    }

    fn annotation_count(&self, doc_id: &str) -> usize {
        self.per_doc.get(doc_id).map_or(0, Vec::len)
    }

    /// The outstanding batch, proposing one first if none is open. Documents
    /// already annotated by `worker` or already complete are left out.
    pub fn next_documents(&mut self, worker: Option<&str>) -> Result<(NextBatch, Vec<Event>)> {
        let events: Vec<Event> = self.open_batch()?.into_iter().collect();
        let k = self.config.annotators_per_doc;
        let documents = self
            .outstanding
            .iter()
            .filter(|id| self.annotation_count(id) < k)
            .filter(|id| worker.is_none_or(|w| !self.keys.contains(&((*id).clone(), w.to_string()))))
            .map(|id| {
                let doc = self.collection.get(id).expect("proposed from collection");
                DocumentView {
                    doc_id: doc.doc_id.clone(),
                    text: doc.text.clone(),
                }
            })
            .collect();
        Ok((
            NextBatch {
                session_id: self.id.clone(),
                status: self.status(),
                documents,
                batch: self.outstanding.clone(),
            },
            events,
        ))
    }

    /// Stores an annotation; once every outstanding document has its full
    /// set of annotations the batch is committed to the learner.
    pub fn submit(&mut self, annotation: Annotation) -> Result<(SubmitAck, Vec<Event>)> {
        let k = self.config.annotators_per_doc;
        let doc_id = annotation.doc_id.clone();
        if self.aborted {
            return Err(ServiceError::Conflict(format!("session {} was aborted", self.id)));
        }
        if !self.outstanding.contains(&doc_id) {
            return Err(ServiceError::Conflict(format!(
                "document {doc_id} is not in the outstanding batch"
            )));
        }
        let key = (doc_id.clone(), annotation.worker_id.clone());
        if self.keys.contains(&key) {
            return Err(ServiceError::Conflict(format!(
                "worker {} already annotated document {doc_id}",
                annotation.worker_id
            )));
        }
        if self.annotation_count(&doc_id) >= k {
            return Err(ServiceError::Conflict(format!(
                "document {doc_id} already has {k} annotations"
            )));
        }
        if annotation.worker_id.is_empty() {
            return Err(ServiceError::Validation("worker_id must not be empty".into()));
        }
        let doc = self.collection.get(&doc_id).expect("outstanding ids come from the collection");
        annotation.validate(doc.char_len())?;
        if annotation.pornographic && annotation.final_hateful {
            return Err(ServiceError::Validation(
                "a post flagged as pornographic cannot be judged hateful".into(),
            ));
        }

        let consistent = self_consistent(&annotation);
        let inferred_hateful = infer_hateful(&annotation);
        let mut events = vec![Event::Annotation {
            annotation: annotation.clone(),
        }];
        self.per_doc.entry(doc_id.clone()).or_default().push(self.annotations.len());
        self.annotations.push(annotation);
        self.keys.insert(key);
        if self.annotation_count(&doc_id) == k {
            self.completed.push(doc_id.clone());
        }

        let batch_complete = self.outstanding.iter().all(|id| self.annotation_count(id) == k);
        if batch_complete {
            let labels: Vec<(String, bool)> = self
                .outstanding
                .iter()
                .map(|id| (id.clone(), self.model_label(id)))
                .collect();
            self.learner.commit(&labels)?;
            self.outstanding.clear();
            events.push(Event::BatchCommitted {
                labels: labels
                    .into_iter()
                    .map(|(doc_id, label)| CommittedLabel { doc_id, label })
                    .collect(),
            });
        }
        let ack = SubmitAck {
            worker_id: self.annotations.last().expect("just pushed").worker_id.clone(),
            doc_id,
            consistent,
            inferred_hateful,
            batch_complete,
            status: self.status(),
        };
        Ok((ack, events))
    }

    /// Majority vote over the document's annotations; ties count as
    /// non-hateful.
    fn model_label(&self, doc_id: &str) -> bool {
        let anns = &self.per_doc[doc_id];
        let yes = anns
            .iter()
            .map(|&i| &self.annotations[i])
            .filter(|a| match self.config.label_source {
                LabelSource::Final => a.final_hateful,
                LabelSource::Inferred => infer_hateful(a),
            })
            .count();
        2 * yes > anns.len()
    }

    pub fn abort(&mut self) -> Option<Event> {
        if self.aborted {
            return None;
        }
        self.aborted = true;
        Some(Event::Aborted)
    }

    fn doc_annotations(&self, doc_id: &str) -> Vec<Annotation> {
        self.per_doc[doc_id].iter().map(|&i| self.annotations[i].clone()).collect()
    }

    /// Aggregated labels of documents with the configured number of
    /// annotations, in completion order.
    pub fn aggregated(&self) -> Result<Vec<AggregatedLabel>> {
        self.completed
            .iter()
            .map(|id| {
                let doc = self.collection.get(id).expect("annotated ids come from the collection");
                Ok(aggregate(doc, &self.doc_annotations(id), &self.aggregation)?)
            })
            .collect()
    }

    pub fn summary(&self) -> Result<SessionSummary> {
        let aggregated = self.aggregated()?;
        let hateful = aggregated.iter().filter(|l| l.final_label.is_hateful()).count();
        let state = self.learner.state();
        Ok(SessionSummary {
            session_id: self.id.clone(),
            collection: self.config.collection.clone(),
            strategy: self.config.al.strategy.clone(),
            status: self.status(),
            batch_size: self.config.al.batch_size,
            annotators_per_doc: self.config.annotators_per_doc,
            budget_total: self.config.al.budget,
            budget_spent: state.judged.len(),
            budget_remaining: state.remaining_budget,
            outstanding: self.outstanding.clone(),
            fully_annotated: aggregated.len(),
            hateful_by_majority: hateful,
            prevalence: (!aggregated.is_empty()).then(|| hateful as f64 / aggregated.len() as f64),
            consistency: self_consistency_counts(&self.annotations, &aggregated),
            content_warning: CONTENT_WARNING.to_string(),
        })
    }

    /// Seeds, then raw annotations in arrival order, then aggregated labels.
    pub fn export_lines(&self) -> Result<Vec<ExportLine>> {
        let mut lines: Vec<ExportLine> = self
            .seeds
            .iter()
            .map(|(doc_id, label)| ExportLine::Seed {
                doc_id: doc_id.clone(),
                label: *label,
            })
            .collect();
        lines.extend(self.annotations.iter().cloned().map(ExportLine::Annotation));
        lines.extend(self.aggregated()?.into_iter().map(ExportLine::Aggregated));
        Ok(lines)
    }

    pub fn export_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for line in self.export_lines()? {
            out.push_str(&serde_json::to_string(&line).map_err(|e| ServiceError::Internal(e.to_string()))?);
            out.push('\n');
        }
        Ok(out)
    }
}
