use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use rarepool_core::active_learning::featurize_collection;
use rarepool_core::annotation::Annotation;
use rarepool_core::corpus::DocumentCollection;
use rarepool_core::features::{FeatureMode, FeatureVector, VocabularyConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::log::{read_events, EventLog};
use crate::session::{Event, NextBatch, Session, SessionConfig, SessionSummary, SubmitAck};

/// A collection the service can open sessions on.
#[derive(Debug, Clone)]
pub struct CollectionEntry {
    pub collection: Arc<DocumentCollection>,
    pub embeddings: Option<Arc<BTreeMap<String, FeatureVector>>>,
}

impl CollectionEntry {
    pub fn new(collection: DocumentCollection) -> Self {
        Self {
            collection: Arc::new(collection),
            embeddings: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
    pub summary: SessionSummary,
}

#[derive(Debug)]
struct Handle {
    session: Session,
    log: EventLog,
}

type FeatureKey = (String, FeatureMode, String);

/// Sessions and collections of one running service.
#[derive(Debug)]
pub struct ServiceState {
    data_dir: PathBuf,
    collections: BTreeMap<String, CollectionEntry>,
    sessions: RwLock<HashMap<String, Arc<RwLock<Handle>>>>,
    features: Mutex<HashMap<FeatureKey, Arc<Vec<FeatureVector>>>>,
}

fn log_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.jsonl"))
}

impl ServiceState {
    /// Opens `data_dir` (created if missing) and replays every session log
    /// found there. Sessions whose log cannot be replayed are skipped with
    /// an error message.
    pub fn open(data_dir: impl Into<PathBuf>, collections: BTreeMap<String, CollectionEntry>) -> Result<Self> {
        let data_dir = data_dir.into();
        std::fs::create_dir_all(&data_dir)?;
        let state = Self {
            data_dir,
            collections,
            sessions: RwLock::new(HashMap::new()),
            features: Mutex::new(HashMap::new()),
        };
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&state.data_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            match state.restore(&path) {
                Ok(id) => tracing::info!(session = %id, "session restored"),
                Err(e) => tracing::error!(path = %path.display(), error = %e, "session not restored"),
            }
        }
        Ok(state)
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    fn load(&self, events: &[Event]) -> Result<(Session, Vec<Event>)> {
        let Some(Event::Created { config, .. }) = events.first() else {
            return Err(ServiceError::Internal("log does not start with a creation event".into()));
        };
        let (collection, features) = self.features_for(config)?;
        Session::replay(events, collection, features)
    }

    fn restore(&self, path: &Path) -> Result<String> {
        let events = read_events(path)?;
        let (session, missing) = self.load(&events)?;
        let mut log = EventLog::reopen(path)?;
        for e in &missing {
            log.append(e)?;
        }
        let id = session.id().to_string();
        self.sessions
            .write()
            .expect("lock")
            .insert(id.clone(), Arc::new(RwLock::new(Handle { session, log })));
        Ok(id)
    }

    fn features_for(&self, config: &SessionConfig) -> Result<(Arc<DocumentCollection>, Arc<Vec<FeatureVector>>)> {
        let entry = self
            .collections
            .get(&config.collection)
            .ok_or_else(|| ServiceError::BadRequest(format!("unknown collection `{}`", config.collection)))?;
        let vocab = serde_json::to_string(&config.al.vocabulary).expect("vocabulary serializes");
        let key = (config.collection.clone(), config.al.feature_mode, vocab);
        let mut cache = self.features.lock().expect("lock");
        if let Some(f) = cache.get(&key) {
            return Ok((entry.collection.clone(), f.clone()));
        }
        let features = Arc::new(featurize(entry, config.al.feature_mode, &config.al.vocabulary)?);
        cache.insert(key, features.clone());
        Ok((entry.collection.clone(), features))
    }

    fn handle(&self, id: &str) -> Result<Arc<RwLock<Handle>>> {
        self.sessions
            .read()
            .expect("lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("unknown session `{id}`")))
    }

    pub fn create_session(&self, config: SessionConfig) -> Result<CreatedSession> {
        let id = config
            .session_id
            .clone()
            .unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
        let (collection, features) = self.features_for(&config)?;
        let (session, event) = Session::create(id.clone(), config, collection, features)?;
        let mut sessions = self.sessions.write().expect("lock");
        if sessions.contains_key(&id) {
            return Err(ServiceError::Conflict(format!("session `{id}` already exists")));
        }
        let path = log_path(&self.data_dir, &id);
        let mut log = EventLog::create(&path).map_err(|e| match e {
            ServiceError::Internal(m) if path.exists() => {
                ServiceError::Conflict(format!("session `{id}` already has a log: {m}"))
            }
            other => other,
        })?;
        if let Err(e) = log.append(&event) {
            drop(log);
            let _ = std::fs::remove_file(&path);
            return Err(e);
        }
        let summary = session.summary()?;
        sessions.insert(id.clone(), Arc::new(RwLock::new(Handle { session, log })));
        Ok(CreatedSession {
            session_id: id,
            summary,
        })
    }

    /// Runs a mutation and persists its events. If persisting fails the
    /// in-memory session is rebuilt from the log so memory never runs
    /// ahead of disk.
    fn mutate<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> Result<(T, Vec<Event>)>) -> Result<T> {
        let handle = self.handle(id)?;
        let mut guard = handle.write().unwrap_or_else(|p| p.into_inner());
        let (value, events) = f(&mut guard.session)?;
        let mut failure = None;
        for e in &events {
            if let Err(err) = guard.log.append(e) {
                failure = Some(err);
                break;
            }
        }
        if let Some(err) = failure {
            tracing::error!(session = %id, error = %err, "event not persisted; reloading session from its log");
            let path = guard.log.path().to_path_buf();
            let events = read_events(&path)?;
            let (session, _) = self.load(&events)?;
            guard.session = session;
            guard.log = EventLog::reopen(&path)?;
            return Err(err);
        }
        Ok(value)
    }

    fn read<T>(&self, id: &str, f: impl FnOnce(&Session) -> Result<T>) -> Result<T> {
        let handle = self.handle(id)?;
        let guard = handle.read().unwrap_or_else(|p| p.into_inner());
        f(&guard.session)
    }

    pub fn next_documents(&self, id: &str, worker: Option<&str>) -> Result<NextBatch> {
        self.mutate(id, |s| s.next_documents(worker))
    }

    pub fn submit_annotation(&self, id: &str, annotation: Annotation) -> Result<SubmitAck> {
        self.mutate(id, |s| s.submit(annotation))
    }

    pub fn abort(&self, id: &str) -> Result<SessionSummary> {
        self.mutate(id, |s| {
            let events: Vec<Event> = s.abort().into_iter().collect();
            Ok((s.summary()?, events))
        })
    }

    pub fn session_state(&self, id: &str) -> Result<SessionSummary> {
        self.read(id, Session::summary)
    }

    pub fn export(&self, id: &str) -> Result<String> {
        self.read(id, Session::export_jsonl)
    }
}

fn featurize(entry: &CollectionEntry, mode: FeatureMode, vocabulary: &VocabularyConfig) -> Result<Vec<FeatureVector>> {
    Ok(featurize_collection(
        &entry.collection,
        mode,
        vocabulary,
        entry.embeddings.as_deref(),
    )?)
}
