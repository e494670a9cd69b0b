//! HTTP service hosting live annotation sessions.
//!
//! Each session runs the active-learning loop over a named collection with
//! humans as the oracle. Every state change is appended to a per-session
//! JSON Lines event log before it takes effect, and sessions are rebuilt by
//! replaying their logs when the service starts.

mod error;
mod http;
mod log;
mod session;
mod state;

pub use error::ServiceError;
pub use http::{router, serve};
pub use log::{read_events, EventLog};
pub use session::{
    CommittedLabel, DocumentView, Event, ExportLine, LabelSource, NextBatch, Session, SessionConfig, SessionStatus,
    SessionSummary, SubmitAck, CONTENT_WARNING,
};
pub use state::{CollectionEntry, CreatedSession, ServiceState};
