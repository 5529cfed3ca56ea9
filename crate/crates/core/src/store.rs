//! Persistent storage for memory records, partner personas and session logs.
//!
//! The whole store is one JSON document. Every mutation is applied to a copy
//! of the current document, written to a temp file next to the target and
//! renamed into place, and only then published to readers. Readers take an
//! `Arc` snapshot and never block writers for longer than a pointer swap.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Clock, SystemClock};
use crate::session::ConversationSession;

pub const STORE_VERSION: u32 = 1;
pub const MAX_RECORD_CHARS: usize = 2000;
pub const MAX_TOPICS: usize = 20;
pub const MAX_TOPIC_CHARS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RecordId(pub u64);

impl fmt::Display for RecordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub u64);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordOrigin {
    Manual,
    ArchivedConversation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub id: RecordId,
    pub text: String,
    pub created_at: DateTime<Utc>,
    pub origin: RecordOrigin,
}

/// How much personal detail a partner is trusted with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Closeness {
    Average,
    Familiar,
    #[serde(alias = "Very Familiar")]
    VeryFamiliar,
}

impl Closeness {
    pub const ALL: [Closeness; 3] = [Closeness::Average, Closeness::Familiar, Closeness::VeryFamiliar];

    /// Wire label, as used in the `<level>|<text>` suggestion grammar.
    pub fn label(self) -> &'static str {
        match self {
            Closeness::Average => "Average",
            Closeness::Familiar => "Familiar",
            Closeness::VeryFamiliar => "VeryFamiliar",
        }
    }

    /// Human-facing name.
    pub fn display_name(self) -> &'static str {
        match self {
            Closeness::Average => "Average",
            Closeness::Familiar => "Familiar",
            Closeness::VeryFamiliar => "Very Familiar",
        }
    }
}

impl fmt::Display for Closeness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown closeness level {0:?}")]
pub struct UnknownCloseness(pub String);

impl FromStr for Closeness {
    type Err = UnknownCloseness;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded: String = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_' && *c != '-')
            .flat_map(char::to_lowercase)
            .collect();
        match folded.as_str() {
            "average" => Ok(Closeness::Average),
            "familiar" => Ok(Closeness::Familiar),
            "veryfamiliar" => Ok(Closeness::VeryFamiliar),
            _ => Err(UnknownCloseness(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartnerPersona {
    pub partner_id: String,
    pub display_name: String,
    pub topic_preferences: Vec<String>,
    pub closeness: Closeness,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("text is empty")]
    EmptyText,
    #[error("text is {chars} characters long, limit is {MAX_RECORD_CHARS}")]
    TextTooLong { chars: usize },
    #[error("{count} topic preferences given, limit is {MAX_TOPICS}")]
    TooManyTopics { count: usize },
    #[error("invalid topic preference {0:?}: must be 1-{MAX_TOPIC_CHARS} characters")]
    InvalidTopic(String),
    #[error("partner id must not be empty")]
    EmptyPartnerId,
    #[error("{kind} {id} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("store file {path}: unsupported version {found}")]
    UnsupportedVersion { path: PathBuf, found: u32 },
    #[error("store file {path} is not a valid store document")]
    Corrupt {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("store io on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

/// On-disk layout of the store file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoreDocument {
    pub version: u32,
    #[serde(default)]
    pub next_record_id: u64,
    #[serde(default)]
    pub next_session_id: u64,
    #[serde(default)]
    pub records: Vec<MemoryRecord>,
    #[serde(default)]
    pub personas: Vec<PartnerPersona>,
    #[serde(default)]
    pub sessions: Vec<ConversationSession>,
}

impl Default for StoreDocument {
    fn default() -> Self {
        Self {
            version: STORE_VERSION,
            next_record_id: 1,
            next_session_id: 1,
            records: Vec::new(),
            personas: Vec::new(),
            sessions: Vec::new(),
        }
    }
}

pub struct MemoryStore {
    path: Option<PathBuf>,
    clock: Arc<dyn Clock>,
    current: RwLock<Arc<StoreDocument>>,
    writer: Mutex<()>,
}

impl fmt::Debug for MemoryStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MemoryStore")
            .field("path", &self.path)
            .finish_non_exhaustive()
    }
}

impl MemoryStore {
    pub fn in_memory() -> Self {
        Self::in_memory_with_clock(Arc::new(SystemClock))
    }

    pub fn in_memory_with_clock(clock: Arc<dyn Clock>) -> Self {
        Self {
            path: None,
            clock,
            current: RwLock::new(Arc::new(StoreDocument::default())),
            writer: Mutex::new(()),
        }
    }

    /// Opens the store at `path`, creating an empty one if the file is missing.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::open_with_clock(path, Arc::new(SystemClock))
    }

    pub fn open_with_clock(path: impl AsRef<Path>, clock: Arc<dyn Clock>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let doc = match fs::read(&path) {
            Ok(bytes) => {
                let doc: StoreDocument = serde_json::from_slice(&bytes).map_err(|source| StoreError::Corrupt {
                    path: path.clone(),
                    source,
                })?;
                if doc.version != STORE_VERSION {
                    return Err(StoreError::UnsupportedVersion {
                        path,
                        found: doc.version,
                    });
                }
                doc
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                let doc = StoreDocument::default();
                write_atomically(&path, &doc)?;
                doc
            }
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        Ok(Self {
            path: Some(path),
            clock,
            current: RwLock::new(Arc::new(doc)),
            writer: Mutex::new(()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    /// A consistent, immutable view of the whole store.
    pub fn snapshot(&self) -> Arc<StoreDocument> {
        Arc::clone(&self.current.read().expect("store lock poisoned"))
    }

    /// Applies `f` to a copy of the document, persists it, then publishes it.
    /// If `f` or the write fails, the visible state is unchanged.
    fn mutate<T>(&self, f: impl FnOnce(&mut StoreDocument, DateTime<Utc>) -> Result<T>) -> Result<T> {
        let _writer = self.writer.lock().expect("store writer poisoned");
        let mut doc = (*self.snapshot()).clone();
        let out = f(&mut doc, self.clock.now())?;
        if let Some(path) = &self.path {
            write_atomically(path, &doc)?;
        }
        *self.current.write().expect("store lock poisoned") = Arc::new(doc);
        Ok(out)
    }

    pub fn add_record(&self, text: &str, origin: RecordOrigin) -> Result<MemoryRecord> {
        let text = validate_record_text(text)?;
        self.mutate(|doc, now| {
            let created_at = match doc.records.last() {
                Some(last) if last.created_at > now => last.created_at,
                _ => now,
            };
            let record = MemoryRecord {
                id: RecordId(doc.next_record_id),
                text,
                created_at,
                origin,
            };
            doc.next_record_id += 1;
            doc.records.push(record.clone());
            Ok(record)
        })
    }

    pub fn list_records(&self) -> Vec<MemoryRecord> {
        self.snapshot().records.clone()
    }

    pub fn get_record(&self, id: RecordId) -> Result<MemoryRecord> {
        self.snapshot()
            .records
            .iter()
            .find(|r| r.id == id)
            .cloned()
            .ok_or_else(|| not_found("record", id))
    }

    pub fn delete_record(&self, id: RecordId) -> Result<()> {
        self.mutate(|doc, _| {
            let before = doc.records.len();
            doc.records.retain(|r| r.id != id);
            if doc.records.len() == before {
                return Err(not_found("record", id));
            }
            Ok(())
        })
    }

    pub fn upsert_persona(
        &self,
        partner_id: &str,
        display_name: &str,
        topic_preferences: Vec<String>,
        closeness: Closeness,
    ) -> Result<PartnerPersona> {
        let partner_id = partner_id.trim();
        if partner_id.is_empty() {
            return Err(StoreError::EmptyPartnerId);
        }
        if topic_preferences.len() > MAX_TOPICS {
            return Err(StoreError::TooManyTopics {
                count: topic_preferences.len(),
            });
        }
        let topic_preferences = topic_preferences
            .into_iter()
            .map(|t| {
                let trimmed = t.trim();
                let n = trimmed.chars().count();
                if n == 0 || n > MAX_TOPIC_CHARS {
                    Err(StoreError::InvalidTopic(t))
                } else {
                    Ok(trimmed.to_string())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let persona = PartnerPersona {
            partner_id: partner_id.to_string(),
            display_name: display_name.trim().to_string(),
            topic_preferences,
            closeness,
        };
        self.mutate(|doc, _| {
            match doc.personas.iter_mut().find(|p| p.partner_id == persona.partner_id) {
                Some(existing) => *existing = persona.clone(),
                None => doc.personas.push(persona.clone()),
            }
            Ok(persona)
        })
    }

    pub fn get_persona(&self, partner_id: &str) -> Result<PartnerPersona> {
        self.snapshot()
            .personas
            .iter()
            .find(|p| p.partner_id == partner_id)
            .cloned()
            .ok_or_else(|| not_found("partner", partner_id))
    }

    pub fn list_personas(&self) -> Vec<PartnerPersona> {
        self.snapshot().personas.clone()
    }

    /// Removes the persona only. Sessions with that partner are kept.
    pub fn delete_persona(&self, partner_id: &str) -> Result<()> {
        self.mutate(|doc, _| {
            let before = doc.personas.len();
            doc.personas.retain(|p| p.partner_id != partner_id);
            if doc.personas.len() == before {
                return Err(not_found("partner", partner_id));
            }
            Ok(())
        })
    }

    /// Reserves a fresh session id and stores the session built from it.
    pub(crate) fn create_session(
        &self,
        build: impl FnOnce(SessionId, DateTime<Utc>) -> ConversationSession,
    ) -> Result<ConversationSession> {
        self.mutate(|doc, now| {
            let session = build(SessionId(doc.next_session_id), now);
            doc.next_session_id += 1;
            doc.sessions.push(session.clone());
            Ok(session)
        })
    }

    /// Inserts or replaces the persisted copy of a session.
    pub fn put_session(&self, session: &ConversationSession) -> Result<()> {
        self.mutate(|doc, _| {
            match doc.sessions.iter_mut().find(|s| s.session_id == session.session_id) {
                Some(existing) => *existing = session.clone(),
                None => doc.sessions.push(session.clone()),
            }
            Ok(())
        })
    }

    /// Commits a session update and a new record in one write.
    pub(crate) fn put_session_with_record(
        &self,
        session: &ConversationSession,
        text: &str,
        origin: RecordOrigin,
        link: impl FnOnce(&mut ConversationSession, RecordId),
    ) -> Result<(ConversationSession, MemoryRecord)> {
        let text = validate_record_text(text)?;
        self.mutate(|doc, now| {
            let created_at = match doc.records.last() {
                Some(last) if last.created_at > now => last.created_at,
                _ => now,
            };
            let record = MemoryRecord {
                id: RecordId(doc.next_record_id),
                text,
                created_at,
                origin,
            };
            doc.next_record_id += 1;
            doc.records.push(record.clone());
            let mut session = session.clone();
            link(&mut session, record.id);
            match doc.sessions.iter_mut().find(|s| s.session_id == session.session_id) {
                Some(existing) => *existing = session.clone(),
                None => doc.sessions.push(session.clone()),
            }
            Ok((session, record))
        })
    }

    pub fn list_sessions(&self) -> Vec<ConversationSession> {
        self.snapshot().sessions.clone()
    }
}

fn not_found(kind: &'static str, id: impl fmt::Display) -> StoreError {
    StoreError::NotFound {
        kind,
        id: id.to_string(),
    }
}

fn validate_record_text(text: &str) -> Result<String> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(StoreError::EmptyText);
    }
    let chars = trimmed.chars().count();
    if chars > MAX_RECORD_CHARS {
        return Err(StoreError::TextTooLong { chars });
    }
    Ok(trimmed.to_string())
}

fn write_atomically(path: &Path, doc: &StoreDocument) -> Result<()> {
    let io_err = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let bytes = serde_json::to_vec_pretty(doc).expect("store document always serializes");
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(&bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const PARK: &str = "I like fishing with friends in the park… watching the stars near XiShan Park.";

    #[test]
    fn add_record_keeps_text() {
        let store = MemoryStore::in_memory();
        let rec = store.add_record(PARK, RecordOrigin::Manual).unwrap();
        assert_eq!(rec.text, PARK);
        assert_eq!(store.list_records(), vec![rec]);
    }

    #[test]
    fn whitespace_only_text_is_rejected() {
        let store = MemoryStore::in_memory();
        assert!(matches!(
            store.add_record("   ", RecordOrigin::Manual),
            Err(StoreError::EmptyText)
        ));
    }

    #[test]
    fn length_boundary() {
        let store = MemoryStore::in_memory();
        let ok = "字".repeat(2000);
        store.add_record(&ok, RecordOrigin::Manual).unwrap();
        let long = "a".repeat(2001);
        assert!(matches!(
            store.add_record(&long, RecordOrigin::Manual),
            Err(StoreError::TextTooLong { chars: 2001 })
        ));
    }

    #[test]
    fn persona_upsert_replaces() {
        let store = MemoryStore::in_memory();
        store
            .upsert_persona(
                "p1",
                "Grandson",
                vec!["weather".into(), "grandson's studies".into()],
                Closeness::VeryFamiliar,
            )
            .unwrap();
        let p = store
            .upsert_persona("p1", "Grandson", vec![], Closeness::Average)
            .unwrap();
        assert!(p.topic_preferences.is_empty());
        assert_eq!(store.list_personas(), vec![p]);
    }

    #[test]
    fn too_many_topics() {
        let store = MemoryStore::in_memory();
        let topics = (0..21).map(|i| format!("topic {i}")).collect();
        assert!(matches!(
            store.upsert_persona("p1", "x", topics, Closeness::Familiar),
            Err(StoreError::TooManyTopics { count: 21 })
        ));
        let topics = (0..20).map(|i| format!("topic {i}")).collect();
        store.upsert_persona("p1", "x", topics, Closeness::Familiar).unwrap();
    }

    #[test]
    fn blank_topic_rejected() {
        let store = MemoryStore::in_memory();
        assert!(matches!(
            store.upsert_persona("p1", "x", vec!["  ".into()], Closeness::Familiar),
            Err(StoreError::InvalidTopic(_))
        ));
    }

    #[test]
    fn crud_basics() {
        let store = MemoryStore::in_memory();
        assert!(store.list_records().is_empty());
        let rec = store.add_record("hello there", RecordOrigin::Manual).unwrap();
        store.delete_record(rec.id).unwrap();
        assert!(store.list_records().is_empty());
        assert!(matches!(store.delete_record(rec.id), Err(StoreError::NotFound { .. })));
        assert!(matches!(store.get_persona("missing"), Err(StoreError::NotFound { .. })));
    }

    #[test]
    fn unknown_closeness_rejected_at_deserialization() {
        let bad = r#"{"partner_id":"p","display_name":"x","topic_preferences":[],"closeness":"Intimate"}"#;
        assert!(serde_json::from_str::<PartnerPersona>(bad).is_err());
        let ok = r#"{"partner_id":"p","display_name":"x","topic_preferences":[],"closeness":"Very Familiar"}"#;
        assert_eq!(
            serde_json::from_str::<PartnerPersona>(ok).unwrap().closeness,
            Closeness::VeryFamiliar
        );
    }

    #[test]
    fn closeness_from_str() {
        assert_eq!("very familiar".parse::<Closeness>().unwrap(), Closeness::VeryFamiliar);
        assert_eq!("AVERAGE".parse::<Closeness>().unwrap(), Closeness::Average);
        assert!("close".parse::<Closeness>().is_err());
    }

    #[test]
    fn reload_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.json");
        let store = MemoryStore::open(&path).unwrap();
        store.add_record(PARK, RecordOrigin::Manual).unwrap();
        store
            .add_record("我喜欢在公园钓鱼", RecordOrigin::ArchivedConversation)
            .unwrap();
        store
            .upsert_persona("p1", "Grandson", vec!["weather".into()], Closeness::VeryFamiliar)
            .unwrap();
        let reopened = MemoryStore::open(&path).unwrap();
        assert_eq!(reopened.list_records(), store.list_records());
        assert_eq!(reopened.list_personas(), store.list_personas());
        let next = reopened.add_record("third", RecordOrigin::Manual).unwrap();
        assert_eq!(next.id, RecordId(3));
    }

    #[test]
    fn file_carries_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.json");
        MemoryStore::open(&path).unwrap();
        let raw: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        assert_eq!(raw["version"], 1);
    }

    #[test]
    fn wrong_version_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.json");
        fs::write(&path, r#"{"version": 2}"#).unwrap();
        assert!(matches!(
            MemoryStore::open(&path),
            Err(StoreError::UnsupportedVersion { found: 2, .. })
        ));
    }

    #[test]
    fn failed_mutation_leaves_state_untouched() {
        let store = MemoryStore::in_memory();
        store.add_record("one", RecordOrigin::Manual).unwrap();
        let _ = store.delete_record(RecordId(99));
        assert_eq!(store.list_records().len(), 1);
        assert_eq!(store.snapshot().next_record_id, 2);
    }
}
