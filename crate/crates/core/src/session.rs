//! Conversation sessions: partner speech in, suggestions out, user choice
//! committed as a turn. Ended sessions can be archived back into the
//! memory store as a transcript record.
//!
//! Each operation works on a copy of the session and publishes it only after
//! the store has persisted it, so a failed call leaves the last committed
//! state in place. Operations on one session are serialized; a second
//! concurrent call on the same session fails with [`SessionError::Busy`].

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock, TryLockError};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::generation::{parse_suggestions, GenerationError, Provider, SuggestionSet};
use crate::prompt::{PromptComposer, PromptError};
use crate::retrieval::Retriever;
use crate::store::{MemoryRecord, MemoryStore, RecordId, RecordOrigin, SessionId, StoreError, MAX_RECORD_CHARS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    User,
    Partner,
}

impl Speaker {
    pub fn label(self) -> &'static str {
        match self {
            Speaker::User => "User",
            Speaker::Partner => "Partner",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnSource {
    SuggestionPick,
    Adjusted,
    Manual,
    PartnerSpeech,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub speaker: Speaker,
    pub text: String,
    pub committed_at: DateTime<Utc>,
    pub source: TurnSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationSession {
    pub session_id: SessionId,
    pub partner_id: String,
    pub turns: Vec<ChatTurn>,
    pub started_at: DateTime<Utc>,
    pub ended_at: Option<DateTime<Utc>>,
    pub pending: Option<SuggestionSet>,
    /// Indices of pending suggestions that came out of an adjustment.
    #[serde(default)]
    pub pending_adjusted: Vec<usize>,
    #[serde(default)]
    pub customization_count: u32,
    #[serde(default)]
    pub archived_record: Option<RecordId>,
}

impl ConversationSession {
    pub fn is_active(&self) -> bool {
        self.ended_at.is_none()
    }

    /// Text of the most recent partner turn.
    pub fn last_partner_utterance(&self) -> Option<&str> {
        self.turns
            .iter()
            .rev()
            .find(|t| t.speaker == Speaker::Partner)
            .map(|t| t.text.as_str())
    }

    /// Speaker-prefixed transcript, one turn per line.
    pub fn transcript(&self) -> String {
        self.turns
            .iter()
            .map(|t| {
                format!(
                    "{}: {}",
                    t.speaker.label(),
                    t.text.split_whitespace().collect::<Vec<_>>().join(" ")
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn next_timestamp(&self, now: DateTime<Utc>) -> DateTime<Utc> {
        match self.turns.last() {
            Some(last) if last.committed_at > now => last.committed_at,
            _ => now.max(self.started_at),
        }
    }

    fn commit(&mut self, speaker: Speaker, text: String, source: TurnSource, now: DateTime<Utc>) -> ChatTurn {
        let turn = ChatTurn {
            speaker,
            text,
            committed_at: self.next_timestamp(now),
            source,
        };
        self.turns.push(turn.clone());
        self.pending = None;
        self.pending_adjusted.clear();
        turn
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub rounds: u32,
    pub wpm: f64,
    pub duration_min: f64,
    pub customization_count: u32,
    /// Session shorter than one second; `wpm` is reported as 0.
    #[serde(default, skip_serializing_if = "is_false")]
    pub short_session: bool,
}

impl SessionMetrics {
    /// Recomputes metrics from a session's persisted turns. `None` while active.
    pub fn from_session(session: &ConversationSession) -> Option<Self> {
        let ended = session.ended_at?;
        Some(Self::compute(
            &session.turns,
            session.started_at,
            ended,
            session.customization_count,
        ))
    }

    pub fn compute(
        turns: &[ChatTurn],
        started_at: DateTime<Utc>,
        ended_at: DateTime<Utc>,
        customization_count: u32,
    ) -> Self {
        let secs = (ended_at - started_at).num_milliseconds().max(0) as f64 / 1000.0;
        let duration_min = secs / 60.0;
        let user_chars: usize = turns
            .iter()
            .filter(|t| t.speaker == Speaker::User)
            .map(|t| t.text.chars().count())
            .sum();
        let short_session = secs < 1.0;
        let wpm = if short_session {
            0.0
        } else {
            user_chars as f64 / duration_min
        };
        Self {
            rounds: count_rounds(turns),
            wpm,
            duration_min,
            customization_count,
            short_session,
        }
    }
}

/// A round is a user message followed by a partner reply.
pub fn count_rounds(turns: &[ChatTurn]) -> u32 {
    let mut rounds = 0;
    let mut awaiting_reply = false;
    for t in turns {
        match t.speaker {
            Speaker::User => awaiting_reply = true,
            Speaker::Partner if awaiting_reply => {
                rounds += 1;
                awaiting_reply = false;
            }
            Speaker::Partner => {}
        }
    }
    rounds
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown partner {0}")]
    UnknownPartner(String),
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("session {0} is busy with another request")]
    Busy(SessionId),
    #[error("session {0} has ended")]
    SessionEnded(SessionId),
    #[error("session {0} has already ended")]
    AlreadyEnded(SessionId),
    #[error("session {0} is still active")]
    SessionActive(SessionId),
    #[error("session {0} was already archived as record {1}")]
    AlreadyArchived(SessionId, RecordId),
    #[error("session {0} has no user turns to archive")]
    SessionEmpty(SessionId),
    #[error("text is empty")]
    EmptyText,
    #[error("no pending suggestions")]
    NoPending,
    #[error("suggestion index {index} out of range for {len} suggestions")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("tag {0:?} is not offered for the pending suggestions")]
    UnknownTag(String),
    #[error("no memory records to start a conversation from")]
    NoStarters,
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Prompt(PromptError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl From<PromptError> for SessionError {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::NoStarters => SessionError::NoStarters,
            other => SessionError::Prompt(other),
        }
    }
}

pub type Result<T, E = SessionError> = std::result::Result<T, E>;

/// Owns live sessions and runs the suggestion pipeline for them.
pub struct SessionManager {
    store: Arc<MemoryStore>,
    retriever: Arc<Retriever>,
    composer: Arc<PromptComposer>,
    provider: Arc<Provider>,
    sessions: RwLock<HashMap<SessionId, Arc<Mutex<ConversationSession>>>>,
}

impl std::fmt::Debug for SessionManager {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionManager")
            .field("store", &self.store)
            .finish_non_exhaustive()
    }
}

impl SessionManager {
    /// Picks up every session already persisted in the store.
    pub fn new(
        store: Arc<MemoryStore>,
        retriever: Arc<Retriever>,
        composer: Arc<PromptComposer>,
        provider: Arc<Provider>,
    ) -> Self {
        let sessions = store
            .list_sessions()
            .into_iter()
            .map(|s| (s.session_id, Arc::new(Mutex::new(s))))
            .collect();
        Self {
            store,
            retriever,
            composer,
            provider,
            sessions: RwLock::new(sessions),
        }
    }

    pub fn store(&self) -> &Arc<MemoryStore> {
        &self.store
    }

    pub fn retriever(&self) -> &Arc<Retriever> {
        &self.retriever
    }

    fn now(&self) -> DateTime<Utc> {
        self.store.clock().now()
    }

    fn handle(&self, id: SessionId) -> Result<Arc<Mutex<ConversationSession>>> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(&id)
            .cloned()
            .ok_or(SessionError::UnknownSession(id))
    }

    /// Runs `f` on a working copy; persists and publishes it when `f` returns
    /// `Ok` together with `true`.
    fn with_session<T>(
        &self,
        id: SessionId,
        f: impl FnOnce(&mut ConversationSession) -> Result<(T, bool)>,
    ) -> Result<T> {
        let handle = self.handle(id)?;
        let mut guard = match handle.try_lock() {
            Ok(g) => g,
            Err(TryLockError::WouldBlock) => return Err(SessionError::Busy(id)),
            Err(TryLockError::Poisoned(p)) => p.into_inner(),
        };
        let mut work = guard.clone();
        let (out, changed) = f(&mut work)?;
        if changed {
            self.store.put_session(&work)?;
            *guard = work;
        }
        Ok(out)
    }

    /// Persists an intermediate state while the caller keeps the session.
    fn checkpoint(&self, guard: &mut ConversationSession, work: &ConversationSession) -> Result<()> {
        self.store.put_session(work)?;
        *guard = work.clone();
        Ok(())
    }

    pub fn start_session(&self, partner_id: &str) -> Result<ConversationSession> {
        if self.store.get_persona(partner_id).is_err() {
            return Err(SessionError::UnknownPartner(partner_id.to_string()));
        }
        let session = self.store.create_session(|session_id, now| ConversationSession {
            session_id,
            partner_id: partner_id.to_string(),
            turns: Vec::new(),
            started_at: now,
            ended_at: None,
            pending: None,
            pending_adjusted: Vec::new(),
            customization_count: 0,
            archived_record: None,
        })?;
        self.sessions
            .write()
            .expect("session map poisoned")
            .insert(session.session_id, Arc::new(Mutex::new(session.clone())));
        Ok(session)
    }

    /// Last committed state of a session.
    pub fn state(&self, id: SessionId) -> Result<ConversationSession> {
        self.store
            .snapshot()
            .sessions
            .iter()
            .find(|s| s.session_id == id)
            .cloned()
            .ok_or(SessionError::UnknownSession(id))
    }

    pub fn list_sessions(&self) -> Vec<ConversationSession> {
        self.store.list_sessions()
    }

    fn persona_for(&self, session: &ConversationSession) -> Result<crate::store::PartnerPersona> {
        self.store
            .get_persona(&session.partner_id)
            .map_err(|_| SessionError::UnknownPartner(session.partner_id.clone()))
    }

    /// Commits the partner's words, then retrieves, prompts, generates and
    /// parses. On a generation failure the partner turn stays committed and
    /// nothing is pending.
    pub fn receive_partner_utterance(&self, id: SessionId, text: &str) -> Result<SuggestionSet> {
        let handle = self.handle(id)?;
        let mut guard = match handle.try_lock() {
            Ok(g) => g,
            Err(TryLockError::WouldBlock) => return Err(SessionError::Busy(id)),
            Err(TryLockError::Poisoned(p)) => p.into_inner(),
        };
        let mut work = guard.clone();
        ensure_active(&work)?;
        let text = text.trim();
        if text.is_empty() {
            return Err(SessionError::EmptyText);
        }
        let persona = self.persona_for(&work)?;
        work.commit(
            Speaker::Partner,
            text.to_string(),
            TurnSource::PartnerSpeech,
            self.now(),
        );
        self.checkpoint(&mut guard, &work)?;

        let records = self.store.list_records();
        let retrieved = self
            .retriever
            .retrieve_relevant(text, &records, self.retriever.config().top_n);
        let history = &work.turns[..work.turns.len() - 1];
        let bundle = self
            .composer
            .compose_response_prompt(text, &retrieved, &persona, history)?;
        let raw = self.provider.complete(&bundle)?;
        let mut set = parse_suggestions(&raw)?;
        if set.suggestions.len() < bundle.context.expected_suggestions {
            warn!(
                session = %id,
                got = set.suggestions.len(),
                "fewer suggestions than requested"
            );
            set.degraded = true;
        }
        if !set.has_shared_level() {
            warn!(session = %id, "no two suggestions share a closeness level");
        }
        work.pending = Some(set.clone());
        work.pending_adjusted.clear();
        self.checkpoint(&mut guard, &work)?;
        Ok(set)
    }

    /// Opening suggestions drawn from records that match the partner's topics.
    pub fn request_starters(&self, id: SessionId) -> Result<SuggestionSet> {
        self.with_session(id, |s| {
            ensure_active(s)?;
            let persona = self.persona_for(s)?;
            let records = self.store.list_records();
            if records.is_empty() {
                return Err(SessionError::NoStarters);
            }
            let starters =
                self.retriever
                    .select_starter_records(&records, &persona, self.retriever.config().starter_max);
            let bundle = self.composer.compose_starter_prompt(&starters, &persona, &s.turns)?;
            let raw = self.provider.complete(&bundle)?;
            let mut set = parse_suggestions(&raw)?;
            set.degraded = set.suggestions.len() < bundle.context.expected_suggestions;
            s.pending = Some(set.clone());
            s.pending_adjusted.clear();
            Ok((set, true))
        })
    }

    pub fn pick_suggestion(&self, id: SessionId, index: usize) -> Result<ChatTurn> {
        let now = self.now();
        self.with_session(id, |s| {
            ensure_active(s)?;
            let pending = s.pending.as_ref().ok_or(SessionError::NoPending)?;
            let chosen = pending
                .suggestions
                .get(index)
                .ok_or(SessionError::IndexOutOfRange {
                    index,
                    len: pending.suggestions.len(),
                })?
                .text
                .clone();
            let source = if s.pending_adjusted.contains(&index) {
                TurnSource::Adjusted
            } else {
                TurnSource::SuggestionPick
            };
            Ok((s.commit(Speaker::User, chosen, source, now), true))
        })
    }

    /// Rewrites one pending suggestion with the attitude named by `tag`.
    pub fn adjust_suggestion(&self, id: SessionId, index: usize, tag: &str) -> Result<SuggestionSet> {
        self.with_session(id, |s| {
            ensure_active(s)?;
            let pending = s.pending.as_ref().ok_or(SessionError::NoPending)?;
            let original = pending
                .suggestions
                .get(index)
                .ok_or(SessionError::IndexOutOfRange {
                    index,
                    len: pending.suggestions.len(),
                })?
                .clone();
            let tag = pending
                .adjustment_tags
                .iter()
                .find(|t| t.eq_ignore_ascii_case(tag.trim()))
                .cloned()
                .ok_or_else(|| SessionError::UnknownTag(tag.to_string()))?;
            let persona = self.persona_for(s)?;
            let bundle = self.composer.compose_adjustment_prompt(
                &original,
                &tag,
                s.last_partner_utterance(),
                &persona,
                &s.turns,
            )?;
            let raw = self.provider.complete(&bundle)?;
            let mut rewrite = parse_suggestions(&raw)?
                .suggestions
                .into_iter()
                .next()
                .ok_or(GenerationError::UnparseableOutput)?;
            if rewrite.closeness_label != original.closeness_label {
                warn!(
                    expected = %original.closeness_label,
                    got = %rewrite.closeness_label,
                    "adjustment changed the closeness label; keeping the original"
                );
                rewrite.closeness_label = original.closeness_label;
            }
            let pending = s.pending.as_mut().expect("checked above");
            pending.suggestions[index] = rewrite;
            let set = pending.clone();
            if !s.pending_adjusted.contains(&index) {
                s.pending_adjusted.push(index);
            }
            s.customization_count += 1;
            Ok((set, true))
        })
    }

    /// Commits text typed by the user; any pending suggestions are dropped.
    pub fn manual_input(&self, id: SessionId, text: &str) -> Result<ChatTurn> {
        let now = self.now();
        self.with_session(id, |s| {
            ensure_active(s)?;
            if text.trim().is_empty() {
                return Err(SessionError::EmptyText);
            }
            Ok((s.commit(Speaker::User, text.to_string(), TurnSource::Manual, now), true))
        })
    }

    pub fn end_session(&self, id: SessionId) -> Result<SessionMetrics> {
        let now = self.now();
        self.with_session(id, |s| {
            if !s.is_active() {
                return Err(SessionError::AlreadyEnded(id));
            }
            let ended = s.next_timestamp(now);
            s.ended_at = Some(ended);
            s.pending = None;
            s.pending_adjusted.clear();
            let metrics = SessionMetrics::from_session(s).expect("session just ended");
            Ok((metrics, true))
        })
    }

    /// Stores the transcript of an ended session as a new memory record.
    pub fn archive_session(&self, id: SessionId) -> Result<MemoryRecord> {
        let handle = self.handle(id)?;
        let mut guard = match handle.try_lock() {
            Ok(g) => g,
            Err(TryLockError::WouldBlock) => return Err(SessionError::Busy(id)),
            Err(TryLockError::Poisoned(p)) => p.into_inner(),
        };
        if guard.is_active() {
            return Err(SessionError::SessionActive(id));
        }
        if let Some(rec) = guard.archived_record {
            return Err(SessionError::AlreadyArchived(id, rec));
        }
        if !guard.turns.iter().any(|t| t.speaker == Speaker::User) {
            return Err(SessionError::SessionEmpty(id));
        }
        let text = fit_transcript(&guard.transcript(), MAX_RECORD_CHARS);
        let (session, record) =
            self.store
                .put_session_with_record(&guard, &text, RecordOrigin::ArchivedConversation, |s, rid| {
                    s.archived_record = Some(rid)
                })?;
        *guard = session;
        Ok(record)
    }
}

fn ensure_active(s: &ConversationSession) -> Result<()> {
    if s.is_active() {
        Ok(())
    } else {
        Err(SessionError::SessionEnded(s.session_id))
    }
}

/// Keeps the most recent lines that fit in `max` characters. A single line
/// longer than the limit is cut to its first `max` characters.
fn fit_transcript(transcript: &str, max: usize) -> String {
    if transcript.chars().count() <= max {
        return transcript.to_string();
    }
    let mut kept: Vec<&str> = Vec::new();
    let mut used = 0;
    for line in transcript.lines().rev() {
        let n = line.chars().count() + usize::from(!kept.is_empty());
        if used + n > max {
            break;
        }
        used += n;
        kept.push(line);
    }
    if kept.is_empty() {
        let last = transcript.lines().last().unwrap_or_default();
        return last.chars().take(max).collect();
    }
    kept.reverse();
    kept.join("\n")
}
