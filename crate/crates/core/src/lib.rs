//! Memory-grounded sentence suggestions for AAC conversations.
//!
//! A user keeps short text memories and a persona per conversation partner
//! (topics they like, and how close they are). When the partner speaks, the
//! most relevant memories are retrieved by embedding-expanded keyword
//! overlap, a six-part prompt is composed for the partner's closeness level,
//! and a text-generation provider returns four labeled suggestions the user
//! can pick, adjust with an attitude tag, or replace with typed text.

pub mod clock;
pub mod config;
pub mod embedding;
pub mod generation;
pub mod prompt;
pub mod retrieval;
pub mod session;
pub mod store;
pub mod text;

pub use config::Config;
pub use embedding::{cosine_similarity, EmbeddingProvider, VectorTable};
pub use generation::{parse_suggestions, Provider, Suggestion, SuggestionSet};
pub use prompt::{closeness_instruction, PromptBundle, PromptComposer};
pub use retrieval::Retriever;
pub use session::{ChatTurn, ConversationSession, SessionManager, SessionMetrics};
pub use store::{Closeness, MemoryRecord, MemoryStore, PartnerPersona};

/// Bundled toy vector table (a few hundred words, 24 dimensions).
pub const TOY_VECTORS: &str = include_str!("../data/toy_vectors.txt");

/// Memory record used by the demo fixture and the walkthrough tests.
pub const PARK_RECORD: &str = "I like fishing with friends in the park… watching the stars near XiShan Park.";

/// The partner utterance that goes with [`PARK_RECORD`].
pub const PARK_UTTERANCE: &str = "I went to the park the day before yesterday… Would you like to go out and see it?";
