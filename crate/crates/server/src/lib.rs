//! HTTP/JSON service over the recall core: records, partners and
//! conversation sessions.

pub mod app;
pub mod config;
pub mod error;

use std::path::Path;
use std::sync::Arc;

use anyhow::Context;

use recall_core::retrieval::Retriever;
use recall_core::store::RecordOrigin;
use recall_core::text::Stopwords;
use recall_core::{Closeness, MemoryStore, PartnerPersona, SessionManager, VectorTable, PARK_RECORD, TOY_VECTORS};

pub use app::{router, AppState};
pub use config::{ApiConfig, ServerConfig};
pub use error::ApiError;

/// Where the service reads its data from. Unset paths use the bundled files.
#[derive(Debug, Clone, Default)]
pub struct DataPaths<'a> {
    pub store: Option<&'a Path>,
    pub vectors: Option<&'a Path>,
    pub stopwords: Option<&'a Path>,
}

/// Opens the store, loads the vector table and wires up the session manager.
///
/// Must run outside an async runtime: the live provider builds a blocking
/// HTTP client.
pub fn build_manager(paths: &DataPaths<'_>, config: &ServerConfig) -> anyhow::Result<Arc<SessionManager>> {
    let store = match paths.store {
        Some(p) => MemoryStore::open(p).with_context(|| format!("opening store {}", p.display()))?,
        None => MemoryStore::in_memory(),
    };
    let table = match paths.vectors {
        Some(p) => VectorTable::load(p).with_context(|| format!("loading vector table {}", p.display()))?,
        None => VectorTable::parse(TOY_VECTORS).context("bundled vector table")?,
    };
    let stopwords = match paths.stopwords {
        Some(p) => Stopwords::load(p).with_context(|| format!("loading stopwords {}", p.display()))?,
        None => Stopwords::default_lists(),
    };
    let core = &config.core;
    let retriever = Retriever::new(Arc::new(table), stopwords, core.retrieval.clone());
    let composer = core.build_composer()?;
    let provider = core.build_provider()?;
    Ok(Arc::new(SessionManager::new(
        Arc::new(store),
        Arc::new(retriever),
        Arc::new(composer),
        Arc::new(provider),
    )))
}

pub const DEMO_PARTNER: &str = "grandson";

/// Seeds the park example: three records and one partner. Returns false if
/// the store already held records, in which case nothing is written.
pub fn seed_demo(store: &MemoryStore) -> anyhow::Result<bool> {
    if !store.list_records().is_empty() {
        return Ok(false);
    }
    for text in [
        PARK_RECORD,
        "My daughter cooks dumplings every Sunday evening.",
        "I worked as a railway engineer for thirty years.",
    ] {
        store.add_record(text, RecordOrigin::Manual)?;
    }
    let demo = PartnerPersona {
        partner_id: DEMO_PARTNER.into(),
        display_name: "Grandson".into(),
        topic_preferences: vec!["fishing".into(), "stars".into(), "cooking".into()],
        closeness: Closeness::VeryFamiliar,
    };
    store.upsert_persona(
        &demo.partner_id,
        &demo.display_name,
        demo.topic_preferences,
        demo.closeness,
    )?;
    Ok(true)
}
