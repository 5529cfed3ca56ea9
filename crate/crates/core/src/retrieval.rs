//! Keyword extraction, embedding expansion and overlap scoring of memory
//! records against the partner's utterance.
//!
//! The pipeline is:
//!
//! 1. tokenize the utterance and drop stopwords to get keywords;
//! 2. expand every keyword with its `neighbor_k` nearest words, giving a
//!    multiset vocabulary (the keyword itself is included);
//! 3. score each record by counting vocabulary entries, with multiplicity,
//!    that occur among the record's words;
//! 4. keep the top `top_n` records with a positive score.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingProvider, DEFAULT_NEIGHBOR_K};
use crate::store::{MemoryRecord, PartnerPersona};
use crate::text::{is_cjk, Stopwords, Tokenizer, UnicodeTokenizer};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub neighbor_k: usize,
    pub top_n: usize,
    pub starter_max: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            neighbor_k: DEFAULT_NEIGHBOR_K,
            top_n: 3,
            starter_max: 4,
        }
    }
}

/// Ordered, duplicate-free content words of an utterance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeywordSet(Vec<String>);

impl KeywordSet {
    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }
}

/// Multiset of words that a record is matched against.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VocabularySet {
    counts: BTreeMap<String, u32>,
}

impl VocabularySet {
    pub fn insert(&mut self, word: impl Into<String>) {
        *self.counts.entry(word.into()).or_insert(0) += 1;
    }

    pub fn multiplicity(&self, word: &str) -> u32 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    /// Distinct words with their multiplicities.
    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.counts.iter().map(|(w, &n)| (w.as_str(), n))
    }

    /// Total number of entries counting multiplicity.
    pub fn len(&self) -> usize {
        self.counts.values().map(|&n| n as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Multiset union.
    pub fn absorb(&mut self, other: &VocabularySet) {
        for (w, n) in other.iter() {
            *self.counts.entry(w.to_string()).or_insert(0) += n;
        }
    }
}

/// Priority score: each vocabulary entry found in the record's word set adds one.
pub fn overlap_score(record_words: &HashSet<String>, vocab: &VocabularySet) -> u64 {
    vocab
        .iter()
        .filter(|(w, _)| record_words.contains(*w))
        .map(|(_, n)| u64::from(n))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoredRecord {
    pub record: MemoryRecord,
    pub priority: u64,
}

/// Higher priority first, then newer, then larger id.
pub fn rank_order(a: &ScoredRecord, b: &ScoredRecord) -> Ordering {
    b.priority
        .cmp(&a.priority)
        .then_with(|| recency_order(&a.record, &b.record))
}

/// Newer first, then larger id.
pub fn recency_order(a: &MemoryRecord, b: &MemoryRecord) -> Ordering {
    b.created_at.cmp(&a.created_at).then_with(|| b.id.cmp(&a.id))
}

pub struct Retriever {
    embeddings: Arc<dyn EmbeddingProvider>,
    stopwords: Stopwords,
    tokenizer: Box<dyn Tokenizer>,
    config: RetrievalConfig,
}

impl std::fmt::Debug for Retriever {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Retriever")
            .field("stopwords", &self.stopwords.len())
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Retriever {
    pub fn new(embeddings: Arc<dyn EmbeddingProvider>, stopwords: Stopwords, config: RetrievalConfig) -> Self {
        Self {
            embeddings,
            stopwords,
            tokenizer: Box::new(UnicodeTokenizer),
            config,
        }
    }

    /// Swaps in another tokenizer, e.g. a part-of-speech aware one.
    pub fn with_tokenizer(mut self, tokenizer: Box<dyn Tokenizer>) -> Self {
        self.tokenizer = tokenizer;
        self
    }

    pub fn config(&self) -> &RetrievalConfig {
        &self.config
    }

    pub fn embeddings(&self) -> &Arc<dyn EmbeddingProvider> {
        &self.embeddings
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        self.tokenizer.tokenize(text, self.embeddings.as_ref())
    }

    pub fn extract_keywords(&self, utterance: &str) -> KeywordSet {
        let mut seen = HashSet::new();
        let keywords = self
            .tokenize(utterance)
            .into_iter()
            .filter(|t| !self.stopwords.contains(t))
            .filter(|t| {
                let mut chars = t.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => is_cjk(c),
                    (Some(_), Some(_)) => true,
                    _ => false,
                }
            })
            .filter(|t| seen.insert(t.clone()))
            .collect();
        KeywordSet(keywords)
    }

    pub fn build_vocabulary(&self, keywords: &KeywordSet, k: usize) -> VocabularySet {
        let mut vocab = VocabularySet::default();
        for keyword in keywords.as_slice() {
            vocab.insert(keyword.clone());
            for n in self.embeddings.neighbors(keyword, k) {
                vocab.insert(n);
            }
        }
        vocab
    }

    /// Deduplicated words of a record, stopwords kept.
    pub fn record_words(&self, text: &str) -> HashSet<String> {
        self.tokenize(text).into_iter().collect()
    }

    pub fn score_record(&self, record: &MemoryRecord, vocab: &VocabularySet) -> u64 {
        overlap_score(&self.record_words(&record.text), vocab)
    }

    /// Every record with its priority, in rank order. Zero scores included.
    pub fn rank(&self, utterance: &str, records: &[MemoryRecord]) -> Vec<ScoredRecord> {
        let keywords = self.extract_keywords(utterance);
        let vocab = self.build_vocabulary(&keywords, self.config.neighbor_k);
        let mut scored: Vec<ScoredRecord> = records
            .iter()
            .map(|r| ScoredRecord {
                priority: self.score_record(r, &vocab),
                record: r.clone(),
            })
            .collect();
        scored.sort_by(rank_order);
        scored
    }

    /// Top `n` records with a positive score.
    pub fn retrieve_relevant(&self, utterance: &str, records: &[MemoryRecord], n: usize) -> Vec<MemoryRecord> {
        self.rank(utterance, records)
            .into_iter()
            .take_while(|s| s.priority > 0)
            .take(n)
            .map(|s| s.record)
            .collect()
    }

    /// Picks up to `max` records to open a conversation with.
    ///
    /// Each topic preference is expanded into its own vocabulary. A record's
    /// score is the sum over topics and its theme is the topic that scored it
    /// highest (first topic on ties). Candidates are visited in rank order;
    /// the first pass takes one record per unseen theme, the second pass
    /// fills any remaining slots in rank order. With no positive scores the
    /// most recent records are returned.
    pub fn select_starter_records(
        &self,
        records: &[MemoryRecord],
        persona: &PartnerPersona,
        max: usize,
    ) -> Vec<MemoryRecord> {
        let topic_vocabs: Vec<VocabularySet> = persona
            .topic_preferences
            .iter()
            .map(|t| self.build_vocabulary(&self.extract_keywords(t), self.config.neighbor_k))
            .collect();

        let mut candidates: Vec<(ScoredRecord, usize)> = records
            .iter()
            .filter_map(|r| {
                let words = self.record_words(&r.text);
                let per_topic: Vec<u64> = topic_vocabs.iter().map(|v| overlap_score(&words, v)).collect();
                let total: u64 = per_topic.iter().sum();
                if total == 0 {
                    return None;
                }
                let best = per_topic.iter().copied().max().unwrap_or(0);
                let theme = per_topic.iter().position(|&s| s == best).unwrap_or(0);
                Some((
                    ScoredRecord {
                        record: r.clone(),
                        priority: total,
                    },
                    theme,
                ))
            })
            .collect();

        if candidates.is_empty() {
            let mut recent = records.to_vec();
            recent.sort_by(recency_order);
            recent.truncate(max);
            return recent;
        }

        candidates.sort_by(|a, b| rank_order(&a.0, &b.0));
        let mut taken = vec![false; candidates.len()];
        let mut themes = HashSet::new();
        let mut picked = Vec::new();
        for (i, (c, theme)) in candidates.iter().enumerate() {
            if picked.len() == max {
                break;
            }
            if themes.insert(*theme) {
                taken[i] = true;
                picked.push(c.record.clone());
            }
        }
        for (i, (c, _)) in candidates.iter().enumerate() {
            if picked.len() == max {
                break;
            }
            if !taken[i] {
                picked.push(c.record.clone());
            }
        }
        picked
    }
}
