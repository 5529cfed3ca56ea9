//! Deterministic stand-in for a live model.
//!
//! Output depends only on the bundle. Wording variants are picked from a
//! hash of the rendered prompt; record content is echoed according to the
//! closeness rules: Average lines never quote a record, Familiar lines quote
//! one clause, VeryFamiliar lines quote a clause and end with a question.

use std::time::Duration;

use sha2::{Digest, Sha256};

use super::provider::{BackendError, CompletionBackend};
use crate::prompt::{PromptBundle, PromptTask};
use crate::store::Closeness;

pub const MOCK_TAGS: [&str; 4] = ["Agree", "Disagree", "Hesitant", "Considerate"];

const AVERAGE_REPLIES: [&str; 3] = [
    "Sure, that sounds nice.",
    "Thank you, that sounds lovely.",
    "Yes, I would enjoy that.",
];

const AVERAGE_OPENERS: [&str; 4] = [
    "How have you been lately?",
    "It is nice to see you today.",
    "What have you been up to recently?",
    "Shall we chat for a while?",
];

#[derive(Debug, Default, Clone, Copy)]
pub struct MockBackend;

impl MockBackend {
    pub fn complete(&self, bundle: &PromptBundle) -> String {
        let seed = stable_hash(&bundle.render());
        match bundle.task {
            PromptTask::Response => response(bundle, seed),
            PromptTask::Starter => starters(bundle, seed),
            PromptTask::Adjustment => adjustment(bundle),
        }
    }
}

impl CompletionBackend for MockBackend {
    fn send(&self, bundle: &PromptBundle, _timeout: Duration) -> Result<String, BackendError> {
        Ok(self.complete(bundle))
    }
}

fn stable_hash(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Clauses of a record text, split at sentence and clause punctuation.
pub fn record_fragments(text: &str) -> Vec<String> {
    text.split(|c: char| {
        matches!(
            c,
            '.' | ',' | ';' | '!' | '?' | '…' | '。' | '，' | '；' | '！' | '？' | '、' | '\n' | '\r'
        )
    })
    .map(str::trim)
    .filter(|f| f.chars().count() >= 2)
    .map(str::to_string)
    .collect()
}

/// Clause `pick` of record `index`, cycling over both.
fn fragment(records: &[String], index: usize, pick: u64) -> Option<String> {
    if records.is_empty() {
        return None;
    }
    let frags = record_fragments(&records[index % records.len()]);
    if frags.is_empty() {
        return None;
    }
    Some(frags[(pick as usize) % frags.len()].clone())
}

fn line(level: Closeness, text: &str) -> String {
    format!("{}|{}", level.label(), text)
}

fn tags_line() -> String {
    format!("tags: {}", MOCK_TAGS.join(", "))
}

fn response(bundle: &PromptBundle, seed: u64) -> String {
    let records = &bundle.context.records;
    let average = AVERAGE_REPLIES[(seed % AVERAGE_REPLIES.len() as u64) as usize];
    let (familiar_a, familiar_b, very) = match (
        fragment(records, 0, seed >> 8),
        fragment(records, 1, (seed >> 16) + 1),
        fragment(records, 0, seed >> 24),
    ) {
        (Some(a), Some(b), Some(c)) => (
            format!("Sure, {a}."),
            format!("That reminds me: {b}."),
            format!("{c}. Have you ever done that too?"),
        ),
        _ => (
            "Sure, I would like that.".to_string(),
            "That sounds good to me.".to_string(),
            "That sounds wonderful. How was it?".to_string(),
        ),
    };
    [
        line(Closeness::Average, average),
        line(Closeness::Familiar, &familiar_a),
        line(Closeness::Familiar, &familiar_b),
        line(Closeness::VeryFamiliar, &very),
        tags_line(),
    ]
    .join("\n")
}

fn starters(bundle: &PromptBundle, seed: u64) -> String {
    let records = &bundle.context.records;
    let level = bundle.context.active_level;
    let mut out: Vec<String> = (0..bundle.context.expected_suggestions)
        .map(|i| {
            let frag = fragment(records, i, seed >> (i * 8));
            let text = match (level, frag) {
                (Closeness::Average, _) | (_, None) => AVERAGE_OPENERS[i % AVERAGE_OPENERS.len()].to_string(),
                (Closeness::Familiar, Some(f)) => format!("I was just thinking: {f}."),
                (Closeness::VeryFamiliar, Some(f)) => format!("Do you remember? {f}. What do you think about that?"),
            };
            line(level, &text)
        })
        .collect();
    out.push(tags_line());
    out.join("\n")
}

fn strip_affirmation(text: &str) -> &str {
    for prefix in ["Sure, ", "Yes, ", "Oh, ", "Sure. ", "Yes. "] {
        if let Some(rest) = text.strip_prefix(prefix) {
            return rest;
        }
    }
    text
}

fn lower_first(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) if !text.starts_with("I ") => c.to_lowercase().chain(chars).collect(),
        _ => text.to_string(),
    }
}

fn adjustment(bundle: &PromptBundle) -> String {
    let Some(original) = &bundle.context.original else {
        return line(bundle.context.active_level, "Could you say that again?");
    };
    let tag = bundle.context.tag.as_deref().unwrap_or_default();
    let rest = strip_affirmation(&original.text);
    let text = match tag.to_lowercase().as_str() {
        "agree" => format!("Yes, I agree. {}", original.text),
        "disagree" => format!("No, I don't think so. {rest}"),
        "hesitant" => format!("Hmm, I'm not sure yet. {rest}"),
        "considerate" => format!("If it suits you, {}", lower_first(rest)),
        _ => format!("[{tag}] {}", original.text),
    };
    line(original.closeness_label, &text)
}
