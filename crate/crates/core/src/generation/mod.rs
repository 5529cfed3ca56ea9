//! Text generation: provider plumbing, the deterministic mock, and parsing of
//! provider output into suggestion sets.
//!
//! Providers answer in a line grammar:
//!
//! ```text
//! Average|That sounds nice, thank you.
//! Familiar|The park by the river is lovely in spring.
//! tags: Agree, Disagree, Hesitant, Considerate
//! ```

mod http;
mod mock;
mod provider;
pub mod testing;

pub use http::HttpBackend;
pub use mock::{record_fragments, MockBackend};
pub use provider::{BackendError, CompletionBackend, GenerationError, Provider, ProviderConfig, RateLimiter};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::store::Closeness;

pub const MAX_SUGGESTIONS: usize = 4;
pub const MAX_TAGS: usize = 6;
pub const MAX_TAG_CHARS: usize = 40;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestion {
    pub text: String,
    pub closeness_label: Closeness,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionSet {
    pub suggestions: Vec<Suggestion>,
    pub adjustment_tags: Vec<String>,
    /// Set when fewer suggestions arrived than the prompt asked for.
    #[serde(default)]
    pub degraded: bool,
}

impl SuggestionSet {
    /// True when some closeness level labels two or more suggestions.
    pub fn has_shared_level(&self) -> bool {
        let mut seen = HashSet::new();
        self.suggestions.iter().any(|s| !seen.insert(s.closeness_label))
    }
}

fn is_line_break(c: char) -> bool {
    matches!(
        c,
        '\n' | '\r' | '\u{0B}' | '\u{0C}' | '\u{85}' | '\u{2028}' | '\u{2029}'
    )
}

/// Drops list markers such as `-`, `*`, `•`, `1.` or `2)` in front of a label.
fn strip_list_marker(s: &str) -> &str {
    let s = s.trim_start_matches(|c: char| c == '-' || c == '*' || c == '•' || c.is_whitespace());
    let digits = s.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &s[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return r.trim_start();
        }
    }
    s
}

fn tag_line(line: &str) -> Option<&str> {
    let lower_prefix: String = line.chars().take(4).flat_map(char::to_lowercase).collect();
    if lower_prefix != "tags" {
        return None;
    }
    let rest = &line[line.char_indices().nth(4).map_or(line.len(), |(i, _)| i)..];
    let rest = rest.trim_start();
    rest.strip_prefix(':').or_else(|| rest.strip_prefix('：'))
}

fn parse_tags(list: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut tags = Vec::new();
    for raw in list.split([',', '，', '、', ';']) {
        let tag = raw.trim();
        if tag.is_empty() || tag.contains('|') || tag.chars().count() > MAX_TAG_CHARS {
            if !tag.is_empty() {
                warn!(tag, "skipping malformed adjustment tag");
            }
            continue;
        }
        if !seen.insert(tag.to_lowercase()) {
            continue;
        }
        if tags.len() == MAX_TAGS {
            warn!(tag, "more than {MAX_TAGS} adjustment tags; extra dropped");
            break;
        }
        tags.push(tag.to_string());
    }
    tags
}

/// Parses `<level>|<text>` lines plus an optional `tags:` line.
///
/// Lines that do not fit are skipped with a warning. Fails only when no
/// valid suggestion line is found.
pub fn parse_suggestions(raw: &str) -> Result<SuggestionSet, GenerationError> {
    let mut suggestions = Vec::new();
    let mut tags = Vec::new();
    for line in raw.split(is_line_break) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(list) = tag_line(line) {
            tags = parse_tags(list);
            continue;
        }
        let Some((label, text)) = line.split_once('|') else {
            warn!(line, "skipping line without a level delimiter");
            continue;
        };
        let Ok(level) = strip_list_marker(label).trim().parse::<Closeness>() else {
            warn!(label, "skipping line with unknown closeness label");
            continue;
        };
        let text = text.trim();
        if text.is_empty() {
            warn!(line, "skipping line with empty text");
            continue;
        }
        if suggestions.len() == MAX_SUGGESTIONS {
            warn!(line, "more than {MAX_SUGGESTIONS} suggestions; extra dropped");
            continue;
        }
        suggestions.push(Suggestion {
            text: text.to_string(),
            closeness_label: level,
        });
    }
    if suggestions.is_empty() {
        return Err(GenerationError::UnparseableOutput);
    }
    Ok(SuggestionSet {
        suggestions,
        adjustment_tags: tags,
        degraded: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const PARK_OUTPUT: &str = "Average|That sounds nice, thank you.\n\
        Familiar|The park by the river is lovely in spring.\n\
        Familiar|We could take the fishing rods along.\n\
        VeryFamiliar|Did you see the pond where we watched the stars?\n";

    #[test]
    fn park_example_lines() {
        let set = parse_suggestions(PARK_OUTPUT).unwrap();
        let labels: Vec<Closeness> = set.suggestions.iter().map(|s| s.closeness_label).collect();
        assert_eq!(
            labels,
            vec![
                Closeness::Average,
                Closeness::Familiar,
                Closeness::Familiar,
                Closeness::VeryFamiliar
            ]
        );
        assert_eq!(set.suggestions[0].text, "That sounds nice, thank you.");
        assert!(set.has_shared_level());
        assert!(set.adjustment_tags.is_empty());
    }

    #[test]
    fn tags_line() {
        let raw = format!("{PARK_OUTPUT}tags: Agree, Disagree, Hesitant, Considerate\n");
        let set = parse_suggestions(&raw).unwrap();
        assert_eq!(
            set.adjustment_tags,
            vec!["Agree", "Disagree", "Hesitant", "Considerate"]
        );
    }

    #[test]
    fn garbage_is_unparseable() {
        assert!(matches!(
            parse_suggestions("no delimiter here at all"),
            Err(GenerationError::UnparseableOutput)
        ));
        assert!(matches!(parse_suggestions(""), Err(GenerationError::UnparseableOutput)));
        assert!(matches!(
            parse_suggestions("Close|hi"),
            Err(GenerationError::UnparseableOutput)
        ));
    }

    #[test]
    fn lenient_forms() {
        let raw = "Here you go:\n1. Average | Hello there.\r\n- very familiar|How was the lake?\n\
            Bogus|skip me\nFamiliar|\nTags： 同意，不同意、同意";
        let set = parse_suggestions(raw).unwrap();
        assert_eq!(set.suggestions.len(), 2);
        assert_eq!(set.suggestions[1].closeness_label, Closeness::VeryFamiliar);
        assert_eq!(set.adjustment_tags, vec!["同意", "不同意"]);
    }

    #[test]
    fn caps_counts() {
        let raw = (0..6)
            .map(|i| format!("Average|line {i}"))
            .collect::<Vec<_>>()
            .join("\n")
            + "\ntags: a, b, c, d, e, f, g, A";
        let set = parse_suggestions(&raw).unwrap();
        assert_eq!(set.suggestions.len(), 4);
        assert_eq!(set.adjustment_tags.len(), 6);
    }

    #[test]
    fn text_keeps_later_pipes() {
        let set = parse_suggestions("Familiar|a | b").unwrap();
        assert_eq!(set.suggestions[0].text, "a | b");
    }

    proptest! {
        #[test]
        fn never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let text = String::from_utf8_lossy(&bytes);
            if let Ok(set) = parse_suggestions(&text) {
                prop_assert!((1..=MAX_SUGGESTIONS).contains(&set.suggestions.len()));
                prop_assert!(set.adjustment_tags.len() <= MAX_TAGS);
                for s in &set.suggestions {
                    prop_assert!(!s.text.is_empty());
                    prop_assert_eq!(s.text.trim(), s.text.as_str());
                    prop_assert!(!s.text.contains(is_line_break));
                }
            }
        }
    }
}
