//! Six-part prompt assembly for starting, responding and adjusting.
//!
//! Every bundle carries the same six sections in a fixed order. Section
//! bodies are rendered from template files so the wording can be replaced
//! (for example with a Mandarin set) without touching code.

use std::fmt;
use std::fs;
use std::path::Path;

use minijinja::{context, Environment};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generation::Suggestion;
use crate::session::ChatTurn;
use crate::store::{Closeness, MemoryRecord, PartnerPersona};

pub const DEFAULT_HISTORY_TURNS: usize = 20;
pub const MAX_STARTERS: usize = 4;
pub const RESPONSE_SUGGESTIONS: usize = 4;

/// Level descriptions placed in every prompt.
pub fn closeness_instruction(level: Closeness) -> &'static str {
    match level {
        Closeness::Average => {
            "Use polite, courteous, and distant language, and do not discuss details in user records at all."
        }
        Closeness::Familiar => {
            "Use a small amount of detail in the desired content, but still maintain a certain sense of caution and distance, briefly discuss the details in personal records."
        }
        Closeness::VeryFamiliar => {
            "Discuss details in user records, and tend to ask the conversation partner more detailed questions about the selected user records."
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptTask {
    Starter,
    Response,
    Adjustment,
}

impl PromptTask {
    pub const ALL: [PromptTask; 3] = [PromptTask::Starter, PromptTask::Response, PromptTask::Adjustment];

    pub fn dir_name(self) -> &'static str {
        match self {
            PromptTask::Starter => "starter",
            PromptTask::Response => "response",
            PromptTask::Adjustment => "adjustment",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartKind {
    Overall,
    Scenario,
    UserRecords,
    Persona,
    ClosenessReference,
    ChatHistory,
}

impl PartKind {
    /// Canonical section order.
    pub const ORDER: [PartKind; 6] = [
        PartKind::Overall,
        PartKind::Scenario,
        PartKind::UserRecords,
        PartKind::Persona,
        PartKind::ClosenessReference,
        PartKind::ChatHistory,
    ];

    pub fn file_stem(self) -> &'static str {
        match self {
            PartKind::Overall => "overall",
            PartKind::Scenario => "scenario",
            PartKind::UserRecords => "user_records",
            PartKind::Persona => "persona",
            PartKind::ClosenessReference => "closeness_reference",
            PartKind::ChatHistory => "chat_history",
        }
    }

    pub fn header(self) -> &'static str {
        match self {
            PartKind::Overall => "OVERALL",
            PartKind::Scenario => "SCENARIO",
            PartKind::UserRecords => "USER RECORDS",
            PartKind::Persona => "PARTNER PERSONA",
            PartKind::ClosenessReference => "CLOSENESS REFERENCE",
            PartKind::ChatHistory => "CHAT HISTORY",
        }
    }

    /// Whether the section may just say "none".
    pub fn may_be_none(self) -> bool {
        matches!(self, PartKind::UserRecords | PartKind::ChatHistory)
    }
}

impl fmt::Display for PartKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.header())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPart {
    pub kind: PartKind,
    pub text: String,
}

/// Structured inputs kept next to the rendered text so providers that do
/// not read prose (the mock) can act on them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleContext {
    pub active_level: Closeness,
    pub records: Vec<String>,
    pub utterance: Option<String>,
    pub original: Option<Suggestion>,
    pub tag: Option<String>,
    pub expected_suggestions: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub task: PromptTask,
    pub parts: [PromptPart; 6],
    pub context: BundleContext,
}

impl PromptBundle {
    pub fn part(&self, kind: PartKind) -> &str {
        &self
            .parts
            .iter()
            .find(|p| p.kind == kind)
            .expect("all six parts present")
            .text
    }

    /// Section header line as it appears in [`PromptBundle::render`].
    pub fn header_line(index: usize, kind: PartKind) -> String {
        format!("### PART {}/6: {}", index + 1, kind.header())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, part) in self.parts.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(&Self::header_line(i, part.kind));
            out.push('\n');
            out.push_str(&part.text);
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("no starter records to open a conversation with")]
    NoStarters,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("template {name}: {message}")]
    Template { name: String, message: String },
    #[error("template {name} rendered an empty {part} section")]
    EmptyPart { name: String, part: PartKind },
}

macro_rules! default_templates {
    ($($task:literal),*) => {
        &[$(
            ($task, "overall", include_str!(concat!("../templates/", $task, "/overall.txt"))),
            ($task, "scenario", include_str!(concat!("../templates/", $task, "/scenario.txt"))),
            ($task, "user_records", include_str!(concat!("../templates/", $task, "/user_records.txt"))),
            ($task, "persona", include_str!(concat!("../templates/", $task, "/persona.txt"))),
            ($task, "closeness_reference", include_str!(concat!("../templates/", $task, "/closeness_reference.txt"))),
            ($task, "chat_history", include_str!(concat!("../templates/", $task, "/chat_history.txt"))),
        )*]
    };
}

const DEFAULT_TEMPLATES: &[(&str, &str, &str)] = default_templates!("starter", "response", "adjustment");

/// Compiled templates, one per part per task.
#[derive(Debug)]
pub struct TemplateSet {
    env: Environment<'static>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let mut env = Environment::new();
        for (task, part, source) in DEFAULT_TEMPLATES {
            env.add_template_owned(format!("{task}/{part}"), source.to_string())
                .expect("bundled templates compile");
        }
        Self { env }
    }

    /// Loads `<dir>/<task>/<part>.txt`, falling back to the bundled file for
    /// any that are missing.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        let mut env = Environment::new();
        for (task, part, builtin) in DEFAULT_TEMPLATES {
            let name = format!("{task}/{part}");
            let path = dir.join(task).join(format!("{part}.txt"));
            let source = match fs::read_to_string(&path) {
                Ok(s) => s,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => builtin.to_string(),
                Err(e) => {
                    return Err(PromptError::Template {
                        name,
                        message: format!("{}: {e}", path.display()),
                    })
                }
            };
            env.add_template_owned(name.clone(), source)
                .map_err(|e| PromptError::Template {
                    name,
                    message: e.to_string(),
                })?;
        }
        Ok(Self { env })
    }

    fn render(&self, task: PromptTask, part: PartKind, ctx: &minijinja::Value) -> Result<String, PromptError> {
        let name = format!("{}/{}", task.dir_name(), part.file_stem());
        let tmpl = self.env.get_template(&name).map_err(|e| PromptError::Template {
            name: name.clone(),
            message: e.to_string(),
        })?;
        let text = tmpl.render(ctx).map_err(|e| PromptError::Template {
            name: name.clone(),
            message: e.to_string(),
        })?;
        let text = text.trim().to_string();
        if text.is_empty() {
            return Err(PromptError::EmptyPart { name, part });
        }
        Ok(text)
    }
}

#[derive(Debug)]
pub struct PromptComposer {
    templates: TemplateSet,
    history_turns: usize,
}

impl Default for PromptComposer {
    fn default() -> Self {
        Self::new(TemplateSet::builtin(), DEFAULT_HISTORY_TURNS)
    }
}

impl PromptComposer {
    pub fn new(templates: TemplateSet, history_turns: usize) -> Self {
        Self {
            templates,
            history_turns,
        }
    }

    pub fn history_turns(&self) -> usize {
        self.history_turns
    }

    pub fn compose_response_prompt(
        &self,
        utterance: &str,
        retrieved: &[MemoryRecord],
        persona: &PartnerPersona,
        history: &[ChatTurn],
    ) -> Result<PromptBundle, PromptError> {
        let records: Vec<String> = retrieved.iter().map(|r| r.text.clone()).collect();
        self.compose(
            PromptTask::Response,
            persona,
            history,
            BundleContext {
                active_level: persona.closeness,
                records,
                utterance: Some(utterance.to_string()),
                original: None,
                tag: None,
                expected_suggestions: RESPONSE_SUGGESTIONS,
            },
        )
    }

    pub fn compose_starter_prompt(
        &self,
        starters: &[MemoryRecord],
        persona: &PartnerPersona,
        history: &[ChatTurn],
    ) -> Result<PromptBundle, PromptError> {
        if starters.is_empty() {
            return Err(PromptError::NoStarters);
        }
        if starters.len() > MAX_STARTERS {
            return Err(PromptError::InvalidArgument(format!(
                "{} starter records, at most {MAX_STARTERS} allowed",
                starters.len()
            )));
        }
        self.compose(
            PromptTask::Starter,
            persona,
            history,
            BundleContext {
                active_level: persona.closeness,
                records: starters.iter().map(|r| r.text.clone()).collect(),
                utterance: None,
                original: None,
                tag: None,
                expected_suggestions: starters.len(),
            },
        )
    }

    pub fn compose_adjustment_prompt(
        &self,
        original: &Suggestion,
        tag: &str,
        utterance: Option<&str>,
        persona: &PartnerPersona,
        history: &[ChatTurn],
    ) -> Result<PromptBundle, PromptError> {
        if original.text.trim().is_empty() {
            return Err(PromptError::InvalidArgument("original suggestion is empty".into()));
        }
        let tag = tag.trim();
        if tag.is_empty() {
            return Err(PromptError::InvalidArgument("adjustment tag is empty".into()));
        }
        self.compose(
            PromptTask::Adjustment,
            persona,
            history,
            BundleContext {
                active_level: persona.closeness,
                records: Vec::new(),
                utterance: utterance.map(str::to_string),
                original: Some(original.clone()),
                tag: Some(tag.to_string()),
                expected_suggestions: 1,
            },
        )
    }

    fn compose(
        &self,
        task: PromptTask,
        persona: &PartnerPersona,
        history: &[ChatTurn],
        context: BundleContext,
    ) -> Result<PromptBundle, PromptError> {
        let recent = &history[history.len().saturating_sub(self.history_turns)..];
        let history: Vec<_> = recent
            .iter()
            .map(|t| context! { speaker => t.speaker.label(), text => t.text.clone() })
            .collect();
        let levels: Vec<_> = Closeness::ALL
            .iter()
            .map(|&l| {
                context! {
                    name => l.display_name(),
                    label => l.label(),
                    instruction => closeness_instruction(l),
                    active => l == context.active_level,
                }
            })
            .collect();
        let active = context.active_level;
        let ctx = context! {
            persona => context! {
                name => if persona.display_name.is_empty() { persona.partner_id.clone() } else { persona.display_name.clone() },
                topics => persona.topic_preferences.clone(),
                closeness => persona.closeness.display_name(),
            },
            active => context! {
                name => active.display_name(),
                label => active.label(),
                instruction => closeness_instruction(active),
            },
            levels => levels,
            records => context.records.clone(),
            history => history,
            utterance => context.utterance.clone(),
            original => context.original.as_ref().map(|o| context! { text => o.text.clone(), label => o.closeness_label.label() }),
            tag => context.tag.clone(),
            count => context.expected_suggestions,
        };
        let mut parts = Vec::with_capacity(6);
        for kind in PartKind::ORDER {
            parts.push(PromptPart {
                kind,
                text: self.templates.render(task, kind, &ctx)?,
            });
        }
        let parts: [PromptPart; 6] = parts.try_into().expect("six parts");
        Ok(PromptBundle { task, parts, context })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::{Speaker, TurnSource};
    use crate::store::{RecordId, RecordOrigin};
    use chrono::{TimeZone, Utc};

    const PARK: &str = "I like fishing with friends in the park… watching the stars near XiShan Park.";
    const UTTERANCE: &str = "I went to the park the day before yesterday… Would you like to go out and see it?";

    fn record(text: &str) -> MemoryRecord {
        MemoryRecord {
            id: RecordId(1),
            text: text.into(),
            created_at: Utc.timestamp_opt(0, 0).unwrap(),
            origin: RecordOrigin::Manual,
        }
    }

    fn persona(level: Closeness) -> PartnerPersona {
        PartnerPersona {
            partner_id: "p1".into(),
            display_name: "Grandson".into(),
            topic_preferences: vec!["weather".into(), "grandson's studies".into()],
            closeness: level,
        }
    }

    fn turns(n: usize) -> Vec<ChatTurn> {
        (0..n)
            .map(|i| ChatTurn {
                speaker: if i % 2 == 0 { Speaker::Partner } else { Speaker::User },
                text: format!("turn number {i}"),
                committed_at: Utc.timestamp_opt(i as i64, 0).unwrap(),
                source: if i % 2 == 0 {
                    TurnSource::PartnerSpeech
                } else {
                    TurnSource::Manual
                },
            })
            .collect()
    }

    #[test]
    fn instructions_per_level() {
        assert!(closeness_instruction(Closeness::Average).contains("do not discuss details in user records at all"));
        assert!(closeness_instruction(Closeness::Familiar).contains("briefly discuss the details in personal records"));
        assert!(closeness_instruction(Closeness::VeryFamiliar)
            .contains("ask the conversation partner more detailed questions"));
    }

    #[test]
    fn response_bundle_contents() {
        let c = PromptComposer::default();
        let b = c
            .compose_response_prompt(UTTERANCE, &[record(PARK)], &persona(Closeness::VeryFamiliar), &[])
            .unwrap();
        assert_eq!(b.task, PromptTask::Response);
        assert!(b
            .part(PartKind::UserRecords)
            .contains("fishing with friends in the park"));
        assert!(b.part(PartKind::Scenario).contains(UTTERANCE));
        assert!(b.part(PartKind::Persona).contains("grandson's studies"));
        assert!(b.part(PartKind::Persona).contains("Very Familiar"));
        assert_eq!(b.part(PartKind::ChatHistory), "none");
        let text = b.render();
        assert!(text.contains(PARK));
        assert!(text.contains(closeness_instruction(Closeness::VeryFamiliar)));
        assert!(text.contains(closeness_instruction(Closeness::Average)));
        assert!(text.contains("AAC"));
        assert!(text.contains("exactly 4 suggestions"));
    }

    #[test]
    fn no_records_says_none() {
        let c = PromptComposer::default();
        let b = c
            .compose_response_prompt("hello", &[], &persona(Closeness::Average), &[])
            .unwrap();
        assert_eq!(b.part(PartKind::UserRecords), "none");
    }

    #[test]
    fn history_budget_keeps_latest() {
        let c = PromptComposer::default();
        let history = turns(50);
        let b = c
            .compose_response_prompt("hello", &[], &persona(Closeness::Familiar), &history)
            .unwrap();
        let lines: Vec<&str> = b.part(PartKind::ChatHistory).lines().collect();
        assert_eq!(lines.len(), 20);
        assert_eq!(lines[0], "Partner: turn number 30");
        assert_eq!(lines[19], "User: turn number 49");
    }

    #[test]
    fn starter_counts() {
        let c = PromptComposer::default();
        let recs: Vec<MemoryRecord> = (0..4).map(|i| record(&format!("memory {i}"))).collect();
        let b = c
            .compose_starter_prompt(&recs, &persona(Closeness::Familiar), &[])
            .unwrap();
        assert!(b.part(PartKind::Overall).contains("exactly 4 opening sentences"));
        let b = c
            .compose_starter_prompt(&recs[..1], &persona(Closeness::Familiar), &[])
            .unwrap();
        assert!(b.part(PartKind::Overall).contains("exactly 1 opening sentences"));
        assert_eq!(b.context.expected_suggestions, 1);
        assert!(matches!(
            c.compose_starter_prompt(&[], &persona(Closeness::Familiar), &[]),
            Err(PromptError::NoStarters)
        ));
    }

    #[test]
    fn adjustment_prompt() {
        let c = PromptComposer::default();
        let original = Suggestion {
            text: "Sure, the park sounds lovely.".into(),
            closeness_label: Closeness::Average,
        };
        let p = persona(Closeness::Average);
        let b = c
            .compose_adjustment_prompt(&original, "Disagree", Some(UTTERANCE), &p, &[])
            .unwrap();
        let scenario = b.part(PartKind::Scenario);
        assert!(scenario.contains("Sure, the park sounds lovely."));
        assert!(scenario.contains("\"Disagree\" attitude"));
        assert!(b.part(PartKind::Overall).contains("using the level Average"));
        let b = c.compose_adjustment_prompt(&original, "Agree", None, &p, &[]).unwrap();
        assert!(b.part(PartKind::Scenario).contains("\"Agree\" attitude"));

        let empty = Suggestion {
            text: "  ".into(),
            closeness_label: Closeness::Average,
        };
        assert!(matches!(
            c.compose_adjustment_prompt(&empty, "Agree", None, &p, &[]),
            Err(PromptError::InvalidArgument(_))
        ));
        assert!(matches!(
            c.compose_adjustment_prompt(&original, " ", None, &p, &[]),
            Err(PromptError::InvalidArgument(_))
        ));
    }

    #[test]
    fn render_has_six_ordered_headers() {
        let c = PromptComposer::default();
        let b = c
            .compose_response_prompt("hi", &[], &persona(Closeness::Average), &turns(3))
            .unwrap();
        let rendered = b.render();
        let headers: Vec<&str> = rendered.lines().filter(|l| l.starts_with("### PART ")).collect();
        let expected: Vec<String> = PartKind::ORDER
            .iter()
            .enumerate()
            .map(|(i, k)| PromptBundle::header_line(i, *k))
            .collect();
        assert_eq!(headers, expected);
    }

    #[test]
    fn template_override_from_dir() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("response")).unwrap();
        fs::write(dir.path().join("response/scenario.txt"), "对方说：{{ utterance }}").unwrap();
        let c = PromptComposer::new(TemplateSet::from_dir(dir.path()).unwrap(), 20);
        let b = c
            .compose_response_prompt("你好", &[], &persona(Closeness::Average), &[])
            .unwrap();
        assert_eq!(b.part(PartKind::Scenario), "对方说：你好");
        // untouched parts fall back to the bundled files
        assert!(b.part(PartKind::Overall).contains("AAC"));
    }

    #[test]
    fn broken_template_reported() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("starter")).unwrap();
        fs::write(dir.path().join("starter/persona.txt"), "{% if %}").unwrap();
        assert!(matches!(
            TemplateSet::from_dir(dir.path()),
            Err(PromptError::Template { .. })
        ));
        fs::write(dir.path().join("starter/persona.txt"), "   ").unwrap();
        let c = PromptComposer::new(TemplateSet::from_dir(dir.path()).unwrap(), 20);
        let err = c
            .compose_starter_prompt(&[record("x")], &persona(Closeness::Average), &[])
            .unwrap_err();
        assert!(matches!(
            err,
            PromptError::EmptyPart {
                part: PartKind::Persona,
                ..
            }
        ));
    }
}
