//! Chat prompts: the query prompt and the failure-feedback prompt.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{Instruction, UnreliableBehavior};
use crate::parse::RawCompletion;

pub const DEFAULT_DEMO: &str = include_str!("../fixtures/demo.txt");
pub const DEFAULT_BEHAVIORS: &str = include_str!("../fixtures/behaviors.toml");

pub const SYSTEM_PROMPT: &str = "You are a helpful assistant that pays attention to the user's instructions and writes good python code for operating a robot arm in a tabletop environment.";

/// Everything before the demonstration code in the second message.
pub const USER_PREFIX: &str = "I'm seeking assistance with developing Python code to manage a robotic arm functioning on a tabletop. Each time I present a new prompt, please give the policy code accordingly. Focus closely on identifying and maintaining consistent coding structures from the context provided. Ensure your solutions are meticulous and well-considered. Omit any import statements. Avoid restating my requests or adding textual explanations (inline code comments are acceptable). To begin, here\u{2019}s the reference code segment: `";

pub const USER_SUFFIX: &str = "`. Note: the coordinate system is defined as follows \u{2014} x indicates depth (front to back), y represents horizontal movement (left to right), and z denotes vertical direction (bottom to top).";

pub const ASSISTANT_ACK: &str = "Got it. I will provide policy code what you give me next.";

pub const IMPORT_RULE: &str = "Omit any import statements.";

pub const FEEDBACK_OPENING: &str = "During this manipulation, you generated the following failed policy code:";
pub const FEEDBACK_BEHAVIORS: &str = "These policy codes result in one of the following unreliable behaviors:";
pub const FEEDBACK_REQUEST: &str = "Based on the experience of this failure, regenerate the policy code for the task.";

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("demonstration code is empty")]
    EmptyDemo,
    #[error("chat message content is empty")]
    EmptyMessage,
    #[error("behavior fixture is malformed: {0}")]
    Malformed(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Result<Self, PromptError> {
        let content = content.into();
        if content.is_empty() {
            return Err(PromptError::EmptyMessage);
        }
        Ok(Self { role, content })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub messages: Vec<ChatMessage>,
    pub demo_id: String,
}

impl PromptBundle {
    /// Content of the final user message.
    pub fn last_user(&self) -> &str {
        self.messages.iter().rev().find(|m| m.role == Role::User).map_or("", |m| m.content.as_str())
    }

    /// The instruction text of the `# Query: <text>.` line closing the
    /// last user message.
    pub fn query_text(&self) -> Option<&str> {
        let last = self.last_user();
        let line = last.lines().last()?;
        line.strip_prefix("# Query: ").map(|q| q.strip_suffix('.').unwrap_or(q))
    }

    pub fn is_feedback(&self) -> bool {
        self.last_user().starts_with(FEEDBACK_OPENING)
    }

    /// The behavior named by a feedback prompt.
    pub fn feedback_behavior(&self) -> Option<UnreliableBehavior> {
        if !self.is_feedback() {
            return None;
        }
        let last = self.last_user();
        let marker = format!("\n{FEEDBACK_BEHAVIORS}\n1.");
        let at = last.rfind(&marker)? + marker.len();
        last[at..].lines().next()?.trim().parse().ok()
    }

    /// Hex SHA-256 over the canonical JSON of the messages.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(&self.messages).expect("messages serialize");
        hex::encode(Sha256::digest(&json))
    }
}

/// Demonstration code placed in the second message, identical across
/// levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemonstrationCode {
    pub id: String,
    pub code: String,
}

impl DemonstrationCode {
    pub fn new(id: impl Into<String>, code: impl Into<String>) -> Self {
        Self { id: id.into(), code: code.into() }
    }

    pub fn builtin() -> Self {
        Self::new("demo", DEFAULT_DEMO)
    }

    pub fn from_file(path: &Path) -> Result<Self, PromptError> {
        let code = std::fs::read_to_string(path)
            .map_err(|e| PromptError::Io { path: path.display().to_string(), message: e.to_string() })?;
        let id = path.file_stem().map_or_else(|| "demo".to_string(), |s| s.to_string_lossy().into_owned());
        Ok(Self { id, code })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorDescription {
    pub description: String,
    pub example: String,
    pub solution: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BehaviorCatalog {
    entries: BTreeMap<UnreliableBehavior, BehaviorDescription>,
}

impl BehaviorCatalog {
    pub fn builtin() -> Self {
        Self::from_toml(DEFAULT_BEHAVIORS).expect("built-in behavior fixture is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, PromptError> {
        let raw: BTreeMap<String, BehaviorDescription> =
            toml::from_str(text).map_err(|e| PromptError::Malformed(e.to_string()))?;
        let mut entries = BTreeMap::new();
        for (name, d) in raw {
            let b: UnreliableBehavior = name.parse().map_err(|_| PromptError::Malformed(format!("unknown behavior `{name}`")))?;
            entries.insert(b, d);
        }
        if let Some(b) = UnreliableBehavior::ALL.into_iter().find(|b| !entries.contains_key(b)) {
            return Err(PromptError::Malformed(format!("no description for {b}")));
        }
        Ok(Self { entries })
    }

    pub fn get(&self, b: UnreliableBehavior) -> &BehaviorDescription {
        &self.entries[&b]
    }
}

fn query_line(ins: &Instruction) -> String {
    format!("# Query: {}.", ins.text.trim_end_matches('.'))
}

fn preamble(demo: &DemonstrationCode) -> Vec<ChatMessage> {
    vec![
        ChatMessage { role: Role::System, content: SYSTEM_PROMPT.to_string() },
        ChatMessage { role: Role::User, content: format!("{USER_PREFIX}{}{USER_SUFFIX}", demo.code) },
        ChatMessage { role: Role::Assistant, content: ASSISTANT_ACK.to_string() },
    ]
}

/// System message, rules plus demonstration, acknowledgment, query.
pub fn build_prompt(ins: &Instruction, demo: &DemonstrationCode) -> Result<PromptBundle, PromptError> {
    if demo.code.trim().is_empty() {
        return Err(PromptError::EmptyDemo);
    }
    let mut messages = preamble(demo);
    messages.push(ChatMessage { role: Role::User, content: query_line(ins) });
    Ok(PromptBundle { messages, demo_id: demo.id.clone() })
}

/// Same preamble as [`build_prompt`]; the last message quotes the failed
/// completion verbatim, names the classified behavior and closes with the
/// regeneration request and the original query.
pub fn build_feedback_prompt(
    failed: &RawCompletion,
    behavior: UnreliableBehavior,
    ins: &Instruction,
    demo: &DemonstrationCode,
    catalog: &BehaviorCatalog,
) -> PromptBundle {
    let d = catalog.get(behavior);
    let content = format!(
        "{FEEDBACK_OPENING}\n{}\n{FEEDBACK_BEHAVIORS}\n1.{}\n{}\nPossible code like: {}\nSolution is {}\n{FEEDBACK_REQUEST}\n{}",
        failed.text,
        behavior.name(),
        d.description,
        d.example,
        d.solution,
        query_line(ins),
    );
    let mut messages = preamble(demo);
    messages.push(ChatMessage { role: Role::User, content });
    PromptBundle { messages, demo_id: demo.id.clone() }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instructions::TemplateLibrary;
    use crate::model::{GranularityLevel, TaskRegistry};
    use crate::sim::WorkspaceBounds;

    fn rubbish(level: GranularityLevel) -> Instruction {
        let t = TaskRegistry::builtin().get("PutRubbishInBin").unwrap().clone();
        TemplateLibrary::builtin().render(&t, level, &WorkspaceBounds::default()).unwrap()
    }

    #[test]
    fn four_message_shape() {
        let b = build_prompt(&rubbish(GranularityLevel::P), &DemonstrationCode::builtin()).unwrap();
        let roles: Vec<Role> = b.messages.iter().map(|m| m.role).collect();
        assert_eq!(roles, [Role::System, Role::User, Role::Assistant, Role::User]);
        assert_eq!(b.messages[3].content, "# Query: drop the rubbish into the bin.");
        assert!(b.messages[1].content.contains(IMPORT_RULE));
        assert_eq!(b.query_text(), Some("drop the rubbish into the bin"));
        assert!(!b.is_feedback());
    }

    #[test]
    fn levels_differ_only_in_query() {
        let demo = DemonstrationCode::builtin();
        let a = build_prompt(&rubbish(GranularityLevel::A), &demo).unwrap();
        let c = build_prompt(&rubbish(GranularityLevel::C), &demo).unwrap();
        assert_eq!(a.messages[..3], c.messages[..3]);
        assert_ne!(a.messages[3], c.messages[3]);
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn empty_demo() {
        let demo = DemonstrationCode::new("empty", " \n");
        assert_eq!(build_prompt(&rubbish(GranularityLevel::A), &demo), Err(PromptError::EmptyDemo));
    }

    #[test]
    fn feedback_embeds_code_and_behavior() {
        let failed = RawCompletion::new("import numpy as np\ncomposer(grasp the rubbish)", "mock", 0);
        let cat = BehaviorCatalog::builtin();
        let ins = rubbish(GranularityLevel::A);
        let b = build_feedback_prompt(&failed, UnreliableBehavior::Nonsense, &ins, &DemonstrationCode::builtin(), &cat);
        let last = b.last_user();
        assert!(last.contains(&failed.text));
        assert!(last.contains("1.Nonsense\n"));
        assert!(last.contains(&cat.get(UnreliableBehavior::Nonsense).description));
        assert!(last.contains("regenerate the policy code"));
        assert!(b.is_feedback());
        assert_eq!(b.feedback_behavior(), Some(UnreliableBehavior::Nonsense));
        assert_eq!(b.query_text(), Some("throw the rubbish"));

        let d = build_feedback_prompt(&failed, UnreliableBehavior::Disorder, &ins, &DemonstrationCode::builtin(), &cat);
        assert!(d.last_user().contains("unreasonable sequence of manipulation steps"));
        assert_eq!(d.feedback_behavior(), Some(UnreliableBehavior::Disorder));
    }

    #[test]
    fn feedback_behavior_ignores_quoted_code() {
        let failed = RawCompletion::new(format!("{FEEDBACK_BEHAVIORS}\n1.Badpose"), "mock", 0);
        let b = build_feedback_prompt(
            &failed,
            UnreliableBehavior::Infeasible,
            &rubbish(GranularityLevel::C),
            &DemonstrationCode::builtin(),
            &BehaviorCatalog::builtin(),
        );
        assert_eq!(b.feedback_behavior(), Some(UnreliableBehavior::Infeasible));
    }
}
