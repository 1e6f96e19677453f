//! Parser for the composer mini-language.
//!
//! A completion is accepted as a [`Program`] only when every non-blank line
//! is one of:
//!
//! ```text
//! "planner" generated code
//! context: "objects = ['bin', 'rubbish']"      (or the bare objects = [...])
//! composer(grasp the rubbish)                   (the phrase may be quoted)
//! # a comment
//! ```
//!
//! Inline `#` comments are allowed after context and composer lines, and bare
//! code-fence lines are ignored. Anything else, including import statements,
//! makes the completion Nonsense. A completion without any composer call that
//! states the task cannot be done is a [`ParseResult::Refusal`].

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Evidence, EvidenceKind};
use crate::sim::fmt_num;

pub const DEFAULT_GRAMMAR: &str = include_str!("../fixtures/grammar.toml");

#[derive(Debug, Error, PartialEq)]
pub enum GrammarError {
    #[error("grammar fixture is malformed: {0}")]
    Malformed(String),
}

/// A completion as returned by a backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCompletion {
    pub text: String,
    pub backend_id: String,
    pub latency_ms: u64,
}

impl RawCompletion {
    pub fn new(text: impl Into<String>, backend_id: impl Into<String>, latency_ms: u64) -> Self {
        Self { text: text.into(), backend_id: backend_id.into(), latency_ms }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    MoveTo,
    Grasp,
    OpenGripper,
    CloseGripper,
    Rotate,
    ResetPose,
}

impl Verb {
    pub const ALL: [Verb; 6] =
        [Verb::MoveTo, Verb::Grasp, Verb::OpenGripper, Verb::CloseGripper, Verb::Rotate, Verb::ResetPose];

    pub fn name(self) -> &'static str {
        match self {
            Verb::MoveTo => "move_to",
            Verb::Grasp => "grasp",
            Verb::OpenGripper => "open_gripper",
            Verb::CloseGripper => "close_gripper",
            Verb::Rotate => "rotate",
            Verb::ResetPose => "reset_pose",
        }
    }

    pub fn from_name(s: &str) -> Option<Verb> {
        Verb::ALL.into_iter().find(|v| v.name() == s)
    }

    pub fn takes_target(self) -> bool {
        matches!(self, Verb::MoveTo | Verb::Grasp)
    }
}

/// Where a move ends relative to its target object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveOffset {
    Center,
    /// Hover point just above the top face.
    Top,
    /// This many units above the top face.
    Above(f64),
}

/// Direction of the final grasp leg.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    Above,
    Side,
    Front,
}

/// Gripper-frame rotation axis; `Z` is the tool axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationAxis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verb", rename_all = "snake_case")]
pub enum ComposerStep {
    MoveTo { target: String, offset: MoveOffset },
    Grasp { target: String, approach: Option<Approach> },
    OpenGripper,
    CloseGripper,
    Rotate { degrees: f64, axis: RotationAxis },
    ResetPose,
}

impl ComposerStep {
    pub fn verb(&self) -> Verb {
        match self {
            ComposerStep::MoveTo { .. } => Verb::MoveTo,
            ComposerStep::Grasp { .. } => Verb::Grasp,
            ComposerStep::OpenGripper => Verb::OpenGripper,
            ComposerStep::CloseGripper => Verb::CloseGripper,
            ComposerStep::Rotate { .. } => Verb::Rotate,
            ComposerStep::ResetPose => Verb::ResetPose,
        }
    }

    pub fn target(&self) -> Option<&str> {
        match self {
            ComposerStep::MoveTo { target, .. } | ComposerStep::Grasp { target, .. } => Some(target),
            _ => None,
        }
    }
}

fn spoken(name: &str) -> String {
    name.replace('_', " ")
}

/// Canonical phrase, parsed back by the built-in grammar.
impl fmt::Display for ComposerStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComposerStep::MoveTo { target, offset } => match offset {
                MoveOffset::Center => write!(f, "move to the {}", spoken(target)),
                MoveOffset::Top => write!(f, "move to the top of the {}", spoken(target)),
                MoveOffset::Above(d) => write!(f, "move to {} units above the {}", fmt_num(*d), spoken(target)),
            },
            ComposerStep::Grasp { target, approach } => {
                write!(f, "grasp the {}", spoken(target))?;
                match approach {
                    None => Ok(()),
                    Some(Approach::Above) => f.write_str(" from above"),
                    Some(Approach::Side) => f.write_str(" from the side"),
                    Some(Approach::Front) => f.write_str(" from the front"),
                }
            }
            ComposerStep::OpenGripper => f.write_str("open gripper"),
            ComposerStep::CloseGripper => f.write_str("close gripper"),
            ComposerStep::Rotate { degrees, axis } => {
                write!(f, "rotate the gripper by {} degrees", fmt_num(*degrees))?;
                match axis {
                    RotationAxis::Z => Ok(()),
                    RotationAxis::X => f.write_str(" about the x axis"),
                    RotationAxis::Y => f.write_str(" about the y axis"),
                }
            }
            ComposerStep::ResetPose => f.write_str("back to default pose"),
        }
    }
}

/// Parsed policy code: planner context plus composer steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Program {
    pub context: Vec<String>,
    pub steps: Vec<ComposerStep>,
}

impl Program {
    /// Object names referenced by steps, in first-use order.
    pub fn targets(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for t in self.steps.iter().filter_map(ComposerStep::target) {
            if !out.contains(&t) {
                out.push(t);
            }
        }
        out
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.context.is_empty() {
            let items: Vec<String> = self.context.iter().map(|c| format!("'{c}'")).collect();
            writeln!(f, "context: \"objects = [{}]\"", items.join(", "))?;
        }
        for s in &self.steps {
            writeln!(f, "composer({s})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum ParseResult {
    Program(Program),
    NonsenseRejection(Evidence),
    Refusal { text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verbs {
    pub move_to: Vec<String>,
    pub grasp: Vec<String>,
    pub open_gripper: Vec<String>,
    pub close_gripper: Vec<String>,
    pub rotate: Vec<String>,
    pub reset_pose: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offsets {
    pub top: Vec<String>,
    pub above: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Approaches {
    pub above: Vec<String>,
    pub side: Vec<String>,
    pub front: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub degrees: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefusalLexicon {
    pub negation: Vec<String>,
    pub ability: Vec<String>,
}

/// Machine-readable step grammar: verbs with their phrase synonyms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grammar {
    pub verbs: Verbs,
    pub offsets: Offsets,
    pub approaches: Approaches,
    pub units: Units,
    pub refusal: RefusalLexicon,
}

impl Grammar {
    pub fn from_toml(text: &str) -> Result<Self, GrammarError> {
        let g: Grammar = toml::from_str(text).map_err(|e| GrammarError::Malformed(e.to_string()))?;
        let lists = [
            &g.verbs.move_to,
            &g.verbs.grasp,
            &g.verbs.open_gripper,
            &g.verbs.close_gripper,
            &g.verbs.rotate,
            &g.verbs.reset_pose,
            &g.offsets.top,
            &g.offsets.above,
            &g.units.degrees,
            &g.refusal.negation,
            &g.refusal.ability,
        ];
        if lists.iter().any(|l| l.is_empty() || l.iter().any(|p| p.trim().is_empty())) {
            return Err(GrammarError::Malformed("every phrase list needs non-blank entries".into()));
        }
        Ok(g)
    }

    pub fn phrases(&self, verb: Verb) -> &[String] {
        match verb {
            Verb::MoveTo => &self.verbs.move_to,
            Verb::Grasp => &self.verbs.grasp,
            Verb::OpenGripper => &self.verbs.open_gripper,
            Verb::CloseGripper => &self.verbs.close_gripper,
            Verb::Rotate => &self.verbs.rotate,
            Verb::ResetPose => &self.verbs.reset_pose,
        }
    }
}

/// The built-in grammar.
pub fn step_grammar() -> &'static Grammar {
    Parser::builtin().grammar()
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Sorted longest first so that "pick up" wins over "pick".
fn sorted_phrases(list: &[String]) -> Vec<String> {
    let mut v: Vec<String> = list.iter().map(|p| normalize(p)).collect();
    v.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    v
}

fn alternation(list: &[String]) -> String {
    sorted_phrases(list).iter().map(|p| regex::escape(p)).collect::<Vec<_>>().join("|")
}

fn strip_word_prefix<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    s.strip_prefix(prefix).and_then(|r| r.strip_prefix(' '))
}

pub struct Parser {
    grammar: Grammar,
    nullary: Vec<(String, ComposerStep)>,
    move_to: Vec<String>,
    grasp: Vec<String>,
    rotate: Vec<String>,
    top: Vec<String>,
    approaches: Vec<(String, Approach)>,
    above_re: Regex,
    rotate_re: Regex,
    refusal_re: Regex,
    target_re: Regex,
    import_re: Regex,
    header_re: Regex,
    context_re: Regex,
    objects_re: Regex,
    composer_re: Regex,
    fence_re: Regex,
}

impl Parser {
    pub fn new(grammar: Grammar) -> Result<Self, GrammarError> {
        let mut nullary = Vec::new();
        for (verb, step) in [
            (Verb::OpenGripper, ComposerStep::OpenGripper),
            (Verb::CloseGripper, ComposerStep::CloseGripper),
            (Verb::ResetPose, ComposerStep::ResetPose),
        ] {
            for p in grammar.phrases(verb) {
                nullary.push((normalize(p), step.clone()));
            }
        }
        let mut approaches = Vec::new();
        for (list, a) in [
            (&grammar.approaches.above, Approach::Above),
            (&grammar.approaches.side, Approach::Side),
            (&grammar.approaches.front, Approach::Front),
        ] {
            approaches.extend(sorted_phrases(list).into_iter().map(|p| (p, a)));
        }
        approaches.sort_by(|a, b| b.0.len().cmp(&a.0.len()));

        let re = |s: &str| Regex::new(s).map_err(|e| GrammarError::Malformed(e.to_string()));
        let above_re = re(&format!(r"^(\d+(?:\.\d+)?) (?:{}) (.+)$", alternation(&grammar.offsets.above)))?;
        let rotate_re = re(&format!(
            r"^(-?\d+(?:\.\d+)?) (?:{})(?: (?:about|around) the ([xyz])(?:[- ]axis)?)?$",
            alternation(&grammar.units.degrees)
        ))?;
        let refusal_re = re(&format!(
            r"\b(?:{})\b[^.!?\n]*\b(?:{})\b",
            alternation(&grammar.refusal.negation),
            alternation(&grammar.refusal.ability)
        ))?;
        Ok(Self {
            nullary,
            move_to: sorted_phrases(&grammar.verbs.move_to),
            grasp: sorted_phrases(&grammar.verbs.grasp),
            rotate: sorted_phrases(&grammar.verbs.rotate),
            top: sorted_phrases(&grammar.offsets.top),
            approaches,
            above_re,
            rotate_re,
            refusal_re,
            target_re: re(r"^[a-z][a-z0-9]*(?: [a-z0-9]+)*$")?,
            import_re: re(r"^(?:import\s+\S|from\s+\S+\s+import\b)")?,
            header_re: re(r#"^["']?planner["']?\s+generated\s+code:?$"#)?,
            context_re: re(r#"^context\s*:\s*"(.*)"$"#)?,
            objects_re: re(r"^objects\s*=\s*\[(.*)\]$")?,
            composer_re: re(r"^composer\s*\((.*)\)$")?,
            fence_re: re(r"^```[a-z]*$")?,
            grammar,
        })
    }

    pub fn builtin() -> &'static Parser {
        static P: OnceLock<Parser> = OnceLock::new();
        P.get_or_init(|| {
            let g = Grammar::from_toml(DEFAULT_GRAMMAR).expect("built-in grammar is valid");
            Parser::new(g).expect("built-in grammar compiles")
        })
    }

    pub fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    fn target(&self, s: &str) -> Option<String> {
        let s = s.strip_prefix("the ").unwrap_or(s);
        self.target_re.is_match(s).then(|| s.replace(' ', "_"))
    }

    /// Parses a single composer phrase.
    pub fn parse_step(&self, phrase: &str) -> Option<ComposerStep> {
        let p = normalize(phrase);
        let p = p.trim_end_matches(['.', ';']).trim_end();
        if let Some((_, step)) = self.nullary.iter().find(|(n, _)| n == p) {
            return Some(step.clone());
        }
        for prefix in &self.rotate {
            if let Some(rest) = strip_word_prefix(p, prefix) {
                let c = self.rotate_re.captures(rest)?;
                let degrees: f64 = c[1].parse().ok()?;
                let axis = match c.get(2).map(|m| m.as_str()) {
                    Some("x") => RotationAxis::X,
                    Some("y") => RotationAxis::Y,
                    _ => RotationAxis::Z,
                };
                return degrees.is_finite().then_some(ComposerStep::Rotate { degrees, axis });
            }
        }
        for prefix in &self.grasp {
            if let Some(rest) = strip_word_prefix(p, prefix) {
                let mut approach = None;
                let mut body = rest;
                for (phrase, a) in &self.approaches {
                    if let Some(b) = rest.strip_suffix(phrase.as_str()).and_then(|b| b.strip_suffix(' ')) {
                        approach = Some(*a);
                        body = b;
                        break;
                    }
                }
                let target = self.target(body)?;
                return Some(ComposerStep::Grasp { target, approach });
            }
        }
        for prefix in &self.move_to {
            if let Some(rest) = strip_word_prefix(p, prefix) {
                if let Some(c) = self.above_re.captures(rest) {
                    let d: f64 = c[1].parse().ok()?;
                    let target = self.target(&c[2])?;
                    return d.is_finite().then_some(ComposerStep::MoveTo { target, offset: MoveOffset::Above(d) });
                }
                for t in &self.top {
                    if let Some(body) = strip_word_prefix(rest, t) {
                        let target = self.target(body)?;
                        return Some(ComposerStep::MoveTo { target, offset: MoveOffset::Top });
                    }
                }
                let target = self.target(rest)?;
                return Some(ComposerStep::MoveTo { target, offset: MoveOffset::Center });
            }
        }
        None
    }

    pub fn is_refusal_text(&self, text: &str) -> bool {
        let t = text.to_lowercase().replace('\u{2019}', "'");
        self.refusal_re.is_match(&t)
    }

    pub fn parse_completion(&self, raw: &RawCompletion) -> ParseResult {
        self.parse(&raw.text)
    }

    /// Total: every input maps to exactly one of the three results.
    pub fn parse(&self, text: &str) -> ParseResult {
        if text.trim().is_empty() {
            return nonsense(EvidenceKind::EmptyCompletion, None, "completion is empty");
        }
        let lines: Vec<(usize, &str)> =
            text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty()).collect();

        if let Some((n, l)) = lines.iter().find(|(_, l)| self.import_re.is_match(l)) {
            return nonsense(EvidenceKind::ImportStatement, Some(*n), format!("import statement: {l}"));
        }
        let has_composer = lines.iter().any(|(_, l)| self.composer_re.is_match(strip_comment(l)));
        if !has_composer {
            if self.is_refusal_text(text) {
                return ParseResult::Refusal { text: text.trim().to_string() };
            }
            return nonsense(EvidenceKind::NoComposerCalls, None, "completion contains no composer calls");
        }

        let mut context: Option<Vec<String>> = None;
        let mut steps = Vec::new();
        for &(n, line) in &lines {
            if line.starts_with('#') || self.fence_re.is_match(line) || self.header_re.is_match(&line.to_lowercase()) {
                continue;
            }
            let code = strip_comment(line);
            if let Some(c) = self.composer_re.captures(code) {
                let inner = unquote(c[1].trim());
                match self.parse_step(inner) {
                    Some(step) => steps.push(step),
                    None => {
                        return nonsense(
                            EvidenceKind::UnknownComposerPhrase,
                            Some(n),
                            format!("composer phrase not in grammar: {inner}"),
                        )
                    }
                }
                continue;
            }
            let list = match self.context_re.captures(code) {
                Some(c) => self.objects_re.captures(c[1].trim()).map(|o| o[1].to_string()),
                None => self.objects_re.captures(code).map(|o| o[1].to_string()),
            };
            let Some(list) = list else {
                if self.context_re.is_match(code) {
                    return nonsense(EvidenceKind::MalformedContext, Some(n), format!("malformed context: {line}"));
                }
                return nonsense(EvidenceKind::UnrecognizedLine, Some(n), format!("unrecognized line: {line}"));
            };
            match parse_objects(&list) {
                Some(names) if context.is_none() => context = Some(names),
                _ => {
                    return nonsense(EvidenceKind::MalformedContext, Some(n), format!("malformed context: {line}"))
                }
            }
        }
        ParseResult::Program(Program { context: context.unwrap_or_default(), steps })
    }
}

fn nonsense(kind: EvidenceKind, line: Option<usize>, message: impl Into<String>) -> ParseResult {
    ParseResult::NonsenseRejection(Evidence::new(kind, line.map(|n| format!("line {n}")), message))
}

/// Drops a trailing `# comment` outside quotes.
fn strip_comment(line: &str) -> &str {
    let mut quote: Option<char> = None;
    for (i, ch) in line.char_indices() {
        match (quote, ch) {
            (None, '"' | '\'') => quote = Some(ch),
            (Some(q), c) if c == q => quote = None,
            (None, '#') => return line[..i].trim_end(),
            _ => {}
        }
    }
    line
}

fn unquote(s: &str) -> &str {
    for q in ['"', '\''] {
        if let Some(inner) = s.strip_prefix(q).and_then(|r| r.strip_suffix(q)) {
            return inner;
        }
    }
    s
}

/// `'bin', 'rubbish'` into names; `None` on empty items or duplicates.
fn parse_objects(list: &str) -> Option<Vec<String>> {
    let mut names: Vec<String> = Vec::new();
    if list.trim().is_empty() {
        return Some(names);
    }
    for item in list.split(',') {
        let item = item.trim();
        let name = unquote(item);
        if name.is_empty() || name.len() == item.len() && (item.contains('"') || item.contains('\'')) {
            return None;
        }
        let name = normalize(name).replace(' ', "_");
        if names.contains(&name) {
            return None;
        }
        names.push(name);
    }
    Some(names)
}

/// Parses with the built-in grammar.
pub fn parse(text: &str) -> ParseResult {
    Parser::builtin().parse(text)
}
