//! Shared domain types: tasks, instructions, behaviors and trial outcomes.
//!
//! Two scalar characterizations live here. [`complexity_of`] counts the
//! distinct primitive actions a task needs and [`granularity_of`] counts the
//! filled slots of an instruction. Everything else in the crate builds on
//! these value types; all of them are immutable once constructed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The built-in task registry, one entry per task.
pub const DEFAULT_TASKS: &str = include_str!("../fixtures/tasks.toml");

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("task registry is malformed: {0}")]
    Registry(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("unknown granularity level `{0}` (expected A, P or C)")]
    UnknownLevel(String),
    #[error("unknown behavior `{0}`")]
    UnknownBehavior(String),
    #[error("invalid instruction: {0}")]
    InvalidInstruction(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimitiveAction {
    Grasp,
    Move,
    Rotate,
}

impl PrimitiveAction {
    pub const ALL: [PrimitiveAction; 3] = [Self::Grasp, Self::Move, Self::Rotate];
}

/// A manipulation task.
///
/// `scene`, `ordering` and `goal` are references into the scene and
/// precedence fixtures; the model itself does not interpret them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub actions: BTreeSet<PrimitiveAction>,
    pub scene: String,
    pub ordering: String,
    pub goal: String,
}

impl TaskSpec {
    /// Tasks made of a single primitive whose level-A and level-P
    /// instructions share the same surface text.
    pub fn is_primitive(&self) -> bool {
        PRIMITIVE_TASKS.contains(&self.name.as_str())
    }
}

/// Names of the three single-primitive probe tasks.
pub const PRIMITIVE_TASKS: [&str; 3] = ["Grasp", "Movement", "Rotation"];

#[derive(Debug, Deserialize)]
struct RegistryFile {
    task: Vec<RegistryEntry>,
}

#[derive(Debug, Deserialize)]
struct RegistryEntry {
    name: String,
    actions: Vec<PrimitiveAction>,
    scene: Option<String>,
    ordering: Option<String>,
    goal: String,
}

/// Ordered collection of tasks loaded from the registry fixture.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRegistry {
    tasks: Vec<TaskSpec>,
}

impl TaskRegistry {
    pub fn builtin() -> Self {
        Self::from_toml(DEFAULT_TASKS).expect("built-in task registry is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, ModelError> {
        let file: RegistryFile =
            toml::from_str(text).map_err(|e| ModelError::Registry(e.to_string()))?;
        let mut seen = BTreeSet::new();
        let mut tasks = Vec::with_capacity(file.task.len());
        for entry in file.task {
            let actions: BTreeSet<_> = entry.actions.into_iter().collect();
            if actions.is_empty() {
                return Err(ModelError::Registry(format!(
                    "task `{}` has no primitive actions",
                    entry.name
                )));
            }
            if !seen.insert(entry.name.clone()) {
                return Err(ModelError::Registry(format!("duplicate task `{}`", entry.name)));
            }
            tasks.push(TaskSpec {
                scene: entry.scene.unwrap_or_else(|| entry.name.clone()),
                ordering: entry.ordering.unwrap_or_else(|| entry.name.clone()),
                name: entry.name,
                actions,
                goal: entry.goal,
            });
        }
        Ok(Self { tasks })
    }

    pub fn get(&self, name: &str) -> Result<&TaskSpec, ModelError> {
        self.tasks
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| ModelError::UnknownTask(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tasks.iter().any(|t| t.name == name)
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tasks.iter().map(|t| t.name.as_str())
    }
}

/// Number of distinct primitive actions the task requires (1, 2 or 3).
pub fn complexity_of(task: &TaskSpec) -> u8 {
    task.actions.len() as u8
}

/// An instruction as the (object, action, purpose, condition) quadruple.
///
/// `text` is the surface string sent to the model. For the primitive tasks
/// the level-A and level-P surface texts coincide even though the purpose
/// slot is filled at level P.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instruction {
    pub object: String,
    pub action: String,
    pub purpose: Option<String>,
    pub condition: Option<String>,
    pub text: String,
}

impl Instruction {
    pub fn new(
        object: impl Into<String>,
        action: impl Into<String>,
        purpose: Option<String>,
        condition: Option<String>,
        text: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let ins = Self {
            object: object.into(),
            action: action.into(),
            purpose: purpose.filter(|p| !p.trim().is_empty()),
            condition: condition.filter(|c| !c.trim().is_empty()),
            text: text.into(),
        };
        if ins.object.trim().is_empty() {
            return Err(ModelError::InvalidInstruction("object is empty"));
        }
        if ins.action.trim().is_empty() {
            return Err(ModelError::InvalidInstruction("action is empty"));
        }
        if ins.purpose.is_none() && ins.condition.is_some() {
            return Err(ModelError::InvalidInstruction("condition without purpose"));
        }
        if ins.text.trim().is_empty() {
            return Err(ModelError::InvalidInstruction("surface text is empty"));
        }
        Ok(ins)
    }

    pub fn level(&self) -> GranularityLevel {
        match granularity_of(self) {
            2 => GranularityLevel::A,
            3 => GranularityLevel::P,
            _ => GranularityLevel::C,
        }
    }
}

/// Count of non-empty slots among object, action, purpose and condition.
pub fn granularity_of(ins: &Instruction) -> u8 {
    [
        Some(ins.object.as_str()),
        Some(ins.action.as_str()),
        ins.purpose.as_deref(),
        ins.condition.as_deref(),
    ]
    .into_iter()
    .flatten()
    .filter(|s| !s.trim().is_empty())
    .count() as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GranularityLevel {
    A,
    P,
    C,
}

impl GranularityLevel {
    pub const ALL: [GranularityLevel; 3] = [Self::A, Self::P, Self::C];

    pub fn granularity(self) -> u8 {
        match self {
            Self::A => 2,
            Self::P => 3,
            Self::C => 4,
        }
    }

    pub fn from_granularity(g: u8) -> Option<Self> {
        match g {
            2 => Some(Self::A),
            3 => Some(Self::P),
            4 => Some(Self::C),
            _ => None,
        }
    }
}

impl fmt::Display for GranularityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::A => "A",
            Self::P => "P",
            Self::C => "C",
        };
        f.write_str(s)
    }
}

impl FromStr for GranularityLevel {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().trim_start_matches("I_").to_ascii_uppercase().as_str() {
            "A" => Ok(Self::A),
            "P" => Ok(Self::P),
            "C" => Ok(Self::C),
            _ => Err(ModelError::UnknownLevel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UnreliableBehavior {
    Nonsense,
    Disorder,
    Infeasible,
    Badpose,
}

impl UnreliableBehavior {
    pub const ALL: [UnreliableBehavior; 4] =
        [Self::Nonsense, Self::Disorder, Self::Infeasible, Self::Badpose];

    pub fn name(self) -> &'static str {
        match self {
            Self::Nonsense => "Nonsense",
            Self::Disorder => "Disorder",
            Self::Infeasible => "Infeasible",
            Self::Badpose => "Badpose",
        }
    }
}

impl fmt::Display for UnreliableBehavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UnreliableBehavior {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ModelError::UnknownBehavior(s.to_string()))
    }
}

/// What triggered a failure classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceKind {
    EmptyCompletion,
    NoComposerCalls,
    ImportStatement,
    UnrecognizedLine,
    UnknownComposerPhrase,
    MalformedContext,
    UnjustifiedRefusal,
    PrecedenceViolation,
    MissingRequiredStep,
    MissingReferent,
    OutOfWorkspace,
    Misaligned,
    Displaced,
    Damaged,
    GoalNotMet,
}

/// Diagnostic record attached to a failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub kind: EvidenceKind,
    /// Offending line, step index or waypoint, rendered as text.
    pub location: Option<String>,
    pub message: String,
}

impl Evidence {
    pub fn new(kind: EvidenceKind, location: Option<String>, message: impl Into<String>) -> Self {
        Self { kind, location, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrialOutcome {
    Success,
    /// A refusal under a condition-bearing instruction whose target really
    /// is out of reach.
    SpecialSuccess { refusal: String },
    Failure { behavior: UnreliableBehavior, evidence: Evidence },
}

impl TrialOutcome {
    pub fn is_success(&self) -> bool {
        !matches!(self, Self::Failure { .. })
    }

    pub fn behavior(&self) -> Option<UnreliableBehavior> {
        match self {
            Self::Failure { behavior, .. } => Some(*behavior),
            _ => None,
        }
    }
}

/// Count of each behavior, used by reports and the mock calibration.
pub type BehaviorCounts = BTreeMap<UnreliableBehavior, u64>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_matches_primitive_action_table() {
        use PrimitiveAction::*;
        let expected: [(&str, &[PrimitiveAction]); 8] = [
            ("Grasp", &[Grasp]),
            ("Movement", &[Move]),
            ("Rotation", &[Rotate]),
            ("SlideBlockToTarget", &[Move]),
            ("ChangeClock", &[Grasp, Rotate]),
            ("LightBulbOut", &[Move, Rotate]),
            ("PutRubbishInBin", &[Grasp, Move]),
            ("OpenWineBottle", &[Grasp, Move, Rotate]),
        ];
        let reg = TaskRegistry::builtin();
        assert_eq!(reg.tasks().len(), 8);
        for (name, actions) in expected {
            let task = reg.get(name).unwrap();
            let want: BTreeSet<_> = actions.iter().copied().collect();
            assert_eq!(task.actions, want, "{name}");
            assert_eq!(complexity_of(task) as usize, actions.len());
        }
    }

    #[test]
    fn complexity_examples() {
        let reg = TaskRegistry::builtin();
        assert_eq!(complexity_of(reg.get("Grasp").unwrap()), 1);
        assert_eq!(complexity_of(reg.get("PutRubbishInBin").unwrap()), 2);
        assert_eq!(complexity_of(reg.get("OpenWineBottle").unwrap()), 3);
    }

    #[test]
    fn only_the_three_probe_tasks_are_primitive() {
        let reg = TaskRegistry::builtin();
        let prim: Vec<_> = reg.tasks().iter().filter(|t| t.is_primitive()).map(|t| t.name.as_str()).collect();
        assert_eq!(prim, PRIMITIVE_TASKS);
    }

    #[test]
    fn granularity_counts_filled_slots() {
        let a = Instruction::new("rubbish", "throw", None, None, "throw the rubbish").unwrap();
        let p = Instruction::new("rubbish", "drop", Some("into the bin".into()), None, "drop").unwrap();
        let c = Instruction::new(
            "rubbish",
            "grasp",
            Some("into the bin".into()),
            Some("with the executable space defined as (100, 100, 100)".into()),
            "grasp",
        )
        .unwrap();
        assert_eq!(granularity_of(&a), 2);
        assert_eq!(granularity_of(&p), 3);
        assert_eq!(granularity_of(&c), 4);
        assert_eq!(a.level(), GranularityLevel::A);
        assert_eq!(c.level(), GranularityLevel::C);
    }

    #[test]
    fn instruction_rejects_broken_chain() {
        assert_eq!(
            Instruction::new("x", "y", None, Some("cond".into()), "t"),
            Err(ModelError::InvalidInstruction("condition without purpose"))
        );
        assert!(Instruction::new("", "y", None, None, "t").is_err());
        // Whitespace-only purpose counts as absent.
        let ins = Instruction::new("x", "y", Some("  ".into()), None, "t").unwrap();
        assert_eq!(granularity_of(&ins), 2);
    }

    #[test]
    fn level_codes_roundtrip() {
        for level in GranularityLevel::ALL {
            assert_eq!(level.to_string().parse::<GranularityLevel>().unwrap(), level);
            assert_eq!(GranularityLevel::from_granularity(level.granularity()), Some(level));
        }
        assert_eq!("I_C".parse::<GranularityLevel>().unwrap(), GranularityLevel::C);
        assert!("B".parse::<GranularityLevel>().is_err());
    }

    #[test]
    fn registry_rejects_empty_action_set() {
        let text = "[[task]]\nname = \"X\"\nactions = []\ngoal = \"g\"\n";
        assert!(matches!(TaskRegistry::from_toml(text), Err(ModelError::Registry(_))));
    }

    #[test]
    fn registry_rejects_unknown_primitive() {
        let text = "[[task]]\nname = \"X\"\nactions = [\"push\"]\ngoal = \"g\"\n";
        assert!(TaskRegistry::from_toml(text).is_err());
    }
}
