//! Instruction text for every (task, level) cell.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{GranularityLevel, Instruction, ModelError, TaskSpec};
use crate::sim::WorkspaceBounds;

pub const DEFAULT_TEMPLATES: &str = include_str!("../fixtures/templates.toml");

const BOUNDS: &str = "{bounds}";

#[derive(Debug, Error, PartialEq)]
pub enum InstructionError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("template fixture is malformed: {0}")]
    Malformed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionTemplate {
    #[serde(default)]
    pub origin: Option<String>,
    pub object: String,
    pub action: String,
    #[serde(default)]
    pub action_p: Option<String>,
    #[serde(default)]
    pub action_c: Option<String>,
    pub purpose: String,
    pub condition: String,
    pub text_a: String,
    #[serde(default)]
    pub text_p: Option<String>,
    pub text_c: String,
}

impl InstructionTemplate {
    fn validate(&self, task: &str) -> Result<(), InstructionError> {
        let bad = |m: &str| Err(InstructionError::Malformed(format!("{task}: {m}")));
        if !self.condition.contains(BOUNDS) || !self.text_c.contains(BOUNDS) {
            return bad("condition and text_c must mention {bounds}");
        }
        if self.text_a.contains(BOUNDS) || self.text_p.as_deref().is_some_and(|t| t.contains(BOUNDS)) {
            return bad("only level C may mention the workspace bounds");
        }
        if [&self.object, &self.action, &self.purpose, &self.text_a, &self.text_c].iter().any(|s| s.trim().is_empty()) {
            return bad("empty slot");
        }
        Ok(())
    }

    pub fn text_p(&self) -> &str {
        self.text_p.as_deref().unwrap_or(&self.text_a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateLibrary {
    by_task: BTreeMap<String, InstructionTemplate>,
}

impl TemplateLibrary {
    pub fn builtin() -> Self {
        Self::from_toml(DEFAULT_TEMPLATES).expect("built-in template fixture is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, InstructionError> {
        let by_task: BTreeMap<String, InstructionTemplate> =
            toml::from_str(text).map_err(|e| InstructionError::Malformed(e.to_string()))?;
        for (task, t) in &by_task {
            t.validate(task)?;
        }
        Ok(Self { by_task })
    }

    pub fn get(&self, task: &str) -> Result<&InstructionTemplate, InstructionError> {
        self.by_task.get(task).ok_or_else(|| InstructionError::UnknownTask(task.to_string()))
    }

    /// Deterministic; level C embeds the workspace's full extents.
    pub fn render(
        &self,
        task: &TaskSpec,
        level: GranularityLevel,
        workspace: &WorkspaceBounds,
    ) -> Result<Instruction, InstructionError> {
        let t = self.get(&task.name)?;
        workspace.validate().map_err(|_| InstructionError::Malformed("workspace bounds must be positive".into()))?;
        let bounds = workspace.render_extents();
        let ins = match level {
            GranularityLevel::A => Instruction::new(&t.object, &t.action, None, None, &t.text_a)?,
            GranularityLevel::P => Instruction::new(
                &t.object,
                t.action_p.as_deref().unwrap_or(&t.action),
                Some(t.purpose.clone()),
                None,
                t.text_p(),
            )?,
            GranularityLevel::C => Instruction::new(
                &t.object,
                t.action_c.as_deref().or(t.action_p.as_deref()).unwrap_or(&t.action),
                Some(t.purpose.clone()),
                Some(t.condition.replace(BOUNDS, &bounds)),
                t.text_c.replace(BOUNDS, &bounds),
            )?,
        };
        Ok(ins)
    }

    /// One instruction per level, in A, P, C order.
    pub fn render_all(
        &self,
        task: &TaskSpec,
        workspace: &WorkspaceBounds,
    ) -> Result<Vec<(GranularityLevel, Instruction)>, InstructionError> {
        GranularityLevel::ALL.into_iter().map(|l| Ok((l, self.render(task, l, workspace)?))).collect()
    }
}
