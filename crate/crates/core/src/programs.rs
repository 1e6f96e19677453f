//! Canned completions: one golden program and one faulty completion per
//! behavior for every task.

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use crate::model::UnreliableBehavior;

pub const DEFAULT_PROGRAMS: &str = include_str!("../fixtures/programs.toml");

#[derive(Debug, Error, PartialEq)]
pub enum ProgramsError {
    #[error("program fixture is malformed: {0}")]
    Malformed(String),
    #[error("no canned programs for `{0}`")]
    UnknownTask(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct FaultsToml {
    nonsense: String,
    disorder: String,
    infeasible: String,
    badpose: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryToml {
    golden: String,
    faults: FaultsToml,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CannedPrograms {
    pub golden: String,
    pub faults: BTreeMap<UnreliableBehavior, String>,
}

impl CannedPrograms {
    pub fn fault(&self, b: UnreliableBehavior) -> &str {
        &self.faults[&b]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgramLibrary {
    by_task: BTreeMap<String, CannedPrograms>,
}

impl ProgramLibrary {
    pub fn builtin() -> Self {
        Self::from_toml(DEFAULT_PROGRAMS).expect("built-in program fixture is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, ProgramsError> {
        let raw: BTreeMap<String, EntryToml> =
            toml::from_str(text).map_err(|e| ProgramsError::Malformed(e.to_string()))?;
        let by_task = raw
            .into_iter()
            .map(|(task, e)| {
                let faults = BTreeMap::from([
                    (UnreliableBehavior::Nonsense, e.faults.nonsense),
                    (UnreliableBehavior::Disorder, e.faults.disorder),
                    (UnreliableBehavior::Infeasible, e.faults.infeasible),
                    (UnreliableBehavior::Badpose, e.faults.badpose),
                ]);
                (task, CannedPrograms { golden: e.golden, faults })
            })
            .collect();
        Ok(Self { by_task })
    }

    pub fn get(&self, task: &str) -> Result<&CannedPrograms, ProgramsError> {
        self.by_task.get(task).ok_or_else(|| ProgramsError::UnknownTask(task.to_string()))
    }

    pub fn tasks(&self) -> impl Iterator<Item = &str> {
        self.by_task.keys().map(String::as_str)
    }
}
