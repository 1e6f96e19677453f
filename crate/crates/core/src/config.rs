//! Configuration file and fixture loading.
//!
//! One TOML document with four sections:
//!
//! ```toml
//! [campaign]
//! tasks = ["Grasp", "PutRubbishInBin"]   # default: every registered task
//! levels = ["A", "P", "C"]               # default: all three
//! backends = ["mock"]                    # default: every [backend.*] entry
//! trials_per_cell = 50
//! feedback_enabled = true
//! max_feedback_rounds = 1
//! base_seed = 7
//! concurrency = 4
//!
//! [backend.mock]
//! kind = "mock"
//! model_name = "mock-default"
//! profile = "default"
//!
//! [simworld.spawn]
//! unreachable_fraction = 0.1
//!
//! [fixtures]
//! templates = "my_templates.toml"        # paths relative to the config file
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendConfig;
use crate::check::ConstraintLibrary;
use crate::instructions::TemplateLibrary;
use crate::model::{GranularityLevel, TaskRegistry};
use crate::parse::{Grammar, Parser};
use crate::programs::ProgramLibrary;
use crate::prompting::{BehaviorCatalog, DemonstrationCode};
use crate::sim::{SceneLibrary, SimConfig};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read `{path}`: {message}")]
    Io { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("fixture `{name}` is invalid: {message}")]
    Fixture { name: String, message: String },
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })
}

/// Optional overrides for the built-in fixture files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixturePaths {
    pub tasks: Option<PathBuf>,
    pub scenes: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub constraints: Option<PathBuf>,
    pub programs: Option<PathBuf>,
    pub grammar: Option<PathBuf>,
    pub demo: Option<PathBuf>,
    pub behaviors: Option<PathBuf>,
}

impl FixturePaths {
    fn rebase(&mut self, dir: &Path) {
        for p in [
            &mut self.tasks,
            &mut self.scenes,
            &mut self.templates,
            &mut self.constraints,
            &mut self.programs,
            &mut self.grammar,
            &mut self.demo,
            &mut self.behaviors,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }
}

/// Everything a trial needs besides the backend.
pub struct Fixtures {
    pub tasks: TaskRegistry,
    pub scenes: SceneLibrary,
    pub templates: TemplateLibrary,
    pub constraints: ConstraintLibrary,
    pub programs: ProgramLibrary,
    pub parser: Parser,
    pub demo: DemonstrationCode,
    pub behaviors: BehaviorCatalog,
    pub sim: SimConfig,
}

impl Fixtures {
    pub fn builtin() -> Self {
        Self::load(&FixturePaths::default(), SimConfig::default()).expect("built-in fixtures are valid")
    }

    pub fn load(paths: &FixturePaths, sim: SimConfig) -> Result<Self, ConfigError> {
        fn load_one<T, E: std::fmt::Display>(
            name: &str,
            path: &Option<PathBuf>,
            builtin: impl FnOnce() -> T,
            parse: impl FnOnce(&str) -> Result<T, E>,
        ) -> Result<T, ConfigError> {
            match path {
                None => Ok(builtin()),
                Some(p) => parse(&read(p)?)
                    .map_err(|e| ConfigError::Fixture { name: name.to_string(), message: e.to_string() }),
            }
        }
        sim.workspace.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let tasks = load_one("tasks", &paths.tasks, TaskRegistry::builtin, TaskRegistry::from_toml)?;
        let scenes = load_one("scenes", &paths.scenes, SceneLibrary::builtin, SceneLibrary::from_toml)?;
        let templates = load_one("templates", &paths.templates, TemplateLibrary::builtin, TemplateLibrary::from_toml)?;
        let constraints =
            load_one("constraints", &paths.constraints, ConstraintLibrary::builtin, ConstraintLibrary::from_toml)?;
        let programs = load_one("programs", &paths.programs, ProgramLibrary::builtin, ProgramLibrary::from_toml)?;
        let grammar = load_one("grammar", &paths.grammar, || Parser::builtin().grammar().clone(), Grammar::from_toml)?;
        let parser =
            Parser::new(grammar).map_err(|e| ConfigError::Fixture { name: "grammar".into(), message: e.to_string() })?;
        let behaviors = load_one("behaviors", &paths.behaviors, BehaviorCatalog::builtin, BehaviorCatalog::from_toml)?;
        let demo = match &paths.demo {
            None => DemonstrationCode::builtin(),
            Some(p) => DemonstrationCode::from_file(p)
                .map_err(|e| ConfigError::Fixture { name: "demo".into(), message: e.to_string() })?,
        };
        let fx = Self { tasks, scenes, templates, constraints, programs, parser, demo, behaviors, sim };
        fx.cross_check()?;
        Ok(fx)
    }

    /// Every task must have a scene, templates and constraints.
    fn cross_check(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        for t in self.tasks.tasks() {
            if self.scenes.get(&t.scene).is_err() {
                return bad(format!("task `{}` names unknown scene `{}`", t.name, t.scene));
            }
            if self.templates.get(&t.name).is_err() {
                return bad(format!("no instruction templates for task `{}`", t.name));
            }
            if self.constraints.get(&t.ordering).is_err() {
                return bad(format!("task `{}` names unknown constraints `{}`", t.name, t.ordering));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    pub tasks: Option<Vec<String>>,
    pub levels: Option<Vec<GranularityLevel>>,
    pub backends: Option<Vec<String>>,
    pub trials_per_cell: Option<u32>,
    pub feedback_enabled: Option<bool>,
    pub max_feedback_rounds: Option<u32>,
    pub base_seed: Option<u64>,
    pub concurrency: Option<usize>,
}

/// The parsed configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub campaign: CampaignSection,
    #[serde(default)]
    pub backend: BTreeMap<String, BackendConfig>,
    #[serde(default)]
    pub simworld: SimConfig,
    #[serde(default)]
    pub fixtures: FixturePaths,
}

impl FileConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Reads the file; fixture paths are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::from_toml(&read(path)?)?;
        if let Some(dir) = path.parent() {
            cfg.fixtures.rebase(dir);
        }
        Ok(cfg)
    }

    pub fn fixtures(&self) -> Result<Fixtures, ConfigError> {
        Fixtures::load(&self.fixtures, self.simworld)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file() {
        let c = FileConfig::from_toml(
            "[campaign]\nbase_seed = 3\n[backend.m]\nkind = \"mock\"\nmodel_name = \"m\"\nprofile = \"weak\"\n[simworld.spawn]\nmargin = 20.0\n",
        )
        .unwrap();
        assert_eq!(c.campaign.base_seed, Some(3));
        assert_eq!(c.backend["m"].temperature, 0.1);
        assert_eq!(c.simworld.spawn.margin, 20.0);
        assert_eq!(c.simworld.spawn.clearance, 25.0);
        assert!(c.fixtures().is_ok());
    }

    #[test]
    fn unknown_section_rejected() {
        assert!(matches!(FileConfig::from_toml("[campain]\n"), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn relative_fixture_paths() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("demo.txt"), "composer(grasp the block)\n").unwrap();
        std::fs::write(dir.path().join("c.toml"), "[fixtures]\ndemo = \"demo.txt\"\n").unwrap();
        let c = FileConfig::load(&dir.path().join("c.toml")).unwrap();
        assert_eq!(c.fixtures().unwrap().demo.code, "composer(grasp the block)\n");
        std::fs::write(dir.path().join("c.toml"), "[fixtures]\ndemo = \"missing.txt\"\n").unwrap();
        let c = FileConfig::load(&dir.path().join("c.toml")).unwrap();
        assert!(matches!(c.fixtures(), Err(ConfigError::Fixture { .. })));
    }
}
