//! Seeded stand-in for a language model.
//!
//! The mock recognizes which task and level a query belongs to by matching
//! its text against the instruction templates, then answers with the
//! task's golden program or one of its canned faults. Which one is decided
//! by a profile (see `fixtures/mock/default.toml` for the rate formula).

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::{Backend, BackendError, CompletionContext};
use crate::instructions::TemplateLibrary;
use crate::model::{complexity_of, GranularityLevel, TaskRegistry, UnreliableBehavior};
use crate::parse::{parse, ParseResult, RawCompletion};
use crate::programs::ProgramLibrary;
use crate::prompting::PromptBundle;
use crate::seed::{derive_seed, sha256_hex};

pub const MOCK_PRESETS: [(&str, &str); 2] = [
    ("default", include_str!("../../fixtures/mock/default.toml")),
    ("weak", include_str!("../../fixtures/mock/weak.toml")),
];

/// Answer to a query the mock does not recognize: neither code nor a
/// refusal.
pub const UNKNOWN_QUERY_REPLY: &str = "Sure, here is a description of what the robot should do next.";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileToml {
    name: String,
    seed: u64,
    refusal_rate: f64,
    base_fault_rates: BTreeMap<UnreliableBehavior, f64>,
    feedback_suppression: BTreeMap<UnreliableBehavior, f64>,
    competence_by_complexity: BTreeMap<String, f64>,
    granularity_bonus: BTreeMap<String, f64>,
    level_shaping: BTreeMap<GranularityLevel, BTreeMap<UnreliableBehavior, f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockProfile {
    pub name: String,
    pub seed: u64,
    pub refusal_rate: f64,
    pub base_fault_rates: BTreeMap<UnreliableBehavior, f64>,
    pub feedback_suppression: BTreeMap<UnreliableBehavior, f64>,
    pub competence_by_complexity: BTreeMap<u8, f64>,
    pub granularity_bonus: BTreeMap<u8, f64>,
    pub level_shaping: BTreeMap<GranularityLevel, BTreeMap<UnreliableBehavior, f64>>,
}

fn int_keys(map: BTreeMap<String, f64>, what: &str) -> Result<BTreeMap<u8, f64>, BackendError> {
    map.into_iter()
        .map(|(k, v)| {
            k.trim()
                .parse::<u8>()
                .map(|k| (k, v))
                .map_err(|_| BackendError::Config(format!("{what}: key `{k}` is not a small integer")))
        })
        .collect()
}

fn unit(v: f64, what: &str) -> Result<(), BackendError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(BackendError::Config(format!("{what} = {v} is outside [0, 1]")))
    }
}

impl MockProfile {
    pub fn from_toml(text: &str) -> Result<Self, BackendError> {
        let raw: ProfileToml = toml::from_str(text).map_err(|e| BackendError::Config(e.to_string()))?;
        let p = Self {
            name: raw.name,
            seed: raw.seed,
            refusal_rate: raw.refusal_rate,
            base_fault_rates: raw.base_fault_rates,
            feedback_suppression: raw.feedback_suppression,
            competence_by_complexity: int_keys(raw.competence_by_complexity, "competence_by_complexity")?,
            granularity_bonus: int_keys(raw.granularity_bonus, "granularity_bonus")?,
            level_shaping: raw.level_shaping,
        };
        p.validate()?;
        Ok(p)
    }

    /// A preset name, or else a path to a profile file.
    pub fn resolve(name_or_path: &str) -> Result<Self, BackendError> {
        if let Some((_, text)) = MOCK_PRESETS.iter().find(|(n, _)| *n == name_or_path) {
            return Self::from_toml(text);
        }
        let path = Path::new(name_or_path);
        let text = std::fs::read_to_string(path).map_err(|e| {
            BackendError::Config(format!("`{name_or_path}` is neither a mock preset nor a readable file: {e}"))
        })?;
        Self::from_toml(&text)
    }

    pub fn preset(name: &str) -> Result<Self, BackendError> {
        let (_, text) = MOCK_PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| BackendError::Config(format!("unknown mock preset `{name}`")))?;
        Self::from_toml(text)
    }

    fn validate(&self) -> Result<(), BackendError> {
        unit(self.refusal_rate, "refusal_rate")?;
        for b in UnreliableBehavior::ALL {
            let base = self.base_fault_rates.get(&b).ok_or_else(|| BackendError::Config(format!("no base rate for {b}")))?;
            unit(*base, "base_fault_rates")?;
            let s = self.feedback_suppression.get(&b).copied().unwrap_or(1.0);
            unit(s, "feedback_suppression")?;
        }
        for (_, v) in self.competence_by_complexity.iter().chain(&self.granularity_bonus) {
            unit(*v, "competence/bonus")?;
        }
        for (level, shaping) in &self.level_shaping {
            if let Some((b, v)) = shaping.iter().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
                return Err(BackendError::Config(format!("level_shaping.{level}.{b} = {v} must be non-negative")));
            }
        }
        Ok(())
    }

    /// Per-behavior fault probabilities for one query, scaled to sum to at
    /// most 1.
    pub fn fault_rates(
        &self,
        level: GranularityLevel,
        complexity: u8,
        feedback_on: Option<UnreliableBehavior>,
    ) -> BTreeMap<UnreliableBehavior, f64> {
        let competence = self.competence_by_complexity.get(&complexity).copied().unwrap_or(0.0);
        let bonus = self.granularity_bonus.get(&level.granularity()).copied().unwrap_or(0.0);
        let mut rates: BTreeMap<UnreliableBehavior, f64> = UnreliableBehavior::ALL
            .into_iter()
            .map(|b| {
                let shaping = self.level_shaping.get(&level).and_then(|s| s.get(&b)).copied().unwrap_or(1.0);
                let suppression =
                    if feedback_on == Some(b) { self.feedback_suppression.get(&b).copied().unwrap_or(1.0) } else { 1.0 };
                (b, self.base_fault_rates[&b] * shaping * (1.0 - competence) * (1.0 - bonus) * suppression)
            })
            .collect();
        let total: f64 = rates.values().sum();
        if total > 1.0 {
            rates.values_mut().for_each(|r| *r /= total);
        }
        rates
    }
}

#[derive(Debug, Clone)]
struct QueryKey {
    task: String,
    level: GranularityLevel,
    /// Full extents quoted by a level-C query.
    extents: Option<[f64; 3]>,
}

pub struct MockBackend {
    model_name: String,
    profile: MockProfile,
    tasks: TaskRegistry,
    templates: TemplateLibrary,
    programs: ProgramLibrary,
    id: String,
}

impl MockBackend {
    pub fn new(model_name: &str, profile: MockProfile) -> Result<Self, BackendError> {
        Self::with_fixtures(model_name, profile, TaskRegistry::builtin(), TemplateLibrary::builtin(), ProgramLibrary::builtin())
    }

    pub fn with_fixtures(
        model_name: &str,
        profile: MockProfile,
        tasks: TaskRegistry,
        templates: TemplateLibrary,
        programs: ProgramLibrary,
    ) -> Result<Self, BackendError> {
        for t in tasks.tasks() {
            templates.get(&t.name).map_err(|e| BackendError::Config(e.to_string()))?;
            programs.get(&t.name).map_err(|e| BackendError::Config(e.to_string()))?;
        }
        let id = format!("mock:{}", profile.name);
        Ok(Self { model_name: model_name.to_string(), profile, tasks, templates, programs, id })
    }

    pub fn profile(&self) -> &MockProfile {
        &self.profile
    }

    fn identify(&self, query: &str) -> Option<QueryKey> {
        let query = query.trim().trim_end_matches('.');
        for t in self.tasks.tasks() {
            let tpl = self.templates.get(&t.name).ok()?;
            if query == tpl.text_a {
                return Some(QueryKey { task: t.name.clone(), level: GranularityLevel::A, extents: None });
            }
            if query == tpl.text_p() {
                return Some(QueryKey { task: t.name.clone(), level: GranularityLevel::P, extents: None });
            }
            let prefix = tpl.text_c.split("{bounds}").next().unwrap_or_default();
            if let Some(rest) = query.strip_prefix(prefix) {
                return Some(QueryKey { task: t.name.clone(), level: GranularityLevel::C, extents: parse_extents(rest) });
            }
        }
        None
    }

    /// Name of a perceived object the golden program touches that lies
    /// outside the quoted executable box.
    fn out_of_reach(&self, golden: &str, extents: [f64; 3], ctx: &CompletionContext<'_>) -> Option<String> {
        let ParseResult::Program(prog) = parse(golden) else { return None };
        let targets = prog.targets();
        ctx.perception
            .iter()
            .filter(|d| targets.iter().any(|t| t == &d.name))
            .find(|d| (0..3).any(|i| d.position[i].abs() > extents[i] / 2.0))
            .map(|d| d.name.clone())
    }
}

/// Reads `(x, y, z)` from the start of the text.
fn parse_extents(text: &str) -> Option<[f64; 3]> {
    let inner = text.trim().strip_prefix('(')?.split(')').next()?;
    let nums: Vec<f64> = inner.split(',').map(|s| s.trim().parse().ok()).collect::<Option<_>>()?;
    nums.try_into().ok()
}

pub fn refusal_text(object: &str) -> String {
    format!("I cannot complete this manipulation because the {object} lies outside the executable space.")
}

impl Backend for MockBackend {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn complete(&self, bundle: &PromptBundle, ctx: &CompletionContext<'_>) -> Result<RawCompletion, BackendError> {
        let reply = |text: String| Ok(RawCompletion::new(text, self.id.clone(), 0));
        let Some(key) = bundle.query_text().and_then(|q| self.identify(q)) else {
            return reply(UNKNOWN_QUERY_REPLY.to_string());
        };
        let task = self.tasks.get(&key.task).map_err(|e| BackendError::Config(e.to_string()))?;
        let canned = self.programs.get(&key.task).map_err(|e| BackendError::Config(e.to_string()))?;

        let feedback_on = bundle.feedback_behavior();
        let seed = if bundle.is_feedback() {
            derive_seed(&[
                &self.profile.seed.to_le_bytes(),
                &ctx.seed.to_le_bytes(),
                sha256_hex(bundle.last_user().as_bytes()).as_bytes(),
            ])
        } else {
            derive_seed(&[&self.profile.seed.to_le_bytes(), &ctx.seed.to_le_bytes()])
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: f64 = rng.random();
        let v: f64 = rng.random();

        // Primitive tasks say the same thing at A and P; the text match
        // above already resolves those to A.
        let rates = self.profile.fault_rates(key.level, complexity_of(task), feedback_on);
        let mut acc = 0.0;
        for (b, r) in &rates {
            acc += r;
            if u < acc {
                return reply(canned.fault(*b).to_string());
            }
        }
        if let Some(extents) = key.extents {
            if let Some(name) = self.out_of_reach(&canned.golden, extents, ctx) {
                if v < self.profile.refusal_rate {
                    return reply(refusal_text(&name));
                }
            }
        }
        reply(canned.golden.clone())
    }
}
