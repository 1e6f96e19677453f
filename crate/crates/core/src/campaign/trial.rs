//! One trial: spawn, prompt, complete, classify, and optionally retry with
//! feedback.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::CampaignError;
use crate::backend::{Backend, CompletionContext};
use crate::check::{check_referents, classify, validate_order, verdict_for_sim_error, GroundTruth, OrderVerdict};
use crate::config::Fixtures;
use crate::model::{GranularityLevel, TrialOutcome};
use crate::parse::{ParseResult, RawCompletion};
use crate::prompting::{build_feedback_prompt, build_prompt};
use crate::sim::{execute, SimOutcome, WorldState};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub task: String,
    pub level: GranularityLevel,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrialResult {
    Scored { outcome: TrialOutcome },
    /// The backend failed; excluded from rates.
    Aborted { error: String },
}

/// One query/answer round within a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub prompt_digest: String,
    /// Digest of the world the completion ran against.
    pub scene_digest: String,
    pub completion: RawCompletion,
    pub outcome: TrialOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub schema_version: u32,
    pub cell: Cell,
    pub trial_index: u32,
    pub seed: u64,
    /// Digest of the first prompt.
    pub prompt_digest: String,
    /// The last completion received, if any.
    pub completion: Option<RawCompletion>,
    pub result: TrialResult,
    pub feedback_rounds_used: u32,
    pub attempts: Vec<AttemptRecord>,
    pub wall_ms: u64,
}

impl TrialRecord {
    pub fn outcome(&self) -> Option<&TrialOutcome> {
        match &self.result {
            TrialResult::Scored { outcome } => Some(outcome),
            TrialResult::Aborted { .. } => None,
        }
    }

    pub fn is_aborted(&self) -> bool {
        matches!(self.result, TrialResult::Aborted { .. })
    }

    /// The record with every timing field zeroed.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.wall_ms = 0;
        if let Some(c) = &mut r.completion {
            c.latency_ms = 0;
        }
        for a in &mut r.attempts {
            a.completion.latency_ms = 0;
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackPolicy {
    pub enabled: bool,
    pub max_rounds: u32,
}

impl FeedbackPolicy {
    pub const OFF: FeedbackPolicy = FeedbackPolicy { enabled: false, max_rounds: 0 };

    pub fn rounds(&self) -> u32 {
        if self.enabled {
            self.max_rounds
        } else {
            0
        }
    }
}

/// Everything the classifier saw for one completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub parse: ParseResult,
    pub order: Option<OrderVerdict>,
    pub sim: Option<SimOutcome>,
    pub final_state: Option<WorldState>,
    pub outcome: TrialOutcome,
}

/// Parses and classifies a completion against a spawned world. Runs the
/// simulator only when the static checks pass.
pub fn evaluate(
    fx: &Fixtures,
    task: &str,
    level: GranularityLevel,
    world: &WorldState,
    text: &str,
) -> Result<Evaluation, CampaignError> {
    let spec = fx.tasks.get(task).map_err(|e| CampaignError::Config(e.to_string()))?;
    let truth = GroundTruth::from_out_of_workspace(world.target_out_of_workspace());
    let g = level.granularity();
    let parse = fx.parser.parse(text);
    let done = |parse: ParseResult, order: Option<OrderVerdict>, sim: Option<SimOutcome>, fs: Option<WorldState>| {
        let outcome = classify(&parse, order.as_ref(), sim.as_ref(), g, truth)?;
        Ok(Evaluation { parse, order, sim, final_state: fs, outcome })
    };
    let ParseResult::Program(prog) = &parse else {
        return done(parse, None, None, None);
    };
    let mut order = check_referents(prog, world.objects.keys().map(String::as_str));
    if order == OrderVerdict::Ok {
        let constraints = fx.constraints.get(&spec.ordering)?;
        order = validate_order(prog, constraints, &spec.ordering)?;
    }
    if order != OrderVerdict::Ok {
        return done(parse, Some(order), None, None);
    }
    match execute(prog, world, &fx.sim) {
        Ok(r) => {
            let fs = r.final_state;
            done(parse, Some(order), Some(r.outcome), Some(fs))
        }
        Err(e) => match verdict_for_sim_error(&e) {
            Some(v) => done(parse, Some(v), None, None),
            None => Err(CampaignError::Sim(e.to_string())),
        },
    }
}

/// Spawns the task's scene for a seed.
pub fn spawn_for(fx: &Fixtures, task: &str, seed: u64) -> Result<WorldState, CampaignError> {
    let spec = fx.tasks.get(task).map_err(|e| CampaignError::Config(e.to_string()))?;
    fx.scenes.spawn(&spec.scene, seed, &fx.sim).map_err(|e| CampaignError::Sim(e.to_string()))
}

/// Runs one trial. Backend failures yield an aborted record rather than an
/// error; fixture and simulator errors are returned.
pub fn run_trial(
    fx: &Fixtures,
    task: &str,
    level: GranularityLevel,
    backend: &dyn Backend,
    trial_index: u32,
    seed: u64,
    feedback: FeedbackPolicy,
) -> Result<TrialRecord, CampaignError> {
    let start = Instant::now();
    let spec = fx.tasks.get(task).map_err(|e| CampaignError::Config(e.to_string()))?;
    let world = spawn_for(fx, task, seed)?;
    let ins = fx.templates.render(spec, level, &world.workspace).map_err(|e| CampaignError::Config(e.to_string()))?;
    let first = build_prompt(&ins, &fx.demo).map_err(|e| CampaignError::Config(e.to_string()))?;
    let perception = world.perceive();
    let cell = Cell { task: task.to_string(), level, model: backend.model_name().to_string() };

    let mut record = TrialRecord {
        schema_version: SCHEMA_VERSION,
        cell,
        trial_index,
        seed,
        prompt_digest: first.digest(),
        completion: None,
        result: TrialResult::Aborted { error: "no completion".into() },
        feedback_rounds_used: 0,
        attempts: Vec::new(),
        wall_ms: 0,
    };
    let mut bundle = first;
    for round in 0..=feedback.rounds() {
        // Each retry starts from the spawn state again.
        let scene = if round == 0 { world.clone() } else { spawn_for(fx, task, seed)? };
        let completion = match backend.complete(&bundle, &CompletionContext { seed, perception: &perception }) {
            Ok(c) => c,
            Err(e) => {
                record.result = TrialResult::Aborted { error: e.to_string() };
                break;
            }
        };
        let eval = evaluate(fx, task, level, &scene, &completion.text)?;
        record.attempts.push(AttemptRecord {
            prompt_digest: bundle.digest(),
            scene_digest: scene.digest(),
            completion: completion.clone(),
            outcome: eval.outcome.clone(),
        });
        record.feedback_rounds_used = round;
        record.completion = Some(completion.clone());
        record.result = TrialResult::Scored { outcome: eval.outcome.clone() };
        let Some(behavior) = eval.outcome.behavior() else { break };
        if round == feedback.rounds() {
            break;
        }
        bundle = build_feedback_prompt(&completion, behavior, &ins, &fx.demo, &fx.behaviors);
    }
    record.wall_ms = start.elapsed().as_millis() as u64;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendError, MockBackend, MockProfile};
    use crate::model::UnreliableBehavior;
    use crate::prompting::PromptBundle;

    fn zero_fault() -> MockProfile {
        let mut p = MockProfile::preset("default").unwrap();
        p.base_fault_rates.values_mut().for_each(|r| *r = 0.0);
        p
    }

    #[test]
    fn golden_path() {
        let fx = Fixtures::builtin();
        let m = MockBackend::new("m", zero_fault()).unwrap();
        let policy = FeedbackPolicy { enabled: true, max_rounds: 1 };
        let mut n = 0;
        for seed in 0..40 {
            let r = run_trial(&fx, "PutRubbishInBin", GranularityLevel::P, &m, 0, seed, policy).unwrap();
            if spawn_for(&fx, "PutRubbishInBin", seed).unwrap().target_out_of_workspace() {
                continue;
            }
            assert_eq!(r.outcome(), Some(&TrialOutcome::Success));
            assert_eq!(r.feedback_rounds_used, 0);
            n += 1;
        }
        assert!(n > 20);
    }

    #[test]
    fn nonsense_then_success_after_feedback() {
        let fx = Fixtures::builtin();
        let mut p = zero_fault();
        p.base_fault_rates.insert(UnreliableBehavior::Nonsense, 1.0);
        p.feedback_suppression.insert(UnreliableBehavior::Nonsense, 0.0);
        let m = MockBackend::new("m", p).unwrap();
        let seed = (0..).find(|s| !spawn_for(&fx, "Grasp", *s).unwrap().target_out_of_workspace()).unwrap();
        let r = run_trial(&fx, "Grasp", GranularityLevel::A, &m, 0, seed, FeedbackPolicy { enabled: true, max_rounds: 1 })
            .unwrap();
        assert_eq!(r.attempts.len(), 2);
        assert_eq!(r.attempts[0].outcome.behavior(), Some(UnreliableBehavior::Nonsense));
        assert_eq!(r.outcome(), Some(&TrialOutcome::Success));
        assert_eq!(r.feedback_rounds_used, 1);
        assert_eq!(r.attempts[0].scene_digest, r.attempts[1].scene_digest);
        assert_eq!(r.attempts[1].scene_digest, spawn_for(&fx, "Grasp", seed).unwrap().digest());
        assert_ne!(r.attempts[0].prompt_digest, r.attempts[1].prompt_digest);

        let off = run_trial(&fx, "Grasp", GranularityLevel::A, &m, 0, seed, FeedbackPolicy::OFF).unwrap();
        assert_eq!(off.attempts.len(), 1);
        assert_eq!(off.outcome().unwrap().behavior(), Some(UnreliableBehavior::Nonsense));
    }

    struct Down;
    impl Backend for Down {
        fn model_name(&self) -> &str {
            "down"
        }
        fn complete(&self, _: &PromptBundle, _: &CompletionContext<'_>) -> Result<RawCompletion, BackendError> {
            Err(BackendError::Transport { status: Some(503), message: "unavailable".into() })
        }
    }

    #[test]
    fn backend_failure_aborts() {
        let fx = Fixtures::builtin();
        let r = run_trial(&fx, "Grasp", GranularityLevel::A, &Down, 3, 1, FeedbackPolicy::OFF).unwrap();
        assert!(r.is_aborted());
        assert!(r.outcome().is_none());
        assert!(r.attempts.is_empty());
    }

    #[test]
    fn unknown_referent_is_disorder() {
        let fx = Fixtures::builtin();
        let w = spawn_for(&fx, "Grasp", 1).unwrap();
        let e = evaluate(&fx, "Grasp", GranularityLevel::A, &w, "composer(grasp the teapot)").unwrap();
        assert_eq!(e.outcome.behavior(), Some(UnreliableBehavior::Disorder));
        assert!(e.sim.is_none());
    }
}
