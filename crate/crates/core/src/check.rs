//! Static step-order validation and the failure classifier.
//!
//! [`classify`] applies the phases in a fixed order: parse, then static
//! ordering, then runtime. The first phase that fails decides the single
//! behavior of the trial.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Evidence, EvidenceKind, TrialOutcome, UnreliableBehavior};
use crate::parse::{ComposerStep, ParseResult, Program, Verb};
use crate::sim::{BadposeKind, SimError, SimOutcome};

pub const DEFAULT_CONSTRAINTS: &str = include_str!("../fixtures/constraints.toml");

#[derive(Debug, Error, PartialEq)]
pub enum CheckError {
    #[error("constraints belong to `{found}` but the trial is for `{expected}`")]
    ConstraintTaskMismatch { expected: String, found: String },
    #[error("no ordering constraints for `{0}`")]
    UnknownConstraints(String),
    #[error("constraint fixture is malformed: {0}")]
    Malformed(String),
    #[error("program parsed but no ordering verdict was supplied")]
    MissingOrderVerdict,
    #[error("program passed the static checks but no simulation result was supplied")]
    MissingSimResult,
}

/// Matches a step by verb and, optionally, target.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StepPattern {
    pub verb: Verb,
    pub target: Option<String>,
}

impl StepPattern {
    pub fn matches(&self, step: &ComposerStep) -> bool {
        step.verb() == self.verb && self.target.as_deref().is_none_or(|t| step.target() == Some(t))
    }

    fn first_in(&self, prog: &Program) -> Option<usize> {
        prog.steps.iter().position(|s| self.matches(s))
    }
}

impl fmt::Display for StepPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.target {
            Some(t) => write!(f, "{}({t})", self.verb.name()),
            None => f.write_str(self.verb.name()),
        }
    }
}

impl FromStr for StepPattern {
    type Err = CheckError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CheckError::Malformed(format!("bad step pattern `{s}`"));
        let s = s.trim();
        let (verb, target) = match s.split_once('(') {
            Some((v, rest)) => {
                let t = rest.strip_suffix(')').ok_or_else(bad)?.trim();
                if t.is_empty() {
                    return Err(bad());
                }
                (v.trim(), Some(t.to_string()))
            }
            None => (s, None),
        };
        let verb = Verb::from_name(verb).ok_or_else(bad)?;
        if target.is_some() && !verb.takes_target() {
            return Err(bad());
        }
        Ok(Self { verb, target })
    }
}

impl Serialize for StepPattern {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StepPattern {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecedenceConstraints {
    pub task: String,
    pub required: Vec<StepPattern>,
    /// `(a, b)`: the first `a` must come before the first `b`.
    pub edges: Vec<(StepPattern, StepPattern)>,
}

impl PrecedenceConstraints {
    fn validate(&self) -> Result<(), CheckError> {
        // Kahn's algorithm over the distinct patterns.
        let mut nodes: Vec<&StepPattern> = Vec::new();
        for (a, b) in &self.edges {
            for p in [a, b] {
                if !nodes.contains(&p) {
                    nodes.push(p);
                }
            }
        }
        let idx = |p: &StepPattern| nodes.iter().position(|n| *n == p).expect("node registered");
        let mut indeg = vec![0usize; nodes.len()];
        for (_, b) in &self.edges {
            indeg[idx(b)] += 1;
        }
        let mut ready: Vec<usize> = (0..nodes.len()).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(i) = ready.pop() {
            seen += 1;
            for (a, b) in &self.edges {
                if idx(a) == i {
                    let j = idx(b);
                    indeg[j] -= 1;
                    if indeg[j] == 0 {
                        ready.push(j);
                    }
                }
            }
        }
        if seen != nodes.len() {
            return Err(CheckError::Malformed(format!("{}: precedence edges form a cycle", self.task)));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintToml {
    #[serde(default)]
    required: Vec<StepPattern>,
    #[serde(default)]
    edges: Vec<(StepPattern, StepPattern)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintLibrary {
    by_name: BTreeMap<String, PrecedenceConstraints>,
}

impl ConstraintLibrary {
    pub fn builtin() -> Self {
        Self::from_toml(DEFAULT_CONSTRAINTS).expect("built-in constraint fixture is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, CheckError> {
        let raw: BTreeMap<String, ConstraintToml> =
            toml::from_str(text).map_err(|e| CheckError::Malformed(e.to_string()))?;
        let mut by_name = BTreeMap::new();
        for (task, c) in raw {
            let pc = PrecedenceConstraints { task: task.clone(), required: c.required, edges: c.edges };
            pc.validate()?;
            by_name.insert(task, pc);
        }
        Ok(Self { by_name })
    }

    pub fn get(&self, name: &str) -> Result<&PrecedenceConstraints, CheckError> {
        self.by_name.get(name).ok_or_else(|| CheckError::UnknownConstraints(name.to_string()))
    }
}

/// Why a program failed the static checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    /// `after` occurs at `step_index` without `before` earlier.
    Edge { before: StepPattern, after: StepPattern, step_index: usize },
    Missing { pattern: StepPattern },
    /// A step names an object the scene does not have.
    UnknownReferent { name: String, step_index: usize },
}

impl Violation {
    pub fn evidence(&self) -> Evidence {
        match self {
            Violation::Edge { before, after, step_index } => Evidence::new(
                EvidenceKind::PrecedenceViolation,
                Some(format!("step {step_index}")),
                format!("{before} must come before {after}"),
            ),
            Violation::Missing { pattern } => {
                Evidence::new(EvidenceKind::MissingRequiredStep, None, format!("required step {pattern} never occurs"))
            }
            Violation::UnknownReferent { name, step_index } => Evidence::new(
                EvidenceKind::MissingReferent,
                Some(format!("step {step_index}")),
                format!("`{name}` is not in the scene"),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum OrderVerdict {
    Ok,
    DisorderViolation(Violation),
}

/// Checks edges first, then required patterns. Among several violated
/// edges the one whose second pattern occurs earliest is reported, ties
/// going to fixture order.
pub fn validate_order(
    prog: &Program,
    constraints: &PrecedenceConstraints,
    task: &str,
) -> Result<OrderVerdict, CheckError> {
    if constraints.task != task {
        return Err(CheckError::ConstraintTaskMismatch {
            expected: task.to_string(),
            found: constraints.task.clone(),
        });
    }
    let mut worst: Option<(usize, &StepPattern, &StepPattern)> = None;
    for (a, b) in &constraints.edges {
        let Some(fb) = b.first_in(prog) else { continue };
        let violated = a.first_in(prog).is_none_or(|fa| fa > fb);
        if violated && worst.is_none_or(|(w, _, _)| fb < w) {
            worst = Some((fb, a, b));
        }
    }
    if let Some((step_index, a, b)) = worst {
        return Ok(OrderVerdict::DisorderViolation(Violation::Edge {
            before: a.clone(),
            after: b.clone(),
            step_index,
        }));
    }
    for r in &constraints.required {
        if r.first_in(prog).is_none() {
            return Ok(OrderVerdict::DisorderViolation(Violation::Missing { pattern: r.clone() }));
        }
    }
    Ok(OrderVerdict::Ok)
}

/// Static referent check against the scene's object names.
pub fn check_referents<'a>(prog: &Program, scene: impl IntoIterator<Item = &'a str> + Clone) -> OrderVerdict {
    for (i, step) in prog.steps.iter().enumerate() {
        if let Some(t) = step.target() {
            if !scene.clone().into_iter().any(|n| n == t) {
                return OrderVerdict::DisorderViolation(Violation::UnknownReferent {
                    name: t.to_string(),
                    step_index: i,
                });
            }
        }
    }
    OrderVerdict::Ok
}

/// The static verdict a simulator error stands for, if any. An unknown
/// target is a planning error, not a physical one.
pub fn verdict_for_sim_error(e: &SimError) -> Option<OrderVerdict> {
    match e {
        SimError::UnknownTarget { name, step_index } => Some(OrderVerdict::DisorderViolation(
            Violation::UnknownReferent { name: name.clone(), step_index: *step_index },
        )),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruth {
    TargetReachable,
    TargetOutOfWorkspace,
}

impl GroundTruth {
    pub fn from_out_of_workspace(out: bool) -> Self {
        if out {
            Self::TargetOutOfWorkspace
        } else {
            Self::TargetReachable
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Parse,
    Static,
    Runtime,
}

impl Phase {
    pub fn of(behavior: UnreliableBehavior) -> Phase {
        match behavior {
            UnreliableBehavior::Nonsense => Phase::Parse,
            UnreliableBehavior::Disorder => Phase::Static,
            UnreliableBehavior::Infeasible | UnreliableBehavior::Badpose => Phase::Runtime,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedFailure {
    pub behavior: UnreliableBehavior,
    pub evidence: Evidence,
    pub phase: Phase,
}

impl ClassifiedFailure {
    pub fn from_outcome(outcome: &TrialOutcome) -> Option<Self> {
        match outcome {
            TrialOutcome::Failure { behavior, evidence } => {
                Some(Self { behavior: *behavior, evidence: evidence.clone(), phase: Phase::of(*behavior) })
            }
            _ => None,
        }
    }
}

fn failure(behavior: UnreliableBehavior, evidence: Evidence) -> TrialOutcome {
    TrialOutcome::Failure { behavior, evidence }
}

/// Assigns exactly one outcome. Inputs of later phases are ignored once an
/// earlier phase has failed.
pub fn classify(
    parse: &ParseResult,
    order: Option<&OrderVerdict>,
    sim: Option<&SimOutcome>,
    granularity: u8,
    truth: GroundTruth,
) -> Result<TrialOutcome, CheckError> {
    match parse {
        ParseResult::NonsenseRejection(e) => return Ok(failure(UnreliableBehavior::Nonsense, e.clone())),
        ParseResult::Refusal { text } => {
            if granularity == 4 && truth == GroundTruth::TargetOutOfWorkspace {
                return Ok(TrialOutcome::SpecialSuccess { refusal: text.clone() });
            }
            let e = Evidence::new(
                EvidenceKind::UnjustifiedRefusal,
                None,
                "refused although the instruction carries no workspace condition or the target is reachable",
            );
            return Ok(failure(UnreliableBehavior::Nonsense, e));
        }
        ParseResult::Program(_) => {}
    }
    match order.ok_or(CheckError::MissingOrderVerdict)? {
        OrderVerdict::DisorderViolation(v) => return Ok(failure(UnreliableBehavior::Disorder, v.evidence())),
        OrderVerdict::Ok => {}
    }
    Ok(match sim.ok_or(CheckError::MissingSimResult)? {
        SimOutcome::Completed { goal_met: true } => TrialOutcome::Success,
        SimOutcome::Completed { goal_met: false } => failure(
            UnreliableBehavior::Badpose,
            Evidence::new(EvidenceKind::GoalNotMet, None, "execution finished without meeting the task goal"),
        ),
        SimOutcome::InfeasibleHalt { waypoint, step_index } => failure(
            UnreliableBehavior::Infeasible,
            Evidence::new(
                EvidenceKind::OutOfWorkspace,
                Some(format!("step {step_index}")),
                format!(
                    "waypoint ({:.2}, {:.2}, {:.2}) lies outside the executable workspace",
                    waypoint[0], waypoint[1], waypoint[2]
                ),
            ),
        ),
        SimOutcome::BadposeEvent { object, kind, step_index } => {
            let (k, what) = match kind {
                BadposeKind::Misaligned => (EvidenceKind::Misaligned, "approached at a misaligned angle"),
                BadposeKind::Displaced => (EvidenceKind::Displaced, "displaced"),
                BadposeKind::Damaged => (EvidenceKind::Damaged, "damaged"),
            };
            failure(
                UnreliableBehavior::Badpose,
                Evidence::new(k, Some(format!("step {step_index}")), format!("`{object}` {what}")),
            )
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse;

    fn prog(text: &str) -> Program {
        match parse(text) {
            ParseResult::Program(p) => p,
            other => panic!("{other:?}"),
        }
    }

    fn rubbish() -> PrecedenceConstraints {
        ConstraintLibrary::builtin().get("PutRubbishInBin").unwrap().clone()
    }

    #[test]
    fn open_before_bin_is_disorder() {
        let p = prog("composer(grasp the rubbish)\ncomposer(open gripper)\ncomposer(move to the bin)");
        let v = validate_order(&p, &rubbish(), "PutRubbishInBin").unwrap();
        assert_eq!(
            v,
            OrderVerdict::DisorderViolation(Violation::Edge {
                before: "move_to(bin)".parse().unwrap(),
                after: "open_gripper".parse().unwrap(),
                step_index: 1,
            })
        );
    }

    #[test]
    fn bin_then_open_is_fine() {
        let p = prog("composer(grasp the rubbish)\ncomposer(move to the bin)\ncomposer(open gripper)");
        assert_eq!(validate_order(&p, &rubbish(), "PutRubbishInBin").unwrap(), OrderVerdict::Ok);
    }

    #[test]
    fn movement_has_no_edges() {
        let lib = ConstraintLibrary::builtin();
        let p = prog("composer(move to the top of the target)");
        assert_eq!(validate_order(&p, lib.get("Movement").unwrap(), "Movement").unwrap(), OrderVerdict::Ok);
    }

    #[test]
    fn mismatched_task() {
        let p = prog("composer(open gripper)");
        assert!(matches!(
            validate_order(&p, &rubbish(), "Grasp"),
            Err(CheckError::ConstraintTaskMismatch { .. })
        ));
    }

    #[test]
    fn earliest_second_element_wins() {
        // Both edges are violated; open_gripper (step 0) precedes move_to(bin) (step 1).
        let p = prog("composer(open gripper)\ncomposer(move to the bin)\ncomposer(grasp the rubbish)");
        match validate_order(&p, &rubbish(), "PutRubbishInBin").unwrap() {
            OrderVerdict::DisorderViolation(Violation::Edge { after, step_index, .. }) => {
                assert_eq!(after.to_string(), "open_gripper");
                assert_eq!(step_index, 0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_required() {
        let p = prog("composer(grasp the rubbish)");
        assert_eq!(
            validate_order(&p, &rubbish(), "PutRubbishInBin").unwrap(),
            OrderVerdict::DisorderViolation(Violation::Missing { pattern: "move_to(bin)".parse().unwrap() })
        );
    }

    #[test]
    fn cycles_are_rejected() {
        let t = "[T]\nedges = [[\"rotate\", \"reset_pose\"], [\"reset_pose\", \"rotate\"]]\n";
        assert!(matches!(ConstraintLibrary::from_toml(t), Err(CheckError::Malformed(_))));
        assert!("open_gripper(bin)".parse::<StepPattern>().is_err());
        assert!("fly(bin)".parse::<StepPattern>().is_err());
    }

    #[test]
    fn referents() {
        let p = prog("composer(grasp the rubbish)\ncomposer(move to the top of the dustbin)");
        assert_eq!(
            check_referents(&p, ["bin", "rubbish"]),
            OrderVerdict::DisorderViolation(Violation::UnknownReferent { name: "dustbin".into(), step_index: 1 })
        );
    }

    #[test]
    fn refusal_rule() {
        let r = ParseResult::Refusal { text: "I cannot reach the bin.".into() };
        let out = GroundTruth::TargetOutOfWorkspace;
        assert!(matches!(classify(&r, None, None, 4, out), Ok(TrialOutcome::SpecialSuccess { .. })));
        assert_eq!(
            classify(&r, None, None, 2, GroundTruth::TargetReachable).unwrap().behavior(),
            Some(UnreliableBehavior::Nonsense)
        );
        assert_eq!(classify(&r, None, None, 3, out).unwrap().behavior(), Some(UnreliableBehavior::Nonsense));
    }

    #[test]
    fn missing_phase_inputs() {
        let p = ParseResult::Program(prog("composer(open gripper)"));
        let t = GroundTruth::TargetReachable;
        assert_eq!(classify(&p, None, None, 2, t), Err(CheckError::MissingOrderVerdict));
        assert_eq!(classify(&p, Some(&OrderVerdict::Ok), None, 2, t), Err(CheckError::MissingSimResult));
    }
}
