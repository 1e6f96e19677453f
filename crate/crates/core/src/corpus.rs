//! Labeled synthetic completions.
//!
//! Each entry starts from a task's golden program (or one of its canned
//! faults) and applies a single text mutation whose behavior is known by
//! construction. The label comes from the mutation, never from the
//! classifier, so the corpus can be used to measure it.

use serde::{Deserialize, Serialize};

use crate::campaign::spawn_for;
use crate::config::Fixtures;
use crate::model::{GranularityLevel, UnreliableBehavior};

pub const SHIPPED_CORPUS: &str = include_str!("../fixtures/corpus.jsonl");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub task: String,
    pub level: GranularityLevel,
    /// A seed whose scene has every relevant object in reach.
    pub seed: u64,
    pub label: UnreliableBehavior,
    pub mutation: String,
    pub text: String,
}

pub fn read_corpus(text: &str) -> Result<Vec<CorpusEntry>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

fn composer_lines(text: &str) -> Vec<usize> {
    text.lines().enumerate().filter(|(_, l)| l.trim_start().starts_with("composer(")).map(|(i, _)| i).collect()
}

fn with_lines(text: &str, f: impl FnOnce(&mut Vec<String>)) -> String {
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    f(&mut lines);
    lines.join("\n") + "\n"
}

/// Object named in the `context:` line, other than `skip`.
fn other_object(text: &str, skip: &str) -> Option<String> {
    let ctx = text.lines().find(|l| l.starts_with("context:"))?;
    let inner = ctx.split('[').nth(1)?.split(']').next()?;
    inner.split(',').map(|s| s.trim().trim_matches('\'').to_string()).find(|s| !s.is_empty() && s != skip)
}

/// Target of the first composer step that names an object.
fn first_target(text: &str) -> Option<String> {
    for l in text.lines().filter(|l| l.starts_with("composer(")) {
        let inner = l.trim_start_matches("composer(").trim_end_matches(')');
        if let Some(pos) = inner.find("the ") {
            let rest = &inner[pos + 4..];
            let rest = rest.strip_prefix("top of the ").unwrap_or(rest);
            let name = rest.split_whitespace().next()?;
            return Some(name.to_string());
        }
    }
    None
}

fn nonsense(golden: &str, canned: &str, object: &str) -> Vec<(String, String)> {
    let first = composer_lines(golden)[0];
    vec![
        ("canned".into(), canned.to_string()),
        ("from_import".into(), format!("from math import pi\n{golden}")),
        ("prose_preamble".into(), format!("Sure! Here is the policy code for the task:\n{golden}")),
        (
            "unknown_phrase".into(),
            with_lines(golden, |l| l.insert(first, format!("composer(wiggle the {object} gently)"))),
        ),
        ("empty".into(), String::new()),
        (
            "unjustified_refusal".into(),
            format!("I cannot complete this manipulation because the {object} is not something I can reach."),
        ),
        ("trailing_explanation".into(), format!("{golden}This code completes the task as requested.\n")),
    ]
}

fn disorder(golden: &str, canned: &str) -> Vec<(String, String)> {
    let lines = composer_lines(golden);
    let target = first_target(golden).expect("golden programs name an object");
    let mut out = vec![
        ("canned".into(), canned.to_string()),
        (
            "unknown_referent".into(),
            with_lines(golden, |l| l[lines[0]] = l[lines[0]].replacen(&format!("the {target}"), "the teapot", 1)),
        ),
        (
            "plural_referent".into(),
            with_lines(golden, |l| l[lines[0]] = l[lines[0]].replacen(&format!("the {target}"), &format!("the {target}s"), 1)),
        ),
    ];
    if lines.len() >= 2 {
        out.push(("drop_first_step".into(), with_lines(golden, |l| drop(l.remove(lines[0])))));
    } else {
        let other = other_object(golden, &target).expect("scene has a second object");
        out.push(("wrong_object".into(), golden.replacen(&format!("the {target}"), &format!("the {other}"), 1)));
    }
    out
}

fn infeasible(golden: &str, target: &str) -> Vec<(String, String)> {
    let first = composer_lines(golden)[0];
    [80, 60, 120, 200, 95]
        .into_iter()
        .map(|h| {
            (
                format!("hover_{h}"),
                with_lines(golden, |l| l.insert(first, format!("composer(move to {h} units above the {target})"))),
            )
        })
        .collect()
}

fn badpose(canned: &str) -> Vec<(String, String)> {
    let mut out = vec![("canned".to_string(), canned.to_string())];
    let synonym = if canned.contains("composer(grasp ") {
        canned.replacen("composer(grasp ", "composer(grab ", 1)
    } else {
        canned.replacen("composer(move to the ", "composer(go to the ", 1)
    };
    out.push(("verb_synonym".into(), synonym));
    let other = if canned.contains(" from the side)") {
        canned.replacen(" from the side)", " from the front)", 1)
    } else if canned.contains(" from the front)") {
        canned.replacen(" from the front)", " from the side)", 1)
    } else if let Some(i) = canned.find("composer(grasp the ") {
        // A bare grasp defaults to a top-down approach.
        let end = canned[i..].find(')').expect("closed call") + i;
        format!("{} from the top{}", &canned[..end], &canned[end..])
    } else {
        canned.replacen("composer(move to the ", "composer(move the gripper to the ", 1)
    };
    out.push(("other_pose".into(), other));
    out
}

/// Builds the corpus: every mutation of every task at levels A and C.
pub fn generate(fx: &Fixtures) -> Vec<CorpusEntry> {
    let mut out = Vec::new();
    for task in fx.tasks.tasks() {
        let canned = fx.programs.get(&task.name).expect("programs for every task");
        let seed = (0u64..)
            .find(|s| !spawn_for(fx, &task.name, *s).expect("scene spawns").target_out_of_workspace())
            .expect("some seed is reachable");
        let target = first_target(&canned.golden).expect("golden programs name an object");
        let f = |b| canned.fault(b);
        let groups = [
            (UnreliableBehavior::Nonsense, nonsense(&canned.golden, f(UnreliableBehavior::Nonsense), &target)),
            (UnreliableBehavior::Disorder, disorder(&canned.golden, f(UnreliableBehavior::Disorder))),
            (UnreliableBehavior::Infeasible, infeasible(&canned.golden, &target)),
            (UnreliableBehavior::Badpose, badpose(f(UnreliableBehavior::Badpose))),
        ];
        for level in [GranularityLevel::A, GranularityLevel::C] {
            for (label, variants) in &groups {
                for (mutation, text) in variants {
                    out.push(CorpusEntry {
                        id: format!("{}-{level}-{}-{mutation}", task.name, label.name().to_lowercase()),
                        task: task.name.clone(),
                        level,
                        seed,
                        label: *label,
                        mutation: mutation.clone(),
                        text: text.clone(),
                    });
                }
            }
        }
    }
    out
}

pub fn to_jsonl(entries: &[CorpusEntry]) -> String {
    entries.iter().map(|e| serde_json::to_string(e).expect("entry serializes") + "\n").collect()
}
