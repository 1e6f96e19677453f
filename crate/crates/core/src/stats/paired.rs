//! Paired comparison of two runs over the same trial seeds, typically
//! without and with feedback.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use super::StatsError;
use crate::campaign::{Cell, TrialRecord};

/// P(X >= k) for X ~ Binomial(n, 1/2): the one-sided sign-test p-value for
/// `k` discordant pairs in the tested direction out of `n`.
pub fn sign_test_p(k: u64, n: u64) -> f64 {
    if k == 0 || n == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, n).expect("valid binomial");
    b.sf(k - 1)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Tally {
    pairs: u64,
    base_successes: u64,
    treated_successes: u64,
    /// Failure turned into success.
    improved: u64,
    /// Success turned into failure.
    worsened: u64,
}

impl Tally {
    fn add(&mut self, base: bool, treated: bool) {
        self.pairs += 1;
        self.base_successes += base as u64;
        self.treated_successes += treated as u64;
        self.improved += (!base && treated) as u64;
        self.worsened += (base && !treated) as u64;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedCell {
    pub cell: Cell,
    pub pairs: u64,
    pub base_rate: f64,
    pub treated_rate: f64,
    pub delta: f64,
    pub improved: u64,
    pub worsened: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDelta {
    pub task: String,
    pub pairs: u64,
    pub base_rate: f64,
    pub treated_rate: f64,
    pub delta: f64,
    pub improved: u64,
    pub worsened: u64,
    /// Sign-test p-value for "treated is better".
    pub p_better: f64,
    /// Sign-test p-value for "treated is worse".
    pub p_worse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSummary {
    pub cells: Vec<PairedCell>,
    pub tasks: Vec<TaskDelta>,
    /// Pairs dropped because one side was aborted or missing.
    pub unmatched: u64,
}

/// Matches scored records of `base` and `treated` by cell and trial index.
pub fn paired_comparison(base: &[TrialRecord], treated: &[TrialRecord]) -> Result<PairedSummary, StatsError> {
    let key = |r: &TrialRecord| (r.cell.clone(), r.trial_index);
    let treated_by: BTreeMap<(Cell, u32), &TrialRecord> = treated.iter().map(|r| (key(r), r)).collect();
    let mut cells: BTreeMap<Cell, Tally> = BTreeMap::new();
    let mut unmatched = 0;
    for b in base {
        match (b.outcome(), treated_by.get(&key(b)).and_then(|t| t.outcome())) {
            (Some(x), Some(y)) => cells.entry(b.cell.clone()).or_default().add(x.is_success(), y.is_success()),
            _ => unmatched += 1,
        }
    }
    if cells.is_empty() {
        return Err(StatsError::Malformed("no matching scored trials between the two runs".into()));
    }
    let rate = |k: u64, n: u64| k as f64 / n as f64;
    let mut tasks: BTreeMap<String, Tally> = BTreeMap::new();
    let mut out_cells = Vec::new();
    for (cell, t) in &cells {
        let agg = tasks.entry(cell.task.clone()).or_default();
        agg.pairs += t.pairs;
        agg.base_successes += t.base_successes;
        agg.treated_successes += t.treated_successes;
        agg.improved += t.improved;
        agg.worsened += t.worsened;
        out_cells.push(PairedCell {
            cell: cell.clone(),
            pairs: t.pairs,
            base_rate: rate(t.base_successes, t.pairs),
            treated_rate: rate(t.treated_successes, t.pairs),
            delta: (t.treated_successes as f64 - t.base_successes as f64) / t.pairs as f64,
            improved: t.improved,
            worsened: t.worsened,
        });
    }
    let tasks = tasks
        .into_iter()
        .map(|(task, t)| {
            let discordant = t.improved + t.worsened;
            TaskDelta {
                task,
                pairs: t.pairs,
                base_rate: rate(t.base_successes, t.pairs),
                treated_rate: rate(t.treated_successes, t.pairs),
                delta: (t.treated_successes as f64 - t.base_successes as f64) / t.pairs as f64,
                improved: t.improved,
                worsened: t.worsened,
                p_better: sign_test_p(t.improved, discordant),
                p_worse: sign_test_p(t.worsened, discordant),
            }
        })
        .collect();
    Ok(PairedSummary { cells: out_cells, tasks, unmatched })
}
