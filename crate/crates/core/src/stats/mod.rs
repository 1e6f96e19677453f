//! Aggregation of trial records into per-cell statistics.

mod emit;
mod paired;
mod reconcile;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::{Cell, TrialRecord};
use crate::model::{BehaviorCounts, TrialOutcome, UnreliableBehavior};

pub use emit::{emit_report, parse_csv, ReportFormat, CSV_HEADER};
pub use paired::{paired_comparison, sign_test_p, PairedCell, PairedSummary, TaskDelta};
pub use reconcile::{reconcile_fixture, CellDelta, RateTable, ReconciliationReport, CountTable, TableFixture};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("cell {task}/{level}/{model} has no scored trials")]
    EmptyCell { task: String, level: String, model: String },
    #[error("the cell has no failures")]
    NoFailures,
    #[error("fixture shapes do not match: {0}")]
    FixtureShapeMismatch(String),
    #[error("fixture `{name}` is malformed: {message}")]
    Fixture { name: String, message: String },
    #[error("fixture `{name}` checksum mismatch: header says {expected}, data hashes to {actual}")]
    Checksum { name: String, expected: String, actual: String },
    #[error("report input is malformed: {0}")]
    Malformed(String),
}

impl StatsError {
    fn empty(cell: &Cell) -> Self {
        Self::EmptyCell { task: cell.task.clone(), level: cell.level.to_string(), model: cell.model.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub cell: Cell,
    /// Scored trials only.
    pub trials: u64,
    /// Includes special successes.
    pub successes: u64,
    pub special_successes: u64,
    pub behavior_counts: BehaviorCounts,
    /// Trials whose backend failed; not part of `trials`.
    pub aborted: u64,
}

impl CellStats {
    fn empty(cell: Cell) -> Self {
        Self {
            cell,
            trials: 0,
            successes: 0,
            special_successes: 0,
            behavior_counts: UnreliableBehavior::ALL.into_iter().map(|b| (b, 0)).collect(),
            aborted: 0,
        }
    }

    pub fn success_rate(&self) -> Result<f64, StatsError> {
        if self.trials == 0 {
            return Err(StatsError::empty(&self.cell));
        }
        Ok(self.successes as f64 / self.trials as f64)
    }

    pub fn failures(&self) -> u64 {
        self.behavior_counts.values().sum()
    }

    fn add(&mut self, outcome: Option<&TrialOutcome>) {
        match outcome {
            None => self.aborted += 1,
            Some(o) => {
                self.trials += 1;
                match o {
                    TrialOutcome::Success => self.successes += 1,
                    TrialOutcome::SpecialSuccess { .. } => {
                        self.successes += 1;
                        self.special_successes += 1;
                    }
                    TrialOutcome::Failure { behavior, .. } => *self.behavior_counts.entry(*behavior).or_default() += 1,
                }
            }
        }
        debug_assert_eq!(self.successes + self.failures(), self.trials);
    }
}

/// One entry per cell present in the records, sorted by cell. Aborted
/// records are tallied in `aborted` and excluded from everything else.
pub fn aggregate<'a>(records: impl IntoIterator<Item = &'a TrialRecord>) -> Vec<CellStats> {
    let mut by_cell: BTreeMap<Cell, CellStats> = BTreeMap::new();
    for r in records {
        by_cell.entry(r.cell.clone()).or_insert_with(|| CellStats::empty(r.cell.clone())).add(r.outcome());
    }
    by_cell.into_values().collect()
}

/// Like [`aggregate`], restricted to `cells`, each of which must have
/// scored trials.
pub fn aggregate_cells<'a>(
    records: impl IntoIterator<Item = &'a TrialRecord>,
    cells: &[Cell],
) -> Result<Vec<CellStats>, StatsError> {
    let all: BTreeMap<Cell, CellStats> = aggregate(records).into_iter().map(|s| (s.cell.clone(), s)).collect();
    cells
        .iter()
        .map(|c| match all.get(c) {
            Some(s) if s.trials > 0 => Ok(s.clone()),
            _ => Err(StatsError::empty(c)),
        })
        .collect()
}

/// Share of each behavior among the cell's failures.
pub fn behavior_proportions(stats: &CellStats) -> Result<BTreeMap<UnreliableBehavior, f64>, StatsError> {
    let failures = stats.trials - stats.successes;
    if failures == 0 {
        return Err(StatsError::NoFailures);
    }
    Ok(stats.behavior_counts.iter().filter(|(_, n)| **n > 0).map(|(b, n)| (*b, *n as f64 / failures as f64)).collect())
}
