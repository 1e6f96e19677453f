//! Cross-check of the transcribed per-behavior failure counts against the
//! transcribed success rates.
//!
//! Both tables ship as CSV with a `#` comment header. One header line reads
//! `# sha256: <hex>`, the digest of everything after the header; loading
//! fails when the data no longer hashes to it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::campaign::Cell;
use crate::model::{BehaviorCounts, GranularityLevel, UnreliableBehavior};
use crate::seed::sha256_hex;

pub const SUCCESS_RATES: &str = include_str!("../../fixtures/tables/success_rates.csv");
pub const BEHAVIOR_COUNTS: &str = include_str!("../../fixtures/tables/behavior_counts.csv");

/// Trials behind every published cell.
pub const PUBLISHED_TRIALS: u64 = 50;
/// Largest |delta| not flagged.
pub const TOLERANCE: f64 = 0.01;

/// A CSV fixture split into its comment header and data.
#[derive(Debug, Clone, PartialEq)]
pub struct TableFixture {
    pub name: String,
    pub header: Vec<String>,
    pub data: String,
}

impl TableFixture {
    pub fn parse(name: &str, text: &str) -> Result<Self, StatsError> {
        let mut header = Vec::new();
        let mut rest = text;
        while let Some(line) = rest.strip_prefix('#') {
            let (l, tail) = line.split_once('\n').unwrap_or((line, ""));
            header.push(l.trim().to_string());
            rest = tail;
        }
        let fx = Self { name: name.to_string(), header, data: rest.to_string() };
        fx.verify()?;
        Ok(fx)
    }

    pub fn checksum(&self) -> Option<&str> {
        self.header.iter().find_map(|h| h.strip_prefix("sha256:")).map(str::trim)
    }

    pub fn provenance(&self) -> Option<&str> {
        self.header.iter().find_map(|h| h.strip_prefix("provenance:")).map(str::trim)
    }

    fn verify(&self) -> Result<(), StatsError> {
        let expected = self.checksum().ok_or_else(|| StatsError::Fixture {
            name: self.name.clone(),
            message: "header has no `sha256:` line".into(),
        })?;
        if self.provenance().is_none() {
            return Err(StatsError::Fixture { name: self.name.clone(), message: "header has no `provenance:` line".into() });
        }
        let actual = sha256_hex(self.data.as_bytes());
        if actual != expected {
            return Err(StatsError::Checksum { name: self.name.clone(), expected: expected.to_string(), actual });
        }
        Ok(())
    }

    fn rows(&self) -> Result<(Vec<String>, Vec<csv::StringRecord>), StatsError> {
        let bad = |m: String| StatsError::Fixture { name: self.name.clone(), message: m };
        let mut rdr = csv::Reader::from_reader(self.data.as_bytes());
        let headers: Vec<String> = rdr.headers().map_err(|e| bad(e.to_string()))?.iter().map(String::from).collect();
        let rows = rdr.records().collect::<Result<Vec<_>, _>>().map_err(|e| bad(e.to_string()))?;
        Ok((headers, rows))
    }
}

fn level(name: &str, s: &str) -> Result<GranularityLevel, StatsError> {
    s.parse().map_err(|_| StatsError::Fixture { name: name.to_string(), message: format!("bad level `{s}`") })
}

/// `task,level,<model>...` with one success rate per model.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub models: Vec<String>,
    pub rates: BTreeMap<Cell, f64>,
}

impl RateTable {
    pub fn builtin() -> Self {
        Self::from_fixture(&TableFixture::parse("success_rates", SUCCESS_RATES).expect("rate fixture verifies"))
            .expect("rate fixture parses")
    }

    pub fn from_fixture(fx: &TableFixture) -> Result<Self, StatsError> {
        let bad = |m: String| StatsError::Fixture { name: fx.name.clone(), message: m };
        let (headers, rows) = fx.rows()?;
        if headers.len() < 3 || headers[0] != "task" || headers[1] != "level" {
            return Err(bad("expected columns task,level,<model>...".into()));
        }
        let models = headers[2..].to_vec();
        let mut rates = BTreeMap::new();
        for row in rows {
            let lvl = level(&fx.name, &row[1])?;
            for (m, v) in models.iter().zip(row.iter().skip(2)) {
                let r: f64 = v.trim().parse().map_err(|_| bad(format!("bad rate `{v}`")))?;
                if !(0.0..=1.0).contains(&r) {
                    return Err(bad(format!("rate {r} outside [0, 1]")));
                }
                let cell = Cell { task: row[0].to_string(), level: lvl, model: m.clone() };
                if rates.insert(cell, r).is_some() {
                    return Err(bad(format!("duplicate row {}/{}", &row[0], &row[1])));
                }
            }
        }
        Ok(Self { models, rates })
    }
}

/// `task,level,behavior,<model>...` with one failure count per model.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    pub models: Vec<String>,
    pub counts: BTreeMap<Cell, BehaviorCounts>,
}

impl CountTable {
    pub fn builtin() -> Self {
        Self::from_fixture(&TableFixture::parse("behavior_counts", BEHAVIOR_COUNTS).expect("count fixture verifies"))
            .expect("count fixture parses")
    }

    pub fn from_fixture(fx: &TableFixture) -> Result<Self, StatsError> {
        let bad = |m: String| StatsError::Fixture { name: fx.name.clone(), message: m };
        let (headers, rows) = fx.rows()?;
        if headers.len() < 4 || headers[..3] != ["task", "level", "behavior"] {
            return Err(bad("expected columns task,level,behavior,<model>...".into()));
        }
        let models = headers[3..].to_vec();
        let mut counts: BTreeMap<Cell, BehaviorCounts> = BTreeMap::new();
        for row in rows {
            let lvl = level(&fx.name, &row[1])?;
            let b: UnreliableBehavior = row[2].parse().map_err(|_| bad(format!("bad behavior `{}`", &row[2])))?;
            for (m, v) in models.iter().zip(row.iter().skip(3)) {
                let n: u64 = v.trim().parse().map_err(|_| bad(format!("bad count `{v}`")))?;
                let cell = Cell { task: row[0].to_string(), level: lvl, model: m.clone() };
                if counts.entry(cell).or_default().insert(b, n).is_some() {
                    return Err(bad(format!("duplicate row {}/{}/{b}", &row[0], &row[1])));
                }
            }
        }
        Ok(Self { models, counts })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDelta {
    pub cell: Cell,
    pub failures: u64,
    pub computed: f64,
    pub published: f64,
    /// computed minus published.
    pub delta: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconciliationReport {
    pub cells: Vec<CellDelta>,
    pub within_tolerance: usize,
    pub tolerance: f64,
    pub notes: Vec<String>,
}

impl ReconciliationReport {
    pub fn fraction_within(&self) -> f64 {
        self.within_tolerance as f64 / self.cells.len().max(1) as f64
    }

    pub fn get(&self, task: &str, level: GranularityLevel, model: &str) -> Option<&CellDelta> {
        self.cells.iter().find(|d| d.cell.task == task && d.cell.level == level && d.cell.model == model)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| task | level | model | failures | 1 - failures/50 | published | delta |\n");
        s.push_str("|---|---|---|---|---|---|---|\n");
        for d in &self.cells {
            s.push_str(&format!(
                "| {} | {} | {} | {} | {:.2} | {:.2} | {:+.2}{} |\n",
                d.cell.task,
                d.cell.level,
                d.cell.model,
                d.failures,
                d.computed,
                d.published,
                d.delta,
                if d.flagged { " (flagged)" } else { "" }
            ));
        }
        s.push_str(&format!(
            "\n{} of {} cells within {:.2}.\n",
            self.within_tolerance,
            self.cells.len(),
            self.tolerance
        ));
        for n in &self.notes {
            s.push_str(&format!("\n{n}\n"));
        }
        s
    }
}

/// Compares `1 - failures/50` with the published rate for every cell.
/// Differences are computed in hundredths, so a matching cell has a delta of
/// exactly zero.
pub fn reconcile_fixture(counts: &CountTable, rates: &RateTable) -> Result<ReconciliationReport, StatsError> {
    let a: BTreeSet<&Cell> = counts.counts.keys().collect();
    let b: BTreeSet<&Cell> = rates.rates.keys().collect();
    if a != b {
        let missing: Vec<String> =
            a.symmetric_difference(&b).take(3).map(|c| format!("{}/{}/{}", c.task, c.level, c.model)).collect();
        return Err(StatsError::FixtureShapeMismatch(format!("cells present in only one table: {}", missing.join(", "))));
    }
    let mut cells = Vec::new();
    for (cell, by_behavior) in &counts.counts {
        if by_behavior.len() != UnreliableBehavior::ALL.len() {
            return Err(StatsError::FixtureShapeMismatch(format!(
                "{}/{}/{} lacks some behavior rows",
                cell.task, cell.level, cell.model
            )));
        }
        let failures: u64 = by_behavior.values().sum();
        if failures > PUBLISHED_TRIALS {
            return Err(StatsError::FixtureShapeMismatch(format!(
                "{}/{}/{} has {failures} failures out of {PUBLISHED_TRIALS}",
                cell.task, cell.level, cell.model
            )));
        }
        let published = rates.rates[cell];
        let computed_h = ((PUBLISHED_TRIALS - failures) * 100 / PUBLISHED_TRIALS) as i64;
        let published_h = (published * 100.0).round() as i64;
        let delta_h = computed_h - published_h;
        cells.push(CellDelta {
            cell: cell.clone(),
            failures,
            computed: computed_h as f64 / 100.0,
            published,
            delta: delta_h as f64 / 100.0,
            flagged: delta_h.abs() > 1,
        });
    }
    let within_tolerance = cells.iter().filter(|d| !d.flagged).count();
    let mut notes = Vec::new();
    if within_tolerance < cells.len() {
        notes.push(
            "Flagged cells point at the transcribed tables, not at this code: either a count or a rate was \
             misread, or the source omitted some trials (for instance refusals counted as successes) from the \
             failure columns. They are reported as found."
                .to_string(),
        );
    }
    Ok(ReconciliationReport { cells, within_tolerance, tolerance: TOLERANCE, notes })
}
