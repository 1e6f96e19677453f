//! Markdown, CSV and JSON renderings of aggregated statistics.
//!
//! CSV layout (UTF-8, LF line endings, fixed column order):
//!
//! ```text
//! task,level,model,trials,successes,special_successes,aborted,Nonsense,Disorder,Infeasible,Badpose,success_rate
//! ```
//!
//! `success_rate` is rounded to two decimals and ignored when reading back;
//! the counts are authoritative. When a paired summary is supplied it
//! follows after one blank line with its own header.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CellStats, PairedSummary, StatsError};
use crate::campaign::Cell;
use crate::model::{GranularityLevel, UnreliableBehavior};

pub const CSV_HEADER: &str =
    "task,level,model,trials,successes,special_successes,aborted,Nonsense,Disorder,Infeasible,Badpose,success_rate";

const PAIRED_HEADER: &str = "task,pairs,base_rate,treated_rate,delta,improved,worsened,p_better,p_worse";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Md,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "md" | "markdown" => Ok(Self::Md),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(format!("unknown report format `{s}` (expected md, csv or json)")),
        }
    }
}

fn rate(s: &CellStats) -> String {
    s.success_rate().map(|r| format!("{r:.2}")).unwrap_or_else(|_| "-".into())
}

pub fn emit_report(stats: &[CellStats], paired: Option<&PairedSummary>, format: ReportFormat) -> Result<String, StatsError> {
    if stats.is_empty() {
        return Err(StatsError::Malformed("no cells to report".into()));
    }
    Ok(match format {
        ReportFormat::Md => markdown(stats, paired),
        ReportFormat::Csv => csv_doc(stats, paired),
        ReportFormat::Json => {
            let doc = serde_json::json!({ "cells": stats, "paired": paired });
            serde_json::to_string_pretty(&doc).expect("stats serialize") + "\n"
        }
    })
}

fn markdown(stats: &[CellStats], paired: Option<&PairedSummary>) -> String {
    let models: Vec<&str> = stats.iter().map(|s| s.cell.model.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    let mut grid: BTreeMap<(&str, GranularityLevel), BTreeMap<&str, &CellStats>> = BTreeMap::new();
    for s in stats {
        grid.entry((&s.cell.task, s.cell.level)).or_default().insert(&s.cell.model, s);
    }
    let mut out = String::from("## Success rates\n\n| task | level |");
    for m in &models {
        let _ = write!(out, " {m} |");
    }
    out.push_str("\n|---|---|");
    out.push_str(&"---|".repeat(models.len()));
    out.push('\n');
    for ((task, level), row) in &grid {
        let _ = write!(out, "| {task} | {level} |");
        for m in &models {
            let _ = write!(out, " {} |", row.get(m).map_or("-".to_string(), |s| rate(s)));
        }
        out.push('\n');
    }

    out.push_str("\n## Unreliable behaviors\n\n");
    out.push_str("| task | level | model | trials | successes | special | Nonsense | Disorder | Infeasible | Badpose | aborted |\n");
    out.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
    for s in stats {
        let _ = write!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            s.cell.task, s.cell.level, s.cell.model, s.trials, s.successes, s.special_successes
        );
        for b in UnreliableBehavior::ALL {
            let _ = write!(out, " {} |", s.behavior_counts.get(&b).copied().unwrap_or(0));
        }
        let _ = writeln!(out, " {} |", s.aborted);
    }

    if let Some(p) = paired {
        out.push_str("\n## Without vs with feedback\n\n");
        out.push_str("| task | pairs | without | with | delta | improved | worsened | p (better) | p (worse) |\n");
        out.push_str("|---|---|---|---|---|---|---|---|---|\n");
        for t in &p.tasks {
            let _ = writeln!(
                out,
                "| {} | {} | {:.2} | {:.2} | {:+.2} | {} | {} | {:.3} | {:.3} |",
                t.task, t.pairs, t.base_rate, t.treated_rate, t.delta, t.improved, t.worsened, t.p_better, t.p_worse
            );
        }
        if p.unmatched > 0 {
            let _ = writeln!(out, "\n{} trials had no scored partner and were left out.", p.unmatched);
        }
    }
    out
}

fn csv_doc(stats: &[CellStats], paired: Option<&PairedSummary>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(',')).expect("in-memory write");
    for s in stats {
        let mut row = vec![
            s.cell.task.clone(),
            s.cell.level.to_string(),
            s.cell.model.clone(),
            s.trials.to_string(),
            s.successes.to_string(),
            s.special_successes.to_string(),
            s.aborted.to_string(),
        ];
        row.extend(UnreliableBehavior::ALL.iter().map(|b| s.behavior_counts.get(b).copied().unwrap_or(0).to_string()));
        row.push(rate(s));
        w.write_record(&row).expect("in-memory write");
    }
    let mut out = String::from_utf8(w.into_inner().expect("flush")).expect("utf-8");
    if let Some(p) = paired {
        out.push('\n');
        out.push_str(PAIRED_HEADER);
        out.push('\n');
        for t in &p.tasks {
            let _ = writeln!(
                out,
                "{},{},{:.4},{:.4},{:.4},{},{},{:.6},{:.6}",
                t.task, t.pairs, t.base_rate, t.treated_rate, t.delta, t.improved, t.worsened, t.p_better, t.p_worse
            );
        }
    }
    out
}

/// Reads the cell table of a CSV report back.
pub fn parse_csv(text: &str) -> Result<Vec<CellStats>, StatsError> {
    let bad = |m: String| StatsError::Malformed(m);
    let cells_part = text.split("\n\n").next().unwrap_or_default();
    let mut rdr = csv::Reader::from_reader(cells_part.as_bytes());
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?;
    if headers.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(bad("unexpected CSV header".into()));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| row[i].parse::<u64>().map_err(|_| bad(format!("bad count `{}`", &row[i])));
        let level: GranularityLevel = row[1].parse().map_err(|_| bad(format!("bad level `{}`", &row[1])))?;
        let behavior_counts = UnreliableBehavior::ALL
            .iter()
            .enumerate()
            .map(|(k, b)| Ok((*b, num(7 + k)?)))
            .collect::<Result<_, StatsError>>()?;
        let s = CellStats {
            cell: Cell { task: row[0].to_string(), level, model: row[2].to_string() },
            trials: num(3)?,
            successes: num(4)?,
            special_successes: num(5)?,
            aborted: num(6)?,
            behavior_counts,
        };
        if s.successes + s.failures() != s.trials {
            return Err(bad(format!("{}/{}/{}: counts do not add up", s.cell.task, s.cell.level, s.cell.model)));
        }
        out.push(s);
    }
    Ok(out)
}
