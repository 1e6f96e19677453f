//! Trial grids over tasks, instruction levels and backends.

mod trial;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendConfig};
use crate::check::CheckError;
use crate::config::{Fixtures, FileConfig};
use crate::model::GranularityLevel;
use crate::seed::derive_seed;

pub use trial::{
    evaluate, run_trial, spawn_for, AttemptRecord, Cell, Evaluation, FeedbackPolicy, TrialRecord, TrialResult,
    SCHEMA_VERSION,
};

#[derive(Debug, Error, PartialEq)]
pub enum CampaignError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("simulator error: {0}")]
    Sim(String),
    #[error("checker error: {0}")]
    Check(#[from] CheckError),
    #[error("record I/O failed: {0}")]
    Io(String),
    #[error("malformed record on line {line}: {message}")]
    Record { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub tasks: Vec<String>,
    pub levels: Vec<GranularityLevel>,
    pub backends: Vec<BackendConfig>,
    pub trials_per_cell: u32,
    pub feedback_enabled: bool,
    pub max_feedback_rounds: u32,
    pub base_seed: u64,
    pub concurrency: usize,
}

impl CampaignConfig {
    /// All tasks, all levels, 50 trials per cell, one round of feedback.
    pub fn new(tasks: Vec<String>, backends: Vec<BackendConfig>) -> Self {
        Self {
            tasks,
            levels: GranularityLevel::ALL.to_vec(),
            backends,
            trials_per_cell: 50,
            feedback_enabled: true,
            max_feedback_rounds: 1,
            base_seed: 0,
            concurrency: 1,
        }
    }

    /// Resolves the `[campaign]` section against the file's backends.
    pub fn from_file(file: &FileConfig, fx: &Fixtures) -> Result<Self, CampaignError> {
        let c = &file.campaign;
        let names: Vec<String> = match &c.backends {
            Some(n) => n.clone(),
            None => file.backend.keys().cloned().collect(),
        };
        let backends = names
            .iter()
            .map(|n| {
                file.backend
                    .get(n)
                    .cloned()
                    .ok_or_else(|| CampaignError::Config(format!("campaign names undefined backend `{n}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let tasks = c.tasks.clone().unwrap_or_else(|| fx.tasks.names().map(String::from).collect());
        let mut cfg = Self::new(tasks, backends);
        if let Some(l) = &c.levels {
            cfg.levels = l.clone();
        }
        cfg.trials_per_cell = c.trials_per_cell.unwrap_or(cfg.trials_per_cell);
        cfg.feedback_enabled = c.feedback_enabled.unwrap_or(cfg.feedback_enabled);
        cfg.max_feedback_rounds = c.max_feedback_rounds.unwrap_or(cfg.max_feedback_rounds);
        cfg.base_seed = c.base_seed.unwrap_or(cfg.base_seed);
        cfg.concurrency = c.concurrency.unwrap_or(cfg.concurrency);
        cfg.validate(fx)?;
        Ok(cfg)
    }

    pub fn validate(&self, fx: &Fixtures) -> Result<(), CampaignError> {
        let bad = |m: String| Err(CampaignError::Config(m));
        if self.trials_per_cell == 0 {
            return bad("trials_per_cell must be at least 1".into());
        }
        if self.concurrency == 0 {
            return bad("concurrency must be at least 1".into());
        }
        if self.tasks.is_empty() || self.levels.is_empty() || self.backends.is_empty() {
            return bad("tasks, levels and backends must be non-empty".into());
        }
        if let Some(t) = self.tasks.iter().find(|t| !fx.tasks.contains(t)) {
            return bad(format!("unknown task `{t}`"));
        }
        let mut seen = BTreeSet::new();
        for b in &self.backends {
            b.validate().map_err(|e| CampaignError::Config(e.to_string()))?;
            if !seen.insert(&b.model_name) {
                return bad(format!("model name `{}` appears twice", b.model_name));
            }
        }
        Ok(())
    }

    pub fn feedback(&self) -> FeedbackPolicy {
        FeedbackPolicy { enabled: self.feedback_enabled, max_rounds: self.max_feedback_rounds }
    }

    /// Grid cells in run order: backend, then task, then level.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for b in &self.backends {
            for t in &self.tasks {
                for l in &self.levels {
                    out.push(Cell { task: t.clone(), level: *l, model: b.model_name.clone() });
                }
            }
        }
        out
    }
}

/// Seed shared by every cell of a model at one trial index, so that cells
/// of the same model are compared on common random numbers.
pub fn trial_seed(base_seed: u64, model: &str, trial_index: u32) -> u64 {
    derive_seed(&[b"trial", &base_seed.to_le_bytes(), model.as_bytes(), &trial_index.to_le_bytes()])
}

/// Number of distinct (task, instruction text, model) combinations. Levels
/// whose surface text repeats an earlier level of the same task count once.
pub fn distinct_instruction_cells(fx: &Fixtures, tasks: &[String], levels: &[GranularityLevel], models: usize) -> usize {
    let ws = fx.sim.workspace;
    let per_model: usize = tasks
        .iter()
        .filter_map(|t| fx.tasks.get(t).ok())
        .map(|spec| {
            levels
                .iter()
                .filter_map(|l| fx.templates.render(spec, *l, &ws).ok())
                .map(|ins| ins.text)
                .collect::<BTreeSet<_>>()
                .len()
        })
        .sum();
    per_model * models
}

/// Runs every cell's trials and writes one JSON line per record to `sink`
/// in grid order, flushing as records become available. Returns the
/// records.
pub fn run_campaign(
    cfg: &CampaignConfig,
    fx: &Fixtures,
    sink: &mut dyn Write,
) -> Result<Vec<TrialRecord>, CampaignError> {
    cfg.validate(fx)?;
    let backends: Vec<Arc<dyn Backend>> = cfg
        .backends
        .iter()
        .map(|b| b.build().map_err(|e| CampaignError::Config(e.to_string())))
        .collect::<Result<_, _>>()?;
    run_campaign_with(cfg, fx, &backends, sink)
}

/// As [`run_campaign`], with prebuilt backends in the order of
/// `cfg.backends`.
pub fn run_campaign_with(
    cfg: &CampaignConfig,
    fx: &Fixtures,
    backends: &[Arc<dyn Backend>],
    sink: &mut dyn Write,
) -> Result<Vec<TrialRecord>, CampaignError> {
    if backends.len() != cfg.backends.len() {
        return Err(CampaignError::Config("backend count does not match the configuration".into()));
    }
    let per_model = cfg.tasks.len() * cfg.levels.len() * cfg.trials_per_cell as usize;
    let total = per_model * backends.len();
    let job = |i: usize| {
        let b = i / per_model;
        let rest = i % per_model;
        let per_task = cfg.levels.len() * cfg.trials_per_cell as usize;
        let task = &cfg.tasks[rest / per_task];
        let level = cfg.levels[(rest % per_task) / cfg.trials_per_cell as usize];
        let trial_index = (rest % cfg.trials_per_cell as usize) as u32;
        let backend = backends[b].as_ref();
        let seed = trial_seed(cfg.base_seed, backend.model_name(), trial_index);
        run_trial(fx, task, level, backend, trial_index, seed, cfg.feedback())
    };

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Result<TrialRecord, CampaignError>)>();
    let workers = cfg.concurrency.min(total.max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            let job = &job;
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= total {
                    break;
                }
                let r = job(i);
                let failed = r.is_err();
                if tx.send((i, r)).is_err() || failed {
                    next.store(total, Ordering::Relaxed);
                    break;
                }
            });
        }
        drop(tx);

        // Reorder buffer: emit records in job order.
        let mut pending: BTreeMap<usize, TrialRecord> = BTreeMap::new();
        let mut out = Vec::with_capacity(total);
        let mut first_error = None;
        for (i, r) in rx {
            match r {
                Ok(rec) => {
                    pending.insert(i, rec);
                }
                Err(e) => {
                    first_error.get_or_insert(e);
                    next.store(total, Ordering::Relaxed);
                }
            }
            while let Some(rec) = pending.remove(&out.len()) {
                if first_error.is_none() {
                    if let Err(e) = write_record(sink, &rec) {
                        first_error = Some(e);
                        next.store(total, Ordering::Relaxed);
                    }
                }
                out.push(rec);
            }
        }
        match first_error {
            Some(e) => Err(e),
            None => Ok(out),
        }
    })
}

pub fn write_record(sink: &mut dyn Write, rec: &TrialRecord) -> Result<(), CampaignError> {
    let line = serde_json::to_string(rec).map_err(|e| CampaignError::Io(e.to_string()))?;
    writeln!(sink, "{line}").and_then(|_| sink.flush()).map_err(|e| CampaignError::Io(e.to_string()))
}

/// Reads a JSON-lines record file. Blank lines are skipped.
pub fn read_records(input: impl BufRead) -> Result<Vec<TrialRecord>, CampaignError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| CampaignError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrialRecord = serde_json::from_str(&line)
            .map_err(|e| CampaignError::Record { line: i + 1, message: e.to_string() })?;
        if rec.schema_version != SCHEMA_VERSION {
            return Err(CampaignError::Record {
                line: i + 1,
                message: format!("schema version {} is not {SCHEMA_VERSION}", rec.schema_version),
            });
        }
        out.push(rec);
    }
    Ok(out)
}
