//! Ingestion of per-problem, per-checkpoint evaluation outcomes.
//!
//! Input is JSONL, one record per line:
//! `{"checkpoint": str, "step": int, "benchmark": str, "problem": str,
//!   "mode": "greedy"|"sampled", "outcomes": [bool, ...]}`
//!
//! Correctness judgment (running code, checking answers) happens upstream;
//! this module only organizes boolean outcomes into matrices.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Greedy,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    #[serde(rename = "checkpoint")]
    pub checkpoint_id: String,
    pub step: u64,
    pub benchmark: String,
    #[serde(rename = "problem")]
    pub problem_id: String,
    pub mode: Mode,
    pub outcomes: Vec<bool>,
}

/// Immutable, key-sorted set of records. Two ingestions of the same lines in
/// any order produce equal datasets.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EvalDataset {
    records: Vec<OutcomeRecord>,
}

impl EvalDataset {
    pub fn records(&self) -> &[OutcomeRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn benchmarks(&self) -> Vec<String> {
        let mut names: Vec<String> = self.records.iter().map(|r| r.benchmark.clone()).collect();
        names.sort();
        names.dedup();
        names
    }

    /// Distinct checkpoints holding records for `benchmark`, ordered by step
    /// then id.
    pub fn checkpoints_for_benchmark(&self, benchmark: &str) -> Vec<(String, u64)> {
        let mut seen = BTreeMap::new();
        for r in self.records.iter().filter(|r| r.benchmark == benchmark) {
            seen.entry(r.checkpoint_id.clone()).or_insert(r.step);
        }
        let mut out: Vec<(String, u64)> = seen.into_iter().collect();
        out.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        out
    }
}

fn validate_record(record: &OutcomeRecord, line: usize) -> Result<()> {
    if record.outcomes.is_empty() {
        return Err(Error::MalformedLine {
            line,
            message: "outcomes must be non-empty".into(),
        });
    }
    if record.mode == Mode::Greedy && record.outcomes.len() != 1 {
        return Err(Error::GreedyArityViolation {
            line,
            arity: record.outcomes.len(),
        });
    }
    Ok(())
}

pub fn ingest_jsonl(path: impl AsRef<Path>) -> Result<EvalDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ingest_str(&text)
}

pub fn ingest_str(text: &str) -> Result<EvalDataset> {
    let mut by_key: BTreeMap<(String, String, String), OutcomeRecord> = BTreeMap::new();
    let mut step_of: BTreeMap<String, (u64, usize)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: OutcomeRecord = serde_json::from_str(raw).map_err(|e| Error::MalformedLine {
            line,
            message: e.to_string(),
        })?;
        validate_record(&record, line)?;
        match step_of.get(&record.checkpoint_id) {
            Some(&(step, first_line)) if step != record.step => {
                return Err(Error::MalformedLine {
                    line,
                    message: format!(
                        "checkpoint {:?} has step {} here but step {} on line {}",
                        record.checkpoint_id, record.step, step, first_line
                    ),
                });
            }
            Some(_) => {}
            None => {
                step_of.insert(record.checkpoint_id.clone(), (record.step, line));
            }
        }
        let key = (
            record.checkpoint_id.clone(),
            record.benchmark.clone(),
            record.problem_id.clone(),
        );
        if by_key.contains_key(&key) {
            return Err(Error::DuplicateRecord {
                line,
                checkpoint: key.0,
                benchmark: key.1,
                problem: key.2,
            });
        }
        by_key.insert(key, record);
    }
    Ok(EvalDataset {
        records: by_key.into_values().collect(),
    })
}

/// Writes records as JSONL with a fixed key order, one record per line.
pub fn to_jsonl(records: &[OutcomeRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serialization"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl(path: impl AsRef<Path>, records: &[OutcomeRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(to_jsonl(records).as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Per-problem success counts for one (checkpoint, benchmark) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemOutcome {
    pub problem_id: String,
    /// Successful samples (S).
    pub successes: u64,
    /// Total samples (n).
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeMatrix {
    pub checkpoint_id: String,
    pub benchmark: String,
    /// Sorted by problem id.
    pub problems: Vec<ProblemOutcome>,
}

impl OutcomeMatrix {
    /// CSV export with header `problem,S,n`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("problem,S,n\n");
        for p in &self.problems {
            out.push_str(&format!("{},{},{}\n", p.problem_id, p.successes, p.samples));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroupWarning {
    /// Sample counts differ across problems; per-problem estimation still
    /// works wherever n >= k.
    RaggedSampleCounts { min: u64, max: u64 },
}

impl fmt::Display for GroupWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupWarning::RaggedSampleCounts { min, max } => write!(
                f,
                "ragged sample counts across problems (n ranges from {min} to {max})"
            ),
        }
    }
}

/// Projects the dataset onto one (checkpoint, benchmark) pair.
pub fn group(
    dataset: &EvalDataset,
    checkpoint_id: &str,
    benchmark: &str,
) -> Result<(OutcomeMatrix, Vec<GroupWarning>)> {
    let problems: Vec<ProblemOutcome> = dataset
        .records
        .iter()
        .filter(|r| r.checkpoint_id == checkpoint_id && r.benchmark == benchmark)
        .map(|r| ProblemOutcome {
            problem_id: r.problem_id.clone(),
            successes: r.outcomes.iter().filter(|&&v| v).count() as u64,
            samples: r.outcomes.len() as u64,
        })
        .collect();
    if problems.is_empty() {
        return Err(Error::NoMatchingRecords {
            checkpoint: checkpoint_id.to_string(),
            benchmark: benchmark.to_string(),
        });
    }
    let min = problems.iter().map(|p| p.samples).min().unwrap();
    let max = problems.iter().map(|p| p.samples).max().unwrap();
    let warnings = if min != max {
        vec![GroupWarning::RaggedSampleCounts { min, max }]
    } else {
        Vec::new()
    };
    Ok((
        OutcomeMatrix {
            checkpoint_id: checkpoint_id.to_string(),
            benchmark: benchmark.to_string(),
            problems,
        },
        warnings,
    ))
}
