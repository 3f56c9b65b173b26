//! Sliding-window checkpoint merging: the element-wise average of the N most
//! recent checkpoints ending at an anchor step.
//!
//! Accumulation is always in f64, summed oldest-first, then divided by the
//! member count, so results are deterministic across runs and platforms.
//! Tensors merge independently (and in parallel); accumulation within one
//! tensor is never split.

use std::path::PathBuf;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor_store::{
    build_archive, validate_compat, ArchiveMeta, Dtype, TensorArchive, TensorInit,
};

/// A checkpoint on disk, ordered by training step (or token count).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointRef {
    pub path: PathBuf,
    pub step: u64,
}

impl CheckpointRef {
    pub fn new(path: impl Into<PathBuf>, step: u64) -> Self {
        CheckpointRef {
            path: path.into(),
            step,
        }
    }
}

/// Behavior when fewer than N checkpoints exist at or before the anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowMode {
    #[default]
    Strict,
    /// Use all M < N available members; provenance records M.
    Partial,
}

/// The consecutive most-recent checkpoints ending at `anchor_step`,
/// in chronological order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeWindow {
    members: Vec<CheckpointRef>,
    anchor_step: u64,
}

impl MergeWindow {
    pub fn members(&self) -> &[CheckpointRef] {
        &self.members
    }

    pub fn anchor_step(&self) -> u64 {
        self.anchor_step
    }

    pub fn member_steps(&self) -> Vec<u64> {
        self.members.iter().map(|m| m.step).collect()
    }
}

/// Member steps and window size actually used for a merged model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub window: usize,
    pub member_steps: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergedModel {
    pub archive: TensorArchive,
    pub provenance: Provenance,
}

fn check_series(series: &[CheckpointRef]) -> Result<()> {
    for pair in series.windows(2) {
        if pair[1].step <= pair[0].step {
            return Err(Error::Domain(format!(
                "checkpoint steps must be strictly increasing, got {} then {}",
                pair[0].step, pair[1].step
            )));
        }
    }
    Ok(())
}

/// Selects the window of the `n` most recent checkpoints ending at
/// `anchor_step`.
pub fn plan_window(
    series: &[CheckpointRef],
    anchor_step: u64,
    n: usize,
    mode: WindowMode,
) -> Result<MergeWindow> {
    if n == 0 {
        return Err(Error::Domain("window size must be at least 1".into()));
    }
    check_series(series)?;
    let idx = series
        .iter()
        .position(|c| c.step == anchor_step)
        .ok_or(Error::AnchorNotFound { step: anchor_step })?;
    let available = idx + 1;
    let take = if available >= n {
        n
    } else {
        match mode {
            WindowMode::Strict => {
                return Err(Error::InsufficientHistory {
                    requested: n,
                    available,
                    anchor: anchor_step,
                })
            }
            WindowMode::Partial => available,
        }
    };
    Ok(MergeWindow {
        members: series[available - take..available].to_vec(),
        anchor_step,
    })
}

/// Merges already-opened archives (chronological order, one step per member).
pub fn merge_archives(archives: &[&TensorArchive], member_steps: &[u64]) -> Result<MergedModel> {
    if archives.is_empty() {
        return Err(Error::Domain("merge requires at least one archive".into()));
    }
    if archives.len() != member_steps.len() {
        return Err(Error::Domain(format!(
            "{} archives but {} member steps",
            archives.len(),
            member_steps.len()
        )));
    }
    let report = validate_compat(archives)?;
    if !report.is_ok() {
        return Err(Error::IncompatibleArchives {
            report: report.to_string(),
        });
    }

    let count = archives.len();
    let tensors: Vec<TensorInit> = archives[0]
        .tensors()
        .par_iter()
        .map(|meta| {
            let mut acc = archives[0].read_tensor(&meta.name)?;
            for archive in &archives[1..] {
                let values = archive.read_tensor(&meta.name)?;
                for (slot, v) in acc.iter_mut().zip(values) {
                    *slot += v;
                }
            }
            let divisor = count as f64;
            for slot in acc.iter_mut() {
                *slot /= divisor;
            }
            let out_dtype = match meta.dtype {
                Dtype::F64 => Dtype::F64,
                Dtype::F32 | Dtype::Bf16 => Dtype::F32,
            };
            Ok(TensorInit::new(
                meta.name.clone(),
                out_dtype,
                meta.shape.clone(),
                acc,
            ))
        })
        .collect::<Result<_>>()?;

    let anchor = *member_steps.last().expect("non-empty");
    let mut meta = ArchiveMeta {
        step: Some(anchor),
        tokens: archives[count - 1].meta().tokens,
        ..Default::default()
    };
    meta.extra.insert(
        "merge_window".into(),
        serde_json::Value::from(count as u64),
    );
    meta.extra.insert(
        "merge_member_steps".into(),
        serde_json::Value::from(member_steps.to_vec()),
    );

    Ok(MergedModel {
        archive: build_archive(&tensors, meta)?,
        provenance: Provenance {
            window: count,
            member_steps: member_steps.to_vec(),
        },
    })
}

/// Opens the window's members and merges them.
pub fn merge(window: &MergeWindow) -> Result<MergedModel> {
    let archives: Vec<TensorArchive> = window
        .members
        .iter()
        .map(|m| TensorArchive::open(&m.path))
        .collect::<Result<_>>()?;
    let refs: Vec<&TensorArchive> = archives.iter().collect();
    merge_archives(&refs, &window.member_steps())
}

/// Independent merge per anchor step. Each window's sum is recomputed from
/// scratch, so results do not depend on the sequence of eval steps.
pub fn rolling_merge(
    series: &[CheckpointRef],
    n: usize,
    eval_steps: &[u64],
    mode: WindowMode,
) -> Result<Vec<MergedModel>> {
    eval_steps
        .iter()
        .map(|&anchor| merge(&plan_window(series, anchor, n, mode)?))
        .collect()
}
