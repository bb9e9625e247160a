//! Trajectory log: one JSON object per line, tagged by `type`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curriculum::{ActionId, ControllerState, Decision, Phase, StateReport};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::losses::LossBreakdown;

/// Negatives and augmentation seed used for one training pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub query_id: String,
    pub neg_docs: Vec<String>,
    /// Indices into the query's synthesized negative queries.
    pub neg_queries: Vec<usize>,
    pub aug_seed: u64,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TrajectoryRecord {
    Meta {
        seed: u64,
        mode: String,
        steps: u64,
        train_queries: usize,
        heldout_queries: usize,
        /// Training queries dropped because their positive scored <= 0 after warm-up.
        skipped_queries: usize,
        pool_size: usize,
    },
    Warmup {
        batches: usize,
        loss_start: f64,
        loss_end: f64,
    },
    Step {
        step: u64,
        phase: Option<Phase>,
        action: Option<ActionId>,
        interval: (f64, f64),
        loss: LossBreakdown,
        fallback_pairs: usize,
        pairs: Vec<PairRecord>,
    },
    Decision {
        /// First step trained under the new action.
        step: u64,
        from: ActionId,
        to: ActionId,
        decision: Decision,
        attempts: u32,
        failures: Vec<String>,
        state: ControllerState,
        report: StateReport,
    },
    Eval {
        step: u64,
        label: String,
        ndcg_at_5: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub records: Vec<TrajectoryRecord>,
}

impl TrajectoryLog {
    pub fn push(&mut self, r: TrajectoryRecord) {
        self.records.push(r);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        jsonl::write(path, &self.records)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(Self {
            records: jsonl::read(path)?,
        })
    }

    pub fn steps(&self) -> impl Iterator<Item = &TrajectoryRecord> {
        self.records
            .iter()
            .filter(|r| matches!(r, TrajectoryRecord::Step { .. }))
    }

    pub fn decisions(&self) -> impl Iterator<Item = &TrajectoryRecord> {
        self.records
            .iter()
            .filter(|r| matches!(r, TrajectoryRecord::Decision { .. }))
    }

    /// `(step, label, ndcg)` for every eval record.
    pub fn evals(&self) -> Vec<(u64, &str, f64)> {
        self.records
            .iter()
            .filter_map(|r| match r {
                TrajectoryRecord::Eval { step, label, ndcg_at_5 } => Some((*step, label.as_str(), *ndcg_at_5)),
                _ => None,
            })
            .collect()
    }

    pub fn eval(&self, label: &str) -> Option<f64> {
        self.evals().into_iter().rev().find(|e| e.1 == label).map(|e| e.2)
    }

    /// Actions of the step records in order; `None` where no action applied.
    pub fn actions(&self) -> Vec<Option<ActionId>> {
        self.steps()
            .map(|r| match r {
                TrajectoryRecord::Step { action, .. } => *action,
                _ => unreachable!(),
            })
            .collect()
    }

    /// Step records must be numbered 0, 1, 2, ...
    pub fn check_contiguous(&self) -> Result<()> {
        for (i, r) in self.steps().enumerate() {
            if let TrajectoryRecord::Step { step, .. } = r {
                if *step != i as u64 {
                    return Err(Error::Data(format!("step record {i} is numbered {step}")));
                }
            }
        }
        Ok(())
    }
}
