//! Re-runs the rule-based controller over a logged trajectory.

use std::path::Path;

use serde::Serialize;

use crate::curriculum::{oracle_decide, ActionId, ActionSpace, DecisionSource};
use crate::error::Result;
use crate::sim::log::{TrajectoryLog, TrajectoryRecord};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayEntry {
    pub step: u64,
    pub source: DecisionSource,
    pub logged: ActionId,
    pub oracle: ActionId,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReplayReport {
    pub decisions: usize,
    /// Every replayed decision in log order.
    pub entries: Vec<ReplayEntry>,
    /// Oracle-sourced decisions the oracle no longer reproduces.
    pub divergences: Vec<ReplayEntry>,
    /// LLM-sourced decisions that depart from the protocol; informational.
    pub flagged: Vec<ReplayEntry>,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.divergences.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "decisions: {}\ndivergences: {}\nflagged llm decisions: {}\n",
            self.decisions,
            self.divergences.len(),
            self.flagged.len()
        );
        for (kind, list) in [("DIVERGENCE", &self.divergences), ("FLAGGED", &self.flagged)] {
            for e in list {
                out.push_str(&format!(
                    "{kind} step {}: logged {} oracle {}\n",
                    e.step, e.logged, e.oracle
                ));
            }
        }
        out
    }
}

pub fn replay_log(log: &TrajectoryLog, space: &ActionSpace) -> ReplayReport {
    let mut report = ReplayReport::default();
    for r in log.decisions() {
        let TrajectoryRecord::Decision {
            step,
            to,
            decision,
            state,
            report: sr,
            ..
        } = r
        else {
            continue;
        };
        report.decisions += 1;
        let oracle = oracle_decide(state, sr, space).next_action;
        let entry = ReplayEntry {
            step: *step,
            source: decision.source,
            logged: *to,
            oracle,
        };
        report.entries.push(entry.clone());
        if oracle == *to {
            continue;
        }
        match decision.source {
            DecisionSource::Oracle => report.divergences.push(entry),
            DecisionSource::Llm => report.flagged.push(entry),
        }
    }
    report
}

/// Reads a trajectory (or decision-only) log and replays every decision.
pub fn replay_decisions(path: &Path, space: &ActionSpace) -> Result<ReplayReport> {
    Ok(replay_log(&TrajectoryLog::read(path)?, space))
}
