//! Difficulty action space and the three-phase curriculum controller.
//!
//! The controller cycles through three phases:
//!
//! 1. **Exploration**: short review windows that probe untested intervals,
//!    backing off after very high loss and jumping ahead after repeated
//!    near-zero loss.
//! 2. **Transition**: a single decision picking the hardest explored action
//!    whose loss stayed inside the effective learning window `[0.3, 1.2]`.
//! 3. **Lock-in**: long review windows that move at most one step,
//!    driven by the loss trend within the window.
//!
//! [`oracle_decide`] is the deterministic rule implementation; the LLM path in
//! [`crate::controller`] is checked against it.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const EFFECTIVE_LOSS_LOW: f64 = 0.3;
pub const EFFECTIVE_LOSS_HIGH: f64 = 1.2;
pub const LOW_LOSS_ANOMALY: f64 = 0.05;
pub const HIGH_LOSS_BACKOFF: usize = 2;
pub const LOW_LOSS_JUMP: usize = 3;
pub const MASTERY_LOSS: f64 = 0.3;
pub const PROGRESS_REDUCTION: f64 = 0.5;
pub const REGRESSION_INCREASE: f64 = 0.3;
pub const TREND_WINDOW_FRACTION: f64 = 0.2;
pub const RECENT_WINDOW: usize = 3;

/// Index into an [`ActionSpace`], displayed as a letter (`A` = 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(pub usize);

impl ActionId {
    pub fn letter(self) -> char {
        debug_assert!(self.0 < 26);
        (b'A' + self.0 as u8) as char
    }

    /// Parses a single letter, case-insensitively.
    pub fn from_letter(s: &str) -> Option<ActionId> {
        let mut chars = s.chars();
        let c = chars.next()?;
        if chars.next().is_some() || !c.is_ascii_alphabetic() {
            return None;
        }
        Some(ActionId((c.to_ascii_uppercase() as u8 - b'A') as usize))
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl Serialize for ActionId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.letter().to_string())
    }
}

impl<'de> Deserialize<'de> for ActionId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ActionId::from_letter(&s).ok_or_else(|| serde::de::Error::custom(format!("invalid action letter {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zone {
    LowSignal,
    EffectiveLearning,
    HighRisk,
}

/// Closed range of difficulty ratios `[low, high]` a negative may be drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyInterval {
    pub action: ActionId,
    pub low: f64,
    pub high: f64,
    pub zone: Zone,
}

impl DifficultyInterval {
    pub fn contains(&self, ratio: f64) -> bool {
        self.low <= ratio && ratio <= self.high
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpace {
    intervals: Vec<DifficultyInterval>,
}

/// The 16-action table: (low, high, zone), A through P.
const DEFAULT_TABLE: [(f64, f64, Zone); 16] = [
    (0.70, 0.85, Zone::LowSignal),
    (0.70, 0.90, Zone::LowSignal),
    (0.70, 0.92, Zone::LowSignal),
    (0.75, 0.90, Zone::LowSignal),
    (0.75, 0.92, Zone::EffectiveLearning),
    (0.75, 0.94, Zone::EffectiveLearning),
    (0.80, 0.92, Zone::EffectiveLearning),
    (0.80, 0.94, Zone::EffectiveLearning),
    (0.80, 0.95, Zone::EffectiveLearning),
    (0.85, 0.96, Zone::EffectiveLearning),
    (0.85, 0.97, Zone::EffectiveLearning),
    (0.85, 0.98, Zone::EffectiveLearning),
    (0.90, 0.985, Zone::HighRisk),
    (0.92, 0.985, Zone::HighRisk),
    (0.95, 0.99, Zone::HighRisk),
    (0.95, 0.995, Zone::HighRisk),
];

/// The default 16-interval action space.
pub fn default_action_space() -> ActionSpace {
    ActionSpace {
        intervals: DEFAULT_TABLE
            .iter()
            .enumerate()
            .map(|(i, &(low, high, zone))| DifficultyInterval {
                action: ActionId(i),
                low,
                high,
                zone,
            })
            .collect(),
    }
}

/// Zone for a custom interval, judged by its midpoint against the
/// low-signal `[.., 0.85)`, effective `[0.85, 0.98)` and high-risk `[0.98, ..]` bands.
pub fn zone_for_bounds(low: f64, high: f64) -> Zone {
    let mid = 0.5 * (low + high);
    if mid < 0.85 {
        Zone::LowSignal
    } else if mid < 0.98 {
        Zone::EffectiveLearning
    } else {
        Zone::HighRisk
    }
}

impl ActionSpace {
    /// Builds a custom table from `(low, high, zone)` rows in action order.
    pub fn new(rows: Vec<(f64, f64, Zone)>) -> Result<Self> {
        if rows.is_empty() || rows.len() > 26 {
            return Err(Error::Usage(format!(
                "action space needs 1..=26 intervals, got {}",
                rows.len()
            )));
        }
        let intervals = rows
            .into_iter()
            .enumerate()
            .map(|(i, (low, high, zone))| {
                if !(0.0 <= low && low < high && high <= 1.0) {
                    return Err(Error::Usage(format!(
                        "interval {} = [{low}, {high}] must satisfy 0 <= low < high <= 1",
                        ActionId(i)
                    )));
                }
                Ok(DifficultyInterval {
                    action: ActionId(i),
                    low,
                    high,
                    zone,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { intervals })
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn max_action(&self) -> ActionId {
        ActionId(self.intervals.len() - 1)
    }

    pub fn get(&self, a: ActionId) -> Option<&DifficultyInterval> {
        self.intervals.get(a.0)
    }

    /// Interval for `a`, clamped into the table.
    pub fn interval(&self, a: ActionId) -> &DifficultyInterval {
        &self.intervals[a.0.min(self.intervals.len() - 1)]
    }

    pub fn intervals(&self) -> &[DifficultyInterval] {
        &self.intervals
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Exploration,
    Transition,
    LockIn,
}

impl Phase {
    pub fn label(self) -> &'static str {
        match self {
            Phase::Exploration => "EXPLORATION",
            Phase::Transition => "TRANSITION",
            Phase::LockIn => "LOCK-IN",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Phase lengths and review cadences, in training steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseConfig {
    pub exploration_steps: u64,
    pub exploration_review_every: u64,
    pub transition_steps: u64,
    pub lockin_review_every: u64,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self {
            exploration_steps: 60,
            exploration_review_every: 2,
            transition_steps: 200,
            lockin_review_every: 200,
        }
    }
}

impl PhaseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.exploration_review_every == 0
            || self.exploration_steps < self.exploration_review_every
            || self.transition_steps == 0
            || self.lockin_review_every == 0
        {
            return Err(Error::Usage(format!(
                "phase lengths must be positive with exploration_steps >= exploration_review_every: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    /// Step at which the action was adopted.
    pub step: u64,
    pub action: ActionId,
    /// Mean total loss observed while the action was active.
    pub avg_loss: f64,
}

/// Mutable curriculum state, owned by the training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub phase: Phase,
    pub current_action: ActionId,
    pub history: Vec<HistoryEntry>,
    /// Step at which the current action was adopted (start of the open window).
    pub step: u64,
    /// Reviews immediately preceding the open window whose loss was below the low-loss threshold.
    pub consecutive_low_loss_reviews: u32,
    pub phase_config: PhaseConfig,
}

impl ControllerState {
    /// Exploration starts from the easiest action.
    pub fn new(phase_config: PhaseConfig) -> Self {
        Self {
            phase: Phase::Exploration,
            current_action: ActionId(0),
            history: Vec::new(),
            step: 0,
            consecutive_low_loss_reviews: 0,
            phase_config,
        }
    }

    /// Number of training steps the open window should span before review.
    pub fn window_len(&self) -> u64 {
        let pc = &self.phase_config;
        match self.phase {
            Phase::Exploration => pc
                .exploration_review_every
                .min(pc.exploration_steps.saturating_sub(self.step))
                .max(1),
            Phase::Transition => pc.transition_steps,
            Phase::LockIn => pc.lockin_review_every,
        }
    }

    /// Phase whose rules govern the decision closing a window of `window_steps`.
    pub fn decision_phase(&self, window_steps: u64) -> Phase {
        match self.phase {
            Phase::Exploration if self.step + window_steps >= self.phase_config.exploration_steps => Phase::Transition,
            Phase::Exploration => Phase::Exploration,
            Phase::Transition | Phase::LockIn => Phase::LockIn,
        }
    }

    /// Last `RECENT_WINDOW` actions, newest first, counting the open window.
    pub fn recent_actions(&self) -> Vec<HistoryEntryRef> {
        let already_recorded = self
            .history
            .last()
            .is_some_and(|h| h.step == self.step && h.action == self.current_action);
        let mut out = Vec::with_capacity(RECENT_WINDOW);
        if !already_recorded {
            out.push(HistoryEntryRef {
                step: self.step,
                action: self.current_action,
            });
        }
        out.extend(self.history.iter().rev().map(|h| HistoryEntryRef {
            step: h.step,
            action: h.action,
        }));
        out.truncate(RECENT_WINDOW);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntryRef {
    pub step: u64,
    pub action: ActionId,
}

/// Structured summary of one review window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateReport {
    /// Phase whose rules apply to this review.
    pub phase: Phase,
    pub current_action: ActionId,
    pub current_interval: (f64, f64),
    /// Mean total loss over the window.
    pub hard_negative_loss_mean: f64,
    pub l_start: f64,
    pub l_end: f64,
    /// Newest first.
    pub recent_actions: Vec<HistoryEntryRef>,
    pub window_steps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionSource {
    Oracle,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub next_action: ActionId,
    pub source: DecisionSource,
    pub rationale: String,
    pub calibration_failure: bool,
}

/// Means of the first and last `ceil(0.2 n)` values.
pub fn compute_trend(losses: &[f64]) -> Result<(f64, f64)> {
    if losses.is_empty() {
        return Err(Error::Usage("trend needs at least one loss value".into()));
    }
    let n = losses.len();
    let w = ((TREND_WINDOW_FRACTION * n as f64).ceil() as usize).clamp(1, n);
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    Ok((mean(&losses[..w]), mean(&losses[n - w..])))
}

/// Rule-based controller decision. Total over all inputs; the result is
/// always inside the action space.
pub fn oracle_decide(state: &ControllerState, report: &StateReport, space: &ActionSpace) -> Decision {
    let max = space.max_action().0;
    let current = report.current_action.0.min(max);
    let loss = report.hard_negative_loss_mean;
    let (next, rationale, calibration_failure) = match report.phase {
        Phase::Exploration => {
            if loss > EFFECTIVE_LOSS_HIGH {
                let next = current.saturating_sub(HIGH_LOSS_BACKOFF);
                (
                    next,
                    format!("high-loss anomaly: {loss} > {EFFECTIVE_LOSS_HIGH}, back off by {HIGH_LOSS_BACKOFF}"),
                    false,
                )
            } else if loss < LOW_LOSS_ANOMALY && state.consecutive_low_loss_reviews >= 1 {
                let next = (current + LOW_LOSS_JUMP).min(max);
                (next, format!("low-loss anomaly: two consecutive reviews below {LOW_LOSS_ANOMALY}, advance by {LOW_LOSS_JUMP}"), false)
            } else {
                let recent: Vec<usize> = report.recent_actions.iter().map(|r| r.action.0).collect();
                let unused = |a: &usize| !recent.contains(a);
                match ((current + 1)..=max).find(unused) {
                    Some(a) => (
                        a,
                        "default progression: lowest higher action unused in the last three reviews".to_string(),
                        false,
                    ),
                    None => match (0..=max).find(unused) {
                        Some(a) => (
                            a,
                            "default progression exhausted: wrap to lowest action unused in the last three reviews"
                                .to_string(),
                            false,
                        ),
                        None => (current, "no unused action available: maintain".to_string(), false),
                    },
                }
            }
        }
        Phase::Transition => {
            let window = (report.current_action, report.hard_negative_loss_mean);
            let recorded = state
                .history
                .last()
                .is_some_and(|h| h.step == state.step && h.action == report.current_action);
            let candidates = state
                .history
                .iter()
                .map(|h| (h.action, h.avg_loss))
                .chain((!recorded).then_some(window));
            let anchor = candidates
                .filter(|(_, l)| (EFFECTIVE_LOSS_LOW..=EFFECTIVE_LOSS_HIGH).contains(l))
                .map(|(a, _)| a.0.min(max))
                .max();
            match anchor {
                Some(a) => (
                    a,
                    format!(
                        "anchor: hardest explored action with loss in [{EFFECTIVE_LOSS_LOW}, {EFFECTIVE_LOSS_HIGH}]"
                    ),
                    false,
                ),
                None => (
                    current,
                    "calibration failure: no explored action produced loss in the effective window".to_string(),
                    true,
                ),
            }
        }
        Phase::LockIn => {
            let (l_start, l_end) = (report.l_start, report.l_end);
            let (reduction, increase) = if l_start > 0.0 {
                ((l_start - l_end) / l_start, (l_end - l_start) / l_start)
            } else {
                (0.0, 0.0)
            };
            if l_end < MASTERY_LOSS || reduction >= PROGRESS_REDUCTION {
                (
                    (current + 1).min(max),
                    format!("upgrade: l_end={l_end}, relative reduction={reduction}"),
                    false,
                )
            } else if increase >= REGRESSION_INCREASE {
                (
                    current.saturating_sub(1),
                    format!("downgrade: relative increase={increase}"),
                    false,
                )
            } else {
                (current, "maintain".to_string(), false)
            }
        }
    };
    Decision {
        next_action: ActionId(next),
        source: DecisionSource::Oracle,
        rationale,
        calibration_failure,
    }
}

/// Records the closed window, applies `decision` and moves phase bookkeeping forward.
pub fn advance(state: &ControllerState, decision: &Decision, report: &StateReport) -> ControllerState {
    let mut next = state.clone();
    next.history.push(HistoryEntry {
        step: state.step,
        action: state.current_action,
        avg_loss: report.hard_negative_loss_mean,
    });
    next.consecutive_low_loss_reviews = if report.hard_negative_loss_mean < LOW_LOSS_ANOMALY {
        state.consecutive_low_loss_reviews.saturating_add(1)
    } else {
        0
    };
    next.step = state.step + report.window_steps;
    next.current_action = decision.next_action;
    next.phase = state.decision_phase(report.window_steps);
    next
}

/// Action for a linear schedule from the easiest to the hardest interval.
pub fn linear_action(step: u64, total_steps: u64, space: &ActionSpace) -> ActionId {
    if total_steps == 0 {
        return ActionId(0);
    }
    let m = space.len() as u64;
    ActionId(((step * m) / total_steps).min(m - 1) as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(phase: Phase, current: usize, loss: f64, recent: &[(u64, usize)]) -> StateReport {
        let space = default_action_space();
        let iv = space.interval(ActionId(current));
        StateReport {
            phase,
            current_action: ActionId(current),
            current_interval: (iv.low, iv.high),
            hard_negative_loss_mean: loss,
            l_start: loss,
            l_end: loss,
            recent_actions: recent
                .iter()
                .map(|&(step, a)| HistoryEntryRef {
                    step,
                    action: ActionId(a),
                })
                .collect(),
            window_steps: 2,
        }
    }

    #[test]
    fn table_rows() {
        let s = default_action_space();
        assert_eq!(s.len(), 16);
        let a = s.interval(ActionId(0));
        assert_eq!((a.low, a.high), (0.70, 0.85));
        let p = s.interval(ActionId(15));
        assert_eq!((p.low, p.high), (0.95, 0.995));
        assert_eq!(s.interval(ActionId(9)).zone, Zone::EffectiveLearning);
    }

    #[test]
    fn letters_roundtrip() {
        assert_eq!(ActionId(2).letter(), 'C');
        assert_eq!(ActionId::from_letter("p"), Some(ActionId(15)));
        assert_eq!(ActionId::from_letter("AB"), None);
        assert_eq!(serde_json::to_string(&ActionId(3)).unwrap(), "\"D\"");
    }

    #[test]
    fn trend_examples() {
        assert_eq!(compute_trend(&[0.5; 10]).unwrap(), (0.5, 0.5));
        let (s, e) = compute_trend(&[1.0, 1.0, 0.8, 0.6, 0.4, 0.4, 0.4, 0.4, 0.2, 0.2]).unwrap();
        assert_eq!((s, e), (1.0, 0.2));
        assert_eq!(compute_trend(&[0.7]).unwrap(), (0.7, 0.7));
        assert!(matches!(compute_trend(&[]), Err(Error::Usage(_))));
    }

    #[test]
    fn deliberation_state_picks_c() {
        let space = default_action_space();
        let mut state = ControllerState::new(PhaseConfig::default());
        state.current_action = ActionId(1);
        state.step = 34;
        state.history = vec![
            HistoryEntry {
                step: 30,
                action: ActionId(5),
                avg_loss: 1.5,
            },
            HistoryEntry {
                step: 32,
                action: ActionId(3),
                avg_loss: 1.3,
            },
        ];
        let r = report(Phase::Exploration, 1, 0.3983, &[(34, 1), (32, 3), (30, 5)]);
        assert_eq!(oracle_decide(&state, &r, &space).next_action, ActionId(2));
    }

    #[test]
    fn exploration_high_loss_backs_off() {
        let space = default_action_space();
        let state = ControllerState::new(PhaseConfig::default());
        let r = report(Phase::Exploration, 5, 1.5, &[(10, 5)]);
        assert_eq!(oracle_decide(&state, &r, &space).next_action, ActionId(3));
        let r = report(Phase::Exploration, 1, 1.5, &[(10, 1)]);
        assert_eq!(oracle_decide(&state, &r, &space).next_action, ActionId(0));
    }

    #[test]
    fn exploration_low_loss_needs_two_reviews() {
        let space = default_action_space();
        let mut state = ControllerState::new(PhaseConfig::default());
        let r = report(Phase::Exploration, 4, 0.01, &[(10, 4)]);
        assert_eq!(oracle_decide(&state, &r, &space).next_action, ActionId(5));
        state.consecutive_low_loss_reviews = 1;
        assert_eq!(oracle_decide(&state, &r, &space).next_action, ActionId(7));
        let r = report(Phase::Exploration, 14, 0.01, &[(10, 14)]);
        assert_eq!(oracle_decide(&state, &r, &space).next_action, ActionId(15));
    }

    #[test]
    fn exploration_wraps_when_exhausted() {
        let space = default_action_space();
        let state = ControllerState::new(PhaseConfig::default());
        let r = report(Phase::Exploration, 15, 0.5, &[(10, 15), (8, 14), (6, 0)]);
        assert_eq!(oracle_decide(&state, &r, &space).next_action, ActionId(1));
    }

    #[test]
    fn transition_anchor_and_failure() {
        let space = default_action_space();
        let mut state = ControllerState::new(PhaseConfig::default());
        state.step = 58;
        state.history = vec![
            HistoryEntry {
                step: 50,
                action: ActionId(0),
                avg_loss: 0.1,
            },
            HistoryEntry {
                step: 52,
                action: ActionId(4),
                avg_loss: 0.5,
            },
            HistoryEntry {
                step: 54,
                action: ActionId(7),
                avg_loss: 0.9,
            },
            HistoryEntry {
                step: 56,
                action: ActionId(11),
                avg_loss: 1.4,
            },
        ];
        state.current_action = ActionId(11);
        let r = report(Phase::Transition, 11, 1.4, &[]);
        let d = oracle_decide(&state, &r, &space);
        assert_eq!(d.next_action, ActionId(7));
        assert!(!d.calibration_failure);

        state.history.iter_mut().for_each(|h| h.avg_loss = 2.0);
        let d = oracle_decide(&state, &r, &space);
        assert!(d.calibration_failure);
        assert_eq!(d.next_action, ActionId(11));
    }

    #[test]
    fn lockin_rules() {
        let space = default_action_space();
        let state = ControllerState::new(PhaseConfig::default());
        let mut r = report(Phase::LockIn, 8, 0.7, &[]);
        let with = |r: &mut StateReport, s: f64, e: f64| {
            r.l_start = s;
            r.l_end = e;
        };
        with(&mut r, 1.0, 0.4);
        assert_eq!(oracle_decide(&state, &r, &space).next_action, ActionId(9));
        with(&mut r, 0.5, 0.7);
        assert_eq!(oracle_decide(&state, &r, &space).next_action, ActionId(7));
        with(&mut r, 0.5, 0.29);
        assert_eq!(oracle_decide(&state, &r, &space).next_action, ActionId(9));
        with(&mut r, 0.6, 0.62);
        assert_eq!(oracle_decide(&state, &r, &space).next_action, ActionId(8));
        with(&mut r, 0.0, 0.0);
        assert_eq!(oracle_decide(&state, &r, &space).next_action, ActionId(9));
        with(&mut r, 0.0, 0.5);
        assert_eq!(oracle_decide(&state, &r, &space).next_action, ActionId(8));
    }

    #[test]
    fn advance_bookkeeping() {
        let mut state = ControllerState::new(PhaseConfig::default());
        state.step = 58;
        let r = report(Phase::Transition, 0, 0.5, &[]);
        let d = Decision {
            next_action: ActionId(4),
            source: DecisionSource::Oracle,
            rationale: String::new(),
            calibration_failure: false,
        };
        let next = advance(&state, &d, &r);
        assert_eq!(next.phase, Phase::Transition);
        assert_eq!(next.step, 60);
        assert_eq!(next.history.len(), state.history.len() + 1);
        assert_eq!(next.current_action, ActionId(4));
        assert_eq!(next.window_len(), 200);
    }

    #[test]
    fn recent_actions_include_open_window() {
        let mut state = ControllerState::new(PhaseConfig::default());
        state.step = 34;
        state.current_action = ActionId(1);
        state.history = vec![
            HistoryEntry {
                step: 30,
                action: ActionId(5),
                avg_loss: 1.5,
            },
            HistoryEntry {
                step: 32,
                action: ActionId(3),
                avg_loss: 1.3,
            },
        ];
        let letters: Vec<char> = state.recent_actions().iter().map(|r| r.action.letter()).collect();
        assert_eq!(letters, ['B', 'D', 'F']);
    }

    #[test]
    fn linear_schedule_spans_space() {
        let space = default_action_space();
        assert_eq!(linear_action(0, 160, &space), ActionId(0));
        assert_eq!(linear_action(159, 160, &space), ActionId(15));
        assert_eq!(linear_action(500, 160, &space), ActionId(15));
    }
}
