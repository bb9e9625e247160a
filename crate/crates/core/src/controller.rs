//! LLM meta-controller: state summarization, prompt rendering, answer parsing
//! and the oracle fallback wrapper.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::curriculum::{
    compute_trend, oracle_decide, ActionId, ActionSpace, ControllerState, Decision, DecisionSource, Phase, StateReport,
    Zone,
};
use crate::error::{Error, Result};

/// Rules given to the controller model as the system message and repeated in every prompt.
pub const PROTOCOL_TEXT: &str = "\
Three-phase decision protocol. Actions are integer indices shown as letters; a higher letter is a harder difficulty interval.
L_neg is the mean total contrastive loss over the review window. The effective learning window for loss is [0.3, 1.2].

Phase EXPLORATION (choose the next interval to probe):
  1. High-loss anomaly: if L_neg > 1.2, move down 2 actions: next = max(current - 2, A).
  2. Low-loss anomaly: if L_neg < 0.05 in this review and in the previous review, move up 3 actions: next = min(current + 3, last action).
  3. Default progression: otherwise choose the lowest action above the current one that is not among the last 3 reviewed actions. If none exists, choose the lowest action overall that is not among them.

Phase TRANSITION (choose the anchor for lock-in):
  1. Collect every history entry (including the window just reviewed) whose avg_loss lies in [0.3, 1.2].
  2. Choose the entry with the largest action letter as the anchor.
  3. If no entry qualifies, report a calibration failure and keep the current action.

Phase LOCK-IN (adjust around the anchor, at most one step):
  L_start and L_end are the mean loss over the first and last 20% of the window's steps.
  1. Upgrade by 1 if L_end < 0.3, or if (L_start - L_end) / L_start >= 0.5.
  2. Otherwise downgrade by 1 if (L_end - L_start) / L_start >= 0.3.
  3. Otherwise maintain the current action.
  Never move outside the first and last action.";

/// Connection settings for a chat-completion endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmEndpointConfig {
    pub url: String,
    pub model_name: String,
    /// Name of the environment variable that holds the API key.
    pub api_key_env_var: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
}

impl Default for LlmEndpointConfig {
    fn default() -> Self {
        Self {
            url: String::new(),
            model_name: String::new(),
            api_key_env_var: "EVO_LLM_API_KEY".into(),
            timeout_secs: 60.0,
            max_retries: 2,
        }
    }
}

impl LlmEndpointConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_secs > 0.0) {
            return Err(Error::Usage("endpoint timeout must be > 0".into()));
        }
        Ok(())
    }
}

/// Builds the report for the window that just closed.
pub fn summarize_state(state: &ControllerState, window_losses: &[f64], space: &ActionSpace) -> Result<StateReport> {
    if window_losses.is_empty() {
        return Err(Error::Usage("cannot summarize an empty review window".into()));
    }
    let mean = window_losses.iter().sum::<f64>() / window_losses.len() as f64;
    let (l_start, l_end) = compute_trend(window_losses)?;
    let iv = space.interval(state.current_action);
    let window_steps = window_losses.len() as u64;
    Ok(StateReport {
        phase: state.decision_phase(window_steps),
        current_action: state.current_action,
        current_interval: (iv.low, iv.high),
        hard_negative_loss_mean: mean,
        l_start,
        l_end,
        recent_actions: state.recent_actions(),
        window_steps,
    })
}

/// Formats an interval bound with at least two decimals (`0.7` -> `0.70`, `0.985` stays).
pub fn format_bound(x: f64) -> String {
    let s = format!("{x}");
    match s.split_once('.') {
        Some((_, frac)) if frac.len() >= 2 => s,
        Some((int, frac)) => format!("{int}.{frac:0<2}"),
        None => format!("{s}.00"),
    }
}

fn zone_label(z: Zone) -> &'static str {
    match z {
        Zone::LowSignal => "low-signal",
        Zone::EffectiveLearning => "effective-learning",
        Zone::HighRisk => "high-risk",
    }
}

/// Renders the user message for one controller review.
pub fn render_prompt(
    report: &StateReport,
    state: &ControllerState,
    space: &ActionSpace,
    protocol_text: &str,
) -> String {
    let mut p = String::new();
    let last = space.max_action().letter();
    let _ = writeln!(
        p,
        "You are the curriculum meta-controller for a retriever training run."
    );
    let _ = writeln!(p, "Follow the decision protocol below exactly.\n");
    let _ = writeln!(p, "{protocol_text}\n");
    let _ = writeln!(p, "Action table:");
    for iv in space.intervals() {
        let _ = writeln!(
            p,
            "- Action {}: [{}, {}] ({})",
            iv.action,
            format_bound(iv.low),
            format_bound(iv.high),
            zone_label(iv.zone)
        );
    }
    let _ = writeln!(p, "\nTraining state:");
    let _ = writeln!(p, "Current phase: {}", report.phase);
    let _ = writeln!(
        p,
        "Current interval: [{}, {}]",
        format_bound(report.current_interval.0),
        format_bound(report.current_interval.1)
    );
    let _ = writeln!(p, "Current action: {}", report.current_action);
    let _ = writeln!(p, "Last {} actions:", report.recent_actions.len());
    for r in &report.recent_actions {
        let _ = writeln!(p, "  Step {}: {}", r.step, r.action);
    }
    let _ = writeln!(p, "Metrics:");
    let _ = writeln!(p, "- hard_negative_loss_mean = {}", report.hard_negative_loss_mean);
    let _ = writeln!(p, "- L_start = {}", report.l_start);
    let _ = writeln!(p, "- L_end = {}", report.l_end);
    let _ = writeln!(p, "- window_steps = {}", report.window_steps);
    let _ = writeln!(
        p,
        "- previous consecutive reviews with L_neg < 0.05 = {}",
        state.consecutive_low_loss_reviews
    );
    let _ = writeln!(p, "History (step: action, avg_loss):");
    if state.history.is_empty() {
        let _ = writeln!(p, "  (none)");
    }
    for h in &state.history {
        let _ = writeln!(p, "  Step {}: {}, avg_loss = {}", h.step, h.action, h.avg_loss);
    }
    let _ = writeln!(
        p,
        "\nReason step by step inside <thinking></thinking>, then give exactly one final answer as <answer>X</answer> where X is a single letter from A to {last}."
    );
    p
}

/// Extracts the action letter from the last `<answer>...</answer>` tag.
pub fn parse_decision(response: &str, space: &ActionSpace) -> Result<ActionId> {
    let re = Regex::new(r"(?s)<answer>(.*?)</answer>").expect("static regex");
    let inner = re
        .captures_iter(response)
        .last()
        .map(|c| c[1].trim().to_string())
        .ok_or_else(|| Error::Format("no <answer> tag in controller response".into()))?;
    match ActionId::from_letter(&inner) {
        Some(a) if a.0 < space.len() => Ok(a),
        _ => Err(Error::Format(format!(
            "answer {inner:?} is not an action letter A..{}",
            space.max_action().letter()
        ))),
    }
}

/// Assistant reply from a chat backend.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    pub text: String,
    pub total_tokens: Option<u64>,
}

/// Something that answers a (system, user) chat exchange.
pub trait ChatBackend {
    fn complete(&mut self, system: &str, user: &str) -> Result<ChatReply>;
}

/// Chat-completion endpoint over HTTP.
pub struct HttpChatBackend {
    config: LlmEndpointConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl HttpChatBackend {
    /// Reads the API key from the configured environment variable (if set).
    pub fn new(config: LlmEndpointConfig) -> Result<Self> {
        config.validate()?;
        if config.url.is_empty() {
            return Err(Error::Usage("llm endpoint url is empty".into()));
        }
        let api_key = std::env::var(&config.api_key_env_var).ok();
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, agent, api_key })
    }

    pub fn config(&self) -> &LlmEndpointConfig {
        &self.config
    }
}

/// JSON body of a chat-completion request.
pub fn chat_request_body(model: &str, system: &str, user: &str) -> serde_json::Value {
    json!({
        "model": model,
        "messages": [
            {"role": "system", "content": system},
            {"role": "user", "content": user},
        ],
        "temperature": 0,
    })
}

/// Pulls the assistant text and token usage out of a chat-completion response.
pub fn parse_chat_response(body: &serde_json::Value) -> Result<ChatReply> {
    let text = body
        .pointer("/choices/0/message/content")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::Format("response has no choices[0].message.content".into()))?;
    Ok(ChatReply {
        text: text.to_string(),
        total_tokens: body.pointer("/usage/total_tokens").and_then(|v| v.as_u64()),
    })
}

impl ChatBackend for HttpChatBackend {
    fn complete(&mut self, system: &str, user: &str) -> Result<ChatReply> {
        let body = chat_request_body(&self.config.model_name, system, user);
        let mut req = self.agent.post(&self.config.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| Error::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Error::Transport(format!("endpoint returned HTTP {status}")));
        }
        let value: serde_json::Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| Error::Transport(e.to_string()))?;
        parse_chat_response(&value)
    }
}

/// Canned responses consumed in order; errors once exhausted.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    responses: std::collections::VecDeque<String>,
}

impl ScriptedBackend {
    pub fn new(responses: impl IntoIterator<Item = String>) -> Self {
        Self {
            responses: responses.into_iter().collect(),
        }
    }

    /// Loads a script file: responses separated by lines containing only `---`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::new(parse_script(&text)))
    }

    pub fn remaining(&self) -> usize {
        self.responses.len()
    }
}

/// Splits a mock-controller script into responses on `---` separator lines.
pub fn parse_script(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for line in text.lines() {
        if line.trim() == "---" {
            out.push(std::mem::take(&mut cur));
        } else {
            cur.push_str(line);
            cur.push('\n');
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur);
    }
    out.into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

impl ChatBackend for ScriptedBackend {
    fn complete(&mut self, _system: &str, _user: &str) -> Result<ChatReply> {
        self.responses
            .pop_front()
            .map(|text| ChatReply {
                text,
                total_tokens: None,
            })
            .ok_or_else(|| Error::Transport("mock controller script exhausted".into()))
    }
}

/// Outcome of one controller call, including any failures along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerOutcome {
    pub decision: Decision,
    pub attempts: u32,
    pub failures: Vec<String>,
    pub total_tokens: Option<u64>,
}

/// Asks the backend (if any) for a decision, retrying up to `max_retries`
/// times on transport or parse failure, then falls back to [`oracle_decide`].
pub fn decide_with_fallback(
    state: &ControllerState,
    report: &StateReport,
    space: &ActionSpace,
    backend: Option<&mut dyn ChatBackend>,
    max_retries: u32,
) -> ControllerOutcome {
    let Some(backend) = backend else {
        return ControllerOutcome {
            decision: oracle_decide(state, report, space),
            attempts: 0,
            failures: Vec::new(),
            total_tokens: None,
        };
    };
    let prompt = render_prompt(report, state, space, PROTOCOL_TEXT);
    let mut failures = Vec::new();
    let mut tokens = None;
    for attempt in 1..=max_retries + 1 {
        let result = backend.complete(PROTOCOL_TEXT, &prompt).and_then(|reply| {
            if let Some(t) = reply.total_tokens {
                *tokens.get_or_insert(0) += t;
            }
            parse_decision(&reply.text, space).map(|a| (a, reply.text))
        });
        match result {
            Ok((action, text)) => {
                // Transition is the only phase that can declare a calibration failure;
                // an LLM answer equal to the current action there is read the same way.
                let calibration_failure = report.phase == Phase::Transition
                    && oracle_decide(state, report, space).calibration_failure
                    && action == report.current_action;
                return ControllerOutcome {
                    decision: Decision {
                        next_action: action,
                        source: DecisionSource::Llm,
                        rationale: text,
                        calibration_failure,
                    },
                    attempts: attempt,
                    failures,
                    total_tokens: tokens,
                };
            }
            Err(e) => failures.push(e.to_string()),
        }
    }
    let mut decision = oracle_decide(state, report, space);
    decision.rationale = format!(
        "oracle fallback after {} failed attempts; {}",
        max_retries + 1,
        decision.rationale
    );
    ControllerOutcome {
        decision,
        attempts: max_retries + 1,
        failures,
        total_tokens: tokens,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curriculum::{default_action_space, HistoryEntry, PhaseConfig};

    fn deliberation_state() -> ControllerState {
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
            HistoryEntry {
                step: 34,
                action: ActionId(1),
                avg_loss: 0.3983,
            },
        ];
        state
    }

    #[test]
    fn summarize_examples() {
        let space = default_action_space();
        let state = ControllerState::new(PhaseConfig::default());
        let r = summarize_state(&state, &[0.4; 4], &space).unwrap();
        assert_eq!(r.hard_negative_loss_mean, 0.4);
        assert_eq!((r.l_start, r.l_end), (0.4, 0.4));

        let r = summarize_state(&deliberation_state(), &[0.3983], &space).unwrap();
        assert_eq!(r.hard_negative_loss_mean, 0.3983);
        let letters: Vec<char> = r.recent_actions.iter().map(|a| a.action.letter()).collect();
        assert_eq!(letters, ['B', 'D', 'F']);
        assert_eq!(r.phase, Phase::Exploration);
        assert!(matches!(summarize_state(&state, &[], &space), Err(Error::Usage(_))));
    }

    #[test]
    fn prompt_contents() {
        let space = default_action_space();
        let state = deliberation_state();
        let r = summarize_state(&state, &[0.3983], &space).unwrap();
        let p = render_prompt(&r, &state, &space, PROTOCOL_TEXT);
        assert_eq!(p, render_prompt(&r, &state, &space, PROTOCOL_TEXT));
        assert!(p.contains("hard_negative_loss_mean = 0.3983"));
        assert!(p.contains("Current phase: EXPLORATION"));
        assert!(p.contains("Current interval: [0.70, 0.90]"));
        assert!(p.contains("  Step 34: B\n  Step 32: D\n  Step 30: F\n"));
        assert_eq!(p.lines().filter(|l| l.starts_with("- Action ")).count(), 16);
        assert!(p.contains("- Action M: [0.90, 0.985] (high-risk)"));
    }

    #[test]
    fn bound_formatting() {
        assert_eq!(format_bound(0.7), "0.70");
        assert_eq!(format_bound(0.985), "0.985");
        assert_eq!(format_bound(1.0), "1.00");
    }

    #[test]
    fn parse_examples() {
        let space = default_action_space();
        assert_eq!(
            parse_decision("<thinking>x</thinking>\n<answer>C</answer>.", &space).unwrap(),
            ActionId(2)
        );
        assert_eq!(parse_decision("<answer> p </answer>", &space).unwrap(), ActionId(15));
        assert_eq!(
            parse_decision("<answer>A</answer> then <answer>D</answer>", &space).unwrap(),
            ActionId(3)
        );
        assert!(matches!(parse_decision("no tags here", &space), Err(Error::Format(_))));
        assert!(matches!(
            parse_decision("<answer>Q</answer>", &space),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            parse_decision("<answer>CC</answer>", &space),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn fallback_paths() {
        let space = default_action_space();
        let state = deliberation_state();
        let r = summarize_state(&state, &[0.3983], &space).unwrap();

        let out = decide_with_fallback(&state, &r, &space, None, 2);
        assert_eq!(out.decision.source, DecisionSource::Oracle);
        assert_eq!(out.decision.next_action, ActionId(2));

        let mut mock = ScriptedBackend::new(["<answer>C</answer>".to_string()]);
        let out = decide_with_fallback(&state, &r, &space, Some(&mut mock), 2);
        assert_eq!(out.decision.source, DecisionSource::Llm);
        assert_eq!(out.decision.next_action, ActionId(2));

        let mut mock = ScriptedBackend::new(["garbage".to_string(), "more garbage".to_string()]);
        let out = decide_with_fallback(&state, &r, &space, Some(&mut mock), 2);
        assert_eq!(out.decision.source, DecisionSource::Oracle);
        assert_eq!(out.decision.next_action, ActionId(2));
        assert_eq!(out.failures.len(), 3);
    }

    #[test]
    fn script_parsing() {
        let s = parse_script("<answer>A</answer>\n---\nthinking\n<answer>B</answer>\n---\n");
        assert_eq!(s, ["<answer>A</answer>", "thinking\n<answer>B</answer>"]);
    }

    #[test]
    fn chat_wire_format() {
        let body = chat_request_body("m", "sys", "usr");
        assert_eq!(body["temperature"], 0);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "usr");
        let reply = parse_chat_response(&serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": "<answer>C</answer>"}}],
            "usage": {"total_tokens": 321}
        }))
        .unwrap();
        assert_eq!(reply.text, "<answer>C</answer>");
        assert_eq!(reply.total_tokens, Some(321));
        assert!(parse_chat_response(&serde_json::json!({})).is_err());
    }
}
