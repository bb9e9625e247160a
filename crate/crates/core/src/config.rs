//! TOML run configuration shared by every CLI subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::LlmEndpointConfig;
use crate::curriculum::{default_action_space, zone_for_bounds, ActionSpace, PhaseConfig};
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::sim::data::DataConfig;
use crate::sim::train::{ControllerMode, TrainConfig, TrainingSetup};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumSection {
    #[serde(rename = "M")]
    pub m: usize,
    pub exploration_steps: u64,
    pub exploration_review_every: u64,
    pub transition_steps: u64,
    pub lockin_review_every: u64,
    /// `[[low, high], ...]`, one row per action; replaces the default table.
    pub intervals: Option<Vec<[f64; 2]>>,
}

impl Default for CurriculumSection {
    fn default() -> Self {
        let p = PhaseConfig::default();
        Self {
            m: 16,
            exploration_steps: p.exploration_steps,
            exploration_review_every: p.exploration_review_every,
            transition_steps: p.transition_steps,
            lockin_review_every: p.lockin_review_every,
            intervals: None,
        }
    }
}

impl CurriculumSection {
    pub fn phase_config(&self) -> PhaseConfig {
        PhaseConfig {
            exploration_steps: self.exploration_steps,
            exploration_review_every: self.exploration_review_every,
            transition_steps: self.transition_steps,
            lockin_review_every: self.lockin_review_every,
        }
    }

    /// The default table for M = 16, an explicit table when given, otherwise
    /// M equal-width intervals sliding over [0.70, 0.995].
    pub fn action_space(&self) -> Result<ActionSpace> {
        if let Some(rows) = &self.intervals {
            if rows.len() != self.m {
                return Err(Error::Usage(format!(
                    "curriculum.intervals has {} rows but M = {}",
                    rows.len(),
                    self.m
                )));
            }
            return ActionSpace::new(
                rows.iter()
                    .map(|[lo, hi]| (*lo, *hi, zone_for_bounds(*lo, *hi)))
                    .collect(),
            );
        }
        if self.m == 16 {
            return Ok(default_action_space());
        }
        if self.m == 0 {
            return Err(Error::Usage("M must be >= 1".into()));
        }
        let (lo, hi) = (0.70, 0.995);
        let width = 0.15;
        let rows = (0..self.m)
            .map(|i| {
                let t = if self.m == 1 {
                    0.0
                } else {
                    i as f64 / (self.m - 1) as f64
                };
                let a = lo + t * (hi - width - lo);
                (a, a + width, zone_for_bounds(a, a + width))
            })
            .collect();
        ActionSpace::new(rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSection {
    pub mode: ControllerMode,
    pub url: String,
    pub model_name: String,
    pub api_key_env_var: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub fixed_low: f64,
    pub fixed_high: f64,
    /// Scripted responses for `mode = "mock"`.
    pub mock_script: Option<PathBuf>,
}

impl Default for ControllerSection {
    fn default() -> Self {
        let e = LlmEndpointConfig::default();
        Self {
            mode: ControllerMode::Oracle,
            url: e.url,
            model_name: e.model_name,
            api_key_env_var: e.api_key_env_var,
            timeout_secs: e.timeout_secs,
            max_retries: e.max_retries,
            fixed_low: 0.80,
            fixed_high: 0.98,
            mock_script: None,
        }
    }
}

impl ControllerSection {
    pub fn endpoint(&self) -> LlmEndpointConfig {
        LlmEndpointConfig {
            url: self.url.clone(),
            model_name: self.model_name.clone(),
            api_key_env_var: self.api_key_env_var.clone(),
            timeout_secs: self.timeout_secs,
            max_retries: self.max_retries,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub dataset: PathBuf,
    pub pools: PathBuf,
    pub checkpoint: PathBuf,
    pub trajectory: PathBuf,
    pub generation: DataConfig,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            dataset: "run/dataset.json".into(),
            pools: "run/pools.jsonl".into(),
            checkpoint: "run/encoder.ckpt".into(),
            trajectory: "run/trajectory.jsonl".into(),
            generation: DataConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub loss: LossConfig,
    pub curriculum: CurriculumSection,
    pub controller: ControllerSection,
    pub data: DataSection,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.setup()?.validate()?;
        self.controller.endpoint().validate()?;
        self.data.generation.validate()
    }

    pub fn setup(&self) -> Result<TrainingSetup> {
        Ok(TrainingSetup {
            loss: self.loss,
            train: self.train.clone(),
            phases: self.curriculum.phase_config(),
            space: self.curriculum.action_space()?,
            mode: self.controller.mode,
            fixed_interval: (self.controller.fixed_low, self.controller.fixed_high),
            max_retries: self.controller.max_retries,
        })
    }
}

/// `(key, default, description)` for every configuration key.
pub const CONFIG_KEYS: &[(&str, &str, &str)] = &[
    ("loss.tau", "0.02", "margin loss temperature"),
    ("loss.alpha", "1.0", "weight of the document-to-query loss"),
    ("loss.beta", "1.0", "weight of the augmented view"),
    ("loss.K", "2", "negatives per pair (documents and queries)"),
    ("curriculum.M", "16", "number of difficulty actions"),
    ("curriculum.exploration_steps", "60", "length of the exploration phase"),
    ("curriculum.exploration_review_every", "2", "exploration review cadence"),
    ("curriculum.transition_steps", "200", "length of the transition phase"),
    ("curriculum.lockin_review_every", "200", "lock-in review cadence"),
    (
        "curriculum.intervals",
        "unset",
        "[[low, high], ...] override of the interval table",
    ),
    (
        "controller.mode",
        "oracle",
        "oracle | llm | mock | fixed-window | linear",
    ),
    ("controller.url", "\"\"", "chat-completion endpoint URL"),
    ("controller.model_name", "\"\"", "model name sent to the endpoint"),
    (
        "controller.api_key_env_var",
        "EVO_LLM_API_KEY",
        "environment variable holding the API key",
    ),
    ("controller.timeout_secs", "60.0", "per-request timeout"),
    (
        "controller.max_retries",
        "2",
        "retries before falling back to the oracle",
    ),
    ("controller.fixed_low", "0.8", "lower bound for fixed-window mode"),
    ("controller.fixed_high", "0.98", "upper bound for fixed-window mode"),
    ("controller.mock_script", "unset", "scripted responses for mock mode"),
    ("data.dataset", "run/dataset.json", "synthetic dataset path"),
    ("data.pools", "run/pools.jsonl", "candidate pool path"),
    ("data.checkpoint", "run/encoder.ckpt", "encoder checkpoint path"),
    ("data.trajectory", "run/trajectory.jsonl", "trajectory log path"),
    ("data.generation.num_docs", "200", "corpus size"),
    ("data.generation.num_topics", "16", "latent topics"),
    ("data.generation.tokens_min", "4", "minimum tokens per document"),
    ("data.generation.tokens_max", "8", "maximum tokens per document"),
    ("data.generation.query_tokens_min", "2", "minimum tokens per query"),
    ("data.generation.query_tokens_max", "4", "maximum tokens per query"),
    ("data.generation.d_in", "12", "raw token dimension"),
    ("data.generation.signal_dims", "8", "topic-bearing coordinates"),
    (
        "data.generation.token_spread",
        "0.6",
        "document token spread around the topic",
    ),
    ("data.generation.nuisance_scale", "0.6", "scale of nuisance coordinates"),
    ("data.generation.noise_scale", "0.25", "query noise"),
    (
        "data.generation.nuisance_noise_gain",
        "3.0",
        "query noise multiplier on nuisance coordinates",
    ),
    (
        "data.generation.distractor_rate",
        "0.2",
        "fraction of near-duplicate distractors",
    ),
    (
        "data.generation.distractor_noise_min",
        "0.1",
        "smallest distractor perturbation",
    ),
    (
        "data.generation.distractor_noise_max",
        "0.8",
        "largest distractor perturbation",
    ),
    ("data.generation.heldout_fraction", "0.25", "held-out query fraction"),
    (
        "data.generation.negative_queries",
        "20",
        "synthesized negative queries per query",
    ),
    ("data.generation.seed", "0", "dataset seed"),
    ("train.lr", "0.01", "curriculum learning rate"),
    ("train.warmup_lr", "0.05", "warm-up learning rate"),
    ("train.batch_size", "8", "pairs per curriculum step"),
    ("train.warmup_batch_size", "8", "in-batch size during warm-up"),
    ("train.steps", "660", "curriculum training steps"),
    ("train.d_out", "8", "encoder output dimension"),
    ("train.seed", "0", "training seed"),
    (
        "train.eval_every",
        "20",
        "held-out evaluation cadence (0 = start and end only)",
    ),
    ("train.pool_size", "min(200, corpus - 1)", "candidate pool size"),
    ("train.aug_noise", "0.05", "noise of augmented views"),
];

/// Help text listing every configuration key with its default.
pub fn config_help() -> String {
    let width = CONFIG_KEYS.iter().map(|k| k.0.len()).max().unwrap_or(0);
    let mut out = String::from("Configuration keys (TOML, section.key = default):\n");
    for (key, default, desc) in CONFIG_KEYS {
        out.push_str(&format!("  {key:<width$}  {default:<22} {desc}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn flatten(prefix: &str, v: &toml::Value, out: &mut BTreeSet<String>) {
        match v {
            toml::Value::Table(t) => {
                for (k, v) in t {
                    let key = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    if prefix.is_empty() || matches!(v, toml::Value::Table(_)) {
                        flatten(&key, v, out);
                    } else {
                        out.insert(key);
                    }
                }
            }
            _ => {
                out.insert(prefix.to_string());
            }
        }
    }

    #[test]
    fn defaults_match_documented_settings() {
        let c = RunConfig::default();
        assert_eq!((c.loss.tau, c.loss.alpha, c.loss.beta, c.loss.k), (0.02, 1.0, 1.0, 2));
        assert_eq!(c.curriculum.m, 16);
        assert_eq!(c.curriculum.phase_config(), PhaseConfig::default());
        assert_eq!(c.curriculum.action_space().unwrap(), default_action_space());
        assert_eq!(RunConfig::from_toml_str("").unwrap(), c);
    }

    #[test]
    fn help_lists_every_key_with_its_default() {
        let value: toml::Value = toml::from_str(&RunConfig::default().to_toml_string()).unwrap();
        let mut keys = BTreeSet::new();
        flatten("", &value, &mut keys);
        let documented: BTreeSet<String> = CONFIG_KEYS.iter().map(|k| k.0.to_string()).collect();
        for k in &keys {
            assert!(documented.contains(k), "undocumented key {k}");
        }
        let help = config_help();
        for (key, default, _) in CONFIG_KEYS {
            assert!(help.contains(key) && help.contains(default));
            if let Some(v) = keys.contains(*key).then(|| lookup(&value, key)) {
                let shown = match v {
                    toml::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                let expect = default.trim_matches('"');
                assert_eq!(shown, expect, "default of {key}");
            }
        }
    }

    fn lookup<'a>(v: &'a toml::Value, key: &str) -> &'a toml::Value {
        key.split('.').fold(v, |v, k| &v[k])
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            RunConfig::from_toml_str("[loss]\ntemperature = 0.1\n"),
            Err(Error::Usage(_))
        ));
        assert!(matches!(RunConfig::from_toml_str("[bogus]\n"), Err(Error::Usage(_))));
        assert!(matches!(
            RunConfig::from_toml_str("[data.generation]\nnoise = 1\n"),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn overrides_apply() {
        let c = RunConfig::from_toml_str(
            "[loss]\ntau = 1.0\nK = 1\n[curriculum]\nexploration_steps = 12\ntransition_steps = 40\nlockin_review_every = 40\n[controller]\nmode = \"fixed-window\"\n",
        )
        .unwrap();
        assert_eq!(c.loss.tau, 1.0);
        assert_eq!(c.loss.k, 1);
        assert_eq!(c.controller.mode, ControllerMode::FixedWindow);
        assert_eq!(c.curriculum.phase_config().transition_steps, 40);
    }

    #[test]
    fn custom_action_spaces() {
        let c = RunConfig::from_toml_str("[curriculum]\nM = 2\nintervals = [[0.7, 0.8], [0.9, 0.99]]\n").unwrap();
        let s = c.curriculum.action_space().unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.intervals()[1].high, 0.99);
        assert!(RunConfig::from_toml_str("[curriculum]\nM = 3\nintervals = [[0.7, 0.8]]\n").is_err());
        let u = RunConfig::from_toml_str("[curriculum]\nM = 4\n").unwrap();
        let s = u.curriculum.action_space().unwrap();
        assert_eq!(s.len(), 4);
        assert!((s.intervals()[3].high - 0.995).abs() < 1e-12);
        assert_eq!(s.intervals()[0].low, 0.70);
    }
}
