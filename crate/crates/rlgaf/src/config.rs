//! Run configuration: one JSON object that, with the platform, fixes a run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rlgaf_core::adversarial::{LoopConfig, Strategy, MIN_COLLAPSE_SAMPLES};
use rlgaf_core::gumbel::GumbelConfig;
use rlgaf_core::ppo::PpoConfig;
use rlgaf_core::reinforce::ReinforceConfig;
use rlgaf_core::seqmodel::ModelConfig;
use rlgaf_core::tasks::{self, PretrainConfig, TaskSpec};

use crate::corpus::load_corpus;
use crate::error::{Result, RunError};

pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    Sentiment {
        #[serde(default = "default_set_size")]
        positive_size: usize,
        #[serde(default = "default_set_size")]
        negative_size: usize,
    },
    Form {
        #[serde(default = "default_k")]
        k: usize,
    },
    Corpus {
        path: PathBuf,
        #[serde(default = "default_max_prompt_tokens")]
        max_prompt_tokens: usize,
    },
}

fn default_set_size() -> usize {
    8
}

fn default_k() -> usize {
    3
}

fn default_max_prompt_tokens() -> usize {
    1000
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig::Sentiment { positive_size: 8, negative_size: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JudgeConfig {
    pub endpoint: String,
    /// Optional `(header name, header value)` sent with every request.
    pub auth_header: Option<(String, String)>,
    pub timeout_ms: u64,
    pub retry_limit: u32,
    pub backoff_base_ms: u64,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self { endpoint: String::new(), auth_header: None, timeout_ms: 30_000, retry_limit: 3, backoff_base_ms: 1000 }
    }
}

/// Samples drawn after training to compare the tuned and base generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { samples: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub task: TaskConfig,
    pub model: ModelConfig,
    pub pretrain: PretrainConfig,
    #[serde(rename = "loop")]
    pub loop_cfg: LoopConfig,
    pub reinforce: ReinforceConfig,
    pub ppo: PpoConfig,
    pub gumbel: GumbelConfig,
    pub eval: EvalConfig,
    pub output_dir: PathBuf,
    pub judge: Option<JudgeConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            task: TaskConfig::default(),
            model: ModelConfig::default(),
            pretrain: PretrainConfig::default(),
            loop_cfg: LoopConfig::default(),
            reinforce: ReinforceConfig::default(),
            ppo: PpoConfig::default(),
            gumbel: GumbelConfig::default(),
            eval: EvalConfig::default(),
            output_dir: PathBuf::from("run"),
            judge: None,
        }
    }
}

impl RunConfig {
    pub fn strategy(&self) -> Strategy {
        self.loop_cfg.strategy
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| RunError::Config(format!("config parse failure: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
        Self::from_json(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loop_cfg.validate()?;
        self.reinforce.validate()?;
        if self.model.terminator != Some(self.model.vocab_size as u32 - 1) {
            return Err(RunError::Config("model.terminator must be the last vocabulary id".into()));
        }
        if self.eval.samples < MIN_COLLAPSE_SAMPLES {
            return Err(RunError::Config(format!("eval.samples must be at least {MIN_COLLAPSE_SAMPLES}")));
        }
        Ok(())
    }

    /// Build the task. A relative corpus path resolves against the working directory.
    pub fn build_task(&self) -> Result<TaskSpec> {
        let v = self.model.vocab_size;
        let l = self.model.max_response_len;
        Ok(match &self.task {
            TaskConfig::Sentiment { positive_size, negative_size } => {
                tasks::sentiment_task(self.seed, v, *positive_size, *negative_size, l)?
            }
            TaskConfig::Form { k } => tasks::form_task(self.seed, v, *k, l)?,
            TaskConfig::Corpus { path, max_prompt_tokens } => {
                let load = load_corpus(path, *max_prompt_tokens)?;
                TaskSpec::from_corpus(&path.display().to_string(), v, l, load.demonstrations)?
            }
        })
    }
}
