//! HTTP judge adapter. One POST per case with body `{system, examples, case}`;
//! the reply is `{text}` and its first tier keyword becomes the rating.

use std::time::Duration;

use rlgaf_core::eval::{parse_tier, JudgeExample, JudgeReply, JudgeRequest, Rater, RatingRecord, Tier};
use serde::{Deserialize, Serialize};

use crate::config::JudgeConfig;
use crate::error::{Result, RunError};

/// One line of a judge case file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeCase {
    pub prompt_id: String,
    pub system_id: String,
    pub case: String,
}

pub struct Judge {
    cfg: JudgeConfig,
    agent: ureq::Agent,
    sleep: Box<dyn Fn(Duration)>,
}

impl Judge {
    pub fn new(cfg: JudgeConfig) -> Result<Self> {
        if cfg.endpoint.is_empty() {
            return Err(RunError::Config("judge endpoint is empty".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { cfg, agent, sleep: Box::new(std::thread::sleep) })
    }

    /// Replace the backoff sleep, e.g. to record delays in tests.
    pub fn with_sleep(mut self, sleep: impl Fn(Duration) + 'static) -> Self {
        self.sleep = Box::new(sleep);
        self
    }

    fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.cfg.backoff_base_ms.saturating_mul(1u64 << attempt.min(32)))
    }

    fn attempt(&self, request: &JudgeRequest) -> std::result::Result<JudgeReply, String> {
        let mut req = self.agent.post(&self.cfg.endpoint);
        if let Some((name, value)) = &self.cfg.auth_header {
            req = req.header(name, value);
        }
        let mut resp = req.send_json(request).map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("judge replied with HTTP {}", status.as_u16()));
        }
        resp.body_mut().read_json::<JudgeReply>().map_err(|e| format!("malformed judge reply: {e}"))
    }

    /// Send one case, retrying transport failures up to `retry_limit` times
    /// with exponential backoff.
    pub fn reply(&self, rubric: &str, exemplars: &[JudgeExample], case: &str) -> Result<JudgeReply> {
        let request = JudgeRequest { system: rubric.to_string(), examples: exemplars.to_vec(), case: case.to_string() };
        let mut attempt = 0;
        loop {
            match self.attempt(&request) {
                Ok(reply) => return Ok(reply),
                Err(msg) if attempt >= self.cfg.retry_limit => {
                    return Err(RunError::Transport(format!("{msg} (after {} attempts)", attempt + 1)))
                }
                Err(_) => {
                    (self.sleep)(self.backoff(attempt));
                    attempt += 1;
                }
            }
        }
    }

    pub fn rate_tier(&self, rubric: &str, exemplars: &[JudgeExample], case: &str) -> Result<Tier> {
        let reply = self.reply(rubric, exemplars, case)?;
        Ok(parse_tier(&reply.text)?)
    }

    pub fn rate(&self, rubric: &str, exemplars: &[JudgeExample], case: &JudgeCase) -> Result<RatingRecord> {
        let tier = self.rate_tier(rubric, exemplars, &case.case)?;
        Ok(RatingRecord { prompt_id: case.prompt_id.clone(), system_id: case.system_id.clone(), tier, rater: Rater::Judge })
    }
}

pub fn judge_rate(cfg: &JudgeConfig, rubric: &str, exemplars: &[JudgeExample], case: &JudgeCase) -> Result<RatingRecord> {
    Judge::new(cfg.clone())?.rate(rubric, exemplars, case)
}

/// Parse JSON lines of `T`, reporting 1-based line numbers.
pub fn parse_jsonl<T: serde::de::DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| rlgaf_core::Error::Parse { line: i + 1, message: e.to_string() }.into())
        })
        .collect()
}
