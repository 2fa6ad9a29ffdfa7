//! Metrics as JSON lines, one record per line.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, RunError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Disc,
    Gen,
    Pretrain,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRecord {
    pub step: u64,
    pub phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_d_real: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_d_fake: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disc_acc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collapse_flag: Option<bool>,
}

impl MetricsRecord {
    pub fn new(step: u64, phase: Phase) -> Self {
        Self {
            step,
            phase,
            loss_g: None,
            loss_d_real: None,
            loss_d_fake: None,
            reward_mean: None,
            disc_acc: None,
            kl_mean: None,
            collapse_flag: None,
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("metrics record serializes");
        s.push('\n');
        s
    }
}

/// Append one record as a single write.
pub fn append_metrics(record: &MetricsRecord, path: &Path) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| RunError::io(path, e))?;
    f.write_all(record.to_line().as_bytes()).map_err(|e| RunError::io(path, e))
}

/// Buffered metrics log. Records are queued in memory and written on
/// [`MetricsLog::flush`], whole lines only.
#[derive(Debug)]
pub struct MetricsLog {
    path: PathBuf,
    pending: String,
}

impl MetricsLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into(), pending: String::new() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn push(&mut self, record: &MetricsRecord) {
        self.pending.push_str(&record.to_line());
    }

    pub fn flush(&mut self) -> Result<()> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path).map_err(|e| RunError::io(&self.path, e))?;
        f.write_all(self.pending.as_bytes()).map_err(|e| RunError::io(&self.path, e))?;
        f.flush().map_err(|e| RunError::io(&self.path, e))?;
        self.pending.clear();
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let f = std::fs::File::open(path).map_err(|e| RunError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| RunError::io(path, e))?;
        let rec = serde_json::from_str(&line).map_err(|e| {
            RunError::Format(format!("{}: line {}: {e}", path.display(), i + 1))
        })?;
        out.push(rec);
    }
    Ok(out)
}
