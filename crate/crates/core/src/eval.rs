//! Three-tier response ratings, improvement scores and the judge wire types.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqmodel::Sequence;
use crate::tasks::{OracleLabel, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Good,
    Average,
    Bad,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Good, Tier::Average, Tier::Bad];

    pub fn keyword(self) -> &'static str {
        match self {
            Tier::Good => "good",
            Tier::Average => "average",
            Tier::Bad => "bad",
        }
    }
}

pub fn tier_score(tier: Tier) -> i32 {
    match tier {
        Tier::Good => 1,
        Tier::Average => 0,
        Tier::Bad => -1,
    }
}

/// Score of the tuned response minus the score of the base response.
pub fn improvement(tuned: Tier, base: Tier) -> i32 {
    tier_score(tuned) - tier_score(base)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rater {
    Human,
    Oracle,
    Judge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatingRecord {
    pub prompt_id: String,
    pub system_id: String,
    pub tier: Tier,
    pub rater: Rater,
}

type PairKey<'a> = (&'a str, Rater);

fn index_system<'a>(records: &'a [RatingRecord], system_id: &str) -> Result<BTreeMap<PairKey<'a>, Tier>> {
    let mut out = BTreeMap::new();
    for r in records.iter().filter(|r| r.system_id == system_id) {
        if out.insert((r.prompt_id.as_str(), r.rater), r.tier).is_some() {
            return Err(Error::invalid(alloc::format!(
                "duplicate rating for prompt {:?}, system {:?}",
                r.prompt_id,
                r.system_id
            )));
        }
    }
    Ok(out)
}

/// Per-prompt improvements of `system_id` over `base_id`, keyed by
/// (prompt id, rater). Every prompt rated for one system must be rated for
/// the other by the same rater.
pub fn paired_improvements(records: &[RatingRecord], system_id: &str, base_id: &str) -> Result<Vec<(String, Rater, i32)>> {
    let tuned = index_system(records, system_id)?;
    let base = index_system(records, base_id)?;
    let keys: BTreeSet<PairKey> = tuned.keys().chain(base.keys()).copied().collect();
    let missing: BTreeSet<String> = keys
        .iter()
        .filter(|k| !(tuned.contains_key(*k) && base.contains_key(*k)))
        .map(|(p, _)| p.to_string())
        .collect();
    if keys.is_empty() || !missing.is_empty() {
        return Err(Error::IncompletePair(missing.into_iter().collect()));
    }
    Ok(keys
        .into_iter()
        .map(|k| (k.0.to_string(), k.1, improvement(tuned[&k], base[&k])))
        .collect())
}

/// Summed improvement of `system_id` over `base_id`.
pub fn aggregate(records: &[RatingRecord], system_id: &str, base_id: &str) -> Result<i32> {
    Ok(paired_improvements(records, system_id, base_id)?.iter().map(|p| p.2).sum())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HistogramBy {
    Tier,
    Improvement { system_id: String, base_id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HistogramKey {
    Tier { system_id: String, tier: Tier },
    Improvement { improvement: i32 },
}

/// Counts per key, sorted by key.
pub fn histogram(records: &[RatingRecord], by: &HistogramBy) -> Result<Vec<(HistogramKey, usize)>> {
    let mut counts: BTreeMap<HistogramKey, usize> = BTreeMap::new();
    match by {
        HistogramBy::Tier => {
            for r in records {
                *counts.entry(HistogramKey::Tier { system_id: r.system_id.clone(), tier: r.tier }).or_default() += 1;
            }
        }
        HistogramBy::Improvement { system_id, base_id } => {
            for (_, _, d) in paired_improvements(records, system_id, base_id)? {
                *counts.entry(HistogramKey::Improvement { improvement: d }).or_default() += 1;
            }
        }
    }
    Ok(counts.into_iter().collect())
}

/// Oracle rating with the positive class as the goal for sentiment tasks.
pub fn oracle_rate(task: &TaskSpec, seq: &Sequence) -> Result<Tier> {
    if !task.has_oracle() {
        return Err(Error::invalid(alloc::format!("task {:?} has no oracle", task.name)));
    }
    Ok(match task.oracle(seq)? {
        OracleLabel::Positive | OracleLabel::WellFormed => Tier::Good,
        OracleLabel::Unclear => Tier::Average,
        OracleLabel::Negative | OracleLabel::IllFormed => Tier::Bad,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeExample {
    pub case: String,
    pub tier: Tier,
}

/// Request body sent to a judge endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub system: String,
    pub examples: Vec<JudgeExample>,
    pub case: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeReply {
    pub text: String,
}

/// First tier keyword in `text`, matched case-insensitively as a whole word.
pub fn parse_tier(text: &str) -> Result<Tier> {
    let lower = text.to_ascii_lowercase();
    let bytes = lower.as_bytes();
    let is_word = |b: u8| b.is_ascii_alphanumeric() || b == b'_';
    let mut best: Option<(usize, Tier)> = None;
    for tier in Tier::ALL {
        let kw = tier.keyword();
        let mut from = 0;
        while let Some(pos) = lower[from..].find(kw).map(|p| p + from) {
            let end = pos + kw.len();
            let left_ok = pos == 0 || !is_word(bytes[pos - 1]);
            let right_ok = end == bytes.len() || !is_word(bytes[end]);
            if left_ok && right_ok {
                if best.map_or(true, |(p, _)| pos < p) {
                    best = Some((pos, tier));
                }
                break;
            }
            from = pos + 1;
        }
    }
    best.map(|(_, t)| t).ok_or_else(|| Error::UnparseableReply { raw_text: text.to_string() })
}
