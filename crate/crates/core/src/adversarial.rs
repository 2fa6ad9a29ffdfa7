//! Alternating discriminator/generator rounds and mode-collapse monitoring.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::diffcore::sigmoid;
use crate::discriminator::{DiscLosses, DiscModel, LabeledBatch};
use crate::error::{Error, Result};
use crate::gumbel::{GumbelConfig, GumbelTrainer};
use crate::ppo::{PpoConfig, PpoTrainer};
use crate::reinforce::{reinforce_step, GenStepStats, ReinforceConfig};
use crate::rng::StreamRng;
use crate::seqmodel::{GenModel, Sequence};
use crate::tasks::TaskSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Reinforce,
    #[default]
    Ppo,
    Gumbel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopConfig {
    pub strategy: Strategy,
    pub gen_steps_per_round: usize,
    pub disc_steps_per_round: usize,
    pub disc_samples_per_round: usize,
    pub total_rounds: usize,
    pub distinct_ratio_min: f64,
    /// Nats.
    pub bigram_entropy_min: f64,
    pub smoothing_window: usize,
    pub disc_lr: f64,
    pub halt_on_collapse: bool,
    /// Generator samples inspected by the collapse detector each round.
    pub collapse_samples: usize,
    /// Held-out real and fake items (each) for the discriminator accuracy.
    pub eval_samples: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Ppo,
            gen_steps_per_round: 10,
            disc_steps_per_round: 1,
            disc_samples_per_round: 10,
            total_rounds: 50,
            distinct_ratio_min: 0.1,
            bigram_entropy_min: 1.0,
            smoothing_window: 100,
            disc_lr: 0.3,
            halt_on_collapse: false,
            collapse_samples: 100,
            eval_samples: 100,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.disc_samples_per_round == 0 && self.disc_steps_per_round > 0 {
            return Err(Error::invalid("discriminator steps need at least one sample per round"));
        }
        if self.collapse_samples < MIN_COLLAPSE_SAMPLES {
            return Err(Error::invalid("collapse detection needs at least 20 samples"));
        }
        if self.eval_samples == 0 || self.smoothing_window == 0 {
            return Err(Error::invalid("eval samples and smoothing window must be positive"));
        }
        if !(self.disc_lr >= 0.0 && self.disc_lr.is_finite()) {
            return Err(Error::invalid("discriminator learning rate must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.distinct_ratio_min) || !(self.bigram_entropy_min >= 0.0) {
            return Err(Error::invalid("collapse thresholds out of range"));
        }
        Ok(())
    }

    /// Non-fatal configuration smells, for the caller to log.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.disc_steps_per_round > self.gen_steps_per_round {
            out.push(alloc::format!(
                "disc_steps_per_round ({}) exceeds gen_steps_per_round ({}); the discriminator may overpower the generator",
                self.disc_steps_per_round,
                self.gen_steps_per_round
            ));
        }
        out
    }
}

/// Generator update rule together with any state it carries across steps.
#[derive(Debug, Clone, PartialEq)]
pub enum GenTrainer {
    Reinforce(ReinforceConfig),
    Ppo(PpoTrainer),
    Gumbel(GumbelTrainer),
}

impl GenTrainer {
    /// Build the trainer for `strategy`. PPO freezes a copy of `gen` as its
    /// reference policy.
    pub fn new(
        strategy: Strategy,
        gen: &GenModel,
        reinforce: &ReinforceConfig,
        ppo: &PpoConfig,
        gumbel: &GumbelConfig,
    ) -> Result<Self> {
        Ok(match strategy {
            Strategy::Reinforce => {
                reinforce.validate()?;
                Self::Reinforce(reinforce.clone())
            }
            Strategy::Ppo => Self::Ppo(PpoTrainer::new(ppo.clone(), gen)?),
            Strategy::Gumbel => Self::Gumbel(GumbelTrainer::new(gumbel.clone())?),
        })
    }

    pub fn strategy(&self) -> Strategy {
        match self {
            Self::Reinforce(_) => Strategy::Reinforce,
            Self::Ppo(_) => Strategy::Ppo,
            Self::Gumbel(_) => Strategy::Gumbel,
        }
    }

    pub fn step(&mut self, gen: &mut GenModel, disc: &DiscModel, task: &TaskSpec, rng: &mut StreamRng) -> Result<GenStepStats> {
        match self {
            Self::Reinforce(cfg) => reinforce_step(gen, disc, task, cfg, rng),
            Self::Ppo(t) => t.step(gen, disc, task, rng),
            Self::Gumbel(t) => t.step(gen, disc, task, rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub flagged: bool,
    pub distinct_response_ratio: f64,
    pub mean_distinct_token_ratio: f64,
    /// Entropy of the pooled within-response bigram distribution, in nats.
    pub bigram_entropy: f64,
    pub top_response: Vec<u32>,
    pub top_share: f64,
}

pub const MIN_COLLAPSE_SAMPLES: usize = 20;

/// Diversity statistics over sampled responses. Flags the set when the share
/// of distinct responses or the bigram entropy falls below its threshold, or
/// when one response makes up more than half of the set.
pub fn detect_mode_collapse(samples: &[Sequence], cfg: &LoopConfig) -> Result<CollapseReport> {
    let n = samples.len();
    if n < MIN_COLLAPSE_SAMPLES {
        return Err(Error::invalid(alloc::format!("collapse detection needs at least {MIN_COLLAPSE_SAMPLES} samples, got {n}")));
    }
    let mut responses: BTreeMap<&[u32], usize> = BTreeMap::new();
    let mut bigrams: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    let mut token_ratio_sum = 0.0;
    for s in samples {
        *responses.entry(&s.response).or_default() += 1;
        for w in s.response.windows(2) {
            *bigrams.entry((w[0], w[1])).or_default() += 1;
        }
        if !s.response.is_empty() {
            let mut toks = s.response.clone();
            toks.sort_unstable();
            toks.dedup();
            token_ratio_sum += toks.len() as f64 / s.response.len() as f64;
        }
    }
    let (top_response, top_count) = responses
        .iter()
        .fold((&[][..], 0usize), |best, (r, &c)| if c > best.1 { (*r, c) } else { best });
    let total_bigrams: usize = bigrams.values().sum();
    let bigram_entropy = if total_bigrams == 0 {
        0.0
    } else {
        let t = total_bigrams as f64;
        bigrams
            .values()
            .map(|&c| {
                let p = c as f64 / t;
                -p * libm::log(p)
            })
            .sum::<f64>()
            .max(0.0)
    };
    let distinct_response_ratio = responses.len() as f64 / n as f64;
    let top_share = top_count as f64 / n as f64;
    let flagged = distinct_response_ratio < cfg.distinct_ratio_min || bigram_entropy < cfg.bigram_entropy_min || top_share > 0.5;
    Ok(CollapseReport {
        flagged,
        distinct_response_ratio,
        mean_distinct_token_ratio: token_ratio_sum / n as f64,
        bigram_entropy,
        top_response: top_response.to_vec(),
        top_share,
    })
}

/// Trailing moving average; the first `window − 1` entries average over the
/// available prefix.
pub fn smooth_rewards(raw: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::invalid("smoothing window must be at least 1"));
    }
    let out = (0..raw.len())
        .map(|i| {
            let slice = &raw[(i + 1).saturating_sub(window)..=i];
            if slice.iter().all(|&v| v == raw[i]) {
                raw[i]
            } else {
                slice.iter().sum::<f64>() / slice.len() as f64
            }
        })
        .collect();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: usize,
    /// Losses before the last discriminator step (or of the frozen
    /// discriminator when no step ran).
    pub disc_losses: DiscLosses,
    /// Accuracy on fresh held-out real and fake items after the disc phase.
    pub disc_accuracy: f64,
    pub gen_stats: Vec<GenStepStats>,
    pub collapse: CollapseReport,
    /// Round whose generator produced the label-0 batch.
    pub fake_origin: Option<usize>,
    pub gen_checksum_disc_phase: (u64, u64),
    pub disc_checksum_gen_phase: (u64, u64),
}

impl RoundReport {
    pub fn reward_mean(&self) -> f64 {
        mean(self.gen_stats.iter().map(|s| s.reward_mean))
    }

    pub fn loss_g(&self) -> f64 {
        mean(self.gen_stats.iter().map(|s| s.loss_g))
    }

    pub fn kl_mean(&self) -> Option<f64> {
        let kls: Vec<f64> = self.gen_stats.iter().filter_map(|s| s.kl_mean).collect();
        (!kls.is_empty()).then(|| mean(kls.into_iter()))
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn fresh_fakes(gen: &GenModel, task: &TaskSpec, n: usize, rng: &mut StreamRng) -> Result<Vec<Sequence>> {
    (0..n).map(|_| gen.sample_response(&task.sample_prompt(rng), rng)).collect()
}

/// One round: discriminator phase on fresh samples, then generator phase
/// against the updated discriminator, then diagnostics.
pub fn rlgaf_round(
    gen: &mut GenModel,
    disc: &mut DiscModel,
    trainer: &mut GenTrainer,
    task: &TaskSpec,
    cfg: &LoopConfig,
    round: usize,
    rng: &mut StreamRng,
) -> Result<RoundReport> {
    cfg.validate()?;
    if trainer.strategy() != cfg.strategy {
        return Err(Error::invalid("trainer strategy differs from the loop configuration"));
    }

    let gen_before = gen.params().checksum();
    let n = cfg.disc_samples_per_round.max(1);
    let real = LabeledBatch::with_label((0..n).map(|_| task.sample_demonstration(rng)).collect(), 1)?;
    let fake = LabeledBatch::with_label(fresh_fakes(gen, task, n, rng)?, 0)?.with_origin(round);
    let mut disc_losses = disc.disc_loss(&real, &fake)?;
    for _ in 0..cfg.disc_steps_per_round {
        disc_losses = disc.disc_update(&real, &fake, cfg.disc_lr)?;
    }
    let gen_after_disc = gen.params().checksum();

    let mut held_out: Vec<(Sequence, u8)> = (0..cfg.eval_samples).map(|_| (task.sample_demonstration(rng), 1)).collect();
    held_out.extend(fresh_fakes(gen, task, cfg.eval_samples, rng)?.into_iter().map(|s| (s, 0)));
    let disc_accuracy = disc.accuracy(&LabeledBatch::new(held_out)?)?;

    let disc_before = disc.params().checksum();
    let mut gen_stats = Vec::with_capacity(cfg.gen_steps_per_round);
    for _ in 0..cfg.gen_steps_per_round {
        gen_stats.push(trainer.step(gen, disc, task, rng)?);
    }
    let disc_after_gen = disc.params().checksum();

    let samples = fresh_fakes(gen, task, cfg.collapse_samples, rng)?;
    let collapse = detect_mode_collapse(&samples, cfg)?;
    if collapse.flagged && cfg.halt_on_collapse {
        return Err(Error::Collapse(alloc::format!(
            "round {round}: distinct ratio {:.3}, bigram entropy {:.3}, top share {:.3}",
            collapse.distinct_response_ratio,
            collapse.bigram_entropy,
            collapse.top_share
        )));
    }

    Ok(RoundReport {
        round,
        disc_losses,
        disc_accuracy,
        gen_stats,
        collapse,
        fake_origin: fake.origin,
        gen_checksum_disc_phase: (gen_before, gen_after_disc),
        disc_checksum_gen_phase: (disc_before, disc_after_gen),
    })
}

/// Mean probability-of-real the discriminator assigns to a set of sequences.
pub fn mean_prob_real(disc: &DiscModel, seqs: &[Sequence]) -> Result<f64> {
    if seqs.is_empty() {
        return Err(Error::invalid("no sequences"));
    }
    let mut s = 0.0;
    for q in seqs {
        s += sigmoid(disc.score(q)?);
    }
    Ok(s / seqs.len() as f64)
}
