//! Clipped PPO against a frozen reference policy.
//!
//! The whole response is one action, so the importance ratio is taken at
//! sequence level: `ρ = exp(log π_new(y|x) − log π_old(y|x))`. The per-sequence
//! signal is the discriminator reward minus `β` times the sampled KL
//! contribution `log π(y|x) − log π_ref(y|x)`, centered by an exponential
//! moving-average baseline. An optional `γ`-weighted log-likelihood term on
//! pretraining data is added to the surrogate.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Bound, Graph, Optimizer, OptimizerKind, ParamStore, Var};
use crate::discriminator::MAX_PARAM_ABS;
use crate::error::{Error, Result};
use crate::reinforce::{normalize_reward, GenStepStats, RewardMode, Scorer};
use crate::rng::StreamRng;
use crate::seqmodel::{GenModel, Sequence};
use crate::tasks::TaskSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    /// KL coefficient β.
    pub beta: f64,
    /// Pretraining log-likelihood coefficient γ.
    pub gamma: f64,
    pub clip_eps: f64,
    pub ppo_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub reward_mode: RewardMode,
    pub baseline_decay: f64,
    /// Sequences drawn from D_pretrain per step when γ > 0.
    pub pretrain_batch_size: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            gamma: 0.0,
            clip_eps: 0.2,
            ppo_epochs: 4,
            batch_size: 16,
            lr: 0.01,
            optimizer: OptimizerKind::Adam,
            reward_mode: RewardMode::Sigmoid,
            baseline_decay: 0.95,
            pretrain_batch_size: 8,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite() && self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid("beta and gamma must be finite and non-negative"));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::invalid("clip epsilon must lie in (0, 1)"));
        }
        if self.batch_size == 0 || self.ppo_epochs == 0 {
            return Err(Error::invalid("batch size and epochs must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return Err(Error::invalid("baseline decay must lie in [0, 1)"));
        }
        if self.gamma > 0.0 && self.pretrain_batch_size == 0 {
            return Err(Error::invalid("gamma > 0 needs a pretraining batch"));
        }
        Ok(())
    }
}

/// `min(max(ρ, 1−ε), 1+ε)`.
pub fn clip_ratio(rho: f64, eps: f64) -> f64 {
    rho.max(1.0 - eps).min(1.0 + eps)
}

/// `reward − β·kl + γ·pretrain_lp`.
pub fn ppo_objective_value(reward: f64, kl: f64, pretrain_lp: f64, cfg: &PpoConfig) -> f64 {
    reward - cfg.beta * kl + cfg.gamma * pretrain_lp
}

/// Sampled-sequence KL contribution `log π(y|x) − log π_ref(y|x)`.
pub fn sequence_kl(gen_params: &ParamStore, ref_params: &ParamStore, config: &crate::seqmodel::ModelConfig, seq: &Sequence) -> Result<f64> {
    let current = GenModel::from_parts(config.clone(), gen_params.clone())?;
    let reference = GenModel::from_parts(config.clone(), ref_params.clone())?;
    Ok(current.log_prob(seq)? - reference.log_prob(seq)?)
}

/// A sampled batch with everything the optimization epochs hold fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenBatch {
    pub sequences: Vec<Sequence>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub pretrain: Vec<Sequence>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoTrainer {
    cfg: PpoConfig,
    reference: GenModel,
    baseline: Option<f64>,
    optimizer: Optimizer,
}

impl PpoTrainer {
    /// Freeze `reference` as π_ref.
    pub fn new(cfg: PpoConfig, reference: &GenModel) -> Result<Self> {
        cfg.validate()?;
        let optimizer = Optimizer::new(cfg.optimizer, cfg.lr)?;
        Ok(Self { cfg, reference: reference.clone(), baseline: None, optimizer })
    }

    pub fn config(&self) -> &PpoConfig {
        &self.cfg
    }

    pub fn reference(&self) -> &GenModel {
        &self.reference
    }

    pub fn baseline(&self) -> Option<f64> {
        self.baseline
    }

    /// Clipped surrogate plus pretraining term, as a scalar node.
    pub fn surrogate_var(&self, g: &mut Graph, b: &Bound, gen: &GenModel, batch: &FrozenBatch) -> Result<Var> {
        let eps = self.cfg.clip_eps;
        let mut terms = Vec::with_capacity(batch.sequences.len());
        for ((seq, &old), &adv) in batch.sequences.iter().zip(&batch.old_log_probs).zip(&batch.advantages) {
            let lp = gen.log_prob_var(g, b, seq)?;
            let diff = g.offset(lp, -old);
            let rho = g.exp(diff);
            let unclipped = g.scale(rho, adv);
            let clipped = g.clamp(rho, 1.0 - eps, 1.0 + eps);
            let clipped = g.scale(clipped, adv);
            terms.push(g.min(unclipped, clipped));
        }
        let c = g.concat(&terms);
        let mut objective = g.mean(c);
        if self.cfg.gamma > 0.0 && !batch.pretrain.is_empty() {
            let mut lps = Vec::with_capacity(batch.pretrain.len());
            for s in &batch.pretrain {
                lps.push(gen.log_prob_var(g, b, s)?);
            }
            let c = g.concat(&lps);
            let m = g.mean(c);
            let weighted = g.scale(m, self.cfg.gamma);
            objective = g.add(objective, weighted);
        }
        Ok(objective)
    }

    /// Sample a batch under the current policy and freeze advantages.
    /// Returns the batch plus (reward_mean, kl_mean).
    pub fn collect<S: Scorer + ?Sized>(
        &mut self,
        gen: &GenModel,
        scorer: &S,
        task: &TaskSpec,
        rng: &mut StreamRng,
    ) -> Result<(FrozenBatch, f64, f64)> {
        let n = self.cfg.batch_size;
        let mut sequences = Vec::with_capacity(n);
        let mut old_log_probs = Vec::with_capacity(n);
        let mut signals = Vec::with_capacity(n);
        let (mut reward_sum, mut kl_sum) = (0.0, 0.0);
        for _ in 0..n {
            let prompt = task.sample_prompt(rng);
            let seq = gen.sample_response(&prompt, rng)?;
            let lp = gen.log_prob(&seq)?;
            let kl = lp - self.reference.log_prob(&seq)?;
            let reward = normalize_reward(scorer.raw_score(&seq)?, self.cfg.reward_mode);
            reward_sum += reward;
            kl_sum += kl;
            signals.push(ppo_objective_value(reward, kl, 0.0, &self.cfg));
            old_log_probs.push(lp);
            sequences.push(seq);
        }
        let batch_mean = signals.iter().sum::<f64>() / n as f64;
        let baseline = *self.baseline.get_or_insert(batch_mean);
        let advantages = signals.iter().map(|s| s - baseline).collect();
        let decay = self.cfg.baseline_decay;
        self.baseline = Some(decay * baseline + (1.0 - decay) * batch_mean);
        let pretrain = if self.cfg.gamma > 0.0 {
            let corpus = task.pretrain_corpus();
            if corpus.is_empty() {
                return Err(Error::invalid("gamma > 0 but the task has no pretraining corpus"));
            }
            (0..self.cfg.pretrain_batch_size).map(|_| corpus.choose(rng).unwrap().clone()).collect()
        } else {
            Vec::new()
        };
        let batch = FrozenBatch { sequences, old_log_probs, advantages, pretrain };
        Ok((batch, reward_sum / n as f64, kl_sum / n as f64))
    }

    /// One PPO step: collect a batch, then `ppo_epochs` full-batch ascent
    /// steps on the clipped surrogate.
    pub fn step<S: Scorer + ?Sized>(
        &mut self,
        gen: &mut GenModel,
        scorer: &S,
        task: &TaskSpec,
        rng: &mut StreamRng,
    ) -> Result<GenStepStats> {
        if !gen.params().congruent(self.reference.params()) {
            return Err(Error::Structural("generator and reference policy are not congruent".into()));
        }
        let (batch, reward_mean, kl_mean) = self.collect(gen, scorer, task, rng)?;
        let mut first_objective = None;
        for _ in 0..self.cfg.ppo_epochs {
            let mut g = Graph::new();
            let b = g.bind(gen.params());
            let obj = self.surrogate_var(&mut g, &b, gen, &batch)?;
            first_objective.get_or_insert(g.scalar(obj));
            let grads = g.backward(obj)?.take(&b);
            if !grads.is_finite() {
                return Err(Error::Divergence("non-finite PPO gradient".into()));
            }
            self.optimizer.step(gen.params_mut(), &grads, true, MAX_PARAM_ABS)?;
        }
        Ok(GenStepStats { loss_g: -first_objective.unwrap_or(0.0), reward_mean, kl_mean: Some(kl_mean) })
    }
}
