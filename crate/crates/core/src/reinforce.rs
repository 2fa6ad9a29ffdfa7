//! Monte Carlo policy gradient with reward-to-go.
//!
//! The gradient estimate over `N` sampled trajectories is
//! `(1/N) Σ_i Σ_t ∇ log π(a_t | s_t) · G_t`, with `G_t` the sum of step
//! rewards from `t` to the end of the response. Rewards come from a
//! [`Scorer`] (normally the discriminator) passed through a [`RewardMode`].

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::diffcore::{sigmoid, GradStore, Graph};
use crate::discriminator::{DiscModel, MAX_PARAM_ABS};
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::seqmodel::{GenModel, Sequence};
use crate::tasks::TaskSpec;

/// Anything that maps a complete sequence to a raw score.
pub trait Scorer {
    fn raw_score(&self, seq: &Sequence) -> Result<f64>;
}

impl Scorer for DiscModel {
    fn raw_score(&self, seq: &Sequence) -> Result<f64> {
        self.score(seq)
    }
}

impl<F: Fn(&Sequence) -> Result<f64>> Scorer for F {
    fn raw_score(&self, seq: &Sequence) -> Result<f64> {
        self(seq)
    }
}

/// How a raw discriminator score becomes a reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    Raw,
    #[default]
    Sigmoid,
    /// `σ(score) - 0.5`, in (-0.5, 0.5).
    Normalized,
}

pub fn normalize_reward(score: f64, mode: RewardMode) -> f64 {
    match mode {
        RewardMode::Raw => score,
        RewardMode::Sigmoid => sigmoid(score),
        RewardMode::Normalized => sigmoid(score) - 0.5,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReinforceConfig {
    /// Trajectories per gradient estimate (N).
    pub batch_size: usize,
    /// Sampled completions per intermediate position; 0 = terminal reward only.
    pub rollout_count: usize,
    pub reward_mode: RewardMode,
    pub lr: f64,
}

impl Default for ReinforceConfig {
    fn default() -> Self {
        Self { batch_size: 16, rollout_count: 0, reward_mode: RewardMode::Normalized, lr: 0.2 }
    }
}

impl ReinforceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub sequence: Sequence,
    pub step_log_probs: Vec<f64>,
    pub step_rewards: Vec<f64>,
    pub reward_to_go: Vec<f64>,
}

impl Trajectory {
    pub fn new(sequence: Sequence, step_log_probs: Vec<f64>, step_rewards: Vec<f64>) -> Result<Self> {
        let t = sequence.response.len();
        if t == 0 || step_log_probs.len() != t || step_rewards.len() != t {
            return Err(Error::invalid("trajectory lists must all have the response length (>= 1)"));
        }
        let reward_to_go = reward_to_go(&step_rewards);
        Ok(Self { sequence, step_log_probs, step_rewards, reward_to_go })
    }
}

/// Suffix sums: `G_t = r_t + G_{t+1}`, `G_{T-1} = r_{T-1}`.
pub fn reward_to_go(step_rewards: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; step_rewards.len()];
    let mut acc = 0.0;
    for (o, r) in out.iter_mut().zip(step_rewards).rev() {
        acc += r;
        *o = acc;
    }
    out
}

/// Per-step rewards for a complete sequence.
///
/// Terminal-only mode puts the transformed score of the full sequence on the
/// last step. Rollout mode scores each intermediate position by the mean
/// reward of `rollout_count` sampled completions of its prefix.
pub fn assign_rewards<S: Scorer + ?Sized>(
    gen: &GenModel,
    scorer: &S,
    seq: &Sequence,
    cfg: &ReinforceConfig,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    let t = seq.response.len();
    if t == 0 {
        return Err(Error::invalid("cannot assign rewards to an empty response"));
    }
    let mut rewards = vec![0.0; t];
    rewards[t - 1] = normalize_reward(scorer.raw_score(seq)?, cfg.reward_mode);
    if cfg.rollout_count > 0 {
        for (pos, r) in rewards.iter_mut().enumerate().take(t - 1) {
            let mut sum = 0.0;
            for _ in 0..cfg.rollout_count {
                let done = gen.complete(seq, pos + 1, rng)?;
                sum += normalize_reward(scorer.raw_score(&done)?, cfg.reward_mode);
            }
            *r = sum / cfg.rollout_count as f64;
        }
    }
    Ok(rewards)
}

/// `ĝ = (1/N) Σ_i Σ_t ∇ log π(a_t | s_t) · G_t`, congruent with the
/// generator parameters.
pub fn estimate_gradient(gen: &GenModel, trajectories: &[Trajectory]) -> Result<GradStore> {
    Ok(surrogate_gradient(gen, trajectories)?.1)
}

/// Surrogate value `(1/N) Σ_i Σ_t G_t log π(a_t | s_t)` and its gradient.
fn surrogate_gradient(gen: &GenModel, trajectories: &[Trajectory]) -> Result<(f64, GradStore)> {
    if trajectories.is_empty() {
        return Err(Error::invalid("need at least one trajectory"));
    }
    let mut g = Graph::new();
    let b = g.bind(gen.params());
    let mut terms = Vec::new();
    for tr in trajectories {
        let steps = gen.step_log_prob_vars(&mut g, &b, &tr.sequence)?;
        let lp = g.concat(&steps);
        let weights = g.constant(tr.reward_to_go.clone());
        terms.push(g.dot(lp, weights));
    }
    let all = g.concat(&terms);
    let mean = g.mean(all);
    let value = g.scalar(mean);
    let grads = g.backward(mean)?.take(&b);
    if !grads.is_finite() {
        return Err(Error::Divergence("non-finite policy gradient".into()));
    }
    Ok((value, grads))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenStepStats {
    /// Negated surrogate objective.
    pub loss_g: f64,
    pub reward_mean: f64,
    pub kl_mean: Option<f64>,
}

/// Sample `N` trajectories, assign rewards, and take one ascent step
/// `θ += lr · ĝ`.
pub fn reinforce_step<S: Scorer + ?Sized>(
    gen: &mut GenModel,
    scorer: &S,
    task: &TaskSpec,
    cfg: &ReinforceConfig,
    rng: &mut StreamRng,
) -> Result<GenStepStats> {
    cfg.validate()?;
    let prompts: Vec<Vec<u32>> = (0..cfg.batch_size).map(|_| task.sample_prompt(rng)).collect();
    reinforce_step_with_prompts(gen, scorer, &prompts, cfg, rng)
}

pub fn reinforce_step_with_prompts<S: Scorer + ?Sized>(
    gen: &mut GenModel,
    scorer: &S,
    prompts: &[Vec<u32>],
    cfg: &ReinforceConfig,
    rng: &mut StreamRng,
) -> Result<GenStepStats> {
    cfg.validate()?;
    let mut trajectories = Vec::with_capacity(prompts.len());
    let mut terminal = 0.0;
    for p in prompts {
        let seq = gen.sample_response(p, rng)?;
        let rewards = assign_rewards(gen, scorer, &seq, cfg, rng)?;
        terminal += rewards[rewards.len() - 1];
        let lps = gen.step_log_probs(&seq)?;
        trajectories.push(Trajectory::new(seq, lps, rewards)?);
    }
    let (value, grads) = surrogate_gradient(gen, &trajectories)?;
    if cfg.lr > 0.0 {
        gen.params_mut().apply_step(&grads, cfg.lr, MAX_PARAM_ABS)?;
    }
    Ok(GenStepStats { loss_g: -value, reward_mean: terminal / prompts.len() as f64, kl_mean: None })
}
