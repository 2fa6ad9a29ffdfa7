//! Differentiable generator training through Gumbel-Softmax relaxed tokens.
//!
//! The generator emits `softmax((logits + g) / τ)` at each step instead of a
//! sampled id; that weight vector is fed back into the generator and into the
//! discriminator through a matrix-multiply embedding, so the discriminator's
//! BCE toward label 1 can be back-propagated into generator parameters.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::diffcore::{sigmoid, softmax, Bound, Graph, Optimizer, OptimizerKind, Tensor, Var};
use crate::discriminator::{DiscModel, MAX_PARAM_ABS};
use crate::error::{Error, Result};
use crate::reinforce::GenStepStats;
use crate::rng::{open01, StreamRng};
use crate::seqmodel::{Cursor, GenModel, Input};
use crate::tasks::TaskSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GumbelConfig {
    pub temperature: f64,
    /// Exact one-hot forward values, relaxed gradients.
    pub straight_through: bool,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    /// Multiplicative temperature decay per step (1.0 = fixed).
    pub anneal: f64,
    pub min_temperature: f64,
    pub batch_size: usize,
}

impl Default for GumbelConfig {
    fn default() -> Self {
        Self { temperature: 1.0, straight_through: false, lr: 0.01, optimizer: OptimizerKind::Adam, anneal: 1.0, min_temperature: 0.05, batch_size: 8 }
    }
}

impl GumbelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid("Gumbel temperature must be positive"));
        }
        if !(self.anneal > 0.0 && self.anneal <= 1.0) || !(self.min_temperature > 0.0) {
            return Err(Error::invalid("anneal factor must be in (0, 1] and min temperature positive"));
        }
        if self.batch_size == 0 || !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("batch size must be positive and lr finite"));
        }
        Ok(())
    }
}

/// Relaxed one-hot over the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedToken {
    pub weights: Vec<f64>,
}

impl RelaxedToken {
    pub fn argmax(&self) -> usize {
        argmax(&self.weights)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `n` i.i.d. standard Gumbel draws, `-ln(-ln u)`.
pub fn gumbel_noise(n: usize, rng: &mut StreamRng) -> Vec<f64> {
    (0..n).map(|_| -libm::log(-libm::log(open01(rng)))).collect()
}

pub fn gumbel_softmax_sample(logits: &[f64], tau: f64, rng: &mut StreamRng) -> Result<RelaxedToken> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid("temperature must be positive"));
    }
    let noise = gumbel_noise(logits.len(), rng);
    let perturbed: Vec<f64> = logits.iter().zip(&noise).map(|(l, g)| (l + g) / tau).collect();
    Ok(RelaxedToken { weights: softmax(&perturbed)? })
}

/// Relaxed token node from a logit node and fixed noise.
pub fn relax(g: &mut Graph, logits: Var, noise: &[f64], tau: f64, straight_through: bool) -> Var {
    let n = g.constant(noise.to_vec());
    let perturbed = g.add(logits, n);
    let scaled = g.scale(perturbed, 1.0 / tau);
    let soft = g.softmax(scaled);
    if straight_through {
        let mut hard = alloc::vec![0.0; noise.len()];
        hard[argmax(g.value(soft))] = 1.0;
        g.straight_through(soft, hard)
    } else {
        soft
    }
}

/// `weights · embedding` for an embedding matrix of shape `[V, d]`.
pub fn onehot_embed(relaxed: &RelaxedToken, embedding: &Tensor) -> Result<Vec<f64>> {
    let [v, d] = embedding.shape.as_slice() else {
        return Err(Error::invalid("embedding must be a matrix"));
    };
    if relaxed.weights.len() != *v {
        return Err(Error::invalid("relaxed token length differs from the embedding's vocabulary"));
    }
    let mut g = Graph::new();
    let w = g.constant(relaxed.weights.clone());
    let m = g.matrix_const(embedding.values.clone(), *v, *d);
    let out = g.vecmat(w, m);
    Ok(g.value(out).to_vec())
}

/// Noise for one relaxed response: one vector per response position.
pub fn response_noise(gen: &GenModel, rng: &mut StreamRng) -> Vec<Vec<f64>> {
    let cfg = gen.config();
    (0..cfg.max_response_len).map(|_| gumbel_noise(cfg.vocab_size, rng)).collect()
}

/// Generate a relaxed response on `g` and score it with the discriminator.
/// Generation stops when a relaxed token's argmax is the terminator.
/// Returns `(score, relaxed tokens)`.
#[allow(clippy::too_many_arguments)]
pub fn relaxed_score_var(
    gen: &GenModel,
    disc: &DiscModel,
    g: &mut Graph,
    gen_bound: &Bound,
    disc_bound: &Bound,
    prompt: &[u32],
    noise: &[Vec<f64>],
    tau: f64,
    straight_through: bool,
) -> Result<(Var, Vec<Var>)> {
    gen.config().check_tokens(prompt)?;
    if disc.config().vocab_size != gen.config().vocab_size {
        return Err(Error::invalid("generator and discriminator vocabularies differ"));
    }
    let mut cursor = Cursor::default();
    for &t in prompt {
        gen.push(g, gen_bound, &mut cursor, Input::Token(t))?;
    }
    let terminator = gen.config().terminator.map(|t| t as usize);
    let steps = gen.config().max_response_len.min(noise.len());
    let mut tokens = Vec::with_capacity(steps);
    for (i, eps) in noise.iter().take(steps).enumerate() {
        let logits = gen.logits_var(g, gen_bound, &cursor);
        let tok = relax(g, logits, eps, tau, straight_through);
        tokens.push(tok);
        if Some(argmax(g.value(tok))) == terminator || i + 1 == steps {
            break;
        }
        gen.push(g, gen_bound, &mut cursor, Input::Soft(tok))?;
    }
    // real and generated inputs share the one-hot matmul path
    let prompt_inputs: Vec<Input> = prompt
        .iter()
        .map(|&t| {
            let mut onehot = alloc::vec![0.0; gen.config().vocab_size];
            onehot[t as usize] = 1.0;
            Input::Soft(g.constant(onehot))
        })
        .collect();
    let response_inputs: Vec<Input> = tokens.iter().map(|&t| Input::Soft(t)).collect();
    let score = disc.score_inputs(g, disc_bound, &prompt_inputs, &response_inputs)?;
    Ok((score, tokens))
}

/// Stateful trainer carrying the annealed temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct GumbelTrainer {
    cfg: GumbelConfig,
    temperature: f64,
    optimizer: Optimizer,
}

impl GumbelTrainer {
    pub fn new(cfg: GumbelConfig) -> Result<Self> {
        cfg.validate()?;
        let temperature = cfg.temperature;
        let optimizer = Optimizer::new(cfg.optimizer, cfg.lr)?;
        Ok(Self { cfg, temperature, optimizer })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn config(&self) -> &GumbelConfig {
        &self.cfg
    }

    /// One descent step on mean BCE(score, 1) of relaxed responses, updating
    /// only the generator.
    pub fn step(&mut self, gen: &mut GenModel, disc: &DiscModel, task: &TaskSpec, rng: &mut StreamRng) -> Result<GenStepStats> {
        let prompts: Vec<Vec<u32>> = (0..self.cfg.batch_size).map(|_| task.sample_prompt(rng)).collect();
        self.step_with_prompts(gen, disc, &prompts, rng)
    }

    pub fn step_with_prompts(
        &mut self,
        gen: &mut GenModel,
        disc: &DiscModel,
        prompts: &[Vec<u32>],
        rng: &mut StreamRng,
    ) -> Result<GenStepStats> {
        if prompts.is_empty() {
            return Err(Error::invalid("need at least one prompt"));
        }
        let mut g = Graph::new();
        let gb = g.bind(gen.params());
        let db = g.bind(disc.params());
        let mut losses = Vec::with_capacity(prompts.len());
        let mut reward = 0.0;
        for p in prompts {
            let noise = response_noise(gen, rng);
            let (score, _) = relaxed_score_var(gen, disc, &mut g, &gb, &db, p, &noise, self.temperature, self.cfg.straight_through)?;
            reward += sigmoid(g.scalar(score));
            losses.push(g.bce(score, 1.0));
        }
        let c = g.concat(&losses);
        let loss = g.mean(c);
        let loss_value = g.scalar(loss);
        let grads = g.backward(loss)?.take(&gb);
        if !grads.is_finite() {
            return Err(Error::Divergence("non-finite Gumbel-path gradient".into()));
        }
        self.optimizer.step(gen.params_mut(), &grads, false, MAX_PARAM_ABS)?;
        self.temperature = (self.temperature * self.cfg.anneal).max(self.cfg.min_temperature);
        Ok(GenStepStats { loss_g: loss_value, reward_mean: reward / prompts.len() as f64, kl_mean: None })
    }
}

/// Single Gumbel-path generator update with a fresh trainer state.
pub fn gumbel_generator_step(
    gen: &mut GenModel,
    disc: &DiscModel,
    prompts: &[Vec<u32>],
    cfg: &GumbelConfig,
    rng: &mut StreamRng,
) -> Result<GenStepStats> {
    GumbelTrainer::new(cfg.clone())?.step_with_prompts(gen, disc, prompts, rng)
}
