//! Tiny autoregressive generator policy.
//!
//! The backbone is either a single recurrent cell or a single causal
//! attention block. Both consume one input per position (a token id, or a
//! relaxed one-hot weight vector for the Gumbel path) and produce a hidden
//! state per position; the generator projects the latest hidden state to
//! vocabulary logits, the discriminator pools hidden states into a score.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{log_softmax, softmax, Bound, Graph, ParamStore, Var};
use crate::error::{Error, Result};
use crate::rng::categorical;

pub const INIT_BOUND: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Recurrent,
    Attention,
}

/// Shape of a model. Shared by the generator and the discriminator so both
/// read the same vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub max_response_len: usize,
    pub max_prompt_len: usize,
    /// End-of-response token; `None` gives fixed-length responses.
    pub terminator: Option<u32>,
    pub architecture: Architecture,
    /// Sampling and likelihood temperature; `next_token_logits` is unscaled.
    pub temperature: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 32,
            embed_dim: 16,
            hidden_dim: 32,
            max_response_len: 16,
            max_prompt_len: 8,
            terminator: Some(31),
            architecture: Architecture::Recurrent,
            temperature: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 || self.embed_dim == 0 || self.hidden_dim == 0 || self.max_response_len == 0 {
            return Err(Error::invalid("model dimensions must be positive (vocabulary at least 2)"));
        }
        if let Some(t) = self.terminator {
            if t as usize >= self.vocab_size {
                return Err(Error::InvalidToken { token: t, vocab: self.vocab_size });
            }
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid("temperature must be positive"));
        }
        Ok(())
    }

    pub fn max_positions(&self) -> usize {
        self.max_prompt_len + self.max_response_len
    }

    pub fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        match tokens.iter().find(|&&t| t as usize >= self.vocab_size) {
            Some(&token) => Err(Error::InvalidToken { token, vocab: self.vocab_size }),
            None => Ok(()),
        }
    }

    pub fn check_sequence(&self, seq: &Sequence) -> Result<()> {
        self.check_tokens(&seq.prompt)?;
        self.check_tokens(&seq.response)?;
        if seq.prompt.len() > self.max_prompt_len {
            return Err(Error::invalid(format!(
                "prompt length {} exceeds limit {}",
                seq.prompt.len(),
                self.max_prompt_len
            )));
        }
        if seq.response.len() > self.max_response_len {
            return Err(Error::invalid(format!(
                "response length {} exceeds limit {}",
                seq.response.len(),
                self.max_response_len
            )));
        }
        Ok(())
    }
}

/// Prompt `x` and response `y = (a_0..a_{T-1})`. The response includes the
/// terminator when one was emitted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Sequence {
    pub prompt: Vec<u32>,
    pub response: Vec<u32>,
}

impl Sequence {
    pub fn new(prompt: Vec<u32>, response: Vec<u32>) -> Self {
        Self { prompt, response }
    }

    /// State `s_t`: the prompt followed by the first `t` response tokens.
    pub fn prefix(&self, t: usize) -> Vec<u32> {
        let mut p = self.prompt.clone();
        p.extend_from_slice(&self.response[..t]);
        p
    }

    /// Response without a trailing terminator.
    pub fn content(&self, terminator: Option<u32>) -> &[u32] {
        match (self.response.last(), terminator) {
            (Some(&last), Some(t)) if last == t => &self.response[..self.response.len() - 1],
            _ => &self.response,
        }
    }
}

/// One backbone input.
#[derive(Debug, Clone, Copy)]
pub enum Input {
    Token(u32),
    /// Weight vector over the vocabulary, embedded by matrix multiplication.
    Soft(Var),
}

/// Incremental backbone state for one sequence on one graph.
#[derive(Debug, Clone, Default)]
pub struct Cursor {
    hidden: Option<Var>,
    keys: Vec<Var>,
    values: Vec<Var>,
    position: usize,
}

impl Cursor {
    pub fn hidden(&self) -> Option<Var> {
        self.hidden
    }

    pub fn position(&self) -> usize {
        self.position
    }
}

/// Entry indices of the shared backbone within a model's [`ParamStore`].
/// Backbone entries always come first, in the order created here.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Backbone {
    arch: Architecture,
    embed_dim: usize,
    max_positions: usize,
}

const EMBED: usize = 0;

impl Backbone {
    pub(crate) fn new(config: &ModelConfig) -> Self {
        Self { arch: config.architecture, embed_dim: config.embed_dim, max_positions: config.max_positions() }
    }

    /// Shapes of the backbone entries, in store order.
    pub(crate) fn layout(config: &ModelConfig) -> Vec<(&'static str, Vec<usize>)> {
        let (v, d, h) = (config.vocab_size, config.embed_dim, config.hidden_dim);
        let mut out = alloc::vec![("embed", alloc::vec![v, d])];
        match config.architecture {
            Architecture::Recurrent => {
                out.push(("cell.w_in", alloc::vec![h, d]));
                out.push(("cell.w_rec", alloc::vec![h, h]));
                out.push(("cell.bias", alloc::vec![h]));
            }
            Architecture::Attention => {
                out.push(("pos", alloc::vec![config.max_positions(), d]));
                out.push(("attn.query", alloc::vec![d, d]));
                out.push(("attn.key", alloc::vec![d, d]));
                out.push(("attn.value", alloc::vec![d, d]));
                out.push(("attn.out", alloc::vec![h, d]));
                out.push(("attn.skip", alloc::vec![h, d]));
                out.push(("attn.bias", alloc::vec![h]));
            }
        }
        out
    }

    pub(crate) fn num_entries(arch: Architecture) -> usize {
        match arch {
            Architecture::Recurrent => 4,
            Architecture::Attention => 8,
        }
    }

    pub(crate) fn embed(&self, g: &mut Graph, b: &Bound, input: Input) -> Var {
        match input {
            Input::Token(t) => g.row(b.var(EMBED), t as usize),
            Input::Soft(w) => g.vecmat(w, b.var(EMBED)),
        }
    }

    /// Consume one input and return the new hidden state.
    pub(crate) fn push(&self, g: &mut Graph, b: &Bound, cursor: &mut Cursor, input: Input) -> Result<Var> {
        if cursor.position >= self.max_positions {
            return Err(Error::invalid("sequence longer than the model's position limit"));
        }
        let e = self.embed(g, b, input);
        let h = match self.arch {
            Architecture::Recurrent => {
                let x = g.matvec(b.var(1), e);
                let pre = match cursor.hidden {
                    Some(prev) => {
                        let r = g.matvec(b.var(2), prev);
                        g.add_n(&[x, r, b.var(3)])
                    }
                    None => g.add(x, b.var(3)),
                };
                g.tanh(pre)
            }
            Architecture::Attention => {
                let p = g.row(b.var(1), cursor.position);
                let x = g.add(e, p);
                let q = g.matvec(b.var(2), x);
                cursor.keys.push(g.matvec(b.var(3), x));
                cursor.values.push(g.matvec(b.var(4), x));
                let scale = 1.0 / libm::sqrt(self.embed_dim as f64);
                let scores: Vec<Var> = cursor
                    .keys
                    .clone()
                    .into_iter()
                    .map(|k| {
                        let s = g.dot(q, k);
                        g.scale(s, scale)
                    })
                    .collect();
                let scores = g.concat(&scores);
                let attn = g.softmax(scores);
                let weighted: Vec<Var> = cursor
                    .values
                    .clone()
                    .into_iter()
                    .enumerate()
                    .map(|(i, v)| {
                        let a = g.pick(attn, i);
                        g.scale_by(v, a)
                    })
                    .collect();
                let z = g.add_n(&weighted);
                let o = g.matvec(b.var(5), z);
                let s = g.matvec(b.var(6), x);
                let pre = g.add_n(&[o, s, b.var(7)]);
                g.tanh(pre)
            }
        };
        cursor.hidden = Some(h);
        cursor.position += 1;
        Ok(h)
    }
}

pub(crate) fn init_store<R: Rng + ?Sized>(
    layout: &[(&'static str, Vec<usize>)],
    rng: Option<&mut R>,
) -> Result<ParamStore> {
    let mut p = ParamStore::new();
    match rng {
        Some(rng) => {
            for (name, shape) in layout {
                p.insert_uniform(name, shape, INIT_BOUND, rng)?;
            }
        }
        None => {
            for (name, shape) in layout {
                p.insert_zeros(name, shape)?;
            }
        }
    }
    Ok(p)
}

/// The generator policy `π(a_t | s_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenModel {
    config: ModelConfig,
    params: ParamStore,
}

impl GenModel {
    fn layout(config: &ModelConfig) -> Vec<(&'static str, Vec<usize>)> {
        let mut l = Backbone::layout(config);
        l.push(("head.w", alloc::vec![config.vocab_size, config.hidden_dim]));
        l.push(("head.b", alloc::vec![config.vocab_size]));
        l
    }

    /// Parameters uniform in `[-0.1, 0.1]`.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let params = init_store(&Self::layout(&config), Some(rng))?;
        Ok(Self { config, params })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = init_store::<rand_chacha::ChaCha8Rng>(&Self::layout(&config), None)?;
        Ok(Self { config, params })
    }

    /// Reassemble a model from stored parameters (checkpoint loading).
    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let expected = init_store::<rand_chacha::ChaCha8Rng>(&Self::layout(&config), None)?;
        if !expected.congruent(&params) {
            return Err(Error::Structural("parameters do not match the generator layout".into()));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub(crate) fn backbone(&self) -> Backbone {
        Backbone::new(&self.config)
    }

    /// Logits for the current cursor state (bias only before any input).
    pub fn logits_var(&self, g: &mut Graph, b: &Bound, cursor: &Cursor) -> Var {
        let n = Backbone::num_entries(self.config.architecture);
        let raw = match cursor.hidden {
            Some(h) => {
                let m = g.matvec(b.var(n), h);
                g.add(m, b.var(n + 1))
            }
            None => b.var(n + 1),
        };
        if self.config.temperature == 1.0 {
            raw
        } else {
            g.scale(raw, 1.0 / self.config.temperature)
        }
    }

    pub fn push(&self, g: &mut Graph, b: &Bound, cursor: &mut Cursor, input: Input) -> Result<Var> {
        self.backbone().push(g, b, cursor, input)
    }

    pub fn next_token_logits(&self, prefix: &[u32]) -> Result<Vec<f64>> {
        self.config.check_tokens(prefix)?;
        if prefix.len() > self.config.max_positions() {
            return Err(Error::invalid("prefix longer than prompt limit plus response limit"));
        }
        let mut g = Graph::new();
        let b = g.bind(&self.params);
        let mut cursor = Cursor::default();
        for &t in prefix {
            self.push(&mut g, &b, &mut cursor, Input::Token(t))?;
        }
        let n = Backbone::num_entries(self.config.architecture);
        let out = match cursor.hidden {
            Some(h) => {
                let m = g.matvec(b.var(n), h);
                g.add(m, b.var(n + 1))
            }
            None => b.var(n + 1),
        };
        Ok(g.value(out).to_vec())
    }

    fn decode(&self, prompt: &[u32], mut choose: impl FnMut(&[f64]) -> Result<usize>) -> Result<Sequence> {
        self.config.check_tokens(prompt)?;
        if prompt.len() > self.config.max_prompt_len {
            return Err(Error::invalid("prompt longer than the configured limit"));
        }
        let mut g = Graph::new();
        let b = g.bind(&self.params);
        let mut cursor = Cursor::default();
        for &t in prompt {
            self.push(&mut g, &b, &mut cursor, Input::Token(t))?;
        }
        let mut response = Vec::new();
        for _ in 0..self.config.max_response_len {
            let logits = self.logits_var(&mut g, &b, &cursor);
            let tok = choose(g.value(logits))? as u32;
            response.push(tok);
            if Some(tok) == self.config.terminator || response.len() == self.config.max_response_len {
                break;
            }
            self.push(&mut g, &b, &mut cursor, Input::Token(tok))?;
        }
        Ok(Sequence::new(prompt.to_vec(), response))
    }

    /// Autoregressive categorical sampling until the terminator or the length cap.
    pub fn sample_response<R: Rng + ?Sized>(&self, prompt: &[u32], rng: &mut R) -> Result<Sequence> {
        self.decode(prompt, |logits| Ok(categorical(rng, &softmax(logits)?)))
    }

    /// Complete an existing prefix of the response by sampling (rollouts).
    pub fn complete<R: Rng + ?Sized>(&self, seq: &Sequence, prefix_len: usize, rng: &mut R) -> Result<Sequence> {
        let mut partial = Sequence::new(seq.prompt.clone(), seq.response[..prefix_len].to_vec());
        self.config.check_sequence(&partial)?;
        if partial.response.last().is_some_and(|&t| Some(t) == self.config.terminator) {
            return Ok(partial);
        }
        let mut g = Graph::new();
        let b = g.bind(&self.params);
        let mut cursor = Cursor::default();
        for &t in partial.prompt.iter().chain(&partial.response) {
            self.push(&mut g, &b, &mut cursor, Input::Token(t))?;
        }
        while partial.response.len() < self.config.max_response_len {
            let logits = self.logits_var(&mut g, &b, &cursor);
            let tok = categorical(rng, &softmax(g.value(logits))?) as u32;
            partial.response.push(tok);
            if Some(tok) == self.config.terminator || partial.response.len() == self.config.max_response_len {
                break;
            }
            self.push(&mut g, &b, &mut cursor, Input::Token(tok))?;
        }
        Ok(partial)
    }

    /// Argmax decoding; ties go to the lowest token id.
    pub fn greedy_decode(&self, prompt: &[u32]) -> Result<Sequence> {
        self.decode(prompt, |logits| {
            let mut best = 0;
            for (i, &v) in logits.iter().enumerate() {
                if v > logits[best] {
                    best = i;
                }
            }
            Ok(best)
        })
    }

    /// Per-step `log π(a_t | s_t)` nodes for a sequence on a graph.
    pub fn step_log_prob_vars(&self, g: &mut Graph, b: &Bound, seq: &Sequence) -> Result<Vec<Var>> {
        self.config.check_sequence(seq)?;
        let mut cursor = Cursor::default();
        for &t in &seq.prompt {
            self.push(g, b, &mut cursor, Input::Token(t))?;
        }
        let mut out = Vec::with_capacity(seq.response.len());
        for (i, &a) in seq.response.iter().enumerate() {
            let logits = self.logits_var(g, b, &cursor);
            let ls = g.log_softmax(logits);
            out.push(g.pick(ls, a as usize));
            if i + 1 < seq.response.len() {
                self.push(g, b, &mut cursor, Input::Token(a))?;
            }
        }
        Ok(out)
    }

    /// `log π(y | x)` as a scalar node (zero for an empty response).
    pub fn log_prob_var(&self, g: &mut Graph, b: &Bound, seq: &Sequence) -> Result<Var> {
        let steps = self.step_log_prob_vars(g, b, seq)?;
        if steps.is_empty() {
            return Ok(g.scalar_const(0.0));
        }
        let c = g.concat(&steps);
        Ok(g.sum(c))
    }

    pub fn log_prob(&self, seq: &Sequence) -> Result<f64> {
        let mut g = Graph::new();
        let b = g.bind(&self.params);
        let v = self.log_prob_var(&mut g, &b, seq)?;
        Ok(g.scalar(v))
    }

    /// Per-step log-probabilities as plain values.
    pub fn step_log_probs(&self, seq: &Sequence) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let b = g.bind(&self.params);
        let steps = self.step_log_prob_vars(&mut g, &b, seq)?;
        Ok(steps.into_iter().map(|v| g.scalar(v)).collect())
    }

    /// Per-step probability vector at the current prefix, temperature applied.
    pub fn next_token_probs(&self, prefix: &[u32]) -> Result<Vec<f64>> {
        let logits = self.next_token_logits(prefix)?;
        let scaled: Vec<f64> = logits.iter().map(|x| x / self.config.temperature).collect();
        let ls = log_softmax(&scaled)?;
        Ok(ls.into_iter().map(libm::exp).collect())
    }
}
