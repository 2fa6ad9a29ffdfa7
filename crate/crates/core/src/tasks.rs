//! Synthetic alignment environments and demonstration corpora.
//!
//! * form task: short-answer alignment. Expert answers are one content token
//!   plus the terminator; the pretraining corpus is long-form text, so a
//!   pretrained base model rambles.
//! * sentiment task: disjoint positive/negative token sets. The corpus mixes
//!   positive- and negative-biased reviews; expert demonstrations for the
//!   discriminator are the positive-labeled reviews.
//! * corpus task: demonstrations loaded from a file, no oracle.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Graph, Optimizer, OptimizerKind};
use crate::discriminator::MAX_PARAM_ABS;
use crate::error::{Error, Result};
use crate::rng::{RngRoot, StreamRng};
use crate::seqmodel::{GenModel, Sequence};

pub const CORPUS_SIZE: usize = 2000;
const PROMPT_LEN: (usize, usize) = (4, 8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleLabel {
    Positive,
    Negative,
    Unclear,
    WellFormed,
    IllFormed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskKind {
    Form { k: usize },
    Sentiment { positive: Vec<u32>, negative: Vec<u32>, neutral: Vec<u32> },
    Corpus,
}

/// Expert demonstration with the oracle label recorded at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub sequence: Sequence,
    pub label: Option<OracleLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub name: String,
    pub vocab_size: usize,
    pub terminator: u32,
    pub max_response_len: usize,
    pub kind: TaskKind,
    /// Full demonstration corpus (for the sentiment task: both classes).
    corpus: Vec<Demonstration>,
    /// Indices into `corpus` that serve as label-1 data for the discriminator.
    expert: Vec<usize>,
    /// D_pretrain: sequences for maximum-likelihood pretraining.
    pretrain: Vec<Sequence>,
}

fn random_prompt(rng: &mut StreamRng, pool: &[u32]) -> Vec<u32> {
    let len = rng.gen_range(PROMPT_LEN.0..=PROMPT_LEN.1);
    (0..len).map(|_| *pool.choose(rng).expect("non-empty token pool")).collect()
}

/// Short-answer task: well-formed iff the response ends with the terminator
/// and has at most `k` tokens (terminator included).
pub fn form_task(seed: u64, vocab_size: usize, k: usize, max_response_len: usize) -> Result<TaskSpec> {
    if vocab_size < 3 {
        return Err(Error::invalid("form task needs at least 3 tokens"));
    }
    if !(2 <= k && k < max_response_len) {
        return Err(Error::invalid("form task needs 2 <= k < max response length"));
    }
    let terminator = (vocab_size - 1) as u32;
    let content: Vec<u32> = (0..terminator).collect();
    let mut rng = RngRoot::new(seed).stream("task");
    let mut corpus = Vec::with_capacity(CORPUS_SIZE);
    let mut pretrain = Vec::with_capacity(CORPUS_SIZE);
    for _ in 0..CORPUS_SIZE {
        let prompt = random_prompt(&mut rng, &content);
        let sequence = Sequence::new(prompt.clone(), alloc::vec![prompt[0], terminator]);
        corpus.push(Demonstration { sequence, label: Some(OracleLabel::WellFormed) });
        // long-form completion text
        let n = rng.gen_range(max_response_len / 2..max_response_len);
        let mut response: Vec<u32> = (0..n).map(|_| *content.choose(&mut rng).unwrap()).collect();
        response.push(terminator);
        pretrain.push(Sequence::new(prompt, response));
    }
    let expert = (0..corpus.len()).collect();
    Ok(TaskSpec {
        name: "form".to_string(),
        vocab_size,
        terminator,
        max_response_len,
        kind: TaskKind::Form { k },
        corpus,
        expert,
        pretrain,
    })
}

/// Sentiment task over disjoint positive/negative token sets drawn by seed.
pub fn sentiment_task(
    seed: u64,
    vocab_size: usize,
    positive_size: usize,
    negative_size: usize,
    max_response_len: usize,
) -> Result<TaskSpec> {
    if positive_size == 0 || negative_size == 0 || positive_size + negative_size >= vocab_size.saturating_sub(1) {
        return Err(Error::invalid("sentiment sets must be non-empty and leave room for neutral tokens and the terminator"));
    }
    if max_response_len < 3 {
        return Err(Error::invalid("sentiment task needs responses of at least 3 tokens"));
    }
    let terminator = (vocab_size - 1) as u32;
    let mut rng = RngRoot::new(seed).stream("task");
    let mut tokens: Vec<u32> = (0..terminator).collect();
    tokens.shuffle(&mut rng);
    let mut positive = tokens[..positive_size].to_vec();
    let mut negative = tokens[positive_size..positive_size + negative_size].to_vec();
    let mut neutral = tokens[positive_size + negative_size..].to_vec();
    positive.sort_unstable();
    negative.sort_unstable();
    neutral.sort_unstable();
    sentiment_from_sets(&mut rng, vocab_size, positive, negative, neutral, max_response_len)
}

/// Sentiment task with caller-chosen sets; overlapping sets are rejected.
pub fn sentiment_task_with_sets(
    seed: u64,
    vocab_size: usize,
    positive: Vec<u32>,
    negative: Vec<u32>,
    max_response_len: usize,
) -> Result<TaskSpec> {
    let terminator = (vocab_size - 1) as u32;
    if positive.iter().any(|t| negative.contains(t)) {
        return Err(Error::invalid("positive and negative token sets overlap"));
    }
    if positive.iter().chain(&negative).any(|&t| t >= terminator) {
        return Err(Error::invalid("sentiment tokens must be non-terminator vocabulary ids"));
    }
    let neutral: Vec<u32> = (0..terminator).filter(|t| !positive.contains(t) && !negative.contains(t)).collect();
    if neutral.is_empty() || positive.is_empty() || negative.is_empty() {
        return Err(Error::invalid("sentiment sets must be non-empty and leave neutral tokens"));
    }
    let mut rng = RngRoot::new(seed).stream("task");
    sentiment_from_sets(&mut rng, vocab_size, positive, negative, neutral, max_response_len)
}

fn biased_review(rng: &mut StreamRng, favored: &[u32], opposed: &[u32], neutral: &[u32], max_len: usize, terminator: u32) -> Vec<u32> {
    let n = rng.gen_range(4.min(max_len - 1)..max_len);
    let mut out: Vec<u32> = (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            let pool = if u < 0.6 {
                favored
            } else if u < 0.7 {
                opposed
            } else {
                neutral
            };
            *pool.choose(rng).unwrap()
        })
        .collect();
    out.push(terminator);
    out
}

fn sentiment_from_sets(
    rng: &mut StreamRng,
    vocab_size: usize,
    positive: Vec<u32>,
    negative: Vec<u32>,
    neutral: Vec<u32>,
    max_response_len: usize,
) -> Result<TaskSpec> {
    let terminator = (vocab_size - 1) as u32;
    let mut task = TaskSpec {
        name: "sentiment".to_string(),
        vocab_size,
        terminator,
        max_response_len,
        kind: TaskKind::Sentiment { positive, negative, neutral },
        corpus: Vec::new(),
        expert: Vec::new(),
        pretrain: Vec::new(),
    };
    let TaskKind::Sentiment { positive, negative, neutral } = &task.kind else { unreachable!() };
    let mut corpus = Vec::with_capacity(CORPUS_SIZE);
    for i in 0..CORPUS_SIZE {
        let prompt = random_prompt(rng, neutral);
        let response = if i % 2 == 0 {
            biased_review(rng, positive, negative, neutral, max_response_len, terminator)
        } else {
            biased_review(rng, negative, positive, neutral, max_response_len, terminator)
        };
        corpus.push(Sequence::new(prompt, response));
    }
    let mut labeled = Vec::with_capacity(corpus.len());
    for s in corpus {
        let label = task.oracle(&s)?;
        labeled.push(Demonstration { sequence: s, label: Some(label) });
    }
    task.expert = labeled.iter().enumerate().filter(|(_, d)| d.label == Some(OracleLabel::Positive)).map(|(i, _)| i).collect();
    task.pretrain = labeled.iter().map(|d| d.sequence.clone()).collect();
    task.corpus = labeled;
    Ok(task)
}

impl TaskSpec {
    /// Task over a loaded demonstration corpus; demonstrations double as the
    /// pretraining corpus.
    pub fn from_corpus(name: &str, vocab_size: usize, max_response_len: usize, demos: Vec<Sequence>) -> Result<Self> {
        if demos.is_empty() {
            return Err(Error::invalid("corpus task needs at least one demonstration"));
        }
        let terminator = (vocab_size - 1) as u32;
        for d in &demos {
            if d.response.len() > max_response_len {
                return Err(Error::invalid("demonstration response longer than the response limit"));
            }
            if let Some(&t) = d.prompt.iter().chain(&d.response).find(|&&t| t as usize >= vocab_size) {
                return Err(Error::InvalidToken { token: t, vocab: vocab_size });
            }
        }
        Ok(TaskSpec {
            name: name.to_string(),
            vocab_size,
            terminator,
            max_response_len,
            kind: TaskKind::Corpus,
            expert: (0..demos.len()).collect(),
            pretrain: demos.clone(),
            corpus: demos.into_iter().map(|sequence| Demonstration { sequence, label: None }).collect(),
        })
    }

    pub fn corpus(&self) -> &[Demonstration] {
        &self.corpus
    }

    pub fn pretrain_corpus(&self) -> &[Sequence] {
        &self.pretrain
    }

    pub fn expert_demonstrations(&self) -> impl Iterator<Item = &Sequence> {
        self.expert.iter().map(|&i| &self.corpus[i].sequence)
    }

    pub fn sample_prompt(&self, rng: &mut StreamRng) -> Vec<u32> {
        match &self.kind {
            TaskKind::Form { .. } => {
                let content: Vec<u32> = (0..self.terminator).collect();
                random_prompt(rng, &content)
            }
            TaskKind::Sentiment { neutral, .. } => random_prompt(rng, neutral),
            TaskKind::Corpus => self.corpus.choose(rng).expect("non-empty corpus").sequence.prompt.clone(),
        }
    }

    /// Expert response for a prompt, when the task has a demonstrator.
    pub fn expert_response(&self, prompt: &[u32], rng: &mut StreamRng) -> Result<Sequence> {
        match &self.kind {
            TaskKind::Form { .. } => {
                let first = *prompt.first().ok_or_else(|| Error::invalid("empty prompt"))?;
                Ok(Sequence::new(prompt.to_vec(), alloc::vec![first, self.terminator]))
            }
            TaskKind::Sentiment { positive, negative, neutral } => loop {
                let r = biased_review(rng, positive, negative, neutral, self.max_response_len, self.terminator);
                let s = Sequence::new(prompt.to_vec(), r);
                if self.oracle(&s)? == OracleLabel::Positive {
                    return Ok(s);
                }
            },
            TaskKind::Corpus => Err(Error::invalid("corpus tasks have no demonstrator")),
        }
    }

    /// Draw one label-1 (prompt, response) pair for the discriminator.
    pub fn sample_demonstration(&self, rng: &mut StreamRng) -> Sequence {
        let i = *self.expert.choose(rng).expect("task has expert demonstrations");
        self.corpus[i].sequence.clone()
    }

    pub fn has_oracle(&self) -> bool {
        !matches!(self.kind, TaskKind::Corpus)
    }

    /// Programmatic label; total over valid sequences of oracle tasks.
    pub fn oracle(&self, seq: &Sequence) -> Result<OracleLabel> {
        match &self.kind {
            TaskKind::Form { k } => {
                let ok = seq.response.len() <= *k && seq.response.last() == Some(&self.terminator);
                Ok(if ok { OracleLabel::WellFormed } else { OracleLabel::IllFormed })
            }
            TaskKind::Sentiment { positive, negative, .. } => {
                let content = seq.content(Some(self.terminator));
                let p = content.iter().filter(|t| positive.contains(t)).count();
                let n = content.iter().filter(|t| negative.contains(t)).count();
                Ok(match p.cmp(&n) {
                    core::cmp::Ordering::Greater => OracleLabel::Positive,
                    core::cmp::Ordering::Less => OracleLabel::Negative,
                    core::cmp::Ordering::Equal => OracleLabel::Unclear,
                })
            }
            TaskKind::Corpus => Err(Error::invalid("corpus tasks have no oracle labeler")),
        }
    }
}

/// Outcome of parsing a demonstration corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusLoad {
    pub demonstrations: Vec<Sequence>,
    pub dropped: usize,
}

fn parse_ids(field: &str, line: usize) -> Result<Vec<u32>> {
    field
        .split(',')
        .map(|t| {
            t.parse::<u32>().map_err(|_| Error::Parse { line, message: format!("bad token id {t:?}") })
        })
        .collect()
}

/// Parse a corpus: one record per line, two whitespace-separated fields
/// (prompt, response), each a comma-separated list of token ids. Records
/// whose prompt has `max_prompt_tokens` or more tokens are dropped.
pub fn parse_corpus(text: &str, max_prompt_tokens: usize) -> Result<CorpusLoad> {
    let mut out = CorpusLoad { demonstrations: Vec::new(), dropped: 0 };
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::Parse { line: line_no, message: format!("expected 2 fields, found {}", fields.len()) });
        }
        let prompt = parse_ids(fields[0], line_no)?;
        let response = parse_ids(fields[1], line_no)?;
        if prompt.len() >= max_prompt_tokens {
            out.dropped += 1;
            continue;
        }
        out.demonstrations.push(Sequence::new(prompt, response));
    }
    Ok(out)
}

/// Inverse of [`parse_corpus`] for one record.
pub fn format_record(seq: &Sequence) -> String {
    let join = |ids: &[u32]| ids.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(",");
    format!("{} {}", join(&seq.prompt), join(&seq.response))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainReport {
    /// Mean per-token negative log-likelihood of each step's batch, before the step.
    pub batch_nll: Vec<f64>,
}

/// Mean per-token NLL of `seqs` under `gen`.
pub fn mean_token_nll(gen: &GenModel, seqs: &[Sequence]) -> Result<f64> {
    let mut total = 0.0;
    let mut tokens = 0usize;
    for s in seqs {
        total -= gen.log_prob(s)?;
        tokens += s.response.len();
    }
    Ok(total / tokens.max(1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { steps: 2000, lr: 0.01, batch_size: 8, optimizer: OptimizerKind::Adam }
    }
}

/// Maximum-likelihood (next-token cross-entropy) training on the task's
/// pretraining corpus.
pub fn pretrain_generator(gen: &mut GenModel, task: &TaskSpec, cfg: &PretrainConfig, rng: &mut StreamRng) -> Result<PretrainReport> {
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let corpus = task.pretrain_corpus();
    if corpus.is_empty() {
        return Err(Error::invalid("task has no pretraining corpus"));
    }
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.lr)?;
    let mut report = PretrainReport { batch_nll: Vec::with_capacity(cfg.steps) };
    for _ in 0..cfg.steps {
        let batch: Vec<&Sequence> = (0..cfg.batch_size).map(|_| corpus.choose(rng).unwrap()).collect();
        let mut g = Graph::new();
        let b = g.bind(gen.params());
        let mut terms = Vec::new();
        for s in &batch {
            terms.extend(gen.step_log_prob_vars(&mut g, &b, s)?);
        }
        let all = g.concat(&terms);
        let mean_lp = g.mean(all);
        report.batch_nll.push(-g.scalar(mean_lp));
        let grads = g.backward(mean_lp)?.take(&b);
        if !grads.is_finite() {
            return Err(Error::Divergence("non-finite pretraining gradient".into()));
        }
        optimizer.step(gen.params_mut(), &grads, true, MAX_PARAM_ABS)?;
    }
    Ok(report)
}
