//! Sequence classifier whose sigmoid score is the probability that a
//! (prompt, response) pair is an expert demonstration.

use alloc::vec::Vec;

use rand::Rng;

use crate::diffcore::{sigmoid, Bound, GradStore, Graph, ParamStore, Var};
use crate::error::{Error, Result};
use crate::seqmodel::{init_store, Backbone, Cursor, GenModel, Input, ModelConfig, Sequence};

/// Guard on parameter magnitude shared by every trainer.
pub const MAX_PARAM_ABS: f64 = 1e6;

/// Items labeled 1 (expert demonstration) or 0 (generated).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    pub items: Vec<(Sequence, u8)>,
    /// Round in which generated items were produced, if any.
    pub origin: Option<usize>,
}

impl LabeledBatch {
    pub fn new(items: Vec<(Sequence, u8)>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::invalid("labeled batch is empty"));
        }
        if items.iter().any(|(_, l)| *l > 1) {
            return Err(Error::invalid("labels must be 0 or 1"));
        }
        Ok(Self { items, origin: None })
    }

    pub fn with_label(seqs: Vec<Sequence>, label: u8) -> Result<Self> {
        Self::new(seqs.into_iter().map(|s| (s, label)).collect())
    }

    pub fn with_origin(mut self, round: usize) -> Self {
        self.origin = Some(round);
        self
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscLosses {
    pub total: f64,
    pub real: f64,
    pub fake: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscModel {
    config: ModelConfig,
    params: ParamStore,
}

impl DiscModel {
    fn layout(config: &ModelConfig) -> Vec<(&'static str, Vec<usize>)> {
        let mut l = Backbone::layout(config);
        l.push(("head.w", alloc::vec![config.hidden_dim]));
        l.push(("head.b", alloc::vec![1]));
        l
    }

    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let params = init_store(&Self::layout(&config), Some(rng))?;
        Ok(Self { config, params })
    }

    /// Discriminator whose backbone is a copy of `gen`'s backbone, with a
    /// freshly initialized scoring head. Later updates to either model do not
    /// affect the other.
    pub fn from_generator<R: Rng + ?Sized>(gen: &GenModel, rng: &mut R) -> Result<Self> {
        let mut disc = Self::new(gen.config().clone(), rng)?;
        for i in 0..Backbone::num_entries(gen.config().architecture) {
            let values = gen.params().entry(i).values.clone();
            for (k, v) in values.into_iter().enumerate() {
                disc.params.set_value(i, k, v)?;
            }
        }
        Ok(disc)
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = init_store::<rand_chacha::ChaCha8Rng>(&Self::layout(&config), None)?;
        Ok(Self { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let expected = init_store::<rand_chacha::ChaCha8Rng>(&Self::layout(&config), None)?;
        if !expected.congruent(&params) {
            return Err(Error::Structural("parameters do not match the discriminator layout".into()));
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

    /// Score node for arbitrary backbone inputs. Hidden states at response
    /// positions are mean-pooled; the prompt only provides context. An
    /// empty response pools the last prompt state instead.
    pub fn score_inputs(&self, g: &mut Graph, b: &Bound, prompt: &[Input], response: &[Input]) -> Result<Var> {
        let backbone = Backbone::new(&self.config);
        let mut cursor = Cursor::default();
        let mut last = None;
        for &i in prompt {
            last = Some(backbone.push(g, b, &mut cursor, i)?);
        }
        let mut states = Vec::with_capacity(response.len());
        for &i in response {
            states.push(backbone.push(g, b, &mut cursor, i)?);
        }
        let n = Backbone::num_entries(self.config.architecture);
        let pooled = match (states.len(), last) {
            (0, None) => return Ok(g.pick(b.var(n + 1), 0)),
            (0, Some(h)) => h,
            (k, _) => {
                let s = g.add_n(&states);
                g.scale(s, 1.0 / k as f64)
            }
        };
        let d = g.dot(b.var(n), pooled);
        let bias = g.pick(b.var(n + 1), 0);
        Ok(g.add(d, bias))
    }

    pub fn score_var(&self, g: &mut Graph, b: &Bound, seq: &Sequence) -> Result<Var> {
        self.config.check_sequence(seq)?;
        let p: Vec<Input> = seq.prompt.iter().map(|&t| Input::Token(t)).collect();
        let r: Vec<Input> = seq.response.iter().map(|&t| Input::Token(t)).collect();
        self.score_inputs(g, b, &p, &r)
    }

    pub fn score(&self, seq: &Sequence) -> Result<f64> {
        let mut g = Graph::new();
        let b = g.bind(&self.params);
        let v = self.score_var(&mut g, &b, seq)?;
        Ok(g.scalar(v))
    }

    pub fn prob_real(&self, seq: &Sequence) -> Result<f64> {
        Ok(sigmoid(self.score(seq)?))
    }

    fn check_labels(batch: &LabeledBatch, label: u8, what: &str) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::invalid(alloc::format!("{what} batch is empty")));
        }
        if batch.items.iter().any(|(_, l)| *l != label) {
            return Err(Error::invalid(alloc::format!("{what} batch must be labeled {label}")));
        }
        Ok(())
    }

    /// Loss nodes `(total, real, fake)` on a graph.
    pub fn loss_vars(&self, g: &mut Graph, b: &Bound, real: &LabeledBatch, fake: &LabeledBatch) -> Result<(Var, Var, Var)> {
        Self::check_labels(real, 1, "real")?;
        Self::check_labels(fake, 0, "fake")?;
        let mean_bce = |g: &mut Graph, batch: &LabeledBatch| -> Result<Var> {
            let mut terms = Vec::with_capacity(batch.len());
            for (seq, label) in &batch.items {
                let s = self.score_var(g, b, seq)?;
                terms.push(g.bce(s, f64::from(*label)));
            }
            let c = g.concat(&terms);
            Ok(g.mean(c))
        };
        let lr = mean_bce(g, real)?;
        let lf = mean_bce(g, fake)?;
        let both = g.add(lr, lf);
        let total = g.scale(both, 0.5);
        Ok((total, lr, lf))
    }

    /// `loss_d_real` and `loss_d_fake` are mean BCE against labels 1 and 0;
    /// the total is their average.
    pub fn disc_loss(&self, real: &LabeledBatch, fake: &LabeledBatch) -> Result<DiscLosses> {
        let mut g = Graph::new();
        let b = g.bind(&self.params);
        let (t, r, f) = self.loss_vars(&mut g, &b, real, fake)?;
        Ok(DiscLosses { total: g.scalar(t), real: g.scalar(r), fake: g.scalar(f) })
    }

    pub fn loss_gradient(&self, real: &LabeledBatch, fake: &LabeledBatch) -> Result<(DiscLosses, GradStore)> {
        let mut g = Graph::new();
        let b = g.bind(&self.params);
        let (t, r, f) = self.loss_vars(&mut g, &b, real, fake)?;
        let losses = DiscLosses { total: g.scalar(t), real: g.scalar(r), fake: g.scalar(f) };
        let grads = g.backward(t)?.take(&b);
        Ok((losses, grads))
    }

    /// One gradient-descent step on the total loss. Fake items are plain
    /// token sequences, so nothing links this update to generator
    /// parameters. Returns the losses measured before the step.
    pub fn disc_update(&mut self, real: &LabeledBatch, fake: &LabeledBatch, lr: f64) -> Result<DiscLosses> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        let (losses, grads) = self.loss_gradient(real, fake)?;
        if !grads.is_finite() {
            return Err(Error::Divergence("non-finite discriminator gradient".into()));
        }
        if lr > 0.0 {
            self.params.apply_step(&grads, -lr, MAX_PARAM_ABS)?;
        }
        Ok(losses)
    }

    /// Share of items whose prediction `σ(score) > 0.5` matches the label.
    pub fn accuracy(&self, batch: &LabeledBatch) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::invalid("labeled batch is empty"));
        }
        let mut hits = 0usize;
        for (seq, label) in &batch.items {
            let predicted = u8::from(sigmoid(self.score(seq)?) > 0.5);
            hits += usize::from(predicted == *label);
        }
        Ok(hits as f64 / batch.len() as f64)
    }
}
