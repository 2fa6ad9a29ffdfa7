use serde::{Deserialize, Serialize};

use super::{GradStore, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

/// First-order update rule with its running state.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    moments: Option<(GradStore, GradStore)>,
    t: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Result<Self> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        Ok(Self { kind, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, moments: None, t: 0 })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    /// Move `params` along `grads` (ascent) or against them (descent).
    /// Nothing changes when lr is 0 or the resulting values fail the guard.
    pub fn step(&mut self, params: &mut ParamStore, grads: &GradStore, ascend: bool, max_abs: f64) -> Result<()> {
        if !params.congruent_grads(grads) {
            return Err(Error::Structural("gradient store is not congruent with parameters".into()));
        }
        if self.lr == 0.0 {
            return Ok(());
        }
        let sign = if ascend { 1.0 } else { -1.0 };
        match self.kind {
            OptimizerKind::Sgd => params.apply_step(grads, sign * self.lr, max_abs),
            OptimizerKind::Adam => {
                let (mut m, mut v) = self
                    .moments
                    .clone()
                    .unwrap_or_else(|| (GradStore::zeros_like(params), GradStore::zeros_like(params)));
                let t = self.t + 1;
                let c1 = 1.0 - libm::pow(self.beta1, f64::from(t));
                let c2 = 1.0 - libm::pow(self.beta2, f64::from(t));
                let mut delta = GradStore::zeros_like(params);
                for i in 0..params.len() {
                    let g = &grads.entry(i).values;
                    let (mi, vi) = (&mut m.entry_mut(i).values, &mut v.entry_mut(i).values);
                    let d = &mut delta.entry_mut(i).values;
                    for k in 0..g.len() {
                        mi[k] = self.beta1 * mi[k] + (1.0 - self.beta1) * g[k];
                        vi[k] = self.beta2 * vi[k] + (1.0 - self.beta2) * g[k] * g[k];
                        d[k] = (mi[k] / c1) / (libm::sqrt(vi[k] / c2) + self.eps);
                    }
                }
                params.apply_step(&delta, sign * self.lr, max_abs)?;
                self.moments = Some((m, v));
                self.t = t;
                Ok(())
            }
        }
    }
}
