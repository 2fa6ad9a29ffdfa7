use alloc::string::{String, ToString};

use super::graph::{Bound, Graph, Var};
use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDiffReport {
    pub max_rel_error: f64,
    /// Entry name and flat offset of the worst coordinate.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric derivative at the worst coordinate.
    pub worst_pair: (f64, f64),
    pub coordinates: usize,
}

/// Compare the tape gradient of `f` against central differences, coordinate
/// by coordinate. The relative error uses the denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
///
/// `f` builds a scalar on a fresh graph from the bound parameters; it must
/// be deterministic, which is verified by evaluating it twice.
pub fn finite_diff_check<F>(f: F, params: &ParamStore, h: f64) -> Result<FiniteDiffReport>
where
    F: Fn(&mut Graph, &Bound) -> Result<Var>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid("step h must be positive"));
    }
    let eval = |p: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let b = g.bind(p);
        let out = f(&mut g, &b)?;
        Ok(g.scalar(out))
    };
    let mut g = Graph::new();
    let b = g.bind(params);
    let out = f(&mut g, &b)?;
    let base = g.scalar(out);
    let analytic = g.backward(out)?.take(&b);
    if eval(params)?.to_bits() != base.to_bits() {
        return Err(Error::Contract("function is not deterministic in its parameters".into()));
    }

    let mut report = FiniteDiffReport { max_rel_error: 0.0, worst: None, worst_pair: (0.0, 0.0), coordinates: 0 };
    let mut probe = params.clone();
    for (entry, (name, t)) in params.entries().enumerate() {
        for offset in 0..t.len() {
            let x = t.values[offset];
            probe.set_value(entry, offset, x + h)?;
            let up = eval(&probe)?;
            probe.set_value(entry, offset, x - h)?;
            let down = eval(&probe)?;
            probe.set_value(entry, offset, x)?;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.entry(entry).values[offset];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            report.coordinates += 1;
            if rel > report.max_rel_error || rel.is_nan() {
                report.max_rel_error = rel;
                report.worst = Some((name.to_string(), offset));
                report.worst_pair = (a, numeric);
            }
        }
    }
    Ok(report)
}
