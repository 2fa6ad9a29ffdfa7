//! Scalar/vector kernels shared by the tape and by code that needs plain
//! values without recording a graph.

use alloc::vec::Vec;

use crate::error::{Error, Result};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn check_logits(logits: &[f64]) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::invalid("empty logit vector"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite logit"));
    }
    Ok(())
}

pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    check_logits(logits)?;
    Ok(softmax_unchecked(logits))
}

pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    check_logits(logits)?;
    Ok(log_softmax_unchecked(logits))
}

pub(crate) fn softmax_unchecked(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&x| libm::exp(x - max)).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

pub(crate) fn log_softmax_unchecked(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(logits.iter().map(|&x| libm::exp(x - max)).sum::<f64>());
    logits.iter().map(|&x| x - lse).collect()
}

/// Binary cross-entropy on a logit, in the overflow-free form
/// `max(s, 0) - s*y + ln(1 + e^{-|s|})`.
pub fn bce_with_logits(score: f64, label: u8) -> Result<f64> {
    if !score.is_finite() {
        return Err(Error::invalid("non-finite score"));
    }
    if label > 1 {
        return Err(Error::invalid("label must be 0 or 1"));
    }
    Ok(bce_unchecked(score, f64::from(label)))
}

pub(crate) fn bce_unchecked(score: f64, label: f64) -> f64 {
    let pos = if score > 0.0 { score } else { 0.0 };
    (pos - score * label) + libm::log1p(libm::exp(-libm::fabs(score)))
}
