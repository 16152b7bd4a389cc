//! Per-parameter importance estimates.

use crate::autodiff::{Feed, GraphBuilder, ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::model::EmbedModel;

/// Memory Aware Synapses: mean over inputs of `|∂(½‖φ_raw(x)‖²)/∂θᵢ|`, where
/// `φ_raw` is the embedding before block normalization. Needs no labels.
pub fn mas_importance(model: &EmbedModel, inputs: &[&[f64]]) -> Result<ParamSet> {
    if inputs.is_empty() {
        return Err(Error::invalid("MAS needs at least one input"));
    }
    let mut b = GraphBuilder::new();
    let x = b.input("x");
    let nodes = EmbedModel::build(&mut b, x);
    let sq = b.sum_squares(nodes.raw);
    let out = b.scale(sq, 0.5);
    let g = b.build();

    let mut acc = model.params().zeros_like();
    for row in inputs {
        let xt = Tensor::matrix(1, row.len(), row.to_vec())?;
        let (_, grads) = g.backward(model.params(), &Feed::new().with("x", &xt), out)?;
        acc = acc.zip_map(&grads, |a, g| a + g.abs())?;
    }
    let n = inputs.len() as f64;
    Ok(acc.map(|v| v / n))
}

/// Synaptic Intelligence running path integral: `w ← w − g·Δθ`.
pub fn si_step_accumulate(acc: &ParamSet, grad: &ParamSet, delta: &ParamSet) -> Result<ParamSet> {
    let step = grad.zip_map(delta, |g, d| -g * d)?;
    acc.zip_map(&step, |a, s| a + s)
}

/// Importance contribution at the end of a task: `max(0, w) / ((θ_end − θ_start)² + ξ)`.
pub fn si_consolidate(path: &ParamSet, end: &ParamSet, start: &ParamSet, xi: f64) -> Result<ParamSet> {
    if xi.is_nan() || xi <= 0.0 {
        return Err(Error::invalid(format!("xi must be positive, got {xi}")));
    }
    let drift = end.zip_map(start, |e, s| (e - s) * (e - s) + xi)?;
    path.zip_map(&drift, |w, d| w.max(0.0) / d)
}
