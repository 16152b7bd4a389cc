//! Incremental moment matching: merging per-task parameter snapshots.

use rand::seq::SliceRandom;

use crate::autodiff::{Feed, GraphBuilder, ParamSet, Tensor};
use crate::data::{Dataset, ExampleId};
use crate::error::{Error, Result};
use crate::fact::FactId;
use crate::model::{score_coefficients, EmbedModel};
use crate::rng::StreamRng;

pub const IMM_EPS: f64 = 1e-8;

/// Parameters after one task, with an optional diagonal Fisher.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub task: usize,
    pub params: ParamSet,
    pub fisher: Option<ParamSet>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MergeMode {
    /// First moment: weighted average.
    Mean,
    /// Second moment: Fisher-weighted average.
    Mode,
}

pub fn uniform_alpha(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Merges checkpoints with mixing weights `alpha` (positive, summing to one).
pub fn imm_merge(checkpoints: &[Checkpoint], mode: MergeMode, alpha: &[f64]) -> Result<ParamSet> {
    if checkpoints.len() < 2 {
        return Err(Error::invalid("IMM needs at least two checkpoints"));
    }
    if alpha.len() != checkpoints.len() {
        return Err(Error::invalid(format!(
            "{} weights for {} checkpoints",
            alpha.len(),
            checkpoints.len()
        )));
    }
    if alpha.iter().any(|&a| a.is_nan() || a <= 0.0) || (alpha.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("IMM weights must be positive and sum to one"));
    }
    let first = &checkpoints[0].params;
    for c in &checkpoints[1..] {
        first.check_aligned(&c.params)?;
    }
    match mode {
        MergeMode::Mean => {
            let mut acc = first.map(|v| v * alpha[0]);
            for (c, &a) in checkpoints[1..].iter().zip(&alpha[1..]) {
                acc = acc.zip_map(&c.params, |s, v| s + a * v)?;
            }
            Ok(acc)
        }
        MergeMode::Mode => {
            let mut num = first.zeros_like();
            let mut den = first.zeros_like();
            for (c, &a) in checkpoints.iter().zip(alpha) {
                let fisher = c
                    .fisher
                    .as_ref()
                    .ok_or_else(|| Error::invalid(format!("checkpoint {} has no Fisher", c.task)))?;
                first.check_aligned(fisher)?;
                let weighted = fisher.zip_map(&c.params, |f, v| a * f * v)?;
                num = num.zip_map(&weighted, |s, w| s + w)?;
                den = den.zip_map(fisher, |s, f| s + a * f)?;
            }
            num.zip_map(&den, |n, d| n / (d + IMM_EPS))
        }
    }
}

/// Diagonal empirical Fisher: mean over at most `max_samples` training
/// examples of the squared gradient of `−log p(gold | x)`, where `p` is the
/// softmax of the scores over `label_set`.
pub fn diagonal_fisher(
    params: &ParamSet,
    dataset: &Dataset,
    train_ids: &[ExampleId],
    label_set: &[FactId],
    max_samples: usize,
    rng: &mut StreamRng,
) -> Result<ParamSet> {
    if train_ids.is_empty() {
        return Err(Error::invalid("Fisher estimate needs training data"));
    }
    let width = dataset.embed_dim() * 3;
    let coef: Vec<Vec<f64>> = label_set
        .iter()
        .map(|&f| Ok(score_coefficients(dataset.label(f)?)))
        .collect::<Result<_>>()?;
    let mut coef_t = vec![0.0; width * label_set.len()];
    for (j, c) in coef.iter().enumerate() {
        for (i, v) in c.iter().enumerate() {
            coef_t[i * label_set.len() + j] = *v;
        }
    }
    let coef_t = Tensor::matrix(width, label_set.len(), coef_t)?;

    let mut b = GraphBuilder::new();
    let x = b.input("x");
    let nodes = EmbedModel::build(&mut b, x);
    let c = b.input("coef_t");
    let scores = b.matmul(nodes.output, c);
    // With `w = softmax(scores) − onehot(gold)` held fixed, the gradient of
    // `Σ w·scores` equals the gradient of the negative log-likelihood.
    let w = b.input("w");
    let ws = b.mul(scores, w);
    let out = b.sum(ws);
    let graph = b.build();

    let mut ids = train_ids.to_vec();
    ids.shuffle(rng);
    ids.truncate(max_samples.max(1));
    let mut acc = params.zeros_like();
    let zeros = Tensor::zeros(&[1, label_set.len()]);
    for id in &ids {
        let e = dataset.example(*id)?;
        let gold = label_set
            .iter()
            .position(|&f| f == e.fact_id)
            .ok_or_else(|| Error::invalid(format!("gold fact {} outside the label set", e.fact_id)))?;
        let xt = Tensor::matrix(1, e.features.len(), e.features.clone())?;
        let feed = Feed::new().with("x", &xt).with("coef_t", &coef_t).with("w", &zeros);
        let s = graph.forward(params, &feed)?.take(scores).into_data();
        let top = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = s.iter().map(|v| (v - top).exp()).collect();
        let z: f64 = exp.iter().sum();
        let mut wv: Vec<f64> = exp.iter().map(|v| v / z).collect();
        wv[gold] -= 1.0;
        let wt = Tensor::matrix(1, wv.len(), wv)?;
        let feed = Feed::new().with("x", &xt).with("coef_t", &coef_t).with("w", &wt);
        let (_, g) = graph.backward(params, &feed, out)?;
        acc = acc.zip_map(&g, |a, g| a + g * g)?;
    }
    let n = ids.len() as f64;
    Ok(acc.map(|v| v / n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ckpt(task: usize, vals: &[f64], fisher: Option<&[f64]>) -> Checkpoint {
        let set = |v: &[f64]| -> ParamSet {
            [("w".to_string(), Tensor::vector(v.to_vec()).unwrap())].into_iter().collect()
        };
        Checkpoint {
            task,
            params: set(vals),
            fisher: fisher.map(set),
        }
    }

    #[test]
    fn mean_merge_is_average() {
        let a = ckpt(1, &[1.0, 2.0, -3.0], None);
        let b = ckpt(2, &[3.0, 0.0, 1.0], None);
        let m = imm_merge(&[a, b], MergeMode::Mean, &[0.5, 0.5]).unwrap();
        assert_eq!(m.get("w").unwrap().data(), &[2.0, 1.0, -1.0]);
    }

    #[test]
    fn identical_checkpoints_are_a_fixed_point() {
        let vals = [0.25, -1.5, 4.0];
        let fisher = [1.0, 0.5, 2.0];
        let cs = vec![ckpt(1, &vals, Some(&fisher)), ckpt(2, &vals, Some(&fisher))];
        let mean = imm_merge(&cs, MergeMode::Mean, &[0.5, 0.5]).unwrap();
        assert_eq!(mean.get("w").unwrap().data(), &vals);
        let mode = imm_merge(&cs, MergeMode::Mode, &[0.5, 0.5]).unwrap();
        for (m, v) in mode.get("w").unwrap().data().iter().zip(vals) {
            assert!((m - v).abs() < 1e-7);
        }
    }

    #[test]
    fn mode_requires_fisher_and_valid_alpha() {
        let a = ckpt(1, &[1.0], None);
        let b = ckpt(2, &[2.0], None);
        assert!(imm_merge(&[a.clone(), b.clone()], MergeMode::Mode, &[0.5, 0.5]).is_err());
        assert!(imm_merge(&[a.clone(), b.clone()], MergeMode::Mean, &[0.7, 0.7]).is_err());
        assert!(imm_merge(&[a.clone(), b.clone()], MergeMode::Mean, &[1.0, 0.0]).is_err());
        assert!(imm_merge(&[a], MergeMode::Mean, &[1.0]).is_err());
    }
}
