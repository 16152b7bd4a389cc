//! Joint visual-semantic embedding: `f_y(x) = s(φ(x), ψ(y))`.
//!
//! `φ` is a one-hidden-layer tanh network on precomputed features whose
//! output is split into three blocks, each scaled to unit length. `ψ` is the
//! frozen label embedding from [`crate::fact`]. `s` is the masked cosine: the
//! mean of the block dot products over the label's defined slots.

use rand::Rng;

use crate::autodiff::{Feed, Graph, GraphBuilder, NodeId, ParamSet, Tensor};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fact::{FactId, FactVector, Slot};
use crate::rng::StreamRng;

pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_MARGIN: f64 = 0.1;
pub const DEFAULT_K_NEG: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmbedConfig {
    pub input_dim: usize,
    pub hidden: usize,
    /// Word-vector dimension `d`; the output is `3·d` wide.
    pub embed_dim: usize,
}

impl EmbedConfig {
    pub fn output_dim(&self) -> usize {
        3 * self.embed_dim
    }
}

/// Anything that maps a feature vector to a `3·d` visual embedding.
pub trait Embedder: Sync {
    fn output_dim(&self) -> usize;

    fn embed_batch(&self, rows: &[&[f64]]) -> Result<Vec<Vec<f64>>>;

    fn embed(&self, features: &[f64]) -> Result<Vec<f64>> {
        Ok(self.embed_batch(&[features])?.pop().unwrap())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbedModel {
    config: EmbedConfig,
    params: ParamSet,
}

/// Nodes produced by [`EmbedModel::build`].
#[derive(Clone, Copy, Debug)]
pub struct EmbedNodes {
    /// Output before block normalization.
    pub raw: NodeId,
    pub output: NodeId,
}

impl EmbedModel {
    /// Glorot-uniform weights, zero biases.
    pub fn init(config: EmbedConfig, rng: &mut StreamRng) -> Self {
        let mut glorot = |rows: usize, cols: usize| {
            let a = (6.0 / (rows + cols) as f64).sqrt();
            let data = (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect();
            Tensor::from_parts(vec![rows, cols], data)
        };
        let w1 = glorot(config.input_dim, config.hidden);
        let w2 = glorot(config.hidden, config.output_dim());
        let params = [
            ("w1", w1),
            ("b1", Tensor::zeros(&[config.hidden])),
            ("w2", w2),
            ("b2", Tensor::zeros(&[config.output_dim()])),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        EmbedModel { config, params }
    }

    pub fn from_params(config: EmbedConfig, params: ParamSet) -> Result<Self> {
        let expect: [(&str, Vec<usize>); 4] = [
            ("w1", vec![config.input_dim, config.hidden]),
            ("b1", vec![config.hidden]),
            ("w2", vec![config.hidden, config.output_dim()]),
            ("b2", vec![config.output_dim()]),
        ];
        if params.len() != expect.len() {
            return Err(Error::ParamMismatch(format!("expected 4 tensors, got {}", params.len())));
        }
        for ((name, shape), (got_name, got)) in expect.iter().zip(params.iter()) {
            if *name != got_name || got.shape() != shape.as_slice() {
                return Err(Error::ParamMismatch(format!(
                    "expected `{name}` {shape:?}, got `{got_name}` {:?}",
                    got.shape()
                )));
            }
        }
        Ok(EmbedModel { config, params })
    }

    pub fn config(&self) -> EmbedConfig {
        self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn into_params(self) -> ParamSet {
        self.params
    }

    pub fn with_params(&self, params: ParamSet) -> Result<Self> {
        EmbedModel::from_params(self.config, params)
    }

    /// Adds `φ` to a graph reading features from `x`.
    pub fn build(b: &mut GraphBuilder, x: NodeId) -> EmbedNodes {
        let h = b.linear(x, "w1", "b1");
        let h = b.tanh(h);
        let raw = b.linear(h, "w2", "b2");
        let output = b.l2_normalize(raw, 3);
        EmbedNodes { raw, output }
    }

    fn batch_tensor(&self, rows: &[&[f64]]) -> Result<Tensor> {
        if rows.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let mut data = Vec::with_capacity(rows.len() * self.config.input_dim);
        for r in rows {
            if r.len() != self.config.input_dim {
                return Err(Error::Dimension {
                    expected: self.config.input_dim,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Tensor::matrix(rows.len(), self.config.input_dim, data)
    }

    /// `φ(x)` for a single feature vector: three unit blocks.
    pub fn visual_embed(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.embed(features)
    }
}

impl Embedder for EmbedModel {
    fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    fn embed_batch(&self, rows: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let x = self.batch_tensor(rows)?;
        let mut b = GraphBuilder::new();
        let xn = b.input("x");
        let nodes = EmbedModel::build(&mut b, xn);
        let g = b.build();
        let vals = g.forward(&self.params, &Feed::new().with("x", &x))?;
        let out = vals.get(nodes.output);
        Ok((0..rows.len()).map(|i| out.row(i).to_vec()).collect())
    }
}

/// Masked cosine: mean of block dot products over the label's defined slots.
pub fn score(visual: &[f64], label: &FactVector) -> Result<f64> {
    if visual.len() != label.as_slice().len() {
        return Err(Error::Dimension {
            expected: label.as_slice().len(),
            found: visual.len(),
        });
    }
    let defined = label.defined_count();
    if defined == 0 {
        return Err(Error::invalid("label has no defined slot"));
    }
    let d = label.dim();
    let total: f64 = Slot::ALL
        .iter()
        .filter(|&&s| label.is_defined(s))
        .map(|&s| {
            let l = s as usize;
            visual[l * d..(l + 1) * d]
                .iter()
                .zip(label.block(s))
                .map(|(a, b)| a * b)
                .sum::<f64>()
        })
        .sum();
    Ok(total / defined as f64)
}

/// Label vector pre-divided by its defined-slot count, so `visual · coef` is the score.
pub fn score_coefficients(label: &FactVector) -> Vec<f64> {
    let k = label.defined_count().max(1) as f64;
    label.as_slice().iter().map(|v| v / k).collect()
}

/// Candidates ordered by descending score, ties by ascending fact id.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredCandidates {
    pub ranked: Vec<(FactId, f64)>,
}

impl ScoredCandidates {
    pub fn from_scores(mut scores: Vec<(FactId, f64)>) -> Self {
        scores.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ScoredCandidates { ranked: scores }
    }

    pub fn ids(&self) -> Vec<FactId> {
        self.ranked.iter().map(|r| r.0).collect()
    }

    pub fn truncate(mut self, k: usize) -> Self {
        self.ranked.truncate(k);
        self
    }
}

/// Top-`k` candidates for one input.
pub fn predict_topk(
    model: &dyn Embedder,
    features: &[f64],
    candidates: &[FactId],
    dataset: &Dataset,
    k: usize,
) -> Result<ScoredCandidates> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if candidates.is_empty() {
        return Err(Error::invalid("no candidates"));
    }
    let visual = model.embed(features)?;
    let scores = candidates
        .iter()
        .map(|&c| Ok((c, score(&visual, dataset.label(c)?)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoredCandidates::from_scores(scores).truncate(k))
}

/// Margin ranking loss over sampled negatives, differentiable through `φ` only:
/// mean over examples and negatives of `max(0, margin − s(x, y⁺) + s(x, y⁻))`.
#[derive(Clone, Debug)]
pub struct RankingLoss {
    graph: Graph,
    loss: NodeId,
    embed: EmbedNodes,
    margin: f64,
    neg_names: Vec<String>,
}

/// Bound inputs for one minibatch.
#[derive(Clone, Debug)]
pub struct RankingBatch {
    pub x: Tensor,
    pub gold: Tensor,
    pub negatives: Vec<Tensor>,
    pub weight: Tensor,
}

impl RankingLoss {
    pub fn new(margin: f64, k_neg: usize) -> Result<Self> {
        if k_neg == 0 {
            return Err(Error::invalid("k_neg must be at least 1"));
        }
        if margin.is_nan() || margin < 0.0 {
            return Err(Error::invalid("margin must be non-negative"));
        }
        let mut b = GraphBuilder::new();
        let x = b.input("x");
        let embed = EmbedModel::build(&mut b, x);
        let gold = b.input("gold");
        let gm = b.mul(embed.output, gold);
        let s_gold = b.row_sum(gm);
        let neg_names: Vec<String> = (0..k_neg).map(|j| format!("neg{j}")).collect();
        let mut total: Option<NodeId> = None;
        for name in &neg_names {
            let neg = b.input(name);
            let nm = b.mul(embed.output, neg);
            let s_neg = b.row_sum(nm);
            let diff = b.sub(s_neg, s_gold);
            let pre = b.add_scalar(diff, margin);
            let hinge = b.relu(pre);
            total = Some(match total {
                None => hinge,
                Some(t) => b.add(t, hinge),
            });
        }
        let w = b.input("weight");
        let weighted = b.mul(total.unwrap(), w);
        let loss = b.sum(weighted);
        Ok(RankingLoss {
            graph: b.build(),
            loss,
            embed,
            margin,
            neg_names,
        })
    }

    pub fn k_neg(&self) -> usize {
        self.neg_names.len()
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn loss_node(&self) -> NodeId {
        self.loss
    }

    pub fn embed_nodes(&self) -> EmbedNodes {
        self.embed
    }

    pub fn feed<'a>(&'a self, batch: &'a RankingBatch) -> Feed<'a> {
        let mut f = Feed::new()
            .with("x", &batch.x)
            .with("gold", &batch.gold)
            .with("weight", &batch.weight);
        for (name, t) in self.neg_names.iter().zip(&batch.negatives) {
            f.bind(name, t);
        }
        f
    }

    /// Assembles a batch with explicitly chosen negatives (`negatives[i][j]`).
    pub fn batch_with_negatives(
        &self,
        dataset: &Dataset,
        items: &[(&[f64], FactId)],
        negatives: &[Vec<FactId>],
    ) -> Result<RankingBatch> {
        if items.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let k = self.k_neg();
        let rows = items.len();
        let feat_dim = items[0].0.len();
        let width = dataset.label(items[0].1)?.as_slice().len();
        let mut x = Vec::with_capacity(rows * feat_dim);
        let mut gold = Vec::with_capacity(rows * width);
        let mut negs = vec![Vec::with_capacity(rows * width); k];
        for ((features, fact), row_negs) in items.iter().zip(negatives) {
            if features.len() != feat_dim {
                return Err(Error::Dimension {
                    expected: feat_dim,
                    found: features.len(),
                });
            }
            if row_negs.len() != k {
                return Err(Error::invalid(format!("expected {k} negatives per example")));
            }
            x.extend_from_slice(features);
            gold.extend(score_coefficients(dataset.label(*fact)?));
            for (j, n) in row_negs.iter().enumerate() {
                negs[j].extend(score_coefficients(dataset.label(*n)?));
            }
        }
        let weight = 1.0 / (rows * k) as f64;
        Ok(RankingBatch {
            x: Tensor::matrix(rows, feat_dim, x)?,
            gold: Tensor::matrix(rows, width, gold)?,
            negatives: negs
                .into_iter()
                .map(|n| Tensor::matrix(rows, width, n))
                .collect::<Result<_>>()?,
            weight: Tensor::filled(&[rows, 1], weight),
        })
    }

    /// Draws `k_neg` negatives per example uniformly (with replacement) from
    /// `label_set` minus the example's gold fact.
    pub fn sample_batch(
        &self,
        dataset: &Dataset,
        items: &[(&[f64], FactId)],
        label_set: &[FactId],
        rng: &mut StreamRng,
    ) -> Result<RankingBatch> {
        let negatives = items
            .iter()
            .map(|&(_, gold)| sample_negatives(label_set, gold, self.k_neg(), rng))
            .collect::<Result<Vec<_>>>()?;
        self.batch_with_negatives(dataset, items, &negatives)
    }

    /// Loss value and parameter gradients.
    pub fn value_and_grad(&self, params: &ParamSet, batch: &RankingBatch) -> Result<(f64, ParamSet)> {
        self.graph.backward(params, &self.feed(batch), self.loss)
    }

    pub fn value(&self, params: &ParamSet, batch: &RankingBatch) -> Result<f64> {
        Ok(self.graph.forward(params, &self.feed(batch))?.get(self.loss).item())
    }
}

/// Uniform draws from `label_set \ {gold}`.
pub fn sample_negatives(
    label_set: &[FactId],
    gold: FactId,
    k: usize,
    rng: &mut StreamRng,
) -> Result<Vec<FactId>> {
    let pool: Vec<FactId> = label_set.iter().copied().filter(|&f| f != gold).collect();
    if pool.is_empty() {
        return Err(Error::invalid(format!("no negatives available for fact {gold}")));
    }
    Ok((0..k).map(|_| pool[rng.gen_range(0..pool.len())]).collect())
}
