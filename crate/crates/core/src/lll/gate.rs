//! Expert gating: one undercomplete autoencoder per task picks the expert
//! whose training distribution best reconstructs an input.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::autodiff::{Feed, Graph, GraphBuilder, NodeId, ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::model::{EmbedConfig, EmbedModel, Embedder};
use crate::rng::StreamRng;

/// `x → sigmoid(x·W_enc + b_enc) → ·W_dec + b_dec`, hidden width half the input.
#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder {
    params: ParamSet,
}

fn ae_graph() -> (Graph, NodeId, NodeId) {
    let mut b = GraphBuilder::new();
    let x = b.input("x");
    let h = b.linear(x, "enc_w", "enc_b");
    let h = b.sigmoid(h);
    let recon = b.linear(h, "dec_w", "dec_b");
    let diff = b.sub(recon, x);
    let sq = b.sum_squares(diff);
    let w = b.input("inv_batch");
    let mean = b.mul(sq, w);
    (b.build(), recon, mean)
}

impl Autoencoder {
    pub fn init(input_dim: usize, rng: &mut StreamRng) -> Self {
        let hidden = (input_dim / 2).max(1);
        let mut glorot = |rows: usize, cols: usize| {
            let a = (6.0 / (rows + cols) as f64).sqrt();
            Tensor::from_parts(vec![rows, cols], (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect())
        };
        let enc_w = glorot(input_dim, hidden);
        let dec_w = glorot(hidden, input_dim);
        let params = [
            ("enc_w", enc_w),
            ("enc_b", Tensor::zeros(&[hidden])),
            ("dec_w", dec_w),
            ("dec_b", Tensor::zeros(&[input_dim])),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Autoencoder { params }
    }

    pub fn from_params(params: ParamSet) -> Result<Self> {
        for name in ["enc_w", "enc_b", "dec_w", "dec_b"] {
            if !params.contains(name) {
                return Err(Error::MissingParam(name.to_string()));
            }
        }
        Ok(Autoencoder { params })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn input_dim(&self) -> usize {
        self.params.get("dec_b").unwrap().len()
    }

    /// Minibatch SGD on mean squared reconstruction error.
    pub fn train(
        mut self,
        inputs: &[&[f64]],
        epochs: usize,
        lr: f64,
        batch: usize,
        rng: &mut StreamRng,
    ) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::invalid("autoencoder needs training inputs"));
        }
        let (graph, _, loss) = ae_graph();
        let dim = self.input_dim();
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        for _ in 0..epochs {
            order.shuffle(rng);
            for chunk in order.chunks(batch.max(1)) {
                let mut data = Vec::with_capacity(chunk.len() * dim);
                for &i in chunk {
                    data.extend_from_slice(inputs[i]);
                }
                let x = Tensor::matrix(chunk.len(), dim, data)?;
                let w = Tensor::scalar(1.0 / chunk.len() as f64);
                let feed = Feed::new().with("x", &x).with("inv_batch", &w);
                let (_, g) = graph.backward(&self.params, &feed, loss)?;
                self.params = self.params.sgd_step(&g, lr)?;
            }
        }
        Ok(self)
    }

    /// `‖x − AE(x)‖²` for each input.
    pub fn reconstruction_errors(&self, inputs: &[&[f64]]) -> Result<Vec<f64>> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let (graph, recon, _) = ae_graph();
        let dim = self.input_dim();
        let mut data = Vec::with_capacity(inputs.len() * dim);
        for r in inputs {
            if r.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        let x = Tensor::matrix(inputs.len(), dim, data)?;
        let w = Tensor::scalar(1.0);
        let vals = graph.forward(&self.params, &Feed::new().with("x", &x).with("inv_batch", &w))?;
        let r = vals.get(recon);
        Ok((0..inputs.len())
            .map(|i| {
                r.row(i)
                    .iter()
                    .zip(inputs[i])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum()
            })
            .collect())
    }
}

/// Experts and their gates, one pair per completed task.
#[derive(Clone, Debug, PartialEq)]
pub struct GateModel {
    config: EmbedConfig,
    experts: Vec<ParamSet>,
    autoencoders: Vec<Autoencoder>,
}

impl GateModel {
    pub fn new(config: EmbedConfig) -> Self {
        GateModel {
            config,
            experts: Vec::new(),
            autoencoders: Vec::new(),
        }
    }

    pub fn push(&mut self, expert: ParamSet, autoencoder: Autoencoder) -> Result<()> {
        EmbedModel::from_params(self.config, expert.clone())?;
        self.experts.push(expert);
        self.autoencoders.push(autoencoder);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.experts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }

    pub fn config(&self) -> EmbedConfig {
        self.config
    }

    pub fn experts(&self) -> &[ParamSet] {
        &self.experts
    }

    pub fn autoencoders(&self) -> &[Autoencoder] {
        &self.autoencoders
    }

    pub fn expert(&self, i: usize) -> Result<EmbedModel> {
        EmbedModel::from_params(self.config, self.experts[i].clone())
    }

    /// Index of the autoencoder with the lowest reconstruction error; ties go low.
    pub fn gate_select(&self, features: &[f64]) -> Result<usize> {
        if self.is_empty() {
            return Err(Error::invalid("gate has no experts"));
        }
        let mut best = (f64::INFINITY, 0);
        for (i, ae) in self.autoencoders.iter().enumerate() {
            let e = ae.reconstruction_errors(&[features])?[0];
            if e < best.0 {
                best = (e, i);
            }
        }
        Ok(best.1)
    }

    /// Expert whose autoencoder has the lowest mean error over `inputs`.
    pub fn most_related(&self, inputs: &[&[f64]]) -> Result<usize> {
        if self.is_empty() {
            return Err(Error::invalid("gate has no experts"));
        }
        let mut best = (f64::INFINITY, 0);
        for (i, ae) in self.autoencoders.iter().enumerate() {
            let errs = ae.reconstruction_errors(inputs)?;
            let mean = errs.iter().sum::<f64>() / errs.len().max(1) as f64;
            if mean < best.0 {
                best = (mean, i);
            }
        }
        Ok(best.1)
    }
}

impl Embedder for GateModel {
    fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    fn embed_batch(&self, rows: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let choice = rows
            .iter()
            .map(|r| self.gate_select(r))
            .collect::<Result<Vec<_>>>()?;
        let mut out = vec![Vec::new(); rows.len()];
        for e in 0..self.len() {
            let idx: Vec<usize> = (0..rows.len()).filter(|&i| choice[i] == e).collect();
            if idx.is_empty() {
                continue;
            }
            let sub: Vec<&[f64]> = idx.iter().map(|&i| rows[i]).collect();
            let emb = self.expert(e)?.embed_batch(&sub)?;
            for (i, v) in idx.into_iter().zip(emb) {
                out[i] = v;
            }
        }
        Ok(out)
    }
}
