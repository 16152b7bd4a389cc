//! Sequential training over tasks under several forgetting-mitigation strategies.
//!
//! Every strategy shares one embedding network. They differ in the penalty
//! added to the ranking loss, in what happens after each task, and in which
//! parameters answer queries after task `n`.

mod gate;
mod imm;
mod importance;
mod penalty;

pub use gate::{Autoencoder, GateModel};
pub use imm::{diagonal_fisher, imm_merge, uniform_alpha, Checkpoint, MergeMode, IMM_EPS};
pub use importance::{mas_importance, si_consolidate, si_step_accumulate};
pub use penalty::{reg_penalty, reg_penalty_grad, RegPenalty};


use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::autodiff::{ParamSet, Tensor};
use crate::data::{Dataset, ExampleId};
use crate::error::{Error, Result};
use crate::fact::FactId;
use crate::model::{EmbedConfig, EmbedModel, Embedder, RankingLoss, DEFAULT_HIDDEN, DEFAULT_K_NEG, DEFAULT_MARGIN};
use crate::rng::{self, StreamRng};
use crate::split::Task;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Finetune,
    Si,
    Mas,
    ImmMean,
    ImmMode,
    ExpertGate,
    Joint,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Finetune,
        Method::Si,
        Method::Mas,
        Method::ImmMean,
        Method::ImmMode,
        Method::ExpertGate,
        Method::Joint,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Finetune => "finetune",
            Method::Si => "si",
            Method::Mas => "mas",
            Method::ImmMean => "imm-mean",
            Method::ImmMode => "imm-mode",
            Method::ExpertGate => "expertgate",
            Method::Joint => "joint",
        }
    }

    /// Whether the importance-weighted penalty applies.
    pub fn is_regularized(self) -> bool {
        matches!(self, Method::Si | Method::Mas)
    }

    fn code(self) -> f64 {
        Method::ALL.iter().position(|&m| m == self).unwrap() as f64
    }

    fn from_code(c: f64) -> Result<Method> {
        Method::ALL
            .get(c as usize)
            .copied()
            .filter(|m| m.code() == c)
            .ok_or_else(|| Error::invalid(format!("bad method code {c}")))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = Method::ALL.iter().map(|m| m.as_str()).collect();
                Error::invalid(format!("unknown method `{s}`; valid methods: {}", valid.join(", ")))
            })
    }
}

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyper {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub margin: f64,
    pub k_neg: usize,
    pub seed: u64,
    pub lambda: f64,
    /// SI damping.
    pub xi: f64,
    pub fisher_samples: usize,
    pub ae_epochs: usize,
    pub ae_lr: f64,
    pub hidden: usize,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            epochs: 30,
            lr: 1.0,
            batch: 16,
            margin: DEFAULT_MARGIN,
            k_neg: DEFAULT_K_NEG,
            seed: 0,
            lambda: 1.0,
            xi: 0.1,
            fisher_samples: 1024,
            ae_epochs: 20,
            ae_lr: 0.1,
            hidden: DEFAULT_HIDDEN,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.hidden == 0 || self.k_neg == 0 {
            return Err(Error::invalid("batch, hidden and k_neg must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.ae_lr > 0.0 && self.ae_lr.is_finite()) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if self.xi.is_nan() || self.xi <= 0.0 {
            return Err(Error::invalid("xi must be positive"));
        }
        if self.margin.is_nan() || self.margin < 0.0 {
            return Err(Error::invalid("margin must be non-negative"));
        }
        Ok(())
    }

    pub fn config_for(&self, dataset: &Dataset) -> EmbedConfig {
        EmbedConfig {
            input_dim: dataset.feature_dim(),
            hidden: self.hidden,
            embed_dim: dataset.embed_dim(),
        }
    }
}

/// A trained model ready for scoring.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainedModel {
    Single(EmbedModel),
    Gate(GateModel),
}

impl Embedder for TrainedModel {
    fn output_dim(&self) -> usize {
        match self {
            TrainedModel::Single(m) => m.output_dim(),
            TrainedModel::Gate(g) => g.output_dim(),
        }
    }

    fn embed_batch(&self, rows: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        match self {
            TrainedModel::Single(m) => m.embed_batch(rows),
            TrainedModel::Gate(g) => g.embed_batch(rows),
        }
    }
}

/// Everything carried from one task to the next.
#[derive(Clone, Debug, PartialEq)]
pub struct LllState {
    method: Method,
    lambda: f64,
    config: EmbedConfig,
    theta: ParamSet,
    anchor: ParamSet,
    omega: ParamSet,
    si_path: ParamSet,
    si_start: ParamSet,
    checkpoints: Vec<Checkpoint>,
    gate: GateModel,
    cursor: usize,
}

impl LllState {
    /// Fresh state with parameters drawn from the `init` stream.
    pub fn new(method: Method, config: EmbedConfig, hyper: &Hyper) -> Result<Self> {
        hyper.validate()?;
        let theta = initial_model(config, hyper.seed).into_params();
        Ok(LllState {
            method,
            lambda: hyper.lambda,
            config,
            anchor: theta.clone(),
            omega: theta.zeros_like(),
            si_path: theta.zeros_like(),
            si_start: theta.clone(),
            theta,
            checkpoints: Vec::new(),
            gate: GateModel::new(config),
            cursor: 0,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn config(&self) -> EmbedConfig {
        self.config
    }

    /// Number of completed tasks.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn theta(&self) -> &ParamSet {
        &self.theta
    }

    pub fn anchor(&self) -> &ParamSet {
        &self.anchor
    }

    pub fn omega(&self) -> &ParamSet {
        &self.omega
    }

    pub fn checkpoints(&self) -> &[Checkpoint] {
        &self.checkpoints
    }

    pub fn gate(&self) -> &GateModel {
        &self.gate
    }

    /// Replaces the importance weights (used to pin parameters in tests and sweeps).
    pub fn with_omega(mut self, omega: ParamSet) -> Result<Self> {
        self.theta.check_aligned(&omega)?;
        penalty::check_non_negative(&omega)?;
        self.omega = omega;
        Ok(self)
    }

    /// The model that answers queries after the tasks trained so far.
    pub fn model(&self) -> Result<TrainedModel> {
        match self.method {
            Method::ExpertGate if self.cursor > 0 => Ok(TrainedModel::Gate(self.gate.clone())),
            Method::ImmMean | Method::ImmMode if self.checkpoints.len() >= 2 => {
                let mode = if self.method == Method::ImmMean {
                    MergeMode::Mean
                } else {
                    MergeMode::Mode
                };
                let merged = imm_merge(&self.checkpoints, mode, &uniform_alpha(self.checkpoints.len()))?;
                Ok(TrainedModel::Single(EmbedModel::from_params(self.config, merged)?))
            }
            _ => Ok(TrainedModel::Single(EmbedModel::from_params(self.config, self.theta.clone())?)),
        }
    }

    /// Flattens the state into named tensors for checkpoint files.
    pub fn to_tensors(&self) -> Result<ParamSet> {
        let mut out = ParamSet::new();
        out.insert("meta/method", Tensor::scalar(self.method.code()))?;
        out.insert("meta/lambda", Tensor::scalar(self.lambda))?;
        out.insert("meta/cursor", Tensor::scalar(self.cursor as f64))?;
        out.insert(
            "meta/config",
            Tensor::vector(vec![
                self.config.input_dim as f64,
                self.config.hidden as f64,
                self.config.embed_dim as f64,
            ])?,
        )?;
        out.extend_prefixed("theta/", &self.theta)?;
        out.extend_prefixed("anchor/", &self.anchor)?;
        out.extend_prefixed("omega/", &self.omega)?;
        out.extend_prefixed("si_path/", &self.si_path)?;
        out.extend_prefixed("si_start/", &self.si_start)?;
        for c in &self.checkpoints {
            out.extend_prefixed(&format!("ckpt{}/theta/", c.task), &c.params)?;
            if let Some(f) = &c.fisher {
                out.extend_prefixed(&format!("ckpt{}/fisher/", c.task), f)?;
            }
        }
        for (i, (e, ae)) in self.gate.experts().iter().zip(self.gate.autoencoders()).enumerate() {
            out.extend_prefixed(&format!("expert{}/", i + 1), e)?;
            out.extend_prefixed(&format!("ae{}/", i + 1), ae.params())?;
        }
        Ok(out)
    }

    pub fn from_tensors(set: &ParamSet) -> Result<Self> {
        let meta = |name: &str| -> Result<&Tensor> {
            set.get(name)
                .ok_or_else(|| Error::MissingParam(name.to_string()))
        };
        let method = Method::from_code(meta("meta/method")?.item())?;
        let lambda = meta("meta/lambda")?.item();
        let cursor = meta("meta/cursor")?.item() as usize;
        let cfg = meta("meta/config")?.data();
        if cfg.len() != 3 {
            return Err(Error::invalid("meta/config must hold three values"));
        }
        let config = EmbedConfig {
            input_dim: cfg[0] as usize,
            hidden: cfg[1] as usize,
            embed_dim: cfg[2] as usize,
        };
        let theta = EmbedModel::from_params(config, set.strip_prefix("theta/"))?.into_params();
        let anchor = EmbedModel::from_params(config, set.strip_prefix("anchor/"))?.into_params();
        let omega = set.strip_prefix("omega/");
        let si_path = set.strip_prefix("si_path/");
        let si_start = set.strip_prefix("si_start/");
        for s in [&omega, &si_path, &si_start] {
            theta.check_aligned(s)?;
        }
        penalty::check_non_negative(&omega)?;
        let mut checkpoints = Vec::new();
        let mut gate = GateModel::new(config);
        for n in 1..=cursor {
            let p = set.strip_prefix(&format!("ckpt{n}/theta/"));
            if !p.is_empty() {
                let fisher = set.strip_prefix(&format!("ckpt{n}/fisher/"));
                checkpoints.push(Checkpoint {
                    task: n,
                    params: EmbedModel::from_params(config, p)?.into_params(),
                    fisher: (!fisher.is_empty()).then_some(fisher),
                });
            }
            let e = set.strip_prefix(&format!("expert{n}/"));
            if !e.is_empty() {
                gate.push(e, Autoencoder::from_params(set.strip_prefix(&format!("ae{n}/")))?)?;
            }
        }
        Ok(LllState {
            method,
            lambda,
            config,
            theta,
            anchor,
            omega,
            si_path,
            si_start,
            checkpoints,
            gate,
            cursor,
        })
    }
}

/// The untrained network for `seed`; also the random-init baseline.
pub fn initial_model(config: EmbedConfig, seed: u64) -> EmbedModel {
    EmbedModel::init(config, &mut rng::stream(seed, "init", 0))
}

fn train_features<'d>(dataset: &'d Dataset, ids: &[ExampleId]) -> Result<Vec<&'d [f64]>> {
    ids.iter()
        .map(|&id| Ok(dataset.example(id)?.features.as_slice()))
        .collect()
}

/// Anchor and importance of the quadratic penalty active while fitting.
struct Regularizer<'a> {
    lambda: f64,
    anchor: &'a ParamSet,
    omega: &'a ParamSet,
}

impl Regularizer<'_> {
    /// SGD on the data loss with the penalty taken implicitly:
    /// `θ' = (θ − lr·g + lr·λ·ω·θ_prev) / (1 + lr·λ·ω)`.
    /// Stable however large `λ·ω` gets.
    fn step(&self, theta: &ParamSet, grad: &ParamSet, lr: f64) -> Result<ParamSet> {
        let explicit = theta.sgd_step(grad, lr)?;
        let c = lr * self.lambda;
        let num = explicit.zip_map(&self.anchor.zip_map(self.omega, |a, w| c * w * a)?, |t, p| t + p)?;
        num.zip_map(self.omega, |n, w| n / (1.0 + c * w))
    }
}

/// Minibatch SGD on the ranking loss (plus penalty). When `si_path` is given,
/// the path integral is accumulated from the data-loss gradient.
#[allow(clippy::too_many_arguments)]
fn fit(
    mut theta: ParamSet,
    reg: Option<&Regularizer<'_>>,
    mut si_path: Option<&mut ParamSet>,
    dataset: &Dataset,
    train_ids: &[ExampleId],
    label_set: &[FactId],
    hyper: &Hyper,
    rng: &mut StreamRng,
) -> Result<ParamSet> {
    if train_ids.is_empty() {
        return Err(Error::invalid("task has no training examples"));
    }
    let loss = RankingLoss::new(hyper.margin, hyper.k_neg)?;
    let mut order = train_ids.to_vec();
    for _ in 0..hyper.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(hyper.batch) {
            let items = chunk
                .iter()
                .map(|&id| {
                    let e = dataset.example(id)?;
                    Ok((e.features.as_slice(), e.fact_id))
                })
                .collect::<Result<Vec<_>>>()?;
            let batch = loss.sample_batch(dataset, &items, label_set, rng)?;
            let (_, grad) = loss.value_and_grad(&theta, &batch)?;
            let next = match reg {
                Some(r) => r.step(&theta, &grad, hyper.lr)?,
                None => theta.sgd_step(&grad, hyper.lr)?,
            };
            if let Some(path) = si_path.as_deref_mut() {
                let delta = next.zip_map(&theta, |n, o| n - o)?;
                *path = si_step_accumulate(path, &grad, &delta)?;
            }
            theta = next;
        }
    }
    Ok(theta)
}

/// Trains the next task in sequence and runs the method's post-task hook.
pub fn train_task(mut state: LllState, task: &Task, dataset: &Dataset, hyper: &Hyper) -> Result<LllState> {
    hyper.validate()?;
    if state.method == Method::Joint {
        return Err(Error::invalid("joint training uses train_joint, not sequential tasks"));
    }
    if task.index != state.cursor + 1 {
        return Err(Error::invalid(format!(
            "expected task {}, got task {}",
            state.cursor + 1,
            task.index
        )));
    }
    let index = task.index as u64;
    let mut rng = rng::stream(hyper.seed, "train", index);
    let features = train_features(dataset, &task.train_example_ids)?;

    if state.method == Method::ExpertGate && !state.gate.is_empty() {
        let related = state.gate.most_related(&features)?;
        state.theta = state.gate.experts()[related].clone();
    }
    state.si_start = state.theta.clone();

    let reg = if state.method.is_regularized() && state.lambda > 0.0 {
        Some(Regularizer {
            lambda: state.lambda,
            anchor: &state.anchor,
            omega: &state.omega,
        })
    } else {
        None
    };
    let mut si_path = state.si_path.clone();
    let track = (state.method == Method::Si).then_some(&mut si_path);
    let theta = fit(
        state.theta.clone(),
        reg.as_ref(),
        track,
        dataset,
        &task.train_example_ids,
        &task.fact_ids,
        hyper,
        &mut rng,
    )?;
    state.theta = theta;
    state.si_path = si_path;

    match state.method {
        Method::Mas => {
            let model = EmbedModel::from_params(state.config, state.theta.clone())?;
            let w = mas_importance(&model, &features)?;
            state.omega = state.omega.zip_map(&w, |a, b| a + b)?;
        }
        Method::Si => {
            let w = si_consolidate(&state.si_path, &state.theta, &state.si_start, hyper.xi)?;
            state.omega = state.omega.zip_map(&w, |a, b| a + b)?;
            state.si_path = state.theta.zeros_like();
        }
        Method::ImmMean | Method::ImmMode => {
            let fisher = if state.method == Method::ImmMode {
                Some(diagonal_fisher(
                    &state.theta,
                    dataset,
                    &task.train_example_ids,
                    &task.fact_ids,
                    hyper.fisher_samples,
                    &mut rng::stream(hyper.seed, "fisher", index),
                )?)
            } else {
                None
            };
            state.checkpoints.push(Checkpoint {
                task: task.index,
                params: state.theta.clone(),
                fisher,
            });
        }
        Method::ExpertGate => {
            let mut ae_rng = rng::stream(hyper.seed, "ae", index);
            let ae = Autoencoder::init(dataset.feature_dim(), &mut ae_rng);
            let ae = ae.train(&features, hyper.ae_epochs, hyper.ae_lr, hyper.batch, &mut ae_rng)?;
            state.gate.push(state.theta.clone(), ae)?;
        }
        Method::Finetune | Method::Joint => {}
    }
    state.anchor = state.theta.clone();
    state.cursor += 1;
    Ok(state)
}

/// Trains every task in order, returning the state after each one.
pub fn train_sequence(method: Method, tasks: &[Task], dataset: &Dataset, hyper: &Hyper) -> Result<Vec<LllState>> {
    let mut state = LllState::new(method, hyper.config_for(dataset), hyper)?;
    let mut out = Vec::with_capacity(tasks.len());
    for t in tasks {
        state = train_task(state, t, dataset, hyper)?;
        out.push(state.clone());
    }
    Ok(out)
}

/// One model over the union of the given tasks' training data.
///
/// With a single task this follows the same trajectory as sequential
/// fine-tuning on it.
pub fn train_joint(dataset: &Dataset, tasks: &[Task], hyper: &Hyper) -> Result<EmbedModel> {
    hyper.validate()?;
    if tasks.is_empty() {
        return Err(Error::invalid("joint training needs at least one task"));
    }
    let config = hyper.config_for(dataset);
    let theta = initial_model(config, hyper.seed).into_params();
    let train_ids: Vec<ExampleId> = tasks
        .iter()
        .flat_map(|t| t.train_example_ids.iter().copied())
        .collect();
    let mut labels: Vec<FactId> = tasks.iter().flat_map(|t| t.fact_ids.iter().copied()).collect();
    labels.sort_unstable();
    labels.dedup();
    let mut rng = rng::stream(hyper.seed, "train", tasks.len() as u64);
    let theta = fit(theta, None, None, dataset, &train_ids, &labels, hyper, &mut rng)?;
    EmbedModel::from_params(config, theta)
}
