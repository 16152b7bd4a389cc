//! Query models on disk: a single network or a gated set of experts.

use llfl::autodiff::{ParamSet, Tensor};
use llfl::lll::{Autoencoder, GateModel, TrainedModel};
use llfl::model::{EmbedConfig, EmbedModel};
use llfl::{Error, Result};

const SINGLE: f64 = 0.0;
const GATED: f64 = 1.0;

pub fn encode_model(model: &TrainedModel) -> Result<ParamSet> {
    let config = match model {
        TrainedModel::Single(m) => m.config(),
        TrainedModel::Gate(g) => g.config(),
    };
    let mut out = ParamSet::new();
    out.insert(
        "config",
        Tensor::vector(vec![config.input_dim as f64, config.hidden as f64, config.embed_dim as f64])?,
    )?;
    match model {
        TrainedModel::Single(m) => {
            out.insert("kind", Tensor::scalar(SINGLE))?;
            out.extend_prefixed("net/", m.params())?;
        }
        TrainedModel::Gate(g) => {
            out.insert("kind", Tensor::scalar(GATED))?;
            out.insert("experts", Tensor::scalar(g.len() as f64))?;
            for (i, (e, ae)) in g.experts().iter().zip(g.autoencoders()).enumerate() {
                out.extend_prefixed(&format!("expert{i}/"), e)?;
                out.extend_prefixed(&format!("ae{i}/"), ae.params())?;
            }
        }
    }
    Ok(out)
}

pub fn decode_model(set: &ParamSet) -> Result<TrainedModel> {
    let get = |name: &str| set.get(name).ok_or_else(|| Error::MissingParam(name.to_string()));
    let cfg = get("config")?.data();
    if cfg.len() != 3 {
        return Err(Error::InvalidArgument("model config must hold three values".into()));
    }
    let config = EmbedConfig {
        input_dim: cfg[0] as usize,
        hidden: cfg[1] as usize,
        embed_dim: cfg[2] as usize,
    };
    let kind = get("kind")?.item();
    if kind == SINGLE {
        Ok(TrainedModel::Single(EmbedModel::from_params(config, set.strip_prefix("net/"))?))
    } else if kind == GATED {
        let n = get("experts")?.item() as usize;
        let mut gate = GateModel::new(config);
        for i in 0..n {
            let ae = Autoencoder::from_params(set.strip_prefix(&format!("ae{i}/")))?;
            gate.push(set.strip_prefix(&format!("expert{i}/")), ae)?;
        }
        Ok(TrainedModel::Gate(gate))
    } else {
        Err(Error::InvalidArgument(format!("unknown model kind {kind}")))
    }
}
