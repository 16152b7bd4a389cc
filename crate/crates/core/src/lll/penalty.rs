use crate::autodiff::{Feed, Graph, GraphBuilder, NodeId, ParamSet};
use crate::error::{Error, Result};

/// `(λ/2)·Σ ωᵢ(θᵢ − θᵢ_prev)²` as a graph over the parameters in `layout`.
///
/// Anchor and importance tensors are fed as inputs named `anchor/<p>` and
/// `omega/<p>`.
#[derive(Clone, Debug)]
pub struct RegPenalty {
    graph: Graph,
    output: NodeId,
    names: Vec<String>,
    lambda: f64,
}

impl RegPenalty {
    pub fn new(layout: &ParamSet, lambda: f64) -> Result<Self> {
        let mut b = GraphBuilder::new();
        let output = Self::build(&mut b, layout, lambda)?;
        Ok(RegPenalty {
            graph: b.build(),
            output,
            names: layout.names().map(str::to_string).collect(),
            lambda,
        })
    }

    /// Adds the penalty nodes to an existing graph and returns the scalar node.
    pub fn build(b: &mut GraphBuilder, layout: &ParamSet, lambda: f64) -> Result<NodeId> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::invalid(format!("lambda must be non-negative, got {lambda}")));
        }
        if layout.is_empty() {
            return Err(Error::invalid("no parameters to regularize"));
        }
        let mut total: Option<NodeId> = None;
        for name in layout.names() {
            let theta = b.param(name);
            let anchor = b.input(&format!("anchor/{name}"));
            let omega = b.input(&format!("omega/{name}"));
            let d = b.sub(theta, anchor);
            let wd = b.mul(omega, d);
            let sq = b.mul(wd, d);
            let s = b.sum(sq);
            total = Some(match total {
                None => s,
                Some(t) => b.add(t, s),
            });
        }
        Ok(b.scale(total.unwrap(), lambda / 2.0))
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn feed_names(&self) -> Vec<(String, String)> {
        self.names
            .iter()
            .map(|n| (format!("anchor/{n}"), format!("omega/{n}")))
            .collect()
    }

    pub fn value_and_grad(&self, theta: &ParamSet, anchor: &ParamSet, omega: &ParamSet) -> Result<(f64, ParamSet)> {
        theta.check_aligned(anchor)?;
        theta.check_aligned(omega)?;
        check_non_negative(omega)?;
        let names = self.feed_names();
        let mut feed = Feed::new();
        for ((an, on), n) in names.iter().zip(&self.names) {
            feed.bind(an, anchor.get(n).unwrap());
            feed.bind(on, omega.get(n).unwrap());
        }
        self.graph.backward(theta, &feed, self.output)
    }
}

pub(crate) fn check_non_negative(omega: &ParamSet) -> Result<()> {
    for (name, t) in omega.iter() {
        if let Some(v) = t.data().iter().find(|&&v| v < 0.0) {
            return Err(Error::invalid(format!("importance `{name}` has negative entry {v}")));
        }
    }
    Ok(())
}

/// Value of the importance-weighted quadratic penalty.
pub fn reg_penalty(theta: &ParamSet, anchor: &ParamSet, omega: &ParamSet, lambda: f64) -> Result<f64> {
    Ok(RegPenalty::new(theta, lambda)?.value_and_grad(theta, anchor, omega)?.0)
}

/// Analytic gradient `λ·ωᵢ(θᵢ − θᵢ_prev)`, used as a cross-check.
pub fn reg_penalty_grad(theta: &ParamSet, anchor: &ParamSet, omega: &ParamSet, lambda: f64) -> Result<ParamSet> {
    let diff = theta.zip_map(anchor, |t, a| t - a)?;
    diff.zip_map(omega, |d, w| lambda * w * d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn scalar_set(name: &str, v: f64) -> ParamSet {
        [(name.to_string(), Tensor::scalar(v))].into_iter().collect()
    }

    #[test]
    fn zero_when_at_anchor_or_unimportant() {
        let theta = scalar_set("w", 1.5);
        let omega = scalar_set("w", 4.0);
        assert_eq!(reg_penalty(&theta, &theta, &omega, 3.0).unwrap(), 0.0);
        let anchor = scalar_set("w", -2.0);
        assert_eq!(reg_penalty(&theta, &anchor, &theta.zeros_like(), 3.0).unwrap(), 0.0);
    }

    #[test]
    fn single_parameter_arithmetic() {
        let theta = scalar_set("w", 1.5);
        let anchor = scalar_set("w", 1.0);
        let omega = scalar_set("w", 3.0);
        let (v, g) = RegPenalty::new(&theta, 2.0)
            .unwrap()
            .value_and_grad(&theta, &anchor, &omega)
            .unwrap();
        assert!((v - 0.75).abs() < 1e-15);
        assert!((g.get("w").unwrap().item() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn negative_importance_rejected() {
        let theta = scalar_set("w", 1.0);
        assert!(reg_penalty(&theta, &theta, &scalar_set("w", -1.0), 1.0).is_err());
        assert!(RegPenalty::new(&theta, -1.0).is_err());
    }
}
