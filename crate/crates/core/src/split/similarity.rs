use std::collections::BTreeSet;

use super::{Benchmark, Task};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fact::Slot;

/// Cosine between the mean label vectors (zeros included) of two tasks.
pub fn task_similarity_w2v(a: &Task, b: &Task, dataset: &Dataset) -> Result<f64> {
    let ma = mean_vector(a, dataset)?;
    let mb = mean_vector(b, dataset)?;
    let na = ma.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = mb.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("task mean vector is zero"));
    }
    let dot: f64 = ma.iter().zip(&mb).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

fn mean_vector(task: &Task, dataset: &Dataset) -> Result<Vec<f64>> {
    if task.fact_ids.is_empty() {
        return Err(Error::invalid(format!("task {} has no facts", task.index)));
    }
    let width = 3 * dataset.embed_dim();
    let mut mean = vec![0.0; width];
    for &f in &task.fact_ids {
        for (m, x) in mean.iter_mut().zip(dataset.label(f)?.as_slice()) {
            *m += x;
        }
    }
    let n = task.fact_ids.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

fn slot_tokens(task: &Task, dataset: &Dataset, slot: Slot) -> Result<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    for &f in &task.fact_ids {
        if let Some(tok) = dataset.fact(f)?.slot(slot) {
            out.insert(tok.to_lowercase());
        }
    }
    Ok(out)
}

/// Geometric mean of the per-slot intersection-over-union of defined tokens.
pub fn task_overlap_spo(a: &Task, b: &Task, dataset: &Dataset) -> Result<f64> {
    let mut product = 1.0;
    for slot in Slot::ALL {
        let ta = slot_tokens(a, dataset, slot)?;
        let tb = slot_tokens(b, dataset, slot)?;
        let union = ta.union(&tb).count();
        let ratio = if union == 0 {
            0.0
        } else {
            ta.intersection(&tb).count() as f64 / union as f64
        };
        product *= ratio;
    }
    Ok(product.cbrt())
}

pub type Matrix = Vec<Vec<f64>>;

/// Both task-by-task similarity matrices: `(w2v, spo_overlap)`.
pub fn similarity_matrices(bench: &Benchmark, dataset: &Dataset) -> Result<(Matrix, Matrix)> {
    let n = bench.tasks.len();
    let mut w2v = vec![vec![0.0; n]; n];
    let mut spo = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            w2v[i][j] = task_similarity_w2v(&bench.tasks[i], &bench.tasks[j], dataset)?;
            spo[i][j] = task_overlap_spo(&bench.tasks[i], &bench.tasks[j], dataset)?;
        }
    }
    Ok((w2v, spo))
}
