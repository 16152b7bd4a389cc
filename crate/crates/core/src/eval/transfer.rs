use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Metric, RankTable, Scorer};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::split::Benchmark;

/// `r[j][n]`: accuracy on task `j` after training task `n` (both zero-based);
/// `baseline[j]`: accuracy on task `j` of the untrained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub r: Vec<Vec<f64>>,
    pub baseline: Vec<f64>,
}

impl TransferMatrix {
    pub fn new(r: Vec<Vec<f64>>, baseline: Vec<f64>) -> Result<Self> {
        let n = r.len();
        if r.iter().any(|row| row.len() != n) || baseline.len() != n {
            return Err(Error::invalid("transfer matrix must be square with one baseline per task"));
        }
        Ok(TransferMatrix { r, baseline })
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    pub bwt: f64,
    pub fwt: f64,
}

/// Fills the matrix from one rank table per trained task plus the initial model's.
pub fn build_r_from_tables(
    after_task: &[RankTable],
    initial: &RankTable,
    k: usize,
    metric: Metric,
) -> Result<TransferMatrix> {
    let n = initial.task_count();
    if after_task.len() != n {
        return Err(Error::invalid(format!("{} checkpoints for {n} tasks", after_task.len())));
    }
    let mut r = vec![vec![0.0; n]; n];
    for (col, table) in after_task.iter().enumerate() {
        if table.task_count() != n {
            return Err(Error::invalid("rank tables cover different benchmarks"));
        }
        for (j, row) in r.iter_mut().enumerate() {
            row[col] = table.task_accuracy(j, metric, k)?;
        }
    }
    let baseline = (0..n)
        .map(|j| initial.task_accuracy(j, metric, k))
        .collect::<Result<Vec<_>>>()?;
    TransferMatrix::new(r, baseline)
}

/// Evaluates each checkpoint on every task.
pub fn build_r(
    after_task: &[&dyn Scorer],
    initial: &dyn Scorer,
    dataset: &Dataset,
    bench: &Benchmark,
    k: usize,
    metric: Metric,
) -> Result<TransferMatrix> {
    if after_task.len() != bench.len() {
        return Err(Error::invalid(format!(
            "{} checkpoints for {} tasks",
            after_task.len(),
            bench.len()
        )));
    }
    let tables = after_task
        .par_iter()
        .map(|s| RankTable::build(*s, dataset, bench))
        .collect::<Result<Vec<_>>>()?;
    let init = RankTable::build(initial, dataset, bench)?;
    build_r_from_tables(&tables, &init, k, metric)
}

/// Backward transfer over the final column and forward transfer over the
/// first sub-diagonal against the baseline.
pub fn transfer_metrics(m: &TransferMatrix) -> Result<Transfer> {
    let n = m.len();
    if n < 2 {
        return Err(Error::invalid("transfer metrics need at least two tasks"));
    }
    let last = n - 1;
    let bwt = (0..last).map(|j| m.r[j][last] - m.r[j][j]).sum::<f64>() / last as f64;
    let fwt = (1..n).map(|j| m.r[j][j - 1] - m.baseline[j]).sum::<f64>() / last as f64;
    Ok(Transfer { bwt, fwt })
}

/// Test-size-weighted mean of each column: overall accuracy after each task.
pub fn gained_knowledge(m: &TransferMatrix, sizes: &[usize]) -> Result<Vec<f64>> {
    if sizes.len() != m.len() {
        return Err(Error::Dimension {
            expected: m.len(),
            found: sizes.len(),
        });
    }
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(Error::invalid("all test sets are empty"));
    }
    Ok((0..m.len())
        .map(|col| {
            (0..m.len()).map(|j| m.r[j][col] * sizes[j] as f64).sum::<f64>() / total as f64
        })
        .collect())
}
