//! Top-K accuracy over a task's own labels or over the whole label space,
//! transfer matrices, and per-slice breakdowns.
//!
//! Everything is computed from a [`RankTable`]: the rank of each test
//! example's gold fact among its task's labels and among all labels.

mod slices;
mod transfer;

pub use slices::{
    fact_type_breakdown, fewshot_accuracy, longtail_bins, spo_generalization, BinEdges, BinReport, ShapeCell,
    SpoCell, SpoCondition, DEFAULT_BIN_EDGES, FEWSHOT_MAX, SPO_RARE_MAX,
};
pub use transfer::{build_r, build_r_from_tables, gained_knowledge, transfer_metrics, Transfer, TransferMatrix};

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Example, ExampleId};
use crate::error::{Error, Result};
use crate::fact::FactId;
use crate::model::{score, Embedder};
use crate::split::{Benchmark, Task};

pub const DEFAULT_TOPK: [usize; 3] = [1, 5, 10];

/// Candidate set used when ranking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Only the labels of the example's own task.
    Standard,
    /// Every label of every task.
    Generalized,
}

/// Scores candidate facts for a batch of examples.
pub trait Scorer: Sync {
    /// `out[i][j]` is the score of `candidates[j]` for `examples[i]`.
    fn score_batch(&self, examples: &[&Example], candidates: &[FactId]) -> Result<Vec<Vec<f64>>>;
}

/// Scores through an embedding network and the masked cosine.
pub struct EmbedScorer<'a> {
    model: &'a dyn Embedder,
    dataset: &'a Dataset,
}

impl<'a> EmbedScorer<'a> {
    pub fn new(model: &'a dyn Embedder, dataset: &'a Dataset) -> Self {
        EmbedScorer { model, dataset }
    }
}

impl Scorer for EmbedScorer<'_> {
    fn score_batch(&self, examples: &[&Example], candidates: &[FactId]) -> Result<Vec<Vec<f64>>> {
        let labels = candidates
            .iter()
            .map(|&c| self.dataset.label(c))
            .collect::<Result<Vec<_>>>()?;
        let chunks: Vec<Vec<Vec<f64>>> = examples
            .par_chunks(64)
            .map(|chunk| {
                let rows: Vec<&[f64]> = chunk.iter().map(|e| e.features.as_slice()).collect();
                self.model
                    .embed_batch(&rows)?
                    .iter()
                    .map(|v| labels.iter().map(|l| score(v, l)).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        Ok(chunks.into_iter().flatten().collect())
    }
}

/// Scores from a plain function; handy for hand-built score tables.
pub struct FnScorer<F>(pub F);

impl<F> Scorer for FnScorer<F>
where
    F: Fn(&Example, FactId) -> f64 + Sync,
{
    fn score_batch(&self, examples: &[&Example], candidates: &[FactId]) -> Result<Vec<Vec<f64>>> {
        Ok(examples
            .iter()
            .map(|e| candidates.iter().map(|&c| (self.0)(e, c)).collect())
            .collect())
    }
}

/// Zero-based rank of `gold` among `(id, score)` pairs: candidates scoring
/// higher, plus equal-scoring candidates with a smaller id.
pub fn gold_rank(gold: FactId, gold_score: f64, scored: impl IntoIterator<Item = (FactId, f64)>) -> usize {
    scored
        .into_iter()
        .filter(|&(c, s)| c != gold && (s > gold_score || (s == gold_score && c < gold)))
        .count()
}

/// Fraction of examples whose gold fact ranks in the top `k` of `candidates`.
pub fn topk_accuracy(
    scorer: &dyn Scorer,
    dataset: &Dataset,
    example_ids: &[ExampleId],
    candidates: &[FactId],
    k: usize,
) -> Result<f64> {
    if example_ids.is_empty() {
        return Err(Error::invalid("no test examples"));
    }
    check_k(k)?;
    let examples = example_ids
        .iter()
        .map(|&id| dataset.example(id))
        .collect::<Result<Vec<_>>>()?;
    let pos: HashMap<FactId, usize> = candidates.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let scores = scorer.score_batch(&examples, candidates)?;
    let mut hits = 0usize;
    for (e, row) in examples.iter().zip(&scores) {
        let g = *pos
            .get(&e.fact_id)
            .ok_or_else(|| Error::invalid(format!("gold fact {} is not a candidate", e.fact_id)))?;
        let rank = gold_rank(e.fact_id, row[g], candidates.iter().copied().zip(row.iter().copied()));
        if rank < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / examples.len() as f64)
}

/// Top-`k` accuracy on the task's test set over the task's own labels.
pub fn standard_accuracy(scorer: &dyn Scorer, dataset: &Dataset, task: &Task, k: usize) -> Result<f64> {
    topk_accuracy(scorer, dataset, &task.test_example_ids, &task.fact_ids, k)
}

/// Top-`k` accuracy on the task's test set over `label_space`.
pub fn generalized_accuracy(
    scorer: &dyn Scorer,
    dataset: &Dataset,
    task: &Task,
    label_space: &[FactId],
    k: usize,
) -> Result<f64> {
    topk_accuracy(scorer, dataset, &task.test_example_ids, label_space, k)
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    Ok(())
}

/// Mean over tasks and mean weighted by test-set size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub mean_over_examples: f64,
}

pub fn summarize(accs: &[f64], sizes: &[usize]) -> Result<Summary> {
    if accs.len() != sizes.len() {
        return Err(Error::Dimension {
            expected: accs.len(),
            found: sizes.len(),
        });
    }
    if accs.is_empty() {
        return Err(Error::invalid("nothing to summarize"));
    }
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(Error::invalid("all test sets are empty"));
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let weighted = accs.iter().zip(sizes).map(|(a, &m)| a * m as f64).sum::<f64>() / total as f64;
    Ok(Summary {
        mean,
        mean_over_examples: weighted,
    })
}

/// Gold ranks of one test example.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankEntry {
    pub example: ExampleId,
    pub fact: FactId,
    /// Zero-based task position.
    pub task: usize,
    pub standard: usize,
    pub generalized: usize,
}

impl RankEntry {
    pub fn rank(&self, metric: Metric) -> usize {
        match metric {
            Metric::Standard => self.standard,
            Metric::Generalized => self.generalized,
        }
    }

    pub fn hit(&self, metric: Metric, k: usize) -> bool {
        self.rank(metric) < k
    }
}

/// Ranks for every test example of a benchmark under one model, in task order.
#[derive(Clone, Debug, PartialEq)]
pub struct RankTable {
    entries: Vec<RankEntry>,
    task_sizes: Vec<usize>,
}

impl RankTable {
    pub fn build(scorer: &dyn Scorer, dataset: &Dataset, bench: &Benchmark) -> Result<Self> {
        let space = bench.label_space();
        let owner = bench.fact_owner();
        let mut examples = Vec::new();
        let mut task_sizes = Vec::with_capacity(bench.len());
        for t in &bench.tasks {
            task_sizes.push(t.test_example_ids.len());
            for &id in &t.test_example_ids {
                examples.push(dataset.example(id)?);
            }
        }
        let pos: HashMap<FactId, usize> = space.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let scores = if examples.is_empty() {
            Vec::new()
        } else {
            scorer.score_batch(&examples, &space)?
        };
        let entries = examples
            .iter()
            .zip(&scores)
            .map(|(e, row)| {
                let g = *pos
                    .get(&e.fact_id)
                    .ok_or_else(|| Error::invalid(format!("gold fact {} is not in the label space", e.fact_id)))?;
                let task = owner[&e.fact_id];
                let all = space.iter().copied().zip(row.iter().copied());
                let generalized = gold_rank(e.fact_id, row[g], all.clone());
                let standard = gold_rank(e.fact_id, row[g], all.filter(|(c, _)| owner[c] == task));
                Ok(RankEntry {
                    example: e.id,
                    fact: e.fact_id,
                    task,
                    standard,
                    generalized,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RankTable { entries, task_sizes })
    }

    /// Rebuilds a table from stored entries; per-task entry counts must match `task_sizes`.
    pub fn from_entries(entries: Vec<RankEntry>, task_sizes: Vec<usize>) -> Result<Self> {
        let mut seen = vec![0usize; task_sizes.len()];
        for e in &entries {
            *seen
                .get_mut(e.task)
                .ok_or_else(|| Error::invalid(format!("entry for task {} of {}", e.task + 1, task_sizes.len())))? += 1;
        }
        if seen != task_sizes {
            return Err(Error::invalid("entry counts do not match task sizes"));
        }
        Ok(RankTable { entries, task_sizes })
    }

    pub fn entries(&self) -> &[RankEntry] {
        &self.entries
    }

    pub fn task_count(&self) -> usize {
        self.task_sizes.len()
    }

    pub fn task_sizes(&self) -> &[usize] {
        &self.task_sizes
    }

    pub fn task_entries(&self, task: usize) -> impl Iterator<Item = &RankEntry> {
        self.entries.iter().filter(move |e| e.task == task)
    }

    /// Accuracy over the entries kept by `keep`; `None` when none are kept.
    pub fn accuracy_where(&self, metric: Metric, k: usize, keep: impl Fn(&RankEntry) -> bool) -> Option<f64> {
        let (mut n, mut hits) = (0usize, 0usize);
        for e in self.entries.iter().filter(|e| keep(e)) {
            n += 1;
            hits += e.hit(metric, k) as usize;
        }
        (n > 0).then(|| hits as f64 / n as f64)
    }

    pub fn task_accuracy(&self, task: usize, metric: Metric, k: usize) -> Result<f64> {
        self.accuracy_where(metric, k, |e| e.task == task)
            .ok_or_else(|| Error::invalid(format!("task {} has no test examples", task + 1)))
    }
}

/// Per-task accuracies under both metrics at one `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub k: usize,
    pub standard: Vec<f64>,
    pub generalized: Vec<f64>,
    pub test_sizes: Vec<usize>,
    pub standard_summary: Summary,
    pub generalized_summary: Summary,
}

impl AccuracyTable {
    pub fn from_ranks(table: &RankTable, k: usize) -> Result<Self> {
        check_k(k)?;
        let n = table.task_count();
        let standard = (0..n)
            .map(|t| table.task_accuracy(t, Metric::Standard, k))
            .collect::<Result<Vec<_>>>()?;
        let generalized = (0..n)
            .map(|t| table.task_accuracy(t, Metric::Generalized, k))
            .collect::<Result<Vec<_>>>()?;
        let sizes = table.task_sizes().to_vec();
        Ok(AccuracyTable {
            k,
            standard_summary: summarize(&standard, &sizes)?,
            generalized_summary: summarize(&generalized, &sizes)?,
            standard,
            generalized,
            test_sizes: sizes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summarize_arithmetic() {
        let s = summarize(&[1.0, 0.0], &[1, 3]).unwrap();
        assert_eq!(s.mean, 0.5);
        assert_eq!(s.mean_over_examples, 0.25);
        let e = summarize(&[0.3, 0.9, 0.6], &[4, 4, 4]).unwrap();
        assert_eq!(e.mean, e.mean_over_examples);
        assert!(summarize(&[1.0], &[1, 2]).is_err());
    }

    #[test]
    fn rank_counts_ties_by_id() {
        let scored = [(FactId(1), 0.5), (FactId(2), 0.5), (FactId(3), 0.9), (FactId(4), 0.1)];
        assert_eq!(gold_rank(FactId(2), 0.5, scored), 2);
        assert_eq!(gold_rank(FactId(1), 0.5, scored), 1);
        assert_eq!(gold_rank(FactId(3), 0.9, scored), 0);
        assert_eq!(gold_rank(FactId(4), 0.1, scored), 3);
    }
}
