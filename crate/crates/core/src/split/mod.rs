//! Dividing a fact set into a sequence of disjoint tasks.

mod cluster;
mod similarity;

pub use cluster::{agglomerate, clusters_for_count, cut, Dendrogram, Merge};
pub use similarity::{similarity_matrices, task_overlap_spo, task_similarity_w2v, Matrix};

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ExampleId, Split};
use crate::error::{Error, Result};
use crate::fact::{pairwise_distances, FactId};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitType {
    Semantic,
    Random,
}

impl std::str::FromStr for SplitType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semantic" => Ok(SplitType::Semantic),
            "random" => Ok(SplitType::Random),
            other => Err(Error::invalid(format!(
                "unknown split mode `{other}` (expected semantic or random)"
            ))),
        }
    }
}

/// One task: its label set and example ids. `index` starts at 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub index: usize,
    pub fact_ids: Vec<FactId>,
    pub train_example_ids: Vec<ExampleId>,
    pub test_example_ids: Vec<ExampleId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Benchmark {
    pub tasks: Vec<Task>,
    pub seed: u64,
    pub split_type: SplitType,
}

impl Benchmark {
    /// Groups facts by label into tasks, routes examples, and orders tasks by
    /// descending training-example count (ties by smallest fact id).
    pub fn from_assignment(
        dataset: &Dataset,
        labels: &[usize],
        seed: u64,
        split_type: SplitType,
    ) -> Result<Benchmark> {
        let facts = dataset.facts();
        if labels.len() != facts.len() {
            return Err(Error::Dimension {
                expected: facts.len(),
                found: labels.len(),
            });
        }
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut tasks: Vec<Task> = (0..k)
            .map(|_| Task {
                index: 0,
                fact_ids: Vec::new(),
                train_example_ids: Vec::new(),
                test_example_ids: Vec::new(),
            })
            .collect();
        let mut owner = HashMap::with_capacity(facts.len());
        for (f, &l) in facts.iter().zip(labels) {
            tasks[l].fact_ids.push(f.id);
            owner.insert(f.id, l);
        }
        for e in dataset.examples() {
            let t = &mut tasks[owner[&e.fact_id]];
            match e.split {
                Split::Train => t.train_example_ids.push(e.id),
                Split::Test => t.test_example_ids.push(e.id),
            }
        }
        for t in &mut tasks {
            t.fact_ids.sort_unstable();
            t.train_example_ids.sort_unstable();
            t.test_example_ids.sort_unstable();
        }
        if tasks.iter().any(|t| t.fact_ids.is_empty()) {
            return Err(Error::invalid("assignment leaves a task without facts"));
        }
        tasks.sort_by(|a, b| {
            b.train_example_ids
                .len()
                .cmp(&a.train_example_ids.len())
                .then(a.fact_ids[0].cmp(&b.fact_ids[0]))
        });
        for (i, t) in tasks.iter_mut().enumerate() {
            t.index = i + 1;
        }
        Ok(Benchmark {
            tasks,
            seed,
            split_type,
        })
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// The union label space, sorted.
    pub fn label_space(&self) -> Vec<FactId> {
        let mut all: Vec<FactId> = self.tasks.iter().flat_map(|t| t.fact_ids.iter().copied()).collect();
        all.sort_unstable();
        all
    }

    /// Task owning each fact.
    pub fn fact_owner(&self) -> HashMap<FactId, usize> {
        self.tasks
            .iter()
            .enumerate()
            .flat_map(|(i, t)| t.fact_ids.iter().map(move |&f| (f, i)))
            .collect()
    }

    /// Checks disjointness, coverage and example routing against `dataset`.
    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (i, t) in self.tasks.iter().enumerate() {
            if t.index != i + 1 {
                return Err(Error::invalid(format!("task {} has index {}", i + 1, t.index)));
            }
            for f in &t.fact_ids {
                dataset.fact(*f)?;
                if !seen.insert(*f) {
                    return Err(Error::invalid(format!("fact {f} appears in two tasks")));
                }
            }
        }
        let owner = self.fact_owner();
        let mut routed = BTreeSet::new();
        for (i, t) in self.tasks.iter().enumerate() {
            for (ids, split) in [(&t.train_example_ids, Split::Train), (&t.test_example_ids, Split::Test)] {
                for id in ids {
                    let e = dataset.example(*id)?;
                    if e.split != split || owner.get(&e.fact_id) != Some(&i) {
                        return Err(Error::invalid(format!("example {id} is routed to the wrong task")));
                    }
                    if !routed.insert(*id) {
                        return Err(Error::invalid(format!("example {id} appears twice")));
                    }
                }
            }
        }
        let expected = dataset
            .examples()
            .iter()
            .filter(|e| owner.contains_key(&e.fact_id))
            .count();
        if routed.len() != expected {
            return Err(Error::invalid("some examples of benchmark facts are not routed"));
        }
        Ok(())
    }
}

/// Tasks from single-linkage clusters of the fact embeddings.
pub fn semantic_split(dataset: &Dataset, n_tasks: usize, seed: u64) -> Result<(Benchmark, Dendrogram)> {
    check_task_count(dataset, n_tasks)?;
    let distances = pairwise_distances(dataset.labels())?;
    let dendrogram = agglomerate(&distances)?;
    let labels = clusters_for_count(&dendrogram, &distances, n_tasks)?;
    let bench = Benchmark::from_assignment(dataset, &labels, seed, SplitType::Semantic)?;
    Ok((bench, dendrogram))
}

fn check_task_count(dataset: &Dataset, n_tasks: usize) -> Result<()> {
    if n_tasks < 2 {
        return Err(Error::invalid("at least two tasks are required"));
    }
    if n_tasks > dataset.facts().len() {
        return Err(Error::invalid(format!(
            "{n_tasks} tasks requested but only {} facts",
            dataset.facts().len()
        )));
    }
    Ok(())
}

/// One random trial: fact positions shuffled then chunked into near-equal groups.
fn random_trial(n_facts: usize, n_tasks: usize, seed: u64, trial: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_facts).collect();
    order.shuffle(&mut rng::stream(seed, "trials", trial as u64));
    let base = n_facts / n_tasks;
    let extra = n_facts % n_tasks;
    let mut labels = vec![0; n_facts];
    let mut pos = 0;
    for g in 0..n_tasks {
        let size = base + usize::from(g < extra);
        for &f in &order[pos..pos + size] {
            labels[f] = g;
        }
        pos += size;
    }
    labels
}

/// Largest over smallest per-group training-example count.
pub fn imbalance_ratio(labels: &[usize], train_counts: &[usize], n_tasks: usize) -> f64 {
    let mut totals = vec![0usize; n_tasks];
    for (&l, &c) in labels.iter().zip(train_counts) {
        totals[l] += c;
    }
    let max = *totals.iter().max().unwrap() as f64;
    let min = *totals.iter().min().unwrap() as f64;
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Most balanced of `trials` random partitions; earliest trial wins ties.
pub fn random_split(dataset: &Dataset, n_tasks: usize, trials: usize, seed: u64) -> Result<Benchmark> {
    check_task_count(dataset, n_tasks)?;
    if trials == 0 {
        return Err(Error::invalid("at least one trial is required"));
    }
    let counts = dataset.train_counts();
    let per_fact: Vec<usize> = dataset.facts().iter().map(|f| counts[&f.id]).collect();
    let n = dataset.facts().len();
    let ratios: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| imbalance_ratio(&random_trial(n, n_tasks, seed, t), &per_fact, n_tasks))
        .collect();
    let mut best = 0;
    for (t, &r) in ratios.iter().enumerate() {
        if r < ratios[best] {
            best = t;
        }
    }
    let labels = cluster::relabel_by_first_member(random_trial(n, n_tasks, seed, best));
    Benchmark::from_assignment(dataset, &labels, seed, SplitType::Random)
}

/// Per-trial labels and ratios, exposed for inspection.
pub fn random_split_trials(dataset: &Dataset, n_tasks: usize, trials: usize, seed: u64) -> Vec<(Vec<usize>, f64)> {
    let counts = dataset.train_counts();
    let per_fact: Vec<usize> = dataset.facts().iter().map(|f| counts[&f.id]).collect();
    let n = dataset.facts().len();
    (0..trials)
        .map(|t| {
            let labels = random_trial(n, n_tasks, seed, t);
            let r = imbalance_ratio(&labels, &per_fact, n_tasks);
            (labels, r)
        })
        .collect()
}
