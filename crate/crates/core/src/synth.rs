//! Planted-cluster benchmarks with known structure.
//!
//! Each cluster owns a block of word-vector coordinates and a small private
//! vocabulary whose tokens point in random directions inside that block. Its
//! facts are distinct compositions of that vocabulary, so facts within a
//! cluster share tokens while facts across clusters are near orthogonal.
//!
//! Features come from one random linear map shared by all clusters, applied to
//! a fact's coordinates inside its own block, plus a fixed per-cluster offset
//! and noise. Clusters therefore reuse the same input directions and the
//! offset is the only cue separating them.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Dataset, Example, ExampleId, Split};
use crate::error::{Error, Result};
use crate::fact::{EmbeddingTable, Fact, FactId};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedConfig {
    pub clusters: usize,
    pub facts_per_cluster: usize,
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub train_per_fact: usize,
    pub test_per_fact: usize,
    /// Noise added to every coordinate of a token, inside its block or not.
    pub token_spread: f64,
    pub feature_noise: f64,
    /// Norm of the per-cluster offset added to every example's features.
    pub cluster_signal: f64,
    /// Cycle training counts through full, half, a fifth and one.
    pub long_tail: bool,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            clusters: 4,
            facts_per_cluster: 10,
            feature_dim: 20,
            embed_dim: 12,
            train_per_fact: 10,
            test_per_fact: 5,
            token_spread: 0.05,
            feature_noise: 0.05,
            cluster_signal: 0.3,
            long_tail: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Planted {
    pub facts: Vec<Fact>,
    pub table: EmbeddingTable,
    pub examples: Vec<Example>,
    /// Cluster of each fact, aligned with `facts`.
    pub cluster_of: Vec<usize>,
}

impl Planted {
    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::new(self.facts.clone(), &self.table, self.examples.clone())
    }
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Tokens per slot in each cluster's vocabulary.
const VOCAB: usize = 3;

impl PlantedConfig {
    fn train_count(&self, fact_index: usize) -> usize {
        if !self.long_tail {
            return self.train_per_fact;
        }
        let n = self.train_per_fact;
        [n, n / 2, n / 5, 1][fact_index % 4].max(1)
    }

    pub fn generate(&self) -> Result<Planted> {
        if self.clusters == 0 || self.facts_per_cluster == 0 || self.feature_dim == 0 {
            return Err(Error::invalid("planted benchmark sizes must be positive"));
        }
        if self.embed_dim < self.clusters {
            return Err(Error::invalid("embed_dim must be at least the number of clusters"));
        }
        let d = self.embed_dim;
        let block = d / self.clusters;
        let mut words = rng::stream(self.seed, "synth-words", 0);

        let mut table = EmbeddingTable::new(d)?;
        let mut facts = Vec::new();
        let mut cluster_of = Vec::new();
        for c in 0..self.clusters {
            let inside = c * block..(c + 1) * block;
            let mut vocab = |slot: &str| -> Result<Vec<String>> {
                (0..VOCAB)
                    .map(|i| {
                        let token = format!("c{c}{slot}{i}");
                        let dir = unit((0..block).map(|_| gaussian(&mut words)).collect());
                        let v = (0..d)
                            .map(|k| {
                                let base = if inside.contains(&k) { dir[k - inside.start] } else { 0.0 };
                                base + self.token_spread * gaussian(&mut words)
                            })
                            .collect();
                        table.insert(&token, v)?;
                        Ok(token)
                    })
                    .collect()
            };
            let (subj, pred, obj) = (vocab("s")?, vocab("p")?, vocab("o")?);
            // One in five facts is subject-only and one in five subject-predicate,
            // built from pairs the full facts already use.
            let n_short = self.facts_per_cluster / 5;
            let n_full = self.facts_per_cluster - 2 * n_short;
            let mut full: Vec<(usize, usize, usize)> = (0..VOCAB.pow(3))
                .map(|k| (k / (VOCAB * VOCAB), k / VOCAB % VOCAB, k % VOCAB))
                .collect();
            full.shuffle(&mut words);
            if n_full > full.len() {
                return Err(Error::invalid("too many facts per cluster for the vocabulary"));
            }
            full.truncate(n_full);
            let mut sp: Vec<(usize, usize)> = full.iter().map(|&(s, p, _)| (s, p)).collect();
            sp.sort_unstable();
            sp.dedup();
            sp.shuffle(&mut words);
            let mut subjects: Vec<usize> = full.iter().map(|t| t.0).collect();
            subjects.sort_unstable();
            subjects.dedup();
            subjects.shuffle(&mut words);
            let mut chosen: Vec<(usize, Option<usize>, Option<usize>)> = Vec::new();
            chosen.extend(subjects.iter().take(n_short).map(|&s| (s, None, None)));
            chosen.extend(sp.iter().take(n_short).map(|&(s, p)| (s, Some(p), None)));
            chosen.extend(full.iter().map(|&(s, p, o)| (s, Some(p), Some(o))));
            if chosen.len() != self.facts_per_cluster {
                return Err(Error::invalid("vocabulary too small for the requested shape mix"));
            }
            for (i, &(si, pi, oi)) in chosen.iter().enumerate() {
                let id = (c * self.facts_per_cluster + i) as u32;
                let fact = Fact::new(
                    id,
                    &subj[si],
                    pi.map(|p| pred[p].as_str()),
                    oi.map(|o| obj[o].as_str()),
                )?;
                facts.push(fact);
                cluster_of.push(c);
            }
        }

        let probe = Dataset::new(facts.clone(), &table, Vec::new())?;
        let width = 3 * block;
        let scale = (1.0 / width as f64).sqrt() * 2.0;
        let mut maps_rng = rng::stream(self.seed, "synth-maps", 0);
        let map: Vec<f64> = (0..self.feature_dim * width)
            .map(|_| scale * gaussian(&mut maps_rng))
            .collect();
        let codes: Vec<Vec<f64>> = (0..self.clusters)
            .map(|_| {
                let v = unit((0..self.feature_dim).map(|_| gaussian(&mut maps_rng)).collect());
                v.into_iter().map(|x| x * self.cluster_signal).collect()
            })
            .collect();
        let mut ex_rng = rng::stream(self.seed, "synth-examples", 0);
        let mut examples = Vec::new();
        let mut next_id = 0u64;
        for (fi, (fact, &c)) in facts.iter().zip(&cluster_of).enumerate() {
            let label = probe.label(fact.id)?;
            // The fact's coordinates inside its own block, slot by slot.
            let local: Vec<f64> = (0..3)
                .flat_map(|slot| {
                    let start = slot * d + c * block;
                    label.as_slice()[start..start + block].iter().copied()
                })
                .collect();
            let counts = [(Split::Train, self.train_count(fi)), (Split::Test, self.test_per_fact)];
            for (split, n) in counts {
                for _ in 0..n {
                    let features = (0..self.feature_dim)
                        .map(|r| {
                            let row = &map[r * width..(r + 1) * width];
                            row.iter().zip(&local).map(|(a, b)| a * b).sum::<f64>()
                                + codes[c][r]
                                + self.feature_noise * gaussian(&mut ex_rng)
                        })
                        .collect();
                    examples.push(Example {
                        id: ExampleId(next_id),
                        fact_id: FactId(fact.id.0),
                        split,
                        features,
                    });
                    next_id += 1;
                }
            }
        }
        Ok(Planted {
            facts,
            table,
            examples,
            cluster_of,
        })
    }
}
