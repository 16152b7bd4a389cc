//! Examples and the dataset they live in.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fact::{embed_fact, EmbeddingTable, Fact, FactId, FactVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExampleId(pub u64);

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// One image stand-in: a precomputed feature vector labelled with a fact.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: ExampleId,
    pub fact_id: FactId,
    pub split: Split,
    pub features: Vec<f64>,
}

/// Facts with their embedded label vectors, plus all examples.
#[derive(Clone, Debug)]
pub struct Dataset {
    facts: Vec<Fact>,
    labels: Vec<FactVector>,
    fact_index: HashMap<FactId, usize>,
    examples: Vec<Example>,
    example_index: HashMap<ExampleId, usize>,
    feature_dim: usize,
}

impl Dataset {
    /// Embeds every fact and checks the examples against them.
    ///
    /// Unknown tokens across all facts are reported together.
    pub fn new(facts: Vec<Fact>, table: &EmbeddingTable, examples: Vec<Example>) -> Result<Self> {
        let mut fact_index = HashMap::with_capacity(facts.len());
        for (i, f) in facts.iter().enumerate() {
            if fact_index.insert(f.id, i).is_some() {
                return Err(Error::InvalidFact {
                    id: f.id.0,
                    reason: "duplicate fact id".into(),
                });
            }
        }
        let mut labels = Vec::with_capacity(facts.len());
        let mut missing: Vec<String> = Vec::new();
        for f in &facts {
            match embed_fact(table, f) {
                Ok(v) => labels.push(v),
                Err(Error::UnknownTokens(t)) => {
                    for tok in t {
                        if !missing.contains(&tok) {
                            missing.push(tok);
                        }
                    }
                }
                Err(e) => return Err(e),
            }
        }
        if !missing.is_empty() {
            return Err(Error::UnknownTokens(missing));
        }
        let feature_dim = examples.first().map_or(0, |e| e.features.len());
        let mut example_index = HashMap::with_capacity(examples.len());
        for (i, e) in examples.iter().enumerate() {
            if !fact_index.contains_key(&e.fact_id) {
                return Err(Error::invalid(format!(
                    "example {} refers to unknown fact {}",
                    e.id, e.fact_id
                )));
            }
            if e.features.len() != feature_dim || feature_dim == 0 {
                return Err(Error::invalid(format!(
                    "example {} has {} features, expected {}",
                    e.id,
                    e.features.len(),
                    feature_dim
                )));
            }
            if example_index.insert(e.id, i).is_some() {
                return Err(Error::invalid(format!("duplicate example id {}", e.id)));
            }
        }
        Ok(Dataset {
            facts,
            labels,
            fact_index,
            examples,
            example_index,
            feature_dim,
        })
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn labels(&self) -> &[FactVector] {
        &self.labels
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Word-vector dimension `d` (each label is `3·d` wide).
    pub fn embed_dim(&self) -> usize {
        self.labels.first().map_or(0, FactVector::dim)
    }

    pub fn fact_position(&self, id: FactId) -> Option<usize> {
        self.fact_index.get(&id).copied()
    }

    pub fn fact(&self, id: FactId) -> Result<&Fact> {
        self.fact_position(id)
            .map(|i| &self.facts[i])
            .ok_or_else(|| Error::invalid(format!("unknown fact {id}")))
    }

    pub fn label(&self, id: FactId) -> Result<&FactVector> {
        self.fact_position(id)
            .map(|i| &self.labels[i])
            .ok_or_else(|| Error::invalid(format!("unknown fact {id}")))
    }

    pub fn example(&self, id: ExampleId) -> Result<&Example> {
        self.example_index
            .get(&id)
            .map(|&i| &self.examples[i])
            .ok_or_else(|| Error::invalid(format!("unknown example {id}")))
    }

    /// Training examples per fact; facts without any are present with zero.
    pub fn train_counts(&self) -> BTreeMap<FactId, usize> {
        let mut counts: BTreeMap<FactId, usize> = self.facts.iter().map(|f| (f.id, 0)).collect();
        for e in &self.examples {
            if e.split == Split::Train {
                *counts.get_mut(&e.fact_id).unwrap() += 1;
            }
        }
        counts
    }
}
