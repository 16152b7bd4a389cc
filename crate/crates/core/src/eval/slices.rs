use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Metric, RankTable};
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::fact::{Fact, FactId, FactShape};

/// Lower bounds of the long-tail bins; the last bin is open-ended.
pub const DEFAULT_BIN_EDGES: [usize; 7] = [1, 2, 6, 11, 51, 101, 501];
pub const FEWSHOT_MAX: usize = 10;
/// A fact counts as rare for the compositional slice up to this many training examples.
pub const SPO_RARE_MAX: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinEdges(Vec<usize>);

impl BinEdges {
    pub fn new(edges: Vec<usize>) -> Result<Self> {
        if edges.first() != Some(&1) {
            return Err(Error::invalid("bin edges must start at 1"));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("bin edges must be strictly increasing"));
        }
        Ok(BinEdges(edges))
    }

    pub fn edges(&self) -> &[usize] {
        &self.0
    }

    /// Bin holding `count`, or `None` below the first edge.
    pub fn bin_of(&self, count: usize) -> Option<usize> {
        self.0.iter().rposition(|&lo| lo <= count)
    }

    /// Inclusive upper bound of bin `i`.
    pub fn upper(&self, i: usize) -> Option<usize> {
        self.0.get(i + 1).map(|hi| hi - 1)
    }
}

impl Default for BinEdges {
    fn default() -> Self {
        BinEdges(DEFAULT_BIN_EDGES.to_vec())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub lo: usize,
    /// Inclusive; `None` for the open last bin.
    pub hi: Option<usize>,
    pub support: usize,
    pub accuracy: Option<f64>,
}

/// Groups test examples by their gold fact's training count.
pub fn longtail_bins(
    table: &RankTable,
    dataset: &Dataset,
    edges: &BinEdges,
    k: usize,
    metric: Metric,
) -> Result<Vec<BinReport>> {
    let counts = dataset.train_counts();
    let mut support = vec![0usize; edges.edges().len()];
    let mut hits = vec![0usize; edges.edges().len()];
    for e in table.entries() {
        let c = counts[&e.fact];
        let b = edges
            .bin_of(c)
            .ok_or_else(|| Error::invalid(format!("fact {} has {c} training examples, below every bin", e.fact)))?;
        support[b] += 1;
        hits[b] += e.hit(metric, k) as usize;
    }
    Ok(edges
        .edges()
        .iter()
        .enumerate()
        .map(|(i, &lo)| BinReport {
            lo,
            hi: edges.upper(i),
            support: support[i],
            accuracy: (support[i] > 0).then(|| hits[i] as f64 / support[i] as f64),
        })
        .collect())
}

/// Per-task accuracy on test examples whose gold fact has at most
/// `max_count` training examples; `None` where no example qualifies.
pub fn fewshot_accuracy(
    table: &RankTable,
    dataset: &Dataset,
    max_count: usize,
    k: usize,
    metric: Metric,
) -> Vec<Option<f64>> {
    let counts = dataset.train_counts();
    (0..table.task_count())
        .map(|t| table.accuracy_where(metric, k, |e| e.task == t && counts[&e.fact] <= max_count))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeCell {
    pub support: usize,
    pub accuracy: f64,
}

/// Accuracy of one task split by gold-fact shape; only populated shapes appear.
pub fn fact_type_breakdown(
    table: &RankTable,
    dataset: &Dataset,
    task: usize,
    k: usize,
    metric: Metric,
) -> Result<BTreeMap<FactShape, ShapeCell>> {
    let mut acc: BTreeMap<FactShape, (usize, usize)> = BTreeMap::new();
    for e in table.task_entries(task) {
        let shape = dataset.fact(e.fact)?.shape();
        let cell = acc.entry(shape).or_default();
        cell.0 += 1;
        cell.1 += e.hit(metric, k) as usize;
    }
    Ok(acc
        .into_iter()
        .map(|(s, (n, h))| {
            (
                s,
                ShapeCell {
                    support: n,
                    accuracy: h as f64 / n as f64,
                },
            )
        })
        .collect())
}

/// Which sub-patterns of a rare SPO fact must be frequent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpoCondition {
    SpO,
    PSo,
    PoS,
    SpPoSo,
    SpPo,
    SpSo,
    PoSo,
}

/// A sub-pattern of a fact: which of S, P, O must match.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct Part {
    s: bool,
    p: bool,
    o: bool,
}

const S: Part = Part { s: true, p: false, o: false };
const P: Part = Part { s: false, p: true, o: false };
const O: Part = Part { s: false, p: false, o: true };
const SP: Part = Part { s: true, p: true, o: false };
const PO: Part = Part { s: false, p: true, o: true };
const SO: Part = Part { s: true, p: false, o: true };

impl SpoCondition {
    pub const ALL: [SpoCondition; 7] = [
        SpoCondition::SpO,
        SpoCondition::PSo,
        SpoCondition::PoS,
        SpoCondition::SpPoSo,
        SpoCondition::SpPo,
        SpoCondition::SpSo,
        SpoCondition::PoSo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SpoCondition::SpO => "SP,O",
            SpoCondition::PSo => "P,SO",
            SpoCondition::PoS => "PO,S",
            SpoCondition::SpPoSo => "SP,PO,SO",
            SpoCondition::SpPo => "SP,PO",
            SpoCondition::SpSo => "SP,SO",
            SpoCondition::PoSo => "PO,SO",
        }
    }

    fn parts(self) -> &'static [Part] {
        match self {
            SpoCondition::SpO => &[SP, O],
            SpoCondition::PSo => &[P, SO],
            SpoCondition::PoS => &[PO, S],
            SpoCondition::SpPoSo => &[SP, PO, SO],
            SpoCondition::SpPo => &[SP, PO],
            SpoCondition::SpSo => &[SP, SO],
            SpoCondition::PoSo => &[PO, SO],
        }
    }
}

impl fmt::Display for SpoCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpoCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SpoCondition::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown condition `{s}`")))
    }
}

impl Serialize for SpoCondition {
    fn serialize<Ser: serde::Serializer>(&self, s: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for SpoCondition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpoCell {
    pub condition: SpoCondition,
    pub threshold: usize,
    pub support: usize,
    pub accuracy: Option<f64>,
}

type Key = (Option<String>, Option<String>, Option<String>);

fn key(fact: &Fact, part: Part) -> Option<Key> {
    let pick = |on: bool, v: Option<&str>| -> Option<Option<String>> {
        if !on {
            return Some(None);
        }
        v.map(|t| Some(t.to_lowercase()))
    };
    Some((
        pick(part.s, Some(&fact.subject))?,
        pick(part.p, fact.predicate.as_deref())?,
        pick(part.o, fact.object.as_deref())?,
    ))
}

/// Accuracy on rare SPO facts (at most [`SPO_RARE_MAX`] training examples)
/// whose sub-patterns are each seen at least `threshold` times in training.
///
/// A sub-pattern's count is the number of training examples whose gold fact
/// agrees with it on the listed slots, whatever the other slots hold.
pub fn spo_generalization(
    table: &RankTable,
    dataset: &Dataset,
    threshold: usize,
    conditions: &[SpoCondition],
    k: usize,
    metric: Metric,
) -> Result<Vec<SpoCell>> {
    if threshold == 0 {
        return Err(Error::invalid("threshold must be at least 1"));
    }
    let train_counts = dataset.train_counts();
    let all_parts = [S, P, O, SP, PO, SO];
    let mut part_counts: HashMap<(usize, Key), usize> = HashMap::new();
    for e in dataset.examples().iter().filter(|e| e.split == Split::Train) {
        let fact = dataset.fact(e.fact_id)?;
        for (pi, &p) in all_parts.iter().enumerate() {
            if let Some(k) = key(fact, p) {
                *part_counts.entry((pi, k)).or_default() += 1;
            }
        }
    }
    let count_of = |fact: &Fact, part: Part| -> usize {
        let pi = all_parts.iter().position(|&q| q == part).unwrap();
        key(fact, part)
            .and_then(|k| part_counts.get(&(pi, k)).copied())
            .unwrap_or(0)
    };

    let mut rare: HashMap<FactId, &Fact> = HashMap::new();
    for f in dataset.facts() {
        if f.shape() == FactShape::SPO && train_counts[&f.id] <= SPO_RARE_MAX {
            rare.insert(f.id, f);
        }
    }
    Ok(conditions
        .iter()
        .map(|&c| {
            let ok = |id: &FactId| {
                rare.get(id)
                    .is_some_and(|f| c.parts().iter().all(|&p| count_of(f, p) >= threshold))
            };
            let support = table.entries().iter().filter(|e| ok(&e.fact)).count();
            SpoCell {
                condition: c,
                threshold,
                support,
                accuracy: table.accuracy_where(metric, k, |e| ok(&e.fact)),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_lookup() {
        let b = BinEdges::default();
        assert_eq!(b.bin_of(0), None);
        assert_eq!(b.bin_of(1), Some(0));
        assert_eq!(b.bin_of(5), Some(1));
        assert_eq!(b.bin_of(6), Some(2));
        assert_eq!(b.bin_of(500), Some(5));
        assert_eq!(b.bin_of(100_000), Some(6));
        assert_eq!(b.upper(1), Some(5));
        assert_eq!(b.upper(6), None);
        assert!(BinEdges::new(vec![0, 3]).is_err());
        assert!(BinEdges::new(vec![1, 3, 3]).is_err());
    }

    #[test]
    fn condition_names_round_trip() {
        for c in SpoCondition::ALL {
            assert_eq!(c.as_str().parse::<SpoCondition>().unwrap(), c);
        }
    }
}
