#![allow(dead_code)]

use llfl::data::{Dataset, Example, ExampleId, Split};
use llfl::fact::{EmbeddingTable, Fact, FactId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn table(dim: usize, entries: &[(&str, Vec<f64>)]) -> EmbeddingTable {
    let mut t = EmbeddingTable::new(dim).unwrap();
    for (k, v) in entries {
        t.insert(k, v.clone()).unwrap();
    }
    t
}

/// A table of random vectors for every token used by `facts`.
pub fn random_table(dim: usize, facts: &[Fact], seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = EmbeddingTable::new(dim).unwrap();
    for f in facts {
        for tok in [Some(f.subject.as_str()), f.predicate.as_deref(), f.object.as_deref()].into_iter().flatten() {
            if t.get(tok).is_none() {
                t.insert(tok, (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            }
        }
    }
    t
}

/// Examples with random features: `train[i]` training and `test` test
/// examples for fact `i`.
pub fn examples_for(facts: &[Fact], train: &[usize], test: usize, feature_dim: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (f, &n) in facts.iter().zip(train) {
        for (split, count) in [(Split::Train, n), (Split::Test, test)] {
            for _ in 0..count {
                out.push(Example {
                    id: ExampleId(out.len() as u64),
                    fact_id: f.id,
                    split,
                    features: (0..feature_dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                });
            }
        }
    }
    out
}

pub fn spo(id: u32, s: &str, p: &str, o: &str) -> Fact {
    Fact::from_fields(id, s, p, o).unwrap()
}

/// `n` distinct SPO facts over a small vocabulary.
pub fn fact_list(n: usize) -> Vec<Fact> {
    (0..n)
        .map(|i| spo(i as u32, &format!("s{}", i % 7), &format!("p{}", i % 5), &format!("o{}", i)))
        .collect()
}

pub fn dataset(facts: Vec<Fact>, train: &[usize], test: usize, seed: u64) -> Dataset {
    let t = random_table(5, &facts, seed);
    let ex = examples_for(&facts, train, test, 6, seed);
    Dataset::new(facts, &t, ex).unwrap()
}

pub fn ids(v: &[u32]) -> Vec<FactId> {
    v.iter().map(|&i| FactId(i)).collect()
}
