//! Structured facts, their embeddings, and the masked fact distance.
//!
//! A fact ⟨S,P,O⟩ is embedded as three word-vector blocks laid end to end.
//! A slot that is not asserted (written `*`) is stored as a zero block and
//! flagged in the mask, so distances and scores can ignore it.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest value [`fact_distance`] can return; also used when two facts share no defined slot.
pub const MAX_DISTANCE: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactId(pub u32);

impl fmt::Display for FactId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    Subject = 0,
    Predicate = 1,
    Object = 2,
}

impl Slot {
    pub const ALL: [Slot; 3] = [Slot::Subject, Slot::Predicate, Slot::Object];
}

/// The three shapes a fact can take.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FactShape {
    #[serde(rename = "S")]
    S,
    #[serde(rename = "SP")]
    SP,
    #[serde(rename = "SPO")]
    SPO,
}

impl FactShape {
    pub const ALL: [FactShape; 3] = [FactShape::S, FactShape::SP, FactShape::SPO];

    pub fn as_str(self) -> &'static str {
        match self {
            FactShape::S => "S",
            FactShape::SP => "SP",
            FactShape::SPO => "SPO",
        }
    }
}

/// A structured label. `predicate` and `object` are `None` when undefined.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Fact {
    pub id: FactId,
    pub subject: String,
    pub predicate: Option<String>,
    pub object: Option<String>,
}

impl Fact {
    /// Validates and normalizes (trims) the slots.
    pub fn new(
        id: u32,
        subject: &str,
        predicate: Option<&str>,
        object: Option<&str>,
    ) -> Result<Fact> {
        let bad = |reason: &str| Error::InvalidFact {
            id,
            reason: reason.to_string(),
        };
        let clean = |s: Option<&str>, slot: &str| -> Result<Option<String>> {
            match s {
                None => Ok(None),
                Some(t) if t.trim().is_empty() => Err(bad(&format!("empty {slot}"))),
                Some(t) => Ok(Some(t.trim().to_string())),
            }
        };
        let subject = clean(Some(subject), "subject")?.unwrap();
        let predicate = clean(predicate, "predicate")?;
        let object = clean(object, "object")?;
        if object.is_some() && predicate.is_none() {
            return Err(bad("object defined without predicate"));
        }
        Ok(Fact {
            id: FactId(id),
            subject,
            predicate,
            object,
        })
    }

    /// Parses the `*`-for-undefined convention used in fact files.
    pub fn from_fields(id: u32, subject: &str, predicate: &str, object: &str) -> Result<Fact> {
        fn opt(s: &str) -> Option<&str> {
            (s.trim() != "*").then_some(s)
        }
        if subject.trim() == "*" {
            return Err(Error::InvalidFact {
                id,
                reason: "subject must be defined".into(),
            });
        }
        Fact::new(id, subject, opt(predicate), opt(object))
    }

    pub fn slot(&self, slot: Slot) -> Option<&str> {
        match slot {
            Slot::Subject => Some(&self.subject),
            Slot::Predicate => self.predicate.as_deref(),
            Slot::Object => self.object.as_deref(),
        }
    }

    pub fn shape(&self) -> FactShape {
        match (&self.predicate, &self.object) {
            (None, _) => FactShape::S,
            (Some(_), None) => FactShape::SP,
            (Some(_), Some(_)) => FactShape::SPO,
        }
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.predicate.as_deref().unwrap_or("*");
        let o = self.object.as_deref().unwrap_or("*");
        write!(f, "<{}, {}, {}>", self.subject, p, o)
    }
}

/// Word vectors keyed by lowercase token.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        Ok(EmbeddingTable {
            dim,
            vectors: HashMap::new(),
        })
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite vector for `{token}`")));
        }
        self.vectors.insert(token.to_lowercase(), vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(&token.to_lowercase()).map(Vec::as_slice)
    }

    /// Tokens in sorted order.
    pub fn tokens(&self) -> Vec<&str> {
        let mut t: Vec<&str> = self.vectors.keys().map(String::as_str).collect();
        t.sort_unstable();
        t
    }

    /// Tokens of `phrase` missing from the table, in order of appearance.
    pub fn missing_tokens(&self, phrase: &str) -> Vec<String> {
        phrase
            .split_whitespace()
            .filter(|w| self.get(w).is_none())
            .map(str::to_string)
            .collect()
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Mean of the word vectors of `phrase`, scaled to unit norm.
pub fn embed_token(table: &EmbeddingTable, phrase: &str) -> Result<Vec<f64>> {
    let words: Vec<&str> = phrase.split_whitespace().collect();
    if words.is_empty() {
        return Err(Error::invalid("cannot embed an empty phrase"));
    }
    let missing = table.missing_tokens(phrase);
    if !missing.is_empty() {
        return Err(Error::UnknownTokens(missing));
    }
    let mut mean = vec![0.0; table.dim()];
    for w in &words {
        for (m, x) in mean.iter_mut().zip(table.get(w).unwrap()) {
            *m += x;
        }
    }
    let n = words.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    if normalize(&mut mean) == 0.0 {
        return Err(Error::invalid(format!("phrase `{phrase}` has a zero mean vector")));
    }
    Ok(mean)
}

/// Concatenated `[t_S, t_P, t_O]` with a per-slot defined mask.
#[derive(Clone, Debug, PartialEq)]
pub struct FactVector {
    dim: usize,
    data: Vec<f64>,
    mask: [bool; 3],
}

impl FactVector {
    /// Builds from per-slot blocks; defined blocks are normalized to unit length.
    pub fn from_blocks(dim: usize, blocks: [Option<&[f64]>; 3]) -> Result<FactVector> {
        let mut data = vec![0.0; 3 * dim];
        let mut mask = [false; 3];
        for (l, block) in blocks.iter().enumerate() {
            if let Some(b) = block {
                if b.len() != dim {
                    return Err(Error::Dimension {
                        expected: dim,
                        found: b.len(),
                    });
                }
                let dst = &mut data[l * dim..(l + 1) * dim];
                dst.copy_from_slice(b);
                if normalize(dst) == 0.0 {
                    return Err(Error::invalid("cannot normalize a zero block"));
                }
                mask[l] = true;
            }
        }
        Ok(FactVector { dim, data, mask })
    }

    /// A fully defined vector from a raw `3·dim` row, normalized per block.
    pub fn from_concat(dim: usize, row: &[f64]) -> Result<FactVector> {
        if row.len() != 3 * dim {
            return Err(Error::Dimension {
                expected: 3 * dim,
                found: row.len(),
            });
        }
        FactVector::from_blocks(
            dim,
            [
                Some(&row[..dim]),
                Some(&row[dim..2 * dim]),
                Some(&row[2 * dim..]),
            ],
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn block(&self, slot: Slot) -> &[f64] {
        let l = slot as usize;
        &self.data[l * self.dim..(l + 1) * self.dim]
    }

    pub fn is_defined(&self, slot: Slot) -> bool {
        self.mask[slot as usize]
    }

    pub fn mask(&self) -> [bool; 3] {
        self.mask
    }

    pub fn defined_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// The full `3·dim` concatenation, zeros included.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn shape(&self) -> Option<FactShape> {
        match self.mask {
            [true, false, false] => Some(FactShape::S),
            [true, true, false] => Some(FactShape::SP),
            [true, true, true] => Some(FactShape::SPO),
            _ => None,
        }
    }
}

/// Embeds every defined slot of `fact`.
pub fn embed_fact(table: &EmbeddingTable, fact: &Fact) -> Result<FactVector> {
    let mut missing = Vec::new();
    let mut blocks: [Option<Vec<f64>>; 3] = [None, None, None];
    for slot in Slot::ALL {
        if let Some(phrase) = fact.slot(slot) {
            match embed_token(table, phrase) {
                Ok(v) => blocks[slot as usize] = Some(v),
                Err(Error::UnknownTokens(t)) => missing.extend(t),
                Err(e) => return Err(e),
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::UnknownTokens(missing));
    }
    FactVector::from_blocks(
        table.dim(),
        [blocks[0].as_deref(), blocks[1].as_deref(), blocks[2].as_deref()],
    )
}

/// Mean squared block difference over slots defined in both facts.
///
/// Returns [`MAX_DISTANCE`] when no slot is defined in both. The measure is
/// not a metric; it breaks the triangle inequality through the masking.
pub fn fact_distance(a: &FactVector, b: &FactVector) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::Dimension {
            expected: a.dim,
            found: b.dim,
        });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for slot in Slot::ALL {
        if a.is_defined(slot) && b.is_defined(slot) {
            num += a
                .block(slot)
                .iter()
                .zip(b.block(slot))
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>();
            den += 1.0;
        }
    }
    Ok(if den == 0.0 { MAX_DISTANCE } else { num / den })
}

/// Upper-triangular pairwise distances, row-major over `i < j`.
#[derive(Clone, Debug, PartialEq)]
pub struct CondensedMatrix {
    n: usize,
    values: Vec<f64>,
}

impl CondensedMatrix {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("need at least two items"));
        }
        if values.len() != n * (n - 1) / 2 {
            return Err(Error::Dimension {
                expected: n * (n - 1) / 2,
                found: values.len(),
            });
        }
        Ok(CondensedMatrix { n, values })
    }

    /// Fills every `i < j` entry from a closure.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                values.push(f(i, j));
            }
        }
        CondensedMatrix::new(n, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    /// Distance between `i` and `j`; zero on the diagonal.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.values[self.index(i, j)]
        }
    }
}

/// [`fact_distance`] for every pair.
pub fn pairwise_distances(facts: &[FactVector]) -> Result<CondensedMatrix> {
    if facts.len() < 2 {
        return Err(Error::invalid("pairwise distances need at least two facts"));
    }
    let dim = facts[0].dim;
    if let Some(f) = facts.iter().find(|f| f.dim != dim) {
        return Err(Error::Dimension {
            expected: dim,
            found: f.dim,
        });
    }
    CondensedMatrix::from_fn(facts.len(), |i, j| {
        fact_distance(&facts[i], &facts[j]).expect("dimensions checked")
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> EmbeddingTable {
        let mut t = EmbeddingTable::new(2).unwrap();
        t.insert("riding", vec![1.0, 0.0]).unwrap();
        t.insert("bike", vec![0.0, 1.0]).unwrap();
        t.insert("person", vec![3.0, 4.0]).unwrap();
        t.insert("jumping", vec![-1.0, 2.0]).unwrap();
        t.insert("dog", vec![0.5, 0.5]).unwrap();
        t.insert("horse", vec![2.0, -1.0]).unwrap();
        t.insert("man", vec![1.0, 1.0]).unwrap();
        t.insert("walking", vec![0.2, 0.9]).unwrap();
        t
    }

    #[test]
    fn single_token_is_normalized() {
        let v = embed_token(&table(), "person").unwrap();
        assert_eq!(v, vec![0.6, 0.8]);
    }

    #[test]
    fn repeated_token_equals_single() {
        let t = table();
        let a = embed_token(&t, "person").unwrap();
        let b = embed_token(&t, "person person").unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn multi_word_mean() {
        let v = embed_token(&table(), "riding bike").unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!((v[0] - h).abs() < 1e-15 && (v[1] - h).abs() < 1e-15);
    }

    #[test]
    fn lookup_is_case_insensitive() {
        let v = embed_token(&table(), "Person").unwrap();
        assert_eq!(v, vec![0.6, 0.8]);
    }

    #[test]
    fn unknown_tokens_are_listed() {
        match embed_token(&table(), "riding unicorn zebra") {
            Err(Error::UnknownTokens(t)) => assert_eq!(t, vec!["unicorn", "zebra"]),
            other => panic!("{other:?}"),
        }
        let f = Fact::new(1, "cat", Some("chasing"), None).unwrap();
        match embed_fact(&table(), &f) {
            Err(Error::UnknownTokens(t)) => assert_eq!(t, vec!["cat", "chasing"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fact_shapes_embed_with_zero_blocks() {
        let t = table();
        let dog = embed_fact(&t, &Fact::new(0, "dog", None, None).unwrap()).unwrap();
        assert_eq!(dog.mask(), [true, false, false]);
        assert_eq!(dog.block(Slot::Predicate), &[0.0, 0.0]);
        assert_eq!(dog.block(Slot::Object), &[0.0, 0.0]);

        let prh = embed_fact(&t, &Fact::new(1, "person", Some("riding"), Some("horse")).unwrap()).unwrap();
        assert_eq!(prh.mask(), [true, true, true]);
        assert_eq!(prh.shape(), Some(FactShape::SPO));

        let mw = embed_fact(&t, &Fact::new(2, "man", Some("walking"), None).unwrap()).unwrap();
        assert_eq!(mw.mask(), [true, true, false]);
        assert_eq!(mw.block(Slot::Object), &[0.0, 0.0]);
        for slot in [Slot::Subject, Slot::Predicate] {
            let n: f64 = mw.block(slot).iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn fact_validation() {
        assert!(Fact::new(0, "  ", None, None).is_err());
        assert!(Fact::new(0, "dog", None, Some("ball")).is_err());
        assert!(Fact::from_fields(0, "*", "x", "*").is_err());
        let f = Fact::from_fields(3, " dog ", "*", "*").unwrap();
        assert_eq!(f.subject, "dog");
        assert_eq!(f.shape(), FactShape::S);
    }

    #[test]
    fn undefined_slot_does_not_contribute() {
        let t = table();
        let a = embed_fact(&t, &Fact::new(0, "person", None, None).unwrap()).unwrap();
        let b = embed_fact(&t, &Fact::new(1, "person", Some("jumping"), None).unwrap()).unwrap();
        assert_eq!(fact_distance(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn orthogonal_subject_and_object() {
        let s1 = [1.0, 0.0];
        let s2 = [0.0, 1.0];
        let p = [0.6, 0.8];
        let a = FactVector::from_blocks(2, [Some(&s1), Some(&p), Some(&s1)]).unwrap();
        let b = FactVector::from_blocks(2, [Some(&s2), Some(&p), Some(&s2)]).unwrap();
        let d = fact_distance(&a, &b).unwrap();
        assert!((d - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(fact_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn no_shared_slot_gives_max_distance() {
        let s = [1.0, 0.0];
        let a = FactVector::from_blocks(2, [None, Some(&s), None]).unwrap();
        let b = FactVector::from_blocks(2, [Some(&s), None, None]).unwrap();
        assert_eq!(fact_distance(&a, &b).unwrap(), MAX_DISTANCE);
    }

    #[test]
    fn dimension_mismatch() {
        let a = FactVector::from_blocks(2, [Some(&[1.0, 0.0]), None, None]).unwrap();
        let b = FactVector::from_blocks(3, [Some(&[1.0, 0.0, 0.0]), None, None]).unwrap();
        assert!(fact_distance(&a, &b).is_err());
        assert!(pairwise_distances(&[a, b]).is_err());
    }

    #[test]
    fn pairwise_matches_direct_calls() {
        let t = table();
        let facts: Vec<FactVector> = [
            Fact::new(0, "person", Some("riding"), Some("horse")),
            Fact::new(1, "dog", None, None),
            Fact::new(2, "man", Some("walking"), None),
        ]
        .into_iter()
        .map(|f| embed_fact(&t, &f.unwrap()).unwrap())
        .collect();
        let m = pairwise_distances(&facts).unwrap();
        assert_eq!(m.values().len(), 3);
        for i in 0..3 {
            for j in i + 1..3 {
                assert_eq!(m.get(i, j), fact_distance(&facts[i], &facts[j]).unwrap());
                assert_eq!(m.get(j, i), m.get(i, j));
            }
        }
    }

    #[test]
    fn pairwise_identical_and_duplicates() {
        let t = table();
        let f = embed_fact(&t, &Fact::new(0, "dog", Some("riding"), None).unwrap()).unwrap();
        assert_eq!(pairwise_distances(&[f.clone(), f.clone()]).unwrap().values(), &[0.0]);
        let g = embed_fact(&t, &Fact::new(1, "horse", None, None).unwrap()).unwrap();
        let m = pairwise_distances(&[f.clone(), g, f.clone()]).unwrap();
        assert_eq!(m.get(0, 2), 0.0);
        assert!(pairwise_distances(&[f]).is_err());
    }
}
