//! Single-linkage agglomerative clustering and dendrogram cuts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fact::CondensedMatrix;

/// One merge step. Leaves are `0..n`, the merge at step `s` creates cluster `n + s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Dendrogram {
    merges: Vec<Merge>,
}

impl Dendrogram {
    /// Validates the merge list: `n − 1` merges, each id used once as a child,
    /// consistent sizes, non-decreasing heights.
    pub fn from_merges(merges: Vec<Merge>) -> Result<Self> {
        let n = merges.len() + 1;
        let mut used = vec![false; 2 * n - 1];
        let mut sizes: Vec<usize> = vec![1; n];
        let mut last = f64::NEG_INFINITY;
        for (s, m) in merges.iter().enumerate() {
            let created = n + s;
            for c in [m.left, m.right] {
                if c >= created || used[c] {
                    return Err(Error::invalid(format!("merge {s}: bad child id {c}")));
                }
                used[c] = true;
            }
            if m.left >= m.right {
                return Err(Error::invalid(format!("merge {s}: left id must be smaller")));
            }
            if m.height.is_nan() || m.height < last {
                return Err(Error::invalid(format!("merge {s}: heights must not decrease")));
            }
            last = m.height;
            let size = sizes[m.left] + sizes[m.right];
            if size != m.size {
                return Err(Error::invalid(format!("merge {s}: size {} should be {size}", m.size)));
            }
            sizes.push(size);
        }
        Ok(Dendrogram { merges })
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Number of leaves.
    pub fn leaves(&self) -> usize {
        self.merges.len() + 1
    }

    /// Cluster labels after applying only the first `prefix` merges.
    pub fn labels_after(&self, prefix: usize) -> Vec<usize> {
        let n = self.leaves();
        let mut parent: Vec<usize> = (0..2 * n - 1).collect();
        for (s, m) in self.merges[..prefix].iter().enumerate() {
            parent[m.left] = n + s;
            parent[m.right] = n + s;
        }
        let root = |mut x: usize| {
            while parent[x] != x {
                x = parent[x];
            }
            x
        };
        relabel_by_first_member((0..n).map(root).collect())
    }

    /// Number of merges with height `<= threshold`.
    pub fn merges_at_or_below(&self, threshold: f64) -> usize {
        self.merges.partition_point(|m| m.height <= threshold)
    }
}

/// Renumbers arbitrary cluster keys to `0..k` in order of each cluster's smallest member.
pub(crate) fn relabel_by_first_member(keys: Vec<usize>) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    keys.into_iter()
        .map(|k| {
            let next = map.len();
            *map.entry(k).or_insert(next)
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
struct Key(f64, usize, usize);

/// Single-linkage clustering.
///
/// Each step merges the pair of active clusters with the smallest single-link
/// distance; ties go to the lexicographically smallest `(left id, right id)`.
pub fn agglomerate(distances: &CondensedMatrix) -> Result<Dendrogram> {
    let n = distances.n();
    if distances.values().iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("distance matrix contains NaN"));
    }
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = distances.get(i, j);
            dist[i * n + j] = v;
            dist[j * n + i] = v;
        }
    }
    let mut id: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];

    let key = |dist: &[f64], id: &[usize], a: usize, b: usize| {
        Key(dist[a * n + b], id[a].min(id[b]), id[a].max(id[b]))
    };
    let nearest = |dist: &[f64], id: &[usize], active: &[bool], a: usize| -> Option<(Key, usize)> {
        let mut best: Option<(Key, usize)> = None;
        for (b, _) in active.iter().enumerate().filter(|&(b, &on)| on && b != a) {
            let k = key(dist, id, a, b);
            if best.is_none_or(|(bk, _)| k < bk) {
                best = Some((k, b));
            }
        }
        best
    };

    let mut nn: Vec<Option<(Key, usize)>> = (0..n).map(|a| nearest(&dist, &id, &active, a)).collect();
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let (a, (k, b)) = (0..n)
            .filter(|&s| active[s])
            .map(|s| (s, nn[s].expect("active cluster has a neighbour")))
            .fold(None::<(usize, (Key, usize))>, |best, cand| match best {
                Some(bst) if bst.1 .0 <= cand.1 .0 => Some(bst),
                _ => Some(cand),
            })
            .unwrap();
        merges.push(Merge {
            left: k.1,
            right: k.2,
            height: k.0,
            size: size[a] + size[b],
        });

        for x in 0..n {
            if active[x] && x != a && x != b {
                let v = dist[a * n + x].min(dist[b * n + x]);
                dist[a * n + x] = v;
                dist[x * n + a] = v;
            }
        }
        active[b] = false;
        id[a] = n + step;
        size[a] += size[b];

        nn[a] = nearest(&dist, &id, &active, a);
        for x in 0..n {
            if !active[x] || x == a {
                continue;
            }
            match nn[x] {
                Some((_, p)) if p == a || p == b => nn[x] = nearest(&dist, &id, &active, x),
                Some((cur, _)) => {
                    let cand = key(&dist, &id, x, a);
                    if cand < cur {
                        nn[x] = Some((cand, a));
                    }
                }
                None => {}
            }
        }
    }
    Dendrogram::from_merges(merges)
}

/// Undoes every merge above `threshold`; labels follow each cluster's smallest leaf.
pub fn cut(dendrogram: &Dendrogram, threshold: f64) -> Vec<usize> {
    dendrogram.labels_after(dendrogram.merges_at_or_below(threshold))
}

/// Labels with exactly `k` clusters.
///
/// Binary-searches the merge heights for a cut giving `k` clusters. When tied
/// heights make that impossible, cuts to the smallest count above `k` and then
/// repeatedly folds the smallest cluster into its single-link nearest one.
pub fn clusters_for_count(
    dendrogram: &Dendrogram,
    distances: &CondensedMatrix,
    k: usize,
) -> Result<Vec<usize>> {
    let n = dendrogram.leaves();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("cannot form {k} clusters from {n} items")));
    }
    let wanted = n - k;
    if wanted == 0 {
        return Ok((0..n).collect());
    }
    let threshold = dendrogram.merges()[wanted - 1].height;
    let applied = dendrogram.merges_at_or_below(threshold);
    if applied == wanted {
        return Ok(dendrogram.labels_after(applied));
    }
    let below = dendrogram.merges().partition_point(|m| m.height < threshold);
    let labels = dendrogram.labels_after(below);
    Ok(merge_down(labels, distances, k))
}

fn merge_down(labels: Vec<usize>, distances: &CondensedMatrix, k: usize) -> Vec<usize> {
    let count = labels.iter().max().map_or(0, |m| m + 1);
    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); count];
    for (i, &l) in labels.iter().enumerate() {
        clusters[l].push(i);
    }
    while clusters.len() > k {
        let small = (0..clusters.len())
            .min_by_key(|&c| (clusters[c].len(), c))
            .unwrap();
        let mut best: Option<(f64, usize)> = None;
        for (c, members) in clusters.iter().enumerate() {
            if c == small {
                continue;
            }
            let d = members
                .iter()
                .flat_map(|&i| clusters[small].iter().map(move |&j| distances.get(i, j)))
                .fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, c));
            }
        }
        let target = best.unwrap().1;
        let moved = std::mem::take(&mut clusters[small]);
        clusters[target].extend(moved);
        clusters.remove(small);
        for c in clusters.iter_mut() {
            c.sort_unstable();
        }
        clusters.sort_by_key(|c| c[0]);
    }
    let mut out = vec![0; labels.len()];
    for (l, members) in clusters.iter().enumerate() {
        for &i in members {
            out[i] = l;
        }
    }
    out
}
