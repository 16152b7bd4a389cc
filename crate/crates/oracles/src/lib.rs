//! Reference computations written without any of `llfl`'s machinery.
//!
//! Everything here works on plain slices and is deliberately naive: loops
//! instead of kernels, full sorts instead of counting, brute-force searches
//! instead of incremental updates.

/// Central finite differences of `f` at `x`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let hi = f(&probe);
            probe[i] = x[i] - eps;
            let lo = f(&probe);
            probe[i] = x[i];
            (hi - lo) / (2.0 * eps)
        })
        .collect()
}

/// Largest `|a − b| / max(|a|, |b|, floor)` over paired entries.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => {
                if v > 0.0 {
                    v
                } else {
                    0.0
                }
            }
            Activation::Tanh => v.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
        }
    }
}

/// A dense layer with row-major `weight[in][out]`.
#[derive(Clone, Debug)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Runs one row through `layers`, one multiply-add at a time.
pub fn mlp_row(x: &[f64], layers: &[Layer]) -> Vec<f64> {
    let mut cur = x.to_vec();
    for layer in layers {
        assert_eq!(cur.len(), layer.inputs);
        let mut next = Vec::with_capacity(layer.outputs);
        for o in 0..layer.outputs {
            let mut acc = layer.bias[o];
            for (i, c) in cur.iter().enumerate() {
                acc += c * layer.weight[i * layer.outputs + o];
            }
            next.push(layer.activation.apply(acc));
        }
        cur = next;
    }
    cur
}

/// Splits `v` into `blocks` equal chunks and divides each by `norm + eps`.
pub fn normalize_blocks(v: &[f64], blocks: usize, eps: f64) -> Vec<f64> {
    let width = v.len() / blocks;
    let mut out = Vec::with_capacity(v.len());
    for b in 0..blocks {
        let chunk = &v[b * width..(b + 1) * width];
        let mut sq = 0.0;
        for c in chunk {
            sq += c * c;
        }
        let denom = sq.sqrt() + eps;
        for c in chunk {
            out.push(c / denom);
        }
    }
    out
}

/// One agglomeration step: the two member sets joined and their distance.
#[derive(Clone, Debug, PartialEq)]
pub struct NaiveMerge {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub height: f64,
}

/// Single linkage by exhaustive search: each step scans every pair of
/// clusters and every pair of members. Cubic per step, fine for small `n`.
///
/// Ties go to the pair whose smallest members come first. Within a merge
/// `left` holds the cluster with the smaller minimum member.
pub fn single_linkage(n: usize, dist: impl Fn(usize, usize) -> f64) -> Vec<NaiveMerge> {
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut merges = Vec::new();
    while clusters.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut link = f64::INFINITY;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        link = link.min(dist(i, j));
                    }
                }
                if best.is_none_or(|(d, _, _)| link < d) {
                    best = Some((link, a, b));
                }
            }
        }
        let (height, a, b) = best.unwrap();
        let right = clusters.remove(b);
        let left = clusters.remove(a);
        let (left, right) = if left[0] < right[0] { (left, right) } else { (right, left) };
        let mut joined = left.clone();
        joined.extend(&right);
        joined.sort_unstable();
        clusters.push(joined);
        clusters.sort_by_key(|c| c[0]);
        merges.push(NaiveMerge { left, right, height });
    }
    merges
}

/// Cluster label per item after applying every merge at or below `threshold`,
/// numbered by smallest member.
pub fn cut_labels(n: usize, merges: &[NaiveMerge], threshold: f64) -> Vec<usize> {
    let mut group: Vec<usize> = (0..n).collect();
    for m in merges.iter().filter(|m| m.height <= threshold) {
        let target = group[m.left[0]];
        let source = group[m.right[0]];
        for g in group.iter_mut() {
            if *g == source {
                *g = target;
            }
        }
    }
    let mut order: Vec<usize> = Vec::new();
    for &g in &group {
        if !order.contains(&g) {
            order.push(g);
        }
    }
    group.iter().map(|g| order.iter().position(|o| o == g).unwrap()).collect()
}

/// Position of `gold` after sorting `(id, score)` by descending score, then
/// ascending id.
pub fn sorted_position(scored: &[(u32, f64)], gold: u32) -> usize {
    let mut all = scored.to_vec();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.iter().position(|s| s.0 == gold).expect("gold among candidates")
}

/// Fraction of `(gold, scores)` rows whose gold lands in the first `k` places.
pub fn topk_by_sorting(rows: &[(u32, Vec<(u32, f64)>)], k: usize) -> f64 {
    let hits = rows.iter().filter(|(g, s)| sorted_position(s, *g) < k).count();
    hits as f64 / rows.len() as f64
}

/// Gradient descent on `½θ²` from `theta0`: every step multiplies θ by
/// `1 − lr`. Returns the final θ and the path integral `Σ −g·Δθ` in closed
/// form, `lr·θ0²·(1 − q^T)/(1 − q)` with `q = (1 − lr)²`.
pub fn quadratic_path_integral(theta0: f64, lr: f64, steps: u32) -> (f64, f64) {
    let r = 1.0 - lr;
    let q = r * r;
    let end = theta0 * r.powi(steps as i32);
    let integral = if q == 1.0 {
        0.0
    } else {
        lr * theta0 * theta0 * (1.0 - q.powi(steps as i32)) / (1.0 - q)
    };
    (end, integral)
}

/// `Σ αₖ·Fₖ·θₖ / Σ αₖ·Fₖ` for one coordinate.
pub fn precision_weighted(values: &[f64], precisions: &[f64], alpha: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((v, f), a) in values.iter().zip(precisions).zip(alpha) {
        num += a * f * v;
        den += a * f;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_difference_of_cube() {
        let g = central_difference(|x| x[0].powi(3), &[2.0], 1e-5);
        assert!((g[0] - 12.0).abs() < 1e-6);
    }

    #[test]
    fn linkage_on_three_points() {
        // d(0,1)=1, d(0,2)=3, d(1,2)=2
        let d = [[0.0, 1.0, 3.0], [1.0, 0.0, 2.0], [3.0, 2.0, 0.0]];
        let m = single_linkage(3, |i, j| d[i][j]);
        assert_eq!(m[0], NaiveMerge { left: vec![0], right: vec![1], height: 1.0 });
        assert_eq!(m[1].height, 2.0);
        assert_eq!(cut_labels(3, &m, 1.5), vec![0, 0, 1]);
    }

    #[test]
    fn quadratic_integral_matches_loop() {
        let (lr, mut theta) = (0.3, 2.0);
        let mut w = 0.0;
        for _ in 0..7 {
            let next = theta - lr * theta;
            w += -theta * (next - theta);
            theta = next;
        }
        let (end, integral) = quadratic_path_integral(2.0, lr, 7);
        assert!((end - theta).abs() < 1e-12 && (integral - w).abs() < 1e-12);
    }
}
