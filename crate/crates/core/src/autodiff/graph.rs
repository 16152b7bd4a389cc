use std::collections::HashMap;

use super::tensor::{matmul, matmul_nt, matmul_tn};
use super::{ParamSet, Tensor};
use crate::error::{Error, Result};

/// Denominator guard for [`GraphBuilder::l2_normalize`].
pub const L2_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Input(String),
    Param(String),
    /// `(m×k)·(k×n)`
    MatMul(NodeId, NodeId),
    /// `(m×n) + (n)` broadcast over rows.
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Relu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    /// Each row split into `blocks` equal chunks, each chunk scaled to unit norm.
    L2Normalize { input: NodeId, blocks: usize },
    SumSquares(NodeId),
    Sum(NodeId),
    /// `(m×n) → (m×1)`
    RowSum(NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId, f64),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::AddBias(..) => "add_bias",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Relu(_) => "relu",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::L2Normalize { .. } => "l2_normalize",
            Op::SumSquares(_) => "sum_squares",
            Op::Sum(_) => "sum",
            Op::RowSum(_) => "row_sum",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
        }
    }
}

/// Appends nodes in topological order; operands always precede their users.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<Op>,
    named: HashMap<(bool, String), NodeId>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op) -> NodeId {
        self.nodes.push(op);
        NodeId(self.nodes.len() - 1)
    }

    fn named(&mut self, is_param: bool, name: &str) -> NodeId {
        if let Some(&id) = self.named.get(&(is_param, name.to_string())) {
            return id;
        }
        let op = if is_param {
            Op::Param(name.to_string())
        } else {
            Op::Input(name.to_string())
        };
        let id = self.push(op);
        self.named.insert((is_param, name.to_string()), id);
        id
    }

    /// Input placeholder; the same name always returns the same node.
    pub fn input(&mut self, name: &str) -> NodeId {
        self.named(false, name)
    }

    pub fn param(&mut self, name: &str) -> NodeId {
        self.named(true, name)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul(a, b))
    }

    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        self.push(Op::AddBias(x, bias))
    }

    /// `x·w + b`
    pub fn linear(&mut self, x: NodeId, weight: &str, bias: &str) -> NodeId {
        let w = self.param(weight);
        let b = self.param(bias);
        let xw = self.matmul(x, w);
        self.add_bias(xw, b)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Relu(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sigmoid(x))
    }

    pub fn l2_normalize(&mut self, x: NodeId, blocks: usize) -> NodeId {
        self.push(Op::L2Normalize { input: x, blocks })
    }

    pub fn sum_squares(&mut self, x: NodeId) -> NodeId {
        self.push(Op::SumSquares(x))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sum(x))
    }

    pub fn row_sum(&mut self, x: NodeId) -> NodeId {
        self.push(Op::RowSum(x))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        self.push(Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> NodeId {
        self.push(Op::AddScalar(x, c))
    }

    pub fn build(self) -> Graph {
        Graph { nodes: self.nodes }
    }
}

/// Immutable computation graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    nodes: Vec<Op>,
}

/// Input bindings for one evaluation.
#[derive(Clone, Debug, Default)]
pub struct Feed<'a> {
    values: HashMap<&'a str, &'a Tensor>,
}

impl<'a> Feed<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &'a str, value: &'a Tensor) -> Self {
        self.values.insert(name, value);
        self
    }

    pub fn bind(&mut self, name: &'a str, value: &'a Tensor) {
        self.values.insert(name, value);
    }
}

/// Values of every node after a forward pass.
#[derive(Clone, Debug)]
pub struct Values {
    values: Vec<Tensor>,
}

impl Values {
    pub fn get(&self, node: NodeId) -> &Tensor {
        &self.values[node.0]
    }

    pub fn take(mut self, node: NodeId) -> Tensor {
        self.values.swap_remove(node.0)
    }
}

impl Graph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn op(&self, node: NodeId) -> &Op {
        &self.nodes[node.0]
    }

    fn shape_err(&self, node: usize, detail: String) -> Error {
        Error::Shape {
            node,
            op: self.nodes[node].name(),
            detail,
        }
    }

    fn dims2(&self, node: usize, t: &Tensor, what: &str) -> Result<(usize, usize)> {
        t.dims2()
            .ok_or_else(|| self.shape_err(node, format!("{what} must be rank 2, got {:?}", t.shape())))
    }

    fn same_shape(&self, node: usize, a: &Tensor, b: &Tensor) -> Result<()> {
        if a.shape() != b.shape() {
            return Err(self.shape_err(
                node,
                format!("operand shapes {:?} and {:?} differ", a.shape(), b.shape()),
            ));
        }
        Ok(())
    }

    /// Evaluates every node. Pure in `params` and `feed`.
    pub fn forward(&self, params: &ParamSet, feed: &Feed<'_>) -> Result<Values> {
        let mut vals: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for (i, op) in self.nodes.iter().enumerate() {
            let v = |n: &NodeId| &vals[n.0];
            let out = match op {
                Op::Input(name) => (*feed
                    .values
                    .get(name.as_str())
                    .ok_or_else(|| Error::UnboundInput(name.clone()))?)
                .clone(),
                Op::Param(name) => params
                    .get(name)
                    .ok_or_else(|| Error::MissingParam(name.clone()))?
                    .clone(),
                Op::MatMul(a, b) => {
                    let (a, b) = (v(a), v(b));
                    let (m, k) = self.dims2(i, a, "left operand")?;
                    let (k2, n) = self.dims2(i, b, "right operand")?;
                    if k != k2 {
                        return Err(self.shape_err(
                            i,
                            format!("cannot multiply {:?} by {:?}", a.shape(), b.shape()),
                        ));
                    }
                    Tensor::from_parts(vec![m, n], matmul(a.data(), b.data(), m, k, n))
                }
                Op::AddBias(x, b) => {
                    let (x, b) = (v(x), v(b));
                    let (_, n) = self.dims2(i, x, "input")?;
                    if b.shape() != [n] {
                        return Err(self.shape_err(
                            i,
                            format!("bias {:?} does not match {:?}", b.shape(), x.shape()),
                        ));
                    }
                    let mut out = x.clone();
                    for row in out.data_mut().chunks_mut(n) {
                        for (o, bv) in row.iter_mut().zip(b.data()) {
                            *o += bv;
                        }
                    }
                    out
                }
                Op::Add(a, b) => {
                    self.same_shape(i, v(a), v(b))?;
                    v(a).zip_map(v(b), |x, y| x + y)
                }
                Op::Sub(a, b) => {
                    self.same_shape(i, v(a), v(b))?;
                    v(a).zip_map(v(b), |x, y| x - y)
                }
                Op::Mul(a, b) => {
                    self.same_shape(i, v(a), v(b))?;
                    v(a).zip_map(v(b), |x, y| x * y)
                }
                Op::Relu(x) => v(x).map(|x| if x > 0.0 { x } else { 0.0 }),
                Op::Tanh(x) => v(x).map(f64::tanh),
                Op::Sigmoid(x) => v(x).map(sigmoid),
                Op::L2Normalize { input, blocks } => {
                    let x = v(input);
                    let (_, n) = self.dims2(i, x, "input")?;
                    if *blocks == 0 || n % blocks != 0 {
                        return Err(self.shape_err(
                            i,
                            format!("{n} columns do not split into {blocks} blocks"),
                        ));
                    }
                    let mut out = x.clone();
                    for chunk in out.data_mut().chunks_mut(n / blocks) {
                        let norm = chunk.iter().map(|c| c * c).sum::<f64>().sqrt();
                        let denom = norm + L2_EPS;
                        for c in chunk.iter_mut() {
                            *c /= denom;
                        }
                    }
                    out
                }
                Op::SumSquares(x) => Tensor::scalar(v(x).data().iter().map(|c| c * c).sum()),
                Op::Sum(x) => Tensor::scalar(v(x).data().iter().sum()),
                Op::RowSum(x) => {
                    let x = v(x);
                    let (m, n) = self.dims2(i, x, "input")?;
                    Tensor::from_parts(
                        vec![m, 1],
                        x.data().chunks(n).map(|r| r.iter().sum()).collect(),
                    )
                }
                Op::Scale(x, c) => v(x).map(|x| x * c),
                Op::AddScalar(x, c) => v(x).map(|x| x + c),
            };
            if out.data().iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { node: i, op: op.name() });
            }
            vals.push(out);
        }
        Ok(Values { values: vals })
    }

    /// Gradient of the scalar `output` with respect to every tensor in `params`.
    /// Parameters the output does not depend on receive zeros.
    pub fn backward(
        &self,
        params: &ParamSet,
        feed: &Feed<'_>,
        output: NodeId,
    ) -> Result<(f64, ParamSet)> {
        let values = self.forward(params, feed)?;
        self.backward_from(params, &values, output)
    }

    /// Like [`backward`](Self::backward) but reuses an existing forward pass.
    pub fn backward_from(
        &self,
        params: &ParamSet,
        values: &Values,
        output: NodeId,
    ) -> Result<(f64, ParamSet)> {
        let out_val = values.get(output);
        if !out_val.is_scalar() {
            return Err(Error::NonScalarOutput {
                node: output.0,
                shape: out_val.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Tensor::filled(out_val.shape(), 1.0));
        let mut param_grads = params.zeros_like();

        fn acc(slot: &mut Option<Tensor>, g: Tensor) {
            match slot {
                Some(t) => t.add_assign(&g),
                None => *slot = Some(g),
            }
        }

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let val = |n: &NodeId| values.get(*n);
            match &self.nodes[i] {
                Op::Input(_) => {}
                Op::Param(name) => {
                    if let Some(t) = param_grads.get_mut(name) {
                        t.add_assign(&g);
                    }
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (val(a), val(b));
                    let (m, k) = av.dims2().unwrap();
                    let (_, n) = bv.dims2().unwrap();
                    let da = Tensor::from_parts(vec![m, k], matmul_nt(g.data(), bv.data(), m, n, k));
                    let db = Tensor::from_parts(vec![k, n], matmul_tn(av.data(), g.data(), m, k, n));
                    acc(&mut grads[a.0], da);
                    acc(&mut grads[b.0], db);
                }
                Op::AddBias(x, b) => {
                    let n = val(b).len();
                    let mut db = vec![0.0; n];
                    for row in g.data().chunks(n) {
                        for (d, r) in db.iter_mut().zip(row) {
                            *d += r;
                        }
                    }
                    acc(&mut grads[b.0], Tensor::from_parts(vec![n], db));
                    acc(&mut grads[x.0], g);
                }
                Op::Add(a, b) => {
                    acc(&mut grads[a.0], g.clone());
                    acc(&mut grads[b.0], g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads[b.0], g.map(|x| -x));
                    acc(&mut grads[a.0], g);
                }
                Op::Mul(a, b) => {
                    acc(&mut grads[a.0], g.zip_map(val(b), |d, y| d * y));
                    acc(&mut grads[b.0], g.zip_map(val(a), |d, x| d * x));
                }
                Op::Relu(x) => {
                    let dx = g.zip_map(val(x), |d, x| if x > 0.0 { d } else { 0.0 });
                    acc(&mut grads[x.0], dx);
                }
                Op::Tanh(x) => {
                    let y = values.get(NodeId(i));
                    acc(&mut grads[x.0], g.zip_map(y, |d, y| d * (1.0 - y * y)));
                }
                Op::Sigmoid(x) => {
                    let y = values.get(NodeId(i));
                    acc(&mut grads[x.0], g.zip_map(y, |d, y| d * y * (1.0 - y)));
                }
                Op::L2Normalize { input, blocks } => {
                    let xv = val(input);
                    let (_, n) = xv.dims2().unwrap();
                    let width = n / blocks;
                    let mut dx = g.clone();
                    for (dchunk, xchunk) in dx.data_mut().chunks_mut(width).zip(xv.data().chunks(width)) {
                        let norm = xchunk.iter().map(|c| c * c).sum::<f64>().sqrt();
                        let s = norm + L2_EPS;
                        let dot: f64 = dchunk.iter().zip(xchunk).map(|(d, x)| d * x).sum();
                        let coef = if norm > 0.0 { dot / (norm * s * s) } else { 0.0 };
                        for (d, x) in dchunk.iter_mut().zip(xchunk) {
                            *d = *d / s - x * coef;
                        }
                    }
                    acc(&mut grads[input.0], dx);
                }
                Op::SumSquares(x) => {
                    let d = g.item();
                    acc(&mut grads[x.0], val(x).map(|x| 2.0 * x * d));
                }
                Op::Sum(x) => {
                    acc(&mut grads[x.0], Tensor::filled(val(x).shape(), g.item()));
                }
                Op::RowSum(x) => {
                    let xv = val(x);
                    let (m, n) = xv.dims2().unwrap();
                    let mut dx = Vec::with_capacity(m * n);
                    for &d in g.data() {
                        dx.extend(std::iter::repeat_n(d, n));
                    }
                    acc(&mut grads[x.0], Tensor::from_parts(vec![m, n], dx));
                }
                Op::Scale(x, c) => acc(&mut grads[x.0], g.map(|d| d * c)),
                Op::AddScalar(x, _) => acc(&mut grads[x.0], g),
            }
        }
        Ok((out_val.item(), param_grads))
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(entries: &[(&str, Tensor)]) -> ParamSet {
        let mut p = ParamSet::new();
        for (k, v) in entries {
            p.insert(*k, v.clone()).unwrap();
        }
        p
    }

    #[test]
    fn identity_linear_layer() {
        let mut b = GraphBuilder::new();
        let x = b.input("x");
        let y = b.linear(x, "w", "b");
        let g = b.build();
        let p = params(&[
            ("w", Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap()),
            ("b", Tensor::zeros(&[2])),
        ]);
        let xin = Tensor::matrix(1, 2, vec![0.25, -4.0]).unwrap();
        let out = g.forward(&p, &Feed::new().with("x", &xin)).unwrap();
        assert_eq!(out.get(y), &xin);
    }

    #[test]
    fn relu_definition() {
        let mut b = GraphBuilder::new();
        let x = b.input("x");
        let y = b.relu(x);
        let g = b.build();
        let xin = Tensor::vector(vec![-1.0, 0.0, 3.0]).unwrap();
        let out = g.forward(&ParamSet::new(), &Feed::new().with("x", &xin)).unwrap();
        assert_eq!(out.get(y).data(), &[0.0, 0.0, 3.0]);
    }

    #[test]
    fn square_derivative() {
        let mut b = GraphBuilder::new();
        let t = b.param("theta");
        let f = b.sum_squares(t);
        let g = b.build();
        let p = params(&[("theta", Tensor::scalar(3.0))]);
        let (value, grads) = g.backward(&p, &Feed::new(), f).unwrap();
        assert_eq!(value, 9.0);
        assert_eq!(grads.get("theta").unwrap().item(), 6.0);
    }

    #[test]
    fn zero_input_gives_zero_gradients() {
        let mut b = GraphBuilder::new();
        let x = b.input("x");
        let w = b.param("w");
        let y = b.matmul(x, w);
        let f = b.sum_squares(y);
        let g = b.build();
        let p = params(&[("w", Tensor::matrix(3, 2, vec![0.3, -1.0, 2.0, 0.5, 0.1, 0.7]).unwrap())]);
        let xin = Tensor::zeros(&[4, 3]);
        let (_, grads) = g.backward(&p, &Feed::new().with("x", &xin), f).unwrap();
        assert!(grads.get("w").unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_names_the_node() {
        let mut b = GraphBuilder::new();
        let x = b.input("x");
        let w = b.param("w");
        let _ = b.matmul(x, w);
        let g = b.build();
        let p = params(&[("w", Tensor::zeros(&[3, 2]))]);
        let xin = Tensor::zeros(&[1, 2]);
        match g.forward(&p, &Feed::new().with("x", &xin)) {
            Err(Error::Shape { node, op, .. }) => {
                assert_eq!(node, 2);
                assert_eq!(op, "matmul");
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn non_scalar_output_rejected() {
        let mut b = GraphBuilder::new();
        let x = b.param("x");
        let y = b.tanh(x);
        let g = b.build();
        let p = params(&[("x", Tensor::zeros(&[2]))]);
        assert!(matches!(
            g.backward(&p, &Feed::new(), y),
            Err(Error::NonScalarOutput { .. })
        ));
    }

    #[test]
    fn unbound_input_and_missing_param() {
        let mut b = GraphBuilder::new();
        let x = b.input("x");
        let w = b.param("w");
        b.mul(x, w);
        let g = b.build();
        assert!(matches!(
            g.forward(&ParamSet::new(), &Feed::new()),
            Err(Error::UnboundInput(_))
        ));
        let t = Tensor::scalar(1.0);
        assert!(matches!(
            g.forward(&ParamSet::new(), &Feed::new().with("x", &t)),
            Err(Error::MissingParam(_))
        ));
    }

    #[test]
    fn l2_normalize_blocks_have_unit_norm() {
        let mut b = GraphBuilder::new();
        let x = b.input("x");
        let y = b.l2_normalize(x, 3);
        let g = b.build();
        let xin = Tensor::matrix(2, 6, vec![3.0, 4.0, 0.1, 0.0, -2.0, 2.0, 1.0, 1.0, 5.0, -5.0, 0.0, 7.0]).unwrap();
        let out = g.forward(&ParamSet::new(), &Feed::new().with("x", &xin)).unwrap();
        for chunk in out.get(y).data().chunks(2) {
            let n: f64 = chunk.iter().map(|c| c * c).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn forward_does_not_mutate_params() {
        let mut b = GraphBuilder::new();
        let t = b.param("theta");
        let s = b.scale(t, 2.0);
        let f = b.sum_squares(s);
        let g = b.build();
        let p = params(&[("theta", Tensor::vector(vec![1.0, -2.0]).unwrap())]);
        let before = p.clone();
        g.backward(&p, &Feed::new(), f).unwrap();
        assert_eq!(p, before);
    }
}
