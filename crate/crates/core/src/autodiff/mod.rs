//! Minimal reverse-mode differentiation over dense `f64` tensors.
//!
//! A [`Graph`] is an immutable list of nodes built in topological order by a
//! [`GraphBuilder`]. Shapes are not declared up front; they are checked when
//! [`Graph::forward`] runs, and errors name the offending node. There is no
//! broadcasting apart from [`Op::AddBias`].

mod graph;
mod params;
mod tensor;

pub use graph::{Feed, Graph, GraphBuilder, NodeId, Op, Values, L2_EPS};
pub use params::ParamSet;
pub use tensor::Tensor;

