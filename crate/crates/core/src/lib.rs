//! Lifelong learning of structured visual facts.
//!
//! Facts `⟨subject, predicate?, object?⟩` are embedded from word vectors, split
//! into a sequence of tasks, and learned one task at a time by a small
//! visual-semantic embedding network under several forgetting-mitigation
//! strategies. Evaluation ranks candidate facts either within a task or over
//! every fact seen so far.
//!
//! ```
//! use llfl::synth::PlantedConfig;
//! use llfl::split::semantic_split;
//!
//! let planted = PlantedConfig::default().generate()?;
//! let dataset = planted.dataset()?;
//! let (bench, _dendrogram) = semantic_split(&dataset, 4, 7)?;
//! assert_eq!(bench.len(), 4);
//! # Ok::<(), llfl::Error>(())
//! ```

pub mod autodiff;
pub mod data;
mod error;
pub mod eval;
pub mod fact;
pub mod io;
pub mod lll;
pub mod model;
pub mod rng;
pub mod split;
pub mod synth;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/facts.md")]
    mod facts {}
    #[doc = include_str!("../../../book/src/splitting.md")]
    mod splitting {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/methods.md")]
    mod methods {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
