//! Automatic code review over method-level code fragments.
//!
//! The pipeline turns an (original, revised) pair of method fragments into a
//! binary accept/reject prediction:
//!
//! 1. [`parse`] produces an abstract syntax tree, either from a built-in
//!    Java-like subset grammar or from an interchange JSON document emitted by
//!    an external front-end.
//! 2. [`simplify`] removes attribute nodes that carry no connection
//!    information and splices their children upward.
//! 3. [`graph`] serializes the simplified tree into a node sequence and builds
//!    the relation adjacency / propagation matrices.
//! 4. [`embed`] trains skip-gram embeddings over node-label sequences.
//! 5. [`model`] encodes each fragment with a Bi-GRU, a GCN stack and
//!    retrieval-based attention, then classifies the pair from the difference
//!    of the two representations.
//! 6. [`train`], [`metrics`] and [`stats`] run the training loop, score
//!    predictions, and compare repeated runs with a Wilcoxon signed-rank test
//!    and Cliff's delta.
//!
//! Everything is deterministic given explicit seeds; no global RNG state is
//! consulted anywhere.

pub mod ast;
pub mod config;
pub mod data;
pub mod embed;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod parse;
pub mod report;
pub mod simplify;
pub mod stats;
pub mod synthetic;
pub mod tensor;
pub mod train;

mod binio;

pub use ast::{Ast, AstNode, NodeKind};
pub use graph::FragmentGraph;
pub use simplify::KeepRule;
