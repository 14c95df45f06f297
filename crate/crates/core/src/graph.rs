//! Serializes a (typically simplified) AST into a node sequence and builds the
//! relation graph the encoder consumes.
//!
//! The adjacency matrix has a self-loop on every node and an undirected edge
//! for every parent-child pair. The propagation matrix divides each adjacency
//! row by that row's degree plus one, where the degree already counts the
//! self-loop, so row i sums to `D_i / (D_i + 1)`.

use crate::ast::{Ast, AstNode};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("fragment graph needs at least one node")]
    Empty,
    #[error("labels ({labels}) and parents ({parents}) lengths differ")]
    LengthMismatch { labels: usize, parents: usize },
    #[error("node 0 must be the root (no parent)")]
    BadRoot,
    #[error("node {index} must have a parent earlier in the sequence")]
    BadParent { index: usize },
}

/// One row of the propagation matrix in sparse form: the columns with
/// non-zero entries (self plus neighbors, ascending) sharing one weight.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub cols: Vec<usize>,
    pub weight: f64,
}

/// Node-label sequence plus relation matrices for one code fragment.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentGraph {
    labels: Vec<String>,
    parents: Vec<Option<usize>>,
    degrees: Vec<usize>,
    rows: Vec<SparseRow>,
}

/// Pre-order serialization: labels in depth-first order (children in stored
/// order) and, for each node, the index of its parent in that order.
pub fn serialize(ast: &Ast) -> (Vec<String>, Vec<Option<usize>>) {
    fn walk(
        node: &AstNode,
        parent: Option<usize>,
        labels: &mut Vec<String>,
        parents: &mut Vec<Option<usize>>,
    ) {
        let index = labels.len();
        labels.push(node.label().to_string());
        parents.push(parent);
        for child in node.children() {
            walk(child, Some(index), labels, parents);
        }
    }
    let mut labels = Vec::new();
    let mut parents = Vec::new();
    walk(ast.root(), None, &mut labels, &mut parents);
    (labels, parents)
}

/// Builds the relation graph from a serialized fragment.
pub fn build_graph(
    labels: Vec<String>,
    parents: Vec<Option<usize>>,
) -> Result<FragmentGraph, GraphError> {
    if labels.is_empty() {
        return Err(GraphError::Empty);
    }
    if labels.len() != parents.len() {
        return Err(GraphError::LengthMismatch {
            labels: labels.len(),
            parents: parents.len(),
        });
    }
    if parents[0].is_some() {
        return Err(GraphError::BadRoot);
    }
    let n = labels.len();
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, parent) in parents.iter().enumerate().skip(1) {
        match parent {
            Some(p) if *p < i => {
                neighbors[*p].push(i);
                neighbors[i].push(*p);
            }
            _ => return Err(GraphError::BadParent { index: i }),
        }
    }
    let mut degrees = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for (i, adjacent) in neighbors.iter().enumerate() {
        let mut cols: Vec<usize> = adjacent.clone();
        cols.push(i);
        cols.sort_unstable();
        let degree = cols.len(); // self-loop included
        rows.push(SparseRow {
            cols,
            weight: 1.0 / (degree as f64 + 1.0),
        });
        degrees.push(degree);
    }
    Ok(FragmentGraph {
        labels,
        parents,
        degrees,
        rows,
    })
}

impl FragmentGraph {
    pub fn from_ast(ast: &Ast) -> Self {
        let (labels, parents) = serialize(ast);
        build_graph(labels, parents).expect("serialization yields a well-formed fragment")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    /// Degrees including the self-loop: `D_i = sum_j A_ij`.
    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    /// Sparse view of the propagation matrix, one row per node.
    pub fn propagation_rows(&self) -> &[SparseRow] {
        &self.rows
    }

    /// Dense adjacency matrix, row-major n*n.
    pub fn adjacency_dense(&self) -> Vec<f64> {
        let n = self.len();
        let mut a = vec![0.0; n * n];
        for (i, row) in self.rows.iter().enumerate() {
            for &j in &row.cols {
                a[i * n + j] = 1.0;
            }
        }
        a
    }

    /// Dense propagation matrix `L`, row-major n*n: `L_ij = A_ij / (D_i + 1)`.
    pub fn propagation_dense(&self) -> Vec<f64> {
        let n = self.len();
        let mut l = vec![0.0; n * n];
        for (i, row) in self.rows.iter().enumerate() {
            for &j in &row.cols {
                l[i * n + j] = row.weight;
            }
        }
        l
    }
}

/// One line of the preprocessed-fragment file. Matrices are recomputed on
/// load, never serialized; `label01` is present only where a fragment carries
/// its pair's label.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct FragmentRecord {
    pub labels: Vec<String>,
    pub parents: Vec<Option<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label01: Option<u8>,
}

impl FragmentRecord {
    pub fn into_graph(self) -> Result<FragmentGraph, GraphError> {
        build_graph(self.labels, self.parents)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::AstNode;

    fn attr(label: &str, children: Vec<AstNode>) -> AstNode {
        AstNode::attribute(label, children).unwrap()
    }

    fn code(label: &str) -> AstNode {
        AstNode::code(label).unwrap()
    }

    #[test]
    fn serialize_preorder_with_parent_indices() {
        // root[a, b[c]] -> labels [root, a, b, c]; parents [none, 0, 0, 2]
        let ast = Ast::new(attr(
            "root",
            vec![code("a"), attr("b", vec![code("c")])],
        ))
        .unwrap();
        let (labels, parents) = serialize(&ast);
        assert_eq!(labels, vec!["root", "a", "b", "c"]);
        assert_eq!(parents, vec![None, Some(0), Some(0), Some(2)]);
    }

    #[test]
    fn serialize_singleton() {
        let ast = Ast::new(attr("root", vec![])).unwrap();
        let (labels, parents) = serialize(&ast);
        assert_eq!(labels, vec!["root"]);
        assert_eq!(parents, vec![None]);
    }

    #[test]
    fn singleton_graph_hand_values() {
        let g = build_graph(vec!["x".into()], vec![None]).unwrap();
        assert_eq!(g.adjacency_dense(), vec![1.0]);
        assert_eq!(g.degrees(), &[1]);
        assert_eq!(g.propagation_dense(), vec![0.5]);
    }

    #[test]
    fn chain_graph_hand_values() {
        let g = build_graph(vec!["a".into(), "b".into()], vec![None, Some(0)]).unwrap();
        assert_eq!(g.adjacency_dense(), vec![1.0, 1.0, 1.0, 1.0]);
        assert_eq!(g.degrees(), &[2, 2]);
        for &v in &g.propagation_dense() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn star_graph_hand_values() {
        let labels: Vec<String> = ["r", "a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let parents = vec![None, Some(0), Some(0), Some(0)];
        let g = build_graph(labels, parents).unwrap();
        assert_eq!(g.degrees(), &[4, 2, 2, 2]);
        let l = g.propagation_dense();
        assert!((l[0] - 0.2).abs() < 1e-15, "L[0][0] = 1/5");
        assert!((l[4] - 1.0 / 3.0).abs() < 1e-15, "L[1][0] = 1/3");
    }

    #[test]
    fn propagation_row_sums() {
        let labels: Vec<String> = (0..6).map(|i| format!("n{i}")).collect();
        let parents = vec![None, Some(0), Some(1), Some(1), Some(0), Some(4)];
        let g = build_graph(labels, parents).unwrap();
        let n = g.len();
        let l = g.propagation_dense();
        for i in 0..n {
            let row_sum: f64 = (0..n).map(|j| l[i * n + j]).sum();
            let expected = g.degrees()[i] as f64 / (g.degrees()[i] as f64 + 1.0);
            assert!((row_sum - expected).abs() < 1e-12);
            assert!(row_sum < 1.0);
        }
    }

    #[test]
    fn adjacency_is_symmetric_with_unit_diagonal() {
        let labels: Vec<String> = (0..5).map(|i| format!("n{i}")).collect();
        let parents = vec![None, Some(0), Some(0), Some(2), Some(2)];
        let g = build_graph(labels, parents).unwrap();
        let n = g.len();
        let a = g.adjacency_dense();
        let mut off_diag_ones = 0;
        for i in 0..n {
            assert_eq!(a[i * n + i], 1.0);
            for j in 0..n {
                assert_eq!(a[i * n + j], a[j * n + i]);
                if i != j && a[i * n + j] == 1.0 {
                    off_diag_ones += 1;
                }
            }
        }
        assert_eq!(off_diag_ones, 2 * (n - 1));
    }

    #[test]
    fn malformed_parent_vectors_rejected() {
        assert_eq!(
            build_graph(vec![], vec![]).unwrap_err(),
            GraphError::Empty
        );
        assert_eq!(
            build_graph(vec!["a".into()], vec![Some(0)]).unwrap_err(),
            GraphError::BadRoot
        );
        assert_eq!(
            build_graph(
                vec!["a".into(), "b".into()],
                vec![None, Some(5)]
            )
            .unwrap_err(),
            GraphError::BadParent { index: 1 }
        );
        assert_eq!(
            build_graph(vec!["a".into(), "b".into()], vec![None]).unwrap_err(),
            GraphError::LengthMismatch {
                labels: 2,
                parents: 1
            }
        );
    }

    #[test]
    fn fragment_record_round_trip() {
        let rec = FragmentRecord {
            labels: vec!["a".into(), "b".into()],
            parents: vec![None, Some(0)],
            label01: Some(1),
        };
        let line = serde_json::to_string(&rec).unwrap();
        let back: FragmentRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, rec);
        let bare = FragmentRecord {
            label01: None,
            ..rec
        };
        assert!(!serde_json::to_string(&bare).unwrap().contains("label01"));
    }
}
