//! Language-neutral AST data model shared by the parser, simplifier and graph
//! generator.
//!
//! Trees are made of two node kinds: *code* nodes are leaves carrying a source
//! lexeme, *attribute* nodes carry a grammar production name and may have
//! children. The distinction is a stored flag so membership tests during
//! simplification are O(1).

use thiserror::Error;

/// Kind of an AST node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    /// Leaf carrying a source lexeme (identifier, literal, keyword, operator).
    Code,
    /// Interior (or leaf) node carrying a grammar production name.
    Attribute,
}

/// A single AST node. Code nodes are always leaves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstNode {
    kind: NodeKind,
    label: String,
    children: Vec<AstNode>,
}

/// Violation of the AST structural invariants.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum AstError {
    #[error("node label must be non-empty")]
    EmptyLabel,
    #[error("code node {0:?} cannot have children")]
    CodeWithChildren(String),
    #[error("tree root must be an attribute node, got code node {0:?}")]
    CodeRoot(String),
}

impl AstNode {
    /// A code leaf. Fails on an empty label.
    pub fn code(label: impl Into<String>) -> Result<Self, AstError> {
        let label = label.into();
        if label.is_empty() {
            return Err(AstError::EmptyLabel);
        }
        Ok(AstNode {
            kind: NodeKind::Code,
            label,
            children: Vec::new(),
        })
    }

    /// An attribute node with the given children. Fails on an empty label.
    pub fn attribute(
        label: impl Into<String>,
        children: Vec<AstNode>,
    ) -> Result<Self, AstError> {
        let label = label.into();
        if label.is_empty() {
            return Err(AstError::EmptyLabel);
        }
        Ok(AstNode {
            kind: NodeKind::Attribute,
            label,
            children,
        })
    }

    pub fn kind(&self) -> NodeKind {
        self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn children(&self) -> &[AstNode] {
        &self.children
    }

    pub fn is_code(&self) -> bool {
        self.kind == NodeKind::Code
    }

    /// Number of nodes in this subtree, including itself.
    pub fn subtree_size(&self) -> usize {
        1 + self.children.iter().map(AstNode::subtree_size).sum::<usize>()
    }
}

/// A whole fragment tree with its cached node count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ast {
    root: AstNode,
    node_count: usize,
}

impl Ast {
    /// Wraps a root node; the root must be an attribute node.
    pub fn new(root: AstNode) -> Result<Self, AstError> {
        if root.kind == NodeKind::Code {
            return Err(AstError::CodeRoot(root.label));
        }
        let node_count = root.subtree_size();
        Ok(Ast { root, node_count })
    }

    pub fn root(&self) -> &AstNode {
        &self.root
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }
}

/// Counts the nodes of the tree by walking it; does not trust the cached
/// count.
pub fn count_nodes(ast: &Ast) -> usize {
    ast.root().subtree_size()
}

/// Number of code (lexeme) nodes in the tree.
pub fn code_token_count(ast: &Ast) -> usize {
    fn walk(node: &AstNode) -> usize {
        let own = usize::from(node.is_code());
        own + node.children().iter().map(walk).sum::<usize>()
    }
    walk(ast.root())
}
