//! Removes redundant attribute nodes from an AST and splices their children
//! upward, producing the simplified tree the graph generator consumes.
//!
//! An attribute node is kept when its label contains one of the keep-rule
//! substrings (`Declaration` / `Statement` by default); code nodes are always
//! kept, and the root is retained unconditionally so the result stays a tree.
//! Splicing runs post-order, so chains of removable nodes collapse in a
//! single pass: a removed node contributes its already-simplified children to
//! the nearest retained ancestor, in place and in order.

use crate::ast::{Ast, AstNode};
use thiserror::Error;

/// Which attribute labels survive simplification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeepRule {
    required_substrings: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeepRuleError {
    #[error("keep rule needs at least one substring")]
    Empty,
    #[error("keep rule substrings must be non-empty")]
    EmptySubstring,
}

impl KeepRule {
    /// Builds a rule from the given substrings; matching is case-sensitive.
    pub fn new(required_substrings: Vec<String>) -> Result<Self, KeepRuleError> {
        if required_substrings.is_empty() {
            return Err(KeepRuleError::Empty);
        }
        if required_substrings.iter().any(String::is_empty) {
            return Err(KeepRuleError::EmptySubstring);
        }
        Ok(KeepRule {
            required_substrings,
        })
    }

    pub fn substrings(&self) -> &[String] {
        &self.required_substrings
    }
}

impl Default for KeepRule {
    fn default() -> Self {
        KeepRule {
            required_substrings: vec!["Declaration".into(), "Statement".into()],
        }
    }
}

/// True iff the node survives simplification: code nodes always do, attribute
/// nodes only when their label contains one of the rule's substrings.
pub fn is_kept(node: &AstNode, rule: &KeepRule) -> bool {
    node.is_code()
        || rule
            .required_substrings
            .iter()
            .any(|s| node.label().contains(s.as_str()))
}

/// Post-order simplification of a subtree. Returns the retained forest: the
/// node itself (with spliced children) when kept, otherwise its retained
/// descendants.
fn simplify_node(node: &AstNode, rule: &KeepRule) -> Vec<AstNode> {
    if node.is_code() {
        return vec![node.clone()];
    }
    let spliced: Vec<AstNode> = node
        .children()
        .iter()
        .flat_map(|child| simplify_node(child, rule))
        .collect();
    if is_kept(node, rule) {
        vec![AstNode::attribute(node.label(), spliced).expect("retained labels are non-empty")]
    } else {
        spliced
    }
}

/// Applies the keep rule to every non-root attribute node; the root is
/// retained even when the rule would drop it.
pub fn simplify(ast: &Ast, rule: &KeepRule) -> Ast {
    let root = ast.root();
    let children: Vec<AstNode> = root
        .children()
        .iter()
        .flat_map(|child| simplify_node(child, rule))
        .collect();
    let new_root =
        AstNode::attribute(root.label(), children).expect("root label is non-empty");
    Ast::new(new_root).expect("simplified root stays an attribute node")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{code_token_count, count_nodes};
    use crate::parse::{parse_subset, SourceFragment};

    fn attr(label: &str, children: Vec<AstNode>) -> AstNode {
        AstNode::attribute(label, children).unwrap()
    }

    fn code(label: &str) -> AstNode {
        AstNode::code(label).unwrap()
    }

    fn shape(node: &AstNode) -> String {
        if node.children().is_empty() {
            node.label().to_string()
        } else {
            format!(
                "{}[{}]",
                node.label(),
                node.children().iter().map(shape).collect::<Vec<_>>().join(" ")
            )
        }
    }

    #[test]
    fn keep_rule_examples() {
        let rule = KeepRule::default();
        assert!(is_kept(&attr("MethodDeclaration", vec![]), &rule));
        assert!(!is_kept(&attr("modifiers", vec![]), &rule));
        assert!(is_kept(&code("static"), &rule));
    }

    #[test]
    fn keep_rule_is_case_sensitive() {
        let rule = KeepRule::default();
        assert!(!is_kept(&attr("statement", vec![]), &rule));
    }

    #[test]
    fn empty_rule_rejected() {
        assert_eq!(KeepRule::new(vec![]).unwrap_err(), KeepRuleError::Empty);
        assert_eq!(
            KeepRule::new(vec![String::new()]).unwrap_err(),
            KeepRuleError::EmptySubstring
        );
    }

    #[test]
    fn hello_world_fixture_matches_hand_simplification() {
        let src = r#"public static void main(String[] args){ System.out.println("Hello World"); }"#;
        let ast = parse_subset(&SourceFragment::new(src).unwrap()).unwrap();
        let simplified = simplify(&ast, &KeepRule::default());
        // modifiers, BasicType, FormalParameter, ReferenceType, MethodInvocation
        // and Literal go; their code leaves splice upward in order.
        let expected = concat!(
            "MethodDeclaration[public static void main String args ",
            "StatementExpression[System out println \"Hello World\"]]",
        );
        assert_eq!(shape(simplified.root()), expected);
        assert_eq!(count_nodes(&simplified), 12);
        assert_eq!(code_token_count(&simplified), code_token_count(&ast));
    }

    #[test]
    fn all_statement_labels_is_identity() {
        let ast = Ast::new(attr(
            "AStatement",
            vec![
                attr("BStatement", vec![code("x")]),
                attr("CStatement", vec![]),
            ],
        ))
        .unwrap();
        let out = simplify(&ast, &KeepRule::default());
        assert_eq!(out.root(), ast.root());
    }

    #[test]
    fn fixpoint_splice_hand_trace() {
        // root(X)[A(y)[code a], A(zStatement)[A(w)[code b]]]
        //   -> root[code a, A(zStatement)[code b]]
        let ast = Ast::new(attr(
            "X",
            vec![
                attr("y", vec![code("a")]),
                attr("zStatement", vec![attr("w", vec![code("b")])]),
            ],
        ))
        .unwrap();
        let out = simplify(&ast, &KeepRule::default());
        assert_eq!(shape(out.root()), "X[a zStatement[b]]");
    }

    #[test]
    fn chain_of_removable_nodes_collapses() {
        let ast = Ast::new(attr(
            "Root",
            vec![attr("a", vec![attr("b", vec![attr("c", vec![code("x")])])])],
        ))
        .unwrap();
        let out = simplify(&ast, &KeepRule::default());
        assert_eq!(shape(out.root()), "Root[x]");
    }

    #[test]
    fn root_retained_even_when_rule_drops_it() {
        let ast = Ast::new(attr("root", vec![code("x")])).unwrap();
        let out = simplify(&ast, &KeepRule::default());
        assert_eq!(out.root().label(), "root");
        assert_eq!(count_nodes(&out), 2);
    }

    #[test]
    fn idempotent() {
        let ast = Ast::new(attr(
            "Top",
            vec![
                attr("noise", vec![code("k"), attr("more", vec![code("m")])]),
                attr("IfStatement", vec![attr("inner", vec![code("v")])]),
            ],
        ))
        .unwrap();
        let once = simplify(&ast, &KeepRule::default());
        let twice = simplify(&once, &KeepRule::default());
        assert_eq!(once.root(), twice.root());
    }

    #[test]
    fn custom_rule_substrings() {
        let rule = KeepRule::new(vec!["Invocation".into()]).unwrap();
        let ast = Ast::new(attr(
            "Root",
            vec![attr("MethodInvocation", vec![code("f")]), attr("Literal", vec![code("1")])],
        ))
        .unwrap();
        let out = simplify(&ast, &rule);
        assert_eq!(shape(out.root()), "Root[MethodInvocation[f] 1]");
    }
}
