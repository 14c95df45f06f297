//! Produces [`Ast`] values from two sources: a JSON interchange document
//! emitted by any external front-end, or a built-in recursive-descent parser
//! for a method-level subset of a Java-like language.
//!
//! The subset parser exists so the rest of the pipeline is testable without
//! external tooling. Attribute labels follow the javalang naming convention
//! (`MethodDeclaration`, `ReturnStatement`, ...) because downstream
//! simplification keys on the substrings `Declaration` / `Statement`.
//! Punctuation and delimiters (braces, parentheses, commas, semicolons,
//! array brackets) never become nodes; statement keywords (`if`, `else`,
//! `while`, `for`, `return`) are absorbed by their attribute nodes. All other
//! lexemes, including operators, appear as exactly one code leaf each.

use crate::ast::{Ast, AstNode};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Raw method-level source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFragment(String);

impl SourceFragment {
    /// Wraps source text; the fragment must be non-empty after trimming.
    pub fn new(text: impl Into<String>) -> Result<Self, ParseError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ParseError {
                position: 0,
                message: "source fragment is empty".into(),
            });
        }
        Ok(SourceFragment(text))
    }

    pub fn text(&self) -> &str {
        &self.0
    }
}

/// Parse failure with the character offset it occurred at.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("parse error at offset {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

/// Failure while ingesting an interchange document.
#[derive(Debug, Error)]
pub enum IngestError {
    /// The document is not well-formed JSON.
    #[error("malformed interchange JSON at offset {position}: {message}")]
    Json { position: usize, message: String },
    /// Well-formed JSON that violates the interchange schema.
    #[error("interchange schema violation ({rule})")]
    Schema { rule: String },
}

// ---------------------------------------------------------------------------
// Interchange format
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    kind: String,
    label: String,
    children: Vec<RawNode>,
}

#[derive(Serialize)]
struct RawNodeRef<'a> {
    kind: &'static str,
    label: &'a str,
    children: Vec<RawNodeRef<'a>>,
}

fn to_raw(node: &AstNode) -> RawNodeRef<'_> {
    RawNodeRef {
        kind: if node.is_code() { "code" } else { "attribute" },
        label: node.label(),
        children: node.children().iter().map(to_raw).collect(),
    }
}

fn from_raw(raw: RawNode) -> Result<AstNode, IngestError> {
    let schema = |rule: &str| IngestError::Schema { rule: rule.into() };
    if raw.label.is_empty() {
        return Err(schema("empty label"));
    }
    match raw.kind.as_str() {
        "code" => {
            if !raw.children.is_empty() {
                return Err(schema("code node with children"));
            }
            AstNode::code(raw.label).map_err(|_| schema("empty label"))
        }
        "attribute" => {
            let children = raw
                .children
                .into_iter()
                .map(from_raw)
                .collect::<Result<Vec<_>, _>>()?;
            AstNode::attribute(raw.label, children).map_err(|_| schema("empty label"))
        }
        other => Err(schema(&format!("unknown kind {other:?}"))),
    }
}

/// Parses an interchange JSON document into an [`Ast`].
pub fn ingest_interchange(document: &str) -> Result<Ast, IngestError> {
    let raw: RawNode = serde_json::from_str(document).map_err(|err| {
        match err.classify() {
            serde_json::error::Category::Data => IngestError::Schema {
                rule: err.to_string(),
            },
            _ => IngestError::Json {
                position: offset_of(document, err.line(), err.column()),
                message: err.to_string(),
            },
        }
    })?;
    let root = from_raw(raw)?;
    Ast::new(root).map_err(|_| IngestError::Schema {
        rule: "root must be an attribute node".into(),
    })
}

/// Serializes an [`Ast`] to the interchange JSON format.
pub fn emit_interchange(ast: &Ast) -> String {
    serde_json::to_string(&to_raw(ast.root())).expect("interchange serialization cannot fail")
}

/// Converts serde_json's 1-based line/column into a character offset.
fn offset_of(text: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (idx, l) in text.split('\n').enumerate() {
        if idx + 1 == line {
            return offset + column.saturating_sub(1).min(l.chars().count());
        }
        offset += l.chars().count() + 1;
    }
    text.chars().count()
}

// ---------------------------------------------------------------------------
// Subset lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TokenKind {
    Ident,
    Number,
    Str,
    Char,
    Op,
    Punct,
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    text: String,
    offset: usize,
}

const MODIFIERS: &[&str] = &[
    "public",
    "private",
    "protected",
    "static",
    "final",
    "abstract",
    "synchronized",
];

const BASIC_TYPES: &[&str] = &[
    "int", "long", "short", "byte", "char", "float", "double", "boolean", "void",
];

fn is_modifier(word: &str) -> bool {
    MODIFIERS.contains(&word)
}

fn is_basic_type(word: &str) -> bool {
    BASIC_TYPES.contains(&word)
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_alphabetic() || c == '_' || c == '$' {
            while i < chars.len()
                && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '$')
            {
                i += 1;
            }
            tokens.push(Token {
                kind: TokenKind::Ident,
                text: chars[start..i].iter().collect(),
                offset: start,
            });
        } else if c.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            tokens.push(Token {
                kind: TokenKind::Number,
                text: chars[start..i].iter().collect(),
                offset: start,
            });
        } else if c == '"' || c == '\'' {
            let quote = c;
            i += 1;
            while i < chars.len() && chars[i] != quote {
                if chars[i] == '\\' {
                    i += 1; // skip the escaped character
                }
                i += 1;
            }
            if i >= chars.len() {
                return Err(ParseError {
                    position: chars.len(),
                    message: format!("unterminated {} literal", if quote == '"' { "string" } else { "char" }),
                });
            }
            i += 1; // closing quote
            tokens.push(Token {
                kind: if quote == '"' { TokenKind::Str } else { TokenKind::Char },
                text: chars[start..i].iter().collect(),
                offset: start,
            });
        } else if "(){},;[]".contains(c) {
            i += 1;
            tokens.push(Token {
                kind: TokenKind::Punct,
                text: c.to_string(),
                offset: start,
            });
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            let op = match two.as_str() {
                "==" | "!=" | "<=" | ">=" | "&&" | "||" => Some(two.clone()),
                _ => match c {
                    '+' | '-' | '*' | '/' | '%' | '<' | '>' | '=' | '.' => Some(c.to_string()),
                    _ => None,
                },
            };
            match op {
                Some(op) => {
                    i += op.chars().count();
                    tokens.push(Token {
                        kind: TokenKind::Op,
                        text: op,
                        offset: start,
                    });
                }
                None => {
                    return Err(ParseError {
                        position: start,
                        message: format!("character {c:?} is outside the supported subset"),
                    });
                }
            }
        }
    }
    Ok(tokens)
}

// ---------------------------------------------------------------------------
// Subset parser (recursive descent, precedence climbing for binary operators)
// ---------------------------------------------------------------------------

const MAX_DEPTH: usize = 500;

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
    depth: usize,
}

/// Parses one method of the Java-like subset into an [`Ast`] rooted at
/// `MethodDeclaration`.
pub fn parse_subset(fragment: &SourceFragment) -> Result<Ast, ParseError> {
    let tokens = lex(fragment.text())?;
    let end = fragment.text().chars().count();
    let mut parser = Parser {
        tokens,
        pos: 0,
        end,
        depth: 0,
    };
    let method = parser.method()?;
    if let Some(tok) = parser.peek(0) {
        return Err(ParseError {
            position: tok.offset,
            message: format!("unexpected token {:?} after method body", tok.text),
        });
    }
    Ast::new(method).map_err(|e| ParseError {
        position: 0,
        message: e.to_string(),
    })
}

impl Parser {
    fn peek(&self, k: usize) -> Option<&Token> {
        self.tokens.get(self.pos + k)
    }

    fn next(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.pos).cloned();
        if tok.is_some() {
            self.pos += 1;
        }
        tok
    }

    fn at(&self, text: &str) -> bool {
        self.peek(0).is_some_and(|t| t.text == text)
    }

    fn at_kind(&self, kind: TokenKind) -> bool {
        self.peek(0).is_some_and(|t| t.kind == kind)
    }

    fn eat(&mut self, text: &str) -> bool {
        if self.at(text) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn error_here(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            position: self.peek(0).map_or(self.end, |t| t.offset),
            message: message.into(),
        }
    }

    fn expect(&mut self, text: &str) -> Result<Token, ParseError> {
        if self.at(text) {
            Ok(self.next().unwrap())
        } else {
            Err(self.error_here(format!(
                "expected {:?}, found {}",
                text,
                self.peek(0)
                    .map_or_else(|| "end of input".into(), |t| format!("{:?}", t.text))
            )))
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<Token, ParseError> {
        if self.at_kind(TokenKind::Ident) {
            Ok(self.next().unwrap())
        } else {
            Err(self.error_here(format!("expected {what}")))
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.error_here("nesting too deep"));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn attr(&self, label: &str, children: Vec<AstNode>) -> AstNode {
        AstNode::attribute(label, children).expect("attribute labels are static")
    }

    fn leaf(&self, tok: &Token) -> AstNode {
        AstNode::code(tok.text.clone()).expect("lexemes are non-empty")
    }

    // method := modifiers* type ident '(' [param (',' param)*] ')' '{' stmt* '}'
    fn method(&mut self) -> Result<AstNode, ParseError> {
        let mut children = Vec::new();
        let mut modifiers = Vec::new();
        while self
            .peek(0)
            .is_some_and(|t| t.kind == TokenKind::Ident && is_modifier(&t.text))
        {
            let tok = self.next().unwrap();
            modifiers.push(self.leaf(&tok));
        }
        if !modifiers.is_empty() {
            children.push(self.attr("modifiers", modifiers));
        }
        children.push(self.type_node()?);
        let name = self.expect_ident("method name")?;
        children.push(self.leaf(&name));
        self.expect("(")?;
        if !self.at(")") {
            loop {
                children.push(self.formal_parameter()?);
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect(")")?;
        self.expect("{")?;
        while !self.at("}") {
            if self.peek(0).is_none() {
                return Err(ParseError {
                    position: self.end,
                    message: "unbalanced braces: expected \"}\"".into(),
                });
            }
            let stmt = self.statement()?;
            children.push(stmt);
        }
        self.expect("}")?;
        Ok(self.attr("MethodDeclaration", children))
    }

    // type := basic-type ('[' ']')* | ident ('[' ']')*
    // Brackets are dropped; the base lexeme becomes the single code leaf.
    fn type_node(&mut self) -> Result<AstNode, ParseError> {
        let tok = self.expect_ident("type name")?;
        let label = if is_basic_type(&tok.text) {
            "BasicType"
        } else {
            "ReferenceType"
        };
        let leaf = self.leaf(&tok);
        while self.at("[") {
            self.expect("[")?;
            self.expect("]")?;
        }
        Ok(self.attr(label, vec![leaf]))
    }

    fn formal_parameter(&mut self) -> Result<AstNode, ParseError> {
        let ty = self.type_node()?;
        let name = self.expect_ident("parameter name")?;
        let name_leaf = self.leaf(&name);
        Ok(self.attr("FormalParameter", vec![ty, name_leaf]))
    }

    fn statement(&mut self) -> Result<AstNode, ParseError> {
        self.enter()?;
        let result = self.statement_inner();
        self.leave();
        result
    }

    fn statement_inner(&mut self) -> Result<AstNode, ParseError> {
        let Some(tok) = self.peek(0) else {
            return Err(self.error_here("expected statement"));
        };
        if tok.kind == TokenKind::Ident {
            match tok.text.as_str() {
                "if" => return self.if_statement(),
                "while" => return self.while_statement(),
                "for" => return self.for_statement(),
                "return" => return self.return_statement(),
                _ => {}
            }
        }
        if self.looks_like_declaration() {
            let decl = self.local_var_declaration()?;
            self.expect(";")?;
            return Ok(decl);
        }
        let expr = self.expression()?;
        self.expect(";")?;
        Ok(self.attr("StatementExpression", vec![expr]))
    }

    /// Declaration starts: basic type, `Ident Ident`, or `Ident [ ] ...`.
    fn looks_like_declaration(&self) -> bool {
        let Some(first) = self.peek(0) else {
            return false;
        };
        if first.kind != TokenKind::Ident {
            return false;
        }
        if is_basic_type(&first.text) {
            return true;
        }
        match (self.peek(1), self.peek(2)) {
            (Some(second), _) if second.kind == TokenKind::Ident => true,
            (Some(second), Some(third)) => second.text == "[" && third.text == "]",
            _ => false,
        }
    }

    // localvar := type ident ['=' expr]
    fn local_var_declaration(&mut self) -> Result<AstNode, ParseError> {
        let ty = self.type_node()?;
        let name = self.expect_ident("variable name")?;
        let mut children = vec![ty, self.leaf(&name)];
        if self.at("=") {
            let eq = self.next().unwrap();
            children.push(self.leaf(&eq));
            children.push(self.expression()?);
        }
        Ok(self.attr("LocalVariableDeclaration", children))
    }

    fn if_statement(&mut self) -> Result<AstNode, ParseError> {
        self.expect("if")?;
        self.expect("(")?;
        let cond = self.expression()?;
        self.expect(")")?;
        let mut children = vec![cond, self.body()?];
        if self.eat("else") {
            children.push(self.body()?);
        }
        Ok(self.attr("IfStatement", children))
    }

    fn while_statement(&mut self) -> Result<AstNode, ParseError> {
        self.expect("while")?;
        self.expect("(")?;
        let cond = self.expression()?;
        self.expect(")")?;
        let body = self.body()?;
        Ok(self.attr("WhileStatement", vec![cond, body]))
    }

    // for := 'for' '(' [init] ';' [cond] ';' [update] ')' body
    fn for_statement(&mut self) -> Result<AstNode, ParseError> {
        self.expect("for")?;
        self.expect("(")?;
        let mut children = Vec::new();
        if !self.at(";") {
            if self.looks_like_declaration() {
                children.push(self.local_var_declaration()?);
            } else {
                children.push(self.expression()?);
            }
        }
        self.expect(";")?;
        if !self.at(";") {
            children.push(self.expression()?);
        }
        self.expect(";")?;
        if !self.at(")") {
            children.push(self.expression()?);
        }
        self.expect(")")?;
        children.push(self.body()?);
        Ok(self.attr("ForStatement", children))
    }

    fn return_statement(&mut self) -> Result<AstNode, ParseError> {
        self.expect("return")?;
        let mut children = Vec::new();
        if !self.at(";") {
            children.push(self.expression()?);
        }
        self.expect(";")?;
        Ok(self.attr("ReturnStatement", children))
    }

    /// A brace block becomes a `BlockStatement`; a bare statement attaches
    /// directly.
    fn body(&mut self) -> Result<AstNode, ParseError> {
        if self.eat("{") {
            let mut stmts = Vec::new();
            while !self.at("}") {
                if self.peek(0).is_none() {
                    return Err(ParseError {
                        position: self.end,
                        message: "unbalanced braces: expected \"}\"".into(),
                    });
                }
                stmts.push(self.statement()?);
            }
            self.expect("}")?;
            Ok(self.attr("BlockStatement", stmts))
        } else {
            self.statement()
        }
    }

    // Binary operator precedence, loosest first.
    fn binary_levels() -> &'static [&'static [&'static str]] {
        &[
            &["||"],
            &["&&"],
            &["==", "!="],
            &["<", "<=", ">", ">="],
            &["+", "-"],
            &["*", "/", "%"],
        ]
    }

    fn expression(&mut self) -> Result<AstNode, ParseError> {
        self.enter()?;
        let result = self.assignment();
        self.leave();
        result
    }

    // assignment := binary ['=' assignment]  (right-associative)
    fn assignment(&mut self) -> Result<AstNode, ParseError> {
        let lhs = self.binary(0)?;
        if self.at("=") {
            let eq = self.next().unwrap();
            let eq_leaf = self.leaf(&eq);
            let rhs = self.assignment()?;
            return Ok(self.attr("Assignment", vec![lhs, eq_leaf, rhs]));
        }
        Ok(lhs)
    }

    fn binary(&mut self, level: usize) -> Result<AstNode, ParseError> {
        let levels = Self::binary_levels();
        if level == levels.len() {
            return self.postfix();
        }
        let mut node = self.binary(level + 1)?;
        while self
            .peek(0)
            .is_some_and(|t| t.kind == TokenKind::Op && levels[level].contains(&t.text.as_str()))
        {
            let op = self.next().unwrap();
            let op_leaf = self.leaf(&op);
            let rhs = self.binary(level + 1)?;
            node = self.attr("BinaryOperation", vec![node, op_leaf, rhs]);
        }
        Ok(node)
    }

    // postfix := primary ('.' ident ['(' args ')'])*
    fn postfix(&mut self) -> Result<AstNode, ParseError> {
        let mut node = self.primary()?;
        while self.eat(".") {
            let member = self.expect_ident("member name")?;
            let member_leaf = self.leaf(&member);
            if self.at("(") {
                let mut children = vec![node, member_leaf];
                children.extend(self.arguments()?);
                node = self.attr("MethodInvocation", children);
            } else {
                node = self.attr("MemberReference", vec![node, member_leaf]);
            }
        }
        Ok(node)
    }

    fn primary(&mut self) -> Result<AstNode, ParseError> {
        self.enter()?;
        let result = self.primary_inner();
        self.leave();
        result
    }

    fn primary_inner(&mut self) -> Result<AstNode, ParseError> {
        let Some(tok) = self.peek(0).cloned() else {
            return Err(self.error_here("expected expression"));
        };
        match tok.kind {
            TokenKind::Number | TokenKind::Str | TokenKind::Char => {
                self.next();
                let leaf = self.leaf(&tok);
                Ok(self.attr("Literal", vec![leaf]))
            }
            TokenKind::Ident => {
                if matches!(tok.text.as_str(), "true" | "false" | "null") {
                    self.next();
                    let leaf = self.leaf(&tok);
                    return Ok(self.attr("Literal", vec![leaf]));
                }
                if matches!(tok.text.as_str(), "if" | "else" | "while" | "for" | "return") {
                    return Err(self.error_here(format!(
                        "keyword {:?} cannot start an expression",
                        tok.text
                    )));
                }
                self.qualified_chain()
            }
            TokenKind::Punct if tok.text == "(" => {
                self.next();
                let inner = self.expression()?;
                self.expect(")")?;
                Ok(inner)
            }
            _ => Err(self.error_here(format!("unexpected token {:?}", tok.text))),
        }
    }

    // ident ('.' ident)* ['(' args ')']
    // A trailing call yields MethodInvocation over all the name leaves plus
    // arguments; otherwise a MemberReference over the name leaves.
    fn qualified_chain(&mut self) -> Result<AstNode, ParseError> {
        let first = self.expect_ident("identifier")?;
        let mut names = vec![self.leaf(&first)];
        while self.at(".") && self.peek(1).is_some_and(|t| t.kind == TokenKind::Ident) {
            self.next();
            let part = self.next().unwrap();
            names.push(self.leaf(&part));
        }
        if self.at("(") {
            let mut children = names;
            children.extend(self.arguments()?);
            Ok(self.attr("MethodInvocation", children))
        } else {
            Ok(self.attr("MemberReference", names))
        }
    }

    fn arguments(&mut self) -> Result<Vec<AstNode>, ParseError> {
        self.expect("(")?;
        let mut args = Vec::new();
        if !self.at(")") {
            loop {
                args.push(self.expression()?);
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect(")")?;
        Ok(args)
    }
}
