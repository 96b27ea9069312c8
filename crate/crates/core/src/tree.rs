//! Bracketed (Penn-style) trees.

use std::fmt;

use crate::error::{Error, Result};

/// A parse tree node. Leaves (no children) carry terminal tokens; internal
/// nodes carry nonterminal labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeNode {
    pub label: String,
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn leaf(token: impl Into<String>) -> Self {
        TreeNode {
            label: token.into(),
            children: Vec::new(),
        }
    }

    pub fn node(label: impl Into<String>, children: Vec<TreeNode>) -> Self {
        TreeNode {
            label: label.into(),
            children,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Leaf tokens, left to right.
    pub fn yield_tokens(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |leaf, _| out.push(leaf));
        out
    }

    /// Label of each leaf's parent, left to right.
    pub fn preterminals(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |_, parent| out.push(parent));
        out
    }

    fn visit_leaves<'a>(&'a self, f: &mut impl FnMut(&'a str, &'a str)) {
        for child in &self.children {
            if child.is_leaf() {
                f(&child.label, &self.label);
            } else {
                child.visit_leaves(f);
            }
        }
    }
}

impl fmt::Display for TreeNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_leaf() {
            return f.write_str(&self.label);
        }
        write!(f, "({}", self.label)?;
        for child in &self.children {
            write!(f, " {child}")?;
        }
        f.write_str(")")
    }
}

/// Parses one bracketed tree such as `(S (A a) (B b))`. An unlabeled outer
/// wrapper with a single child, as in `( (S ...))`, is removed.
pub fn parse_tree(text: &str, line: usize) -> Result<TreeNode> {
    let tokens = lex(text);
    let mut pos = 0;
    let tree = parse_node(&tokens, &mut pos, line)?;
    if pos != tokens.len() {
        return Err(Error::Treebank {
            line,
            msg: "trailing input after tree".into(),
        });
    }
    if tree.is_leaf() {
        return Err(Error::Treebank {
            line,
            msg: "tree must be bracketed".into(),
        });
    }
    Ok(tree)
}

/// Reads a treebank with one tree per non-blank line.
pub fn parse_treebank(text: &str) -> Result<Vec<TreeNode>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_tree(l, i + 1))
        .collect()
}

#[derive(Debug, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn lex(text: &str) -> Vec<Tok<'_>> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c == '(' || c == ')' || c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Tok::Atom(&text[s..i]));
            }
            match c {
                '(' => out.push(Tok::Open),
                ')' => out.push(Tok::Close),
                _ => {}
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Tok::Atom(&text[s..]));
    }
    out
}

fn parse_node(tokens: &[Tok<'_>], pos: &mut usize, line: usize) -> Result<TreeNode> {
    let err = |msg: &str| Error::Treebank {
        line,
        msg: msg.to_string(),
    };
    match tokens.get(*pos) {
        Some(Tok::Atom(a)) => {
            *pos += 1;
            Ok(TreeNode::leaf(*a))
        }
        Some(Tok::Open) => {
            *pos += 1;
            let label = match tokens.get(*pos) {
                Some(Tok::Atom(a)) => {
                    *pos += 1;
                    Some(a.to_string())
                }
                Some(Tok::Open) => None,
                _ => return Err(err("expected a label after `(`")),
            };
            let mut children = Vec::new();
            loop {
                match tokens.get(*pos) {
                    Some(Tok::Close) => {
                        *pos += 1;
                        break;
                    }
                    Some(_) => children.push(parse_node(tokens, pos, line)?),
                    None => return Err(err("unbalanced parentheses")),
                }
            }
            match label {
                Some(label) if children.is_empty() => Err(err(&format!("node `{label}` has no children"))),
                Some(label) => Ok(TreeNode::node(label, children)),
                None if children.len() == 1 && !children[0].is_leaf() => Ok(children.pop().unwrap()),
                None => Err(err("unlabeled node")),
            }
        }
        Some(Tok::Close) => Err(err("unexpected `)`")),
        None => Err(err("empty tree")),
    }
}
