//! Grammar representation, the text file format, and grammar transforms.
//!
//! A [`Grammar`] is immutable once built. Every transform (binarization,
//! pruning, induction) produces a fresh grammar through [`GrammarBuilder`],
//! which assigns dense symbol ids and builds the lookup indexes.

mod closure;
mod induce;
mod parse;
mod transform;
mod validate;

use std::collections::HashMap;
use std::fmt;

pub use closure::{ClosureMatrix, UnaryClosure, CLOSURE_MAX_ENTRY, CLOSURE_MAX_STEPS, CLOSURE_TOLERANCE};
pub(crate) use closure::{describe_failure, geometric_series};
pub use induce::induce_from_treebank;
pub use parse::parse_grammar;
pub use transform::{binarize, prune_rules};
pub use validate::{validate, ValidationReport, SUM_TOLERANCE};

use crate::error::{Error, Result};

/// Start symbol used when a grammar file has no `start:` directive.
pub const DEFAULT_START: &str = "ROOT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NonterminalId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TerminalId(pub u32);

impl NonterminalId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl TerminalId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A right-hand-side symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Nonterminal(NonterminalId),
    Terminal(TerminalId),
}

/// A symbol referenced by name, used while building grammars.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SymbolName {
    Nonterminal(String),
    Terminal(String),
}

impl SymbolName {
    pub fn nt(name: impl Into<String>) -> Self {
        SymbolName::Nonterminal(name.into())
    }

    pub fn t(name: impl Into<String>) -> Self {
        SymbolName::Terminal(name.into())
    }
}

/// Dense name table for one symbol kind.
#[derive(Clone, Debug, Default)]
pub struct SymbolTable {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl SymbolTable {
    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Shape of a rule once the grammar is in binary normal form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleShape {
    Lexical(TerminalId),
    Unary(NonterminalId),
    Binary(NonterminalId, NonterminalId),
    /// Anything else: longer right-hand sides or terminals mixed with
    /// nonterminals. Removed by [`binarize`].
    Other,
}

#[derive(Clone, Debug)]
pub struct Rule {
    pub lhs: NonterminalId,
    pub rhs: Vec<Symbol>,
    /// Linear probability as written in the grammar file.
    pub prob: f64,
    pub log_prob: f64,
}

impl Rule {
    pub fn shape(&self) -> RuleShape {
        match self.rhs.as_slice() {
            [Symbol::Terminal(t)] => RuleShape::Lexical(*t),
            [Symbol::Nonterminal(n)] => RuleShape::Unary(*n),
            [Symbol::Nonterminal(l), Symbol::Nonterminal(r)] => RuleShape::Binary(*l, *r),
            _ => RuleShape::Other,
        }
    }

    pub fn is_unary(&self) -> bool {
        matches!(self.shape(), RuleShape::Unary(_))
    }
}

#[derive(Clone, Debug)]
pub struct Grammar {
    nonterminals: SymbolTable,
    terminals: SymbolTable,
    rules: Vec<Rule>,
    start: NonterminalId,
    by_lhs: Vec<Vec<usize>>,
    binary_by_children: HashMap<(NonterminalId, NonterminalId), Vec<usize>>,
    lexical_by_terminal: Vec<Vec<usize>>,
}

impl Grammar {
    pub fn start(&self) -> NonterminalId {
        self.start
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, id: usize) -> &Rule {
        &self.rules[id]
    }

    pub fn num_nonterminals(&self) -> usize {
        self.nonterminals.len()
    }

    pub fn num_terminals(&self) -> usize {
        self.terminals.len()
    }

    pub fn nonterminals(&self) -> &SymbolTable {
        &self.nonterminals
    }

    pub fn terminals(&self) -> &SymbolTable {
        &self.terminals
    }

    pub fn nonterminal_name(&self, id: NonterminalId) -> &str {
        self.nonterminals.name(id.0)
    }

    pub fn terminal_name(&self, id: TerminalId) -> &str {
        self.terminals.name(id.0)
    }

    pub fn nonterminal_id(&self, name: &str) -> Option<NonterminalId> {
        self.nonterminals.get(name).map(NonterminalId)
    }

    pub fn terminal_id(&self, name: &str) -> Option<TerminalId> {
        self.terminals.get(name).map(TerminalId)
    }

    /// Maps surface tokens to terminal ids, failing on the first unknown one.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<TerminalId>> {
        tokens
            .iter()
            .map(|t| {
                self.terminal_id(t.as_ref())
                    .ok_or_else(|| Error::UnknownTerminal(t.as_ref().to_string()))
            })
            .collect()
    }

    /// Rule ids with the given left-hand side, in file order.
    pub fn rules_for(&self, lhs: NonterminalId) -> &[usize] {
        &self.by_lhs[lhs.index()]
    }

    pub fn binary_rules_for(&self, left: NonterminalId, right: NonterminalId) -> &[usize] {
        self.binary_by_children
            .get(&(left, right))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn lexical_rules_for(&self, terminal: TerminalId) -> &[usize] {
        &self.lexical_by_terminal[terminal.index()]
    }

    /// True when every rule is lexical, unary or binary over nonterminals.
    pub fn is_binarized(&self) -> bool {
        self.rules.iter().all(|r| r.shape() != RuleShape::Other)
    }

    pub(crate) fn require_binarized(&self) -> Result<()> {
        match self.rules.iter().find(|r| r.shape() == RuleShape::Other) {
            None => Ok(()),
            Some(rule) => Err(Error::NotBinarized(self.format_rule(rule))),
        }
    }

    pub fn symbol_name(&self, sym: Symbol) -> SymbolName {
        match sym {
            Symbol::Nonterminal(n) => SymbolName::Nonterminal(self.nonterminal_name(n).to_string()),
            Symbol::Terminal(t) => SymbolName::Terminal(self.terminal_name(t).to_string()),
        }
    }

    /// One rule in grammar-file syntax, without the trailing newline.
    pub fn format_rule(&self, rule: &Rule) -> String {
        let mut out = String::new();
        out.push_str(self.nonterminal_name(rule.lhs));
        out.push_str(" ->");
        for &sym in &rule.rhs {
            out.push(' ');
            match sym {
                Symbol::Nonterminal(n) => out.push_str(self.nonterminal_name(n)),
                Symbol::Terminal(t) => out.push_str(&quote_terminal(self.terminal_name(t))),
            }
        }
        out.push(' ');
        out.push_str(&rule.prob.to_string());
        out
    }

    /// Serializes the grammar in the text format read by [`parse_grammar`].
    pub fn to_text(&self) -> String {
        let mut out = format!("start: {}\n", self.nonterminal_name(self.start));
        for rule in &self.rules {
            out.push_str(&self.format_rule(rule));
            out.push('\n');
        }
        out
    }

    /// Returns the rules as (lhs, rhs, prob) name triples, e.g. to re-weight
    /// a grammar and rebuild it.
    pub fn named_rules(&self) -> Vec<(String, Vec<SymbolName>, f64)> {
        self.rules
            .iter()
            .map(|r| {
                (
                    self.nonterminal_name(r.lhs).to_string(),
                    r.rhs.iter().map(|&s| self.symbol_name(s)).collect(),
                    r.prob,
                )
            })
            .collect()
    }
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

pub(crate) fn quote_terminal(name: &str) -> String {
    let mut out = String::with_capacity(name.len() + 2);
    out.push('\'');
    for c in name.chars() {
        if c == '\'' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('\'');
    out
}

/// Collects named rules and produces a [`Grammar`] with dense ids and indexes.
///
/// Nonterminal ids are assigned with the start symbol first, then in order of
/// first appearance; terminal ids in order of first appearance.
#[derive(Debug)]
pub struct GrammarBuilder {
    start: String,
    rules: Vec<(String, Vec<SymbolName>, f64)>,
    seen: HashMap<(String, Vec<SymbolName>), usize>,
}

impl GrammarBuilder {
    pub fn new(start: impl Into<String>) -> Self {
        GrammarBuilder {
            start: start.into(),
            rules: Vec::new(),
            seen: HashMap::new(),
        }
    }

    /// Adds a rule. `line` is only used for error reporting.
    pub fn add_rule(&mut self, lhs: &str, rhs: Vec<SymbolName>, prob: f64, line: usize) -> Result<()> {
        if rhs.is_empty() {
            return Err(Error::Syntax {
                line,
                msg: format!("rule for `{lhs}` has an empty right-hand side"),
            });
        }
        if !(prob > 0.0 && prob <= 1.0) || !prob.is_finite() {
            return Err(Error::Syntax {
                line,
                msg: format!("probability {prob} outside (0, 1]"),
            });
        }
        let key = (lhs.to_string(), rhs.clone());
        if self.seen.contains_key(&key) {
            return Err(Error::DuplicateRule {
                line,
                rule: describe(lhs, &rhs),
            });
        }
        self.seen.insert(key, self.rules.len());
        self.rules.push((lhs.to_string(), rhs, prob));
        Ok(())
    }

    pub fn build(self) -> Result<Grammar> {
        if !self.rules.iter().any(|(lhs, _, _)| *lhs == self.start) {
            return Err(Error::UnknownStart(self.start));
        }
        let mut nonterminals = SymbolTable::default();
        let mut terminals = SymbolTable::default();
        let start = NonterminalId(nonterminals.intern(&self.start));
        let mut rules = Vec::with_capacity(self.rules.len());
        for (lhs, rhs, prob) in &self.rules {
            let lhs = NonterminalId(nonterminals.intern(lhs));
            let rhs = rhs
                .iter()
                .map(|s| match s {
                    SymbolName::Nonterminal(n) => Symbol::Nonterminal(NonterminalId(nonterminals.intern(n))),
                    SymbolName::Terminal(t) => Symbol::Terminal(TerminalId(terminals.intern(t))),
                })
                .collect();
            rules.push(Rule {
                lhs,
                rhs,
                prob: *prob,
                log_prob: prob.ln(),
            });
        }

        let mut by_lhs = vec![Vec::new(); nonterminals.len()];
        let mut binary_by_children: HashMap<_, Vec<usize>> = HashMap::new();
        let mut lexical_by_terminal = vec![Vec::new(); terminals.len()];
        for (id, rule) in rules.iter().enumerate() {
            by_lhs[rule.lhs.index()].push(id);
            match rule.shape() {
                RuleShape::Lexical(t) => lexical_by_terminal[t.index()].push(id),
                RuleShape::Binary(l, r) => binary_by_children.entry((l, r)).or_default().push(id),
                _ => {}
            }
        }
        Ok(Grammar {
            nonterminals,
            terminals,
            rules,
            start,
            by_lhs,
            binary_by_children,
            lexical_by_terminal,
        })
    }
}

fn describe(lhs: &str, rhs: &[SymbolName]) -> String {
    let mut out = format!("{lhs} ->");
    for s in rhs {
        out.push(' ');
        match s {
            SymbolName::Nonterminal(n) => out.push_str(n),
            SymbolName::Terminal(t) => out.push_str(&quote_terminal(t)),
        }
    }
    out
}

/// Builds a grammar from `(lhs, rhs, prob)` triples.
pub fn grammar_from_rules<I>(start: &str, rules: I) -> Result<Grammar>
where
    I: IntoIterator<Item = (String, Vec<SymbolName>, f64)>,
{
    let mut builder = GrammarBuilder::new(start);
    for (i, (lhs, rhs, prob)) in rules.into_iter().enumerate() {
        builder.add_rule(&lhs, rhs, prob, i + 1)?;
    }
    builder.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_assigns_start_first() {
        let mut b = GrammarBuilder::new("S");
        b.add_rule("A", vec![SymbolName::t("a")], 1.0, 1).unwrap();
        b.add_rule("S", vec![SymbolName::nt("A")], 1.0, 2).unwrap();
        let g = b.build().unwrap();
        assert_eq!(g.start(), NonterminalId(0));
        assert_eq!(g.nonterminal_name(NonterminalId(1)), "A");
    }

    #[test]
    fn terminal_quoting_escapes() {
        assert_eq!(quote_terminal("it's"), "'it\\'s'");
        assert_eq!(quote_terminal("a\\b"), "'a\\\\b'");
    }
}
