//! Probabilistic context-free grammars as a transparent ground truth for
//! language modelling.
//!
//! The crate covers the whole pipeline: reading, validating and transforming
//! grammars, sampling corpora from them, computing exact masked and causal
//! perplexity lower bounds, measuring corpus naturalness, and scoring external
//! language-model token log-probabilities against the grammar.
//!
//! All probabilities are carried as natural logarithms.

pub mod cli;
pub mod corpus;
pub mod distribution;
pub mod earley;
pub mod error;
pub mod grammar;
pub mod inside_outside;
pub mod lm_eval;
pub mod logspace;
pub mod naturalness;
pub mod oracle;
pub mod records;
pub mod sampler;
pub mod stats;
pub mod tree;

pub use error::{Error, Result};
pub use grammar::{Grammar, NonterminalId, Rule, Symbol, TerminalId};

#[cfg(test)]
pub(crate) mod fixtures;
