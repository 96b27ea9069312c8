//! Per-position distributions over terminals.

use crate::grammar::{Grammar, TerminalId};
use crate::logspace::{log_sum_exp, LOG_ZERO};

/// Normalized distribution over the grammar's terminals at one position,
/// optionally with an end-of-sentence outcome (causal use).
#[derive(Clone, Debug, PartialEq)]
pub struct TokenDistribution {
    /// 0-based position of the predicted token.
    pub position: usize,
    log_probs: Vec<f64>,
    eos: Option<f64>,
}

impl TokenDistribution {
    pub(crate) fn new(position: usize, log_probs: Vec<f64>, eos: Option<f64>) -> Self {
        TokenDistribution {
            position,
            log_probs,
            eos,
        }
    }

    pub fn log_prob(&self, t: TerminalId) -> f64 {
        self.log_probs.get(t.index()).copied().unwrap_or(LOG_ZERO)
    }

    pub fn prob(&self, t: TerminalId) -> f64 {
        self.log_prob(t).exp()
    }

    pub fn eos_log_prob(&self) -> Option<f64> {
        self.eos
    }

    /// Log-probabilities indexed by terminal id.
    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    /// `ln` of the total mass, EOS included; 0 for a normalized distribution.
    pub fn total_log_mass(&self) -> f64 {
        log_sum_exp(self.log_probs.iter().copied().chain(self.eos))
    }

    /// Terminals with non-zero probability as `(name, probability)`, by id.
    pub fn named_probs<'g>(&self, g: &'g Grammar) -> Vec<(&'g str, f64)> {
        self.log_probs
            .iter()
            .enumerate()
            .filter(|(_, lp)| **lp > LOG_ZERO)
            .map(|(i, lp)| (g.terminal_name(TerminalId(i as u32)), lp.exp()))
            .collect()
    }
}
