//! Brute-force reference computations by exhaustive language enumeration.
//!
//! Nothing here shares code with the chart parsers: string probabilities are
//! built length by length from the rules directly, with unary rules resolved
//! by plain fixed-point iteration.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::BuildHasherDefault;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::distribution::TokenDistribution;
use crate::earley::{LeftCornerMatrices, PrefixParser};
use crate::error::{Error, Result};
use crate::grammar::{binarize, Grammar, Symbol, TerminalId, UnaryClosure};
use crate::inside_outside::InsideOutside;
use crate::logspace::LOG_ZERO;

/// Cap on the number of distinct strings held for any nonterminal and length.
pub const MAX_LANGUAGE_SIZE: usize = 10_000_000;

const UNARY_TOLERANCE: f64 = 1e-300;
const UNARY_MAX_ROUNDS: usize = 100_000;

// fixed hasher keeps iteration order, and so every floating-point sum, the
// same from run to run
type StringDist = HashMap<Vec<TerminalId>, f64, BuildHasherDefault<DefaultHasher>>;

/// Every string of the start symbol up to `max_len` tokens with its total
/// probability.
#[derive(Clone, Debug)]
pub struct EnumeratedLanguage {
    entries: StringDist,
    pub max_len: usize,
    /// Probability mass of strings longer than `max_len` (`1 - Σ entries`).
    pub tail_bound: f64,
    /// True when the grammar puts noticeable mass beyond `max_len`.
    pub truncated: bool,
    num_terminals: usize,
}

impl EnumeratedLanguage {
    /// Probability of exactly `w`; 0 if unseen or longer than `max_len`.
    pub fn prob(&self, w: &[TerminalId]) -> f64 {
        self.entries.get(w).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Entries sorted by length, then token ids.
    pub fn sorted(&self) -> Vec<(&[TerminalId], f64)> {
        let mut v: Vec<(&[TerminalId], f64)> = self.entries.iter().map(|(k, &p)| (k.as_slice(), p)).collect();
        v.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then(a.0.cmp(b.0)));
        v
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len > self.max_len {
            return Err(Error::PositionOutOfRange {
                position: len,
                len: self.max_len,
            });
        }
        Ok(())
    }

    /// `ln P(w)` summed over the enumerated derivations.
    pub fn brute_inside(&self, w: &[TerminalId]) -> Result<f64> {
        self.check_len(w.len())?;
        let p = self.prob(w);
        Ok(if p > 0.0 { p.ln() } else { LOG_ZERO })
    }

    /// Masked distribution at 0-based position `i` by substituting every
    /// terminal and renormalizing.
    pub fn brute_masked(&self, w: &[TerminalId], i: usize) -> Result<TokenDistribution> {
        self.check_len(w.len())?;
        if i >= w.len() {
            return Err(Error::PositionOutOfRange {
                position: i,
                len: w.len(),
            });
        }
        let mut probe = w.to_vec();
        let mut masses = Vec::with_capacity(self.num_terminals);
        for v in 0..self.num_terminals {
            probe[i] = TerminalId(v as u32);
            masses.push(self.prob(&probe));
        }
        let total: f64 = masses.iter().sum();
        if total == 0.0 {
            return Err(Error::ContextUnparseable(i));
        }
        let log_probs = masses
            .into_iter()
            .map(|m| if m > 0.0 { (m / total).ln() } else { LOG_ZERO })
            .collect();
        Ok(TokenDistribution::new(i, log_probs, None))
    }

    /// Bounds on the prefix probability: enumerated mass of strings starting
    /// with `prefix`, and that plus the unenumerated tail.
    pub fn brute_prefix(&self, prefix: &[TerminalId]) -> Result<(f64, f64)> {
        self.check_len(prefix.len())?;
        let lower: f64 = self
            .entries
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, &p)| p)
            .sum();
        Ok((lower, lower + self.tail_bound))
    }
}

/// Enumerates the language of `g` up to `max_len` tokens.
pub fn enumerate_language(g: &Grammar, max_len: usize) -> Result<EnumeratedLanguage> {
    let n = g.num_nonterminals();
    // by_len[l][X]: strings of length l derived by X
    let mut by_len: Vec<Vec<StringDist>> = vec![vec![StringDist::default(); n]];
    let unary: Vec<(usize, usize, f64)> = g
        .rules()
        .iter()
        .filter_map(|r| match r.rhs.as_slice() {
            [Symbol::Nonterminal(y)] => Some((r.lhs.index(), y.index(), r.prob)),
            _ => None,
        })
        .collect();

    for len in 1..=max_len {
        let mut direct: Vec<StringDist> = vec![StringDist::default(); n];
        for rule in g.rules() {
            if rule.rhs.len() > len || matches!(rule.rhs.as_slice(), [Symbol::Nonterminal(_)]) {
                continue;
            }
            let out = &mut direct[rule.lhs.index()];
            expand(&rule.rhs, len, &by_len, Vec::new(), rule.prob, out)?;
        }
        // unary rules: D = direct + U·D, by iteration
        let mut total = direct.clone();
        let mut frontier = direct;
        for round in 0.. {
            if round == UNARY_MAX_ROUNDS {
                return Err(Error::ImproperUnaryCycle("oracle fixed point did not converge".into()));
            }
            let mut next: Vec<StringDist> = vec![StringDist::default(); n];
            let mut largest = 0.0f64;
            for &(x, y, p) in &unary {
                for (s, &q) in &frontier[y] {
                    let v = p * q;
                    if v > UNARY_TOLERANCE {
                        *next[x].entry(s.clone()).or_insert(0.0) += v;
                    }
                }
            }
            for x in 0..n {
                for (s, &v) in &next[x] {
                    let slot = total[x].entry(s.clone()).or_insert(0.0);
                    *slot += v;
                    largest = largest.max(v / *slot);
                }
            }
            if largest < 1e-17 {
                break;
            }
            frontier = next;
        }
        if let Some(big) = total.iter().map(HashMap::len).max() {
            if big > MAX_LANGUAGE_SIZE {
                return Err(Error::LanguageTooLarge(MAX_LANGUAGE_SIZE));
            }
        }
        by_len.push(total);
    }

    let start = g.start().index();
    let mut entries = StringDist::default();
    for dist in by_len.iter().skip(1) {
        for (s, &p) in &dist[start] {
            entries.insert(s.clone(), p);
        }
    }
    let mass: f64 = entries.values().sum();
    let tail_bound = (1.0 - mass).max(0.0);
    Ok(EnumeratedLanguage {
        entries,
        max_len,
        tail_bound,
        truncated: tail_bound > 1e-12,
        num_terminals: g.num_terminals(),
    })
}

/// Adds to `out` every way `symbols` can yield exactly `len` tokens.
fn expand(
    symbols: &[Symbol],
    len: usize,
    by_len: &[Vec<StringDist>],
    prefix: Vec<TerminalId>,
    prob: f64,
    out: &mut StringDist,
) -> Result<()> {
    let Some((first, rest)) = symbols.split_first() else {
        if len == 0 {
            *out.entry(prefix).or_insert(0.0) += prob;
            if out.len() > MAX_LANGUAGE_SIZE {
                return Err(Error::LanguageTooLarge(MAX_LANGUAGE_SIZE));
            }
        }
        return Ok(());
    };
    // each remaining symbol needs at least one token
    if len < symbols.len() {
        return Ok(());
    }
    match *first {
        Symbol::Terminal(t) => {
            let mut p = prefix;
            p.push(t);
            expand(rest, len - 1, by_len, p, prob, out)
        }
        Symbol::Nonterminal(x) => {
            for l in 1..=len - rest.len() {
                for (s, &q) in &by_len[l][x.index()] {
                    let mut p = prefix.clone();
                    p.extend_from_slice(s);
                    expand(rest, len - l, by_len, p, prob * q, out)?;
                }
            }
            Ok(())
        }
    }
}

/// Largest deviations between the chart engines and the oracle.
#[derive(Clone, Debug, Serialize)]
pub struct OracleCheckReport {
    pub max_len: usize,
    pub sentences: usize,
    pub language_size: usize,
    pub tail_bound: f64,
    /// Largest `|P_inside / P_oracle - 1|`.
    pub inside_max_rel_dev: f64,
    /// Largest entrywise probability difference of masked distributions.
    pub masked_max_abs_dev: f64,
    /// Largest distance of a prefix probability outside the oracle bounds.
    pub prefix_max_violation: f64,
    /// Largest `|ln P_complete - ln P_inside|`.
    pub complete_max_log_dev: f64,
}

/// Samples `sentences` strings from the enumerated language and compares
/// inside, masked, and prefix probabilities against the oracle.
pub fn oracle_check(g: &Grammar, max_len: usize, sentences: usize, seed: u64) -> Result<OracleCheckReport> {
    let lang = enumerate_language(g, max_len)?;
    let binarized;
    let chart_grammar = if g.is_binarized() {
        g
    } else {
        binarized = binarize(g);
        &binarized
    };
    let closure = UnaryClosure::build(chart_grammar)?;
    let io = InsideOutside::new(chart_grammar, &closure)?;
    let lc = LeftCornerMatrices::build(g)?;
    let parser = PrefixParser::new(g, &lc);

    let support = lang.sorted();
    let mass: f64 = support.iter().map(|e| e.1).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleCheckReport {
        max_len,
        sentences: 0,
        language_size: lang.len(),
        tail_bound: lang.tail_bound,
        inside_max_rel_dev: 0.0,
        masked_max_abs_dev: 0.0,
        prefix_max_violation: 0.0,
        complete_max_log_dev: 0.0,
    };
    if support.is_empty() {
        return Ok(report);
    }
    for _ in 0..sentences {
        let mut u = rng.gen::<f64>() * mass;
        let mut pick = support.len() - 1;
        for (i, e) in support.iter().enumerate() {
            if u < e.1 {
                pick = i;
                break;
            }
            u -= e.1;
        }
        let ids = support[pick].0;
        // the binarized grammar shares surface tokens but may renumber them
        let words: Vec<&str> = ids.iter().map(|&t| g.terminal_name(t)).collect();
        let chart_ids = chart_grammar.encode(&words)?;

        let oracle_p = lang.prob(ids);
        let inside = io.inside(&chart_ids)?.sentence_log_prob();
        report.inside_max_rel_dev = report.inside_max_rel_dev.max((inside.exp() / oracle_p - 1.0).abs());

        for (i, dist) in io.masked_distributions(&chart_ids)?.iter().enumerate() {
            let brute = lang.brute_masked(ids, i)?;
            for v in 0..g.num_terminals() {
                let t = TerminalId(v as u32);
                let ct = chart_grammar.terminal_id(g.terminal_name(t)).expect("binarize keeps terminals");
                report.masked_max_abs_dev = report.masked_max_abs_dev.max((dist.prob(ct) - brute.prob(t)).abs());
            }
        }

        let chart = parser.scan_prefix(ids);
        for k in 0..=ids.len() {
            let (lo, hi) = lang.brute_prefix(&ids[..k])?;
            let p = chart.prefix_log_prob(k).exp();
            report.prefix_max_violation = report.prefix_max_violation.max((lo - p).max(p - hi).max(0.0));
        }
        report.complete_max_log_dev = report
            .complete_max_log_dev
            .max((chart.complete_log_prob(ids.len()) - inside).abs());
        report.sentences += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{g1, g2};
    use crate::grammar::parse_grammar;

    #[test]
    fn g1_language() {
        let g = g1();
        let lang = enumerate_language(&g, 2).unwrap();
        let w = |s: &str| g.encode(&s.chars().map(|c| c.to_string()).collect::<Vec<_>>()).unwrap();
        assert_eq!(lang.len(), 4);
        assert!((lang.prob(&w("aa")) - 0.28).abs() < 1e-15);
        assert!((lang.prob(&w("ab")) - 0.42).abs() < 1e-15);
        assert!((lang.prob(&w("ba")) - 0.12).abs() < 1e-15);
        assert!((lang.prob(&w("bb")) - 0.18).abs() < 1e-15);
        assert!(lang.tail_bound < 1e-15 && !lang.truncated);

        let m = lang.brute_masked(&w("ab"), 0).unwrap();
        assert!((m.prob(w("a")[0]) - 0.7).abs() < 1e-15);
        assert!((m.prob(w("b")[0]) - 0.3).abs() < 1e-15);
        let (lo, hi) = lang.brute_prefix(&w("a")).unwrap();
        assert!((lo - 0.7).abs() < 1e-15 && (hi - 0.7).abs() < 1e-15);
    }

    #[test]
    fn g2_language() {
        let g = g2();
        let lang = enumerate_language(&g, 3).unwrap();
        let a = g.terminal_id("a").unwrap();
        assert_eq!(lang.prob(&[a]), 0.5);
        assert_eq!(lang.prob(&[a, a]), 0.25);
        assert_eq!(lang.prob(&[a, a, a]), 0.125);
        assert!((lang.tail_bound - 0.125).abs() < 1e-15 && lang.truncated);

        let lang = enumerate_language(&g, 20).unwrap();
        let (lo, hi) = lang.brute_prefix(&[a]).unwrap();
        assert!((lo - (1.0 - 2f64.powi(-20))).abs() < 1e-15);
        assert!((hi - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unary_cycles_resolve() {
        let g = parse_grammar("start: S\nS -> A 0.5\nS -> 'b' 0.5\nA -> S 0.4\nA -> 'a' 0.6").unwrap();
        let lang = enumerate_language(&g, 1).unwrap();
        let a = g.terminal_id("a").unwrap();
        // P(S => a) = 0.5·0.6 / (1 - 0.5·0.4)
        assert!((lang.prob(&[a]) - 0.3 / 0.8).abs() < 1e-15);
        assert!(lang.tail_bound < 1e-12);
    }

    #[test]
    fn single_string() {
        let g = parse_grammar("start: S\nS -> 'a' 1.0").unwrap();
        let lang = enumerate_language(&g, 1).unwrap();
        assert_eq!(lang.sorted().len(), 1);
        assert_eq!(lang.total_mass(), 1.0);
    }

    #[test]
    fn check_runs_clean() {
        let g = parse_grammar("start: S\nS -> A B C 0.6\nS -> A 0.4\nA -> 'a' 0.5\nA -> A A 0.5\nB -> 'b' 1\nC -> 'a' 0.5\nC -> 'b' 0.5").unwrap();
        let r = oracle_check(&g, 6, 40, 1).unwrap();
        assert_eq!(r.sentences, 40);
        assert!(r.inside_max_rel_dev < 1e-9, "{r:?}");
        assert!(r.masked_max_abs_dev < 1e-9, "{r:?}");
        assert!(r.prefix_max_violation < 1e-12, "{r:?}");
        assert!(r.complete_max_log_dev < 1e-9, "{r:?}");
    }
}
