//! Probabilistic Earley parsing for prefix probabilities (Stolcke's method).
//!
//! Every state carries a forward probability α (all derivations of the
//! prefix that pass through the state) and an inner probability γ (the
//! state's own partial constituent). Left-recursive prediction chains are
//! collapsed with the left-corner closure `R_L`, unary completion chains with
//! the unit closure `R_U`, so the parser handles arbitrary (non-binarized,
//! left-recursive) grammars without transforming them.
//!
//! The prefix probability after `k` tokens is the total forward mass of the
//! states produced by scanning token `k`.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::corpus::Corpus;
use crate::distribution::TokenDistribution;
use crate::error::{Error, Result};
use crate::grammar::{
    describe_failure, geometric_series, ClosureMatrix, Grammar, NonterminalId, Symbol, TerminalId, UnaryClosure,
};
use crate::inside_outside::PerplexityResult;
use crate::logspace::{log_add_assign, log_sum_exp, LOG_ZERO};
use crate::records::TokenLogProbRecord;
use crate::sampler::Vocabulary;

/// Token recorded for the end-of-sentence event when it is scored.
pub const EOS_TOKEN: &str = "</s>";

/// Left-corner and unit-production closures of a grammar.
#[derive(Clone, Debug)]
pub struct LeftCornerMatrices {
    left_corner: ClosureMatrix,
    unit: UnaryClosure,
}

impl LeftCornerMatrices {
    pub fn build(g: &Grammar) -> Result<Self> {
        let entries: Vec<(usize, usize, f64)> = g
            .rules()
            .iter()
            .filter_map(|r| match r.rhs[0] {
                Symbol::Nonterminal(y) => Some((r.lhs.index(), y.index(), r.prob)),
                Symbol::Terminal(_) => None,
            })
            .collect();
        let left_corner = geometric_series(g.num_nonterminals(), &entries)
            .map_err(|f| Error::ImproperLeftRecursion(describe_failure(g, &f)))?;
        let unit = UnaryClosure::build(g)?;
        Ok(LeftCornerMatrices { left_corner, unit })
    }

    /// `R_L`: total probability that `x` has `y` as a (reflexive, transitive)
    /// left corner.
    pub fn left_corner(&self) -> &ClosureMatrix {
        &self.left_corner
    }

    /// `R_U`: the unary closure.
    pub fn unit(&self) -> &ClosureMatrix {
        self.unit.matrix()
    }
}

#[derive(Clone, Copy, Debug)]
struct State {
    rule: u32,
    dot: u32,
    origin: u32,
    forward: f64,
    inner: f64,
}

#[derive(Clone, Debug, Default)]
struct StateSet {
    states: Vec<State>,
    index: HashMap<(u32, u32, u32), u32>,
    /// nonterminal → states waiting on it
    waiting_nt: HashMap<u32, Vec<u32>>,
    /// terminal → states waiting on it
    waiting_t: HashMap<u32, Vec<u32>>,
    prefix_log_prob: f64,
    complete_log_prob: f64,
}

impl StateSet {
    fn add(&mut self, rule: u32, dot: u32, origin: u32, forward: f64, inner: f64) -> (u32, bool) {
        match self.index.get(&(rule, dot, origin)) {
            Some(&i) => {
                let s = &mut self.states[i as usize];
                log_add_assign(&mut s.forward, forward);
                log_add_assign(&mut s.inner, inner);
                (i, false)
            }
            None => {
                let i = self.states.len() as u32;
                self.states.push(State {
                    rule,
                    dot,
                    origin,
                    forward,
                    inner,
                });
                self.index.insert((rule, dot, origin), i);
                (i, true)
            }
        }
    }
}

/// Shared, immutable parser tables for one grammar.
pub struct PrefixParser<'g> {
    grammar: &'g Grammar,
    lc: &'g LeftCornerMatrices,
    /// Right-hand sides by rule id; the last entry is the added rule `S' -> start`.
    rhs: Vec<Vec<Symbol>>,
    lhs: Vec<u32>,
    log_probs: Vec<f64>,
    unit_rule: Vec<bool>,
}

impl<'g> PrefixParser<'g> {
    pub fn new(grammar: &'g Grammar, lc: &'g LeftCornerMatrices) -> Self {
        assert_eq!(lc.left_corner.dim(), grammar.num_nonterminals(), "matrices built for another grammar");
        let mut rhs: Vec<Vec<Symbol>> = grammar.rules().iter().map(|r| r.rhs.clone()).collect();
        let mut lhs: Vec<u32> = grammar.rules().iter().map(|r| r.lhs.0).collect();
        let mut log_probs: Vec<f64> = grammar.rules().iter().map(|r| r.log_prob).collect();
        let mut unit_rule: Vec<bool> = grammar.rules().iter().map(|r| r.is_unary()).collect();
        rhs.push(vec![Symbol::Nonterminal(grammar.start())]);
        lhs.push(u32::MAX);
        log_probs.push(0.0);
        unit_rule.push(true);
        PrefixParser {
            grammar,
            lc,
            rhs,
            lhs,
            log_probs,
            unit_rule,
        }
    }

    pub fn grammar(&self) -> &'g Grammar {
        self.grammar
    }

    fn top_rule(&self) -> u32 {
        (self.rhs.len() - 1) as u32
    }

    /// Chart for the empty prefix.
    pub fn start(&self) -> PrefixChart<'_, 'g> {
        let mut set = StateSet::default();
        set.add(self.top_rule(), 0, 0, 0.0, 0.0);
        set.prefix_log_prob = 0.0;
        self.predict(&mut set, 0);
        self.finish(&mut set);
        PrefixChart {
            parser: self,
            tokens: Vec::new(),
            sets: vec![set],
        }
    }

    /// Chart after consuming `prefix`.
    pub fn scan_prefix(&self, prefix: &[TerminalId]) -> PrefixChart<'_, 'g> {
        let mut chart = self.start();
        for &t in prefix {
            chart.push(t);
        }
        chart
    }

    pub fn scan_prefix_str<S: AsRef<str>>(&self, prefix: &[S]) -> Result<PrefixChart<'_, 'g>> {
        Ok(self.scan_prefix(&self.grammar.encode(prefix)?))
    }

    /// Conditional distribution of the token following `prefix`, with EOS.
    pub fn next_token_distribution(&self, prefix: &[TerminalId]) -> Result<TokenDistribution> {
        self.scan_prefix(prefix).next_token_distribution()
    }

    fn predict(&self, set: &mut StateSet, k: u32) {
        let top = self.top_rule();
        let mut source_mass: HashMap<u32, f64> = HashMap::new();
        for s in &set.states {
            if s.dot == 0 && s.rule != top {
                continue;
            }
            if let Some(Symbol::Nonterminal(z)) = self.rhs[s.rule as usize].get(s.dot as usize) {
                log_add_assign(source_mass.entry(z.0).or_insert(LOG_ZERO), s.forward);
            }
        }
        let mut sources: Vec<(u32, f64)> = source_mass.into_iter().collect();
        sources.sort_unstable_by_key(|&(z, _)| z);
        let mut predicted: HashMap<u32, f64> = HashMap::new();
        for (z, mass) in sources {
            for &(y, lr) in self.lc.left_corner.log_row(NonterminalId(z)) {
                log_add_assign(predicted.entry(y).or_insert(LOG_ZERO), mass + lr);
            }
        }
        let mut predicted: Vec<(u32, f64)> = predicted.into_iter().collect();
        predicted.sort_unstable_by_key(|&(y, _)| y);
        for (y, mass) in predicted {
            for &r in self.grammar.rules_for(NonterminalId(y)) {
                let lp = self.log_probs[r];
                set.add(r as u32, 0, k, mass + lp, lp);
            }
        }
    }

    fn finish(&self, set: &mut StateSet) {
        set.waiting_nt.clear();
        set.waiting_t.clear();
        for (i, s) in set.states.iter().enumerate() {
            match self.rhs[s.rule as usize].get(s.dot as usize) {
                Some(Symbol::Nonterminal(z)) => set.waiting_nt.entry(z.0).or_default().push(i as u32),
                Some(Symbol::Terminal(t)) => set.waiting_t.entry(t.0).or_default().push(i as u32),
                None => {}
            }
        }
        let top = self.top_rule();
        set.complete_log_prob = set
            .index
            .get(&(top, 1, 0))
            .map(|&i| set.states[i as usize].inner)
            .unwrap_or(LOG_ZERO);
    }

    fn is_completer(&self, s: &State) -> bool {
        s.dot as usize == self.rhs[s.rule as usize].len() && !self.unit_rule[s.rule as usize]
    }

    /// Builds state set `k` from the earlier sets and token `k`.
    fn advance(&self, sets: &[StateSet], token: TerminalId) -> StateSet {
        let k = sets.len() as u32;
        let prev = &sets[k as usize - 1];
        let mut set = StateSet::default();
        let mut scanned = Vec::new();
        if let Some(waiting) = prev.waiting_t.get(&token.0) {
            for &i in waiting {
                let s = prev.states[i as usize];
                set.add(s.rule, s.dot + 1, s.origin, s.forward, s.inner);
                scanned.push(s.forward);
            }
        }
        set.prefix_log_prob = log_sum_exp(scanned.iter().copied());
        if set.states.is_empty() {
            set.complete_log_prob = LOG_ZERO;
            return set;
        }

        // Completion: completers grouped by origin, processed from the latest
        // origin down. A completer with origin j only creates non-unit
        // completers with origins < j, so every completer is final when used.
        let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); k as usize];
        for (i, s) in set.states.iter().enumerate() {
            if self.is_completer(s) {
                buckets[s.origin as usize].push(i as u32);
            }
        }
        for j in (0..k as usize).rev() {
            let mut b = 0;
            while b < buckets[j].len() {
                let c = set.states[buckets[j][b] as usize];
                b += 1;
                let y = self.lhs[c.rule as usize];
                let parent_set = &sets[j];
                for &(z, lu) in self.lc.unit().log_col(NonterminalId(y)) {
                    let Some(parents) = parent_set.waiting_nt.get(&z) else {
                        continue;
                    };
                    for &p in parents {
                        let p = parent_set.states[p as usize];
                        let (idx, new) = set.add(
                            p.rule,
                            p.dot + 1,
                            p.origin,
                            p.forward + lu + c.inner,
                            p.inner + lu + c.inner,
                        );
                        if new && self.is_completer(&set.states[idx as usize]) {
                            debug_assert!((p.origin as usize) < j);
                            buckets[p.origin as usize].push(idx);
                        }
                    }
                }
            }
        }
        self.predict(&mut set, k);
        self.finish(&mut set);
        set
    }

    fn score_sentence(
        &self,
        sentence_id: usize,
        sentence: &[String],
        vocab: Option<&Vocabulary>,
        score_eos: bool,
    ) -> Result<Vec<TokenLogProbRecord>> {
        let mut chart = self.start();
        let mut records = Vec::with_capacity(sentence.len() + 1);
        let mut truncated = false;
        for (i, word) in sentence.iter().enumerate() {
            let position = i + 1;
            if truncated {
                records.push(TokenLogProbRecord::skipped(sentence_id, position, word.as_str()));
                continue;
            }
            let Some(t) = self.grammar.terminal_id(word) else {
                // the chart cannot be conditioned on a non-terminal token
                truncated = true;
                records.push(TokenLogProbRecord::skipped(sentence_id, position, word.as_str()));
                continue;
            };
            let before = chart.last_prefix_log_prob();
            chart.push(t);
            let after = chart.last_prefix_log_prob();
            if after == LOG_ZERO {
                return Err(Error::DeadPrefix(position));
            }
            if vocab.is_some_and(|v| !v.contains(word)) {
                records.push(TokenLogProbRecord::skipped(sentence_id, position, word.as_str()));
            } else {
                records.push(TokenLogProbRecord::scored(
                    sentence_id,
                    position,
                    word.as_str(),
                    (after - before).min(0.0),
                ));
            }
        }
        if score_eos && !truncated {
            let complete = chart.complete_log_prob(chart.len());
            if complete == LOG_ZERO {
                return Err(Error::UnparseableSentence);
            }
            let lp = (complete - chart.last_prefix_log_prob()).min(0.0);
            records.push(TokenLogProbRecord::scored(sentence_id, sentence.len() + 1, EOS_TOKEN, lp));
        }
        Ok(records)
    }

    /// Causal perplexity `exp(-mean ln P(w_i | w_<i))` over the corpus.
    ///
    /// Tokens outside `vocab` are skipped but still extend the prefix when
    /// they are grammar terminals. A token that is not a grammar terminal ends
    /// scoring for the rest of its sentence. With `score_eos`, each fully
    /// consumed sentence also scores its end-of-sentence event.
    pub fn causal_ppl(&self, corpus: &Corpus, vocab: Option<&Vocabulary>, score_eos: bool) -> Result<PerplexityResult> {
        let per_sentence: Vec<Vec<TokenLogProbRecord>> = corpus
            .sentences
            .par_iter()
            .enumerate()
            .map(|(sid, s)| self.score_sentence(sid, s, vocab, score_eos))
            .collect::<Result<_>>()?;
        PerplexityResult::from_records(per_sentence.into_iter().flatten().collect())
    }
}

/// Incremental Earley chart over a growing prefix.
#[derive(Clone)]
pub struct PrefixChart<'p, 'g> {
    parser: &'p PrefixParser<'g>,
    tokens: Vec<TerminalId>,
    sets: Vec<StateSet>,
}

impl PrefixChart<'_, '_> {
    /// Extends the prefix by one token without touching earlier state sets.
    pub fn push(&mut self, token: TerminalId) {
        let set = self.parser.advance(&self.sets, token);
        self.sets.push(set);
        self.tokens.push(token);
    }

    /// Number of tokens consumed.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[TerminalId] {
        &self.tokens
    }

    /// `ln P(w_1..w_i is a prefix)`; `ln 1 = 0` for `i = 0`.
    pub fn prefix_log_prob(&self, i: usize) -> f64 {
        self.sets[i].prefix_log_prob
    }

    /// `ln P(w_1..w_i is a complete sentence)`.
    pub fn complete_log_prob(&self, i: usize) -> f64 {
        self.sets[i].complete_log_prob
    }

    pub fn last_prefix_log_prob(&self) -> f64 {
        self.prefix_log_prob(self.len())
    }

    /// Prefix log-probabilities for lengths `0..=len`.
    pub fn prefix_log_probs(&self) -> Vec<f64> {
        self.sets.iter().map(|s| s.prefix_log_prob).collect()
    }

    /// Number of Earley states in set `i`.
    pub fn num_states(&self, i: usize) -> usize {
        self.sets[i].states.len()
    }

    /// `P(v | prefix)` for every terminal `v`, plus the end-of-sentence event.
    pub fn next_token_distribution(&self) -> Result<TokenDistribution> {
        let set = self.sets.last().expect("chart has an initial set");
        let prefix = set.prefix_log_prob;
        if prefix == LOG_ZERO {
            return Err(Error::DeadPrefix(self.len()));
        }
        let g = self.parser.grammar;
        let mut log_probs = vec![LOG_ZERO; g.num_terminals()];
        for (&t, waiting) in &set.waiting_t {
            log_probs[t as usize] =
                (log_sum_exp(waiting.iter().map(|&i| set.states[i as usize].forward)) - prefix).min(0.0);
        }
        let eos = (set.complete_log_prob - prefix).min(0.0);
        Ok(TokenDistribution::new(self.len(), log_probs, Some(eos)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{ambig, g1, g2, gl};
    use crate::grammar::parse_grammar;

    #[test]
    fn left_corner_closure() {
        let g = gl();
        let lc = LeftCornerMatrices::build(&g).unwrap();
        let s = g.nonterminal_id("S").unwrap();
        let a = g.nonterminal_id("A").unwrap();
        assert!((lc.left_corner().get(s, s) - 1.0 / 0.6).abs() < 1e-10);
        assert!((lc.left_corner().get(s, a) - 1.0).abs() < 1e-10);
        assert!((lc.unit().get(s, a) - 0.6).abs() < 1e-12);

        let g = g1();
        let lc = LeftCornerMatrices::build(&g).unwrap();
        assert!(lc.unit().is_identity());
        let (s, a) = (g.nonterminal_id("S").unwrap(), g.nonterminal_id("A").unwrap());
        assert_eq!(lc.left_corner().get(s, a), 1.0);
        assert_eq!(lc.left_corner().get(s, s), 1.0);
    }

    #[test]
    fn improper_left_recursion() {
        let g = parse_grammar("start: S\nS -> S S 0.6\nS -> 'a' 0.4").unwrap();
        assert!(LeftCornerMatrices::build(&g).is_ok());
        let g = parse_grammar("start: S\nS -> S 'a' 1.0\nS -> 'b' 0.0000001").unwrap();
        assert!(matches!(LeftCornerMatrices::build(&g), Err(Error::ImproperLeftRecursion(_))));
    }

    #[test]
    fn g1_prefixes() {
        let g = g1();
        let lc = LeftCornerMatrices::build(&g).unwrap();
        let p = PrefixParser::new(&g, &lc);
        let c = p.scan_prefix_str(&["a", "b"]).unwrap();
        assert_eq!(c.prefix_log_prob(0), 0.0);
        assert!((c.prefix_log_prob(1) - 0.7f64.ln()).abs() < 1e-12);
        assert_eq!(c.complete_log_prob(1), LOG_ZERO);
        assert!((c.prefix_log_prob(2) - 0.42f64.ln()).abs() < 1e-12);
        assert!((c.complete_log_prob(2) - 0.42f64.ln()).abs() < 1e-12);
        let c = p.scan_prefix_str(&["a", "a"]).unwrap();
        assert!((c.prefix_log_prob(2) - 0.28f64.ln()).abs() < 1e-12);
        assert!((c.complete_log_prob(2) - 0.28f64.ln()).abs() < 1e-12);
        let c = p.scan_prefix_str(&["a", "a", "a"]).unwrap();
        assert_eq!(c.prefix_log_prob(3), LOG_ZERO);
        assert!(matches!(c.next_token_distribution(), Err(Error::DeadPrefix(3))));
    }

    #[test]
    fn g2_prefixes() {
        let g = g2();
        let lc = LeftCornerMatrices::build(&g).unwrap();
        let p = PrefixParser::new(&g, &lc);
        let c = p.scan_prefix_str(&["a", "a", "a"]).unwrap();
        for i in 1..=3 {
            assert!((c.prefix_log_prob(i) - 0.5f64.powi(i as i32 - 1).ln()).abs() < 1e-12);
            assert!((c.complete_log_prob(i) - 0.5f64.powi(i as i32).ln()).abs() < 1e-12);
        }
        let d = c.next_token_distribution().unwrap();
        let a = g.terminal_id("a").unwrap();
        assert!((d.prob(a) - 0.5).abs() < 1e-12);
        assert!((d.eos_log_prob().unwrap().exp() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn g1_next_token() {
        let g = g1();
        let lc = LeftCornerMatrices::build(&g).unwrap();
        let p = PrefixParser::new(&g, &lc);
        let a = g.terminal_id("a").unwrap();
        let b = g.terminal_id("b").unwrap();
        let d = p.next_token_distribution(&[a]).unwrap();
        assert!((d.prob(a) - 0.4).abs() < 1e-12);
        assert!((d.prob(b) - 0.6).abs() < 1e-12);
        assert_eq!(d.eos_log_prob(), Some(LOG_ZERO));
        let d = p.next_token_distribution(&[a, b]).unwrap();
        assert_eq!(d.eos_log_prob(), Some(0.0));
        assert_eq!(d.prob(a), 0.0);
    }

    #[test]
    fn left_recursive_prefixes() {
        // GL generates a^n with P(a^n) = 0.6 * 0.4^(n-1); every prefix a^k has
        // probability 0.4^(k-1).
        let g = gl();
        let lc = LeftCornerMatrices::build(&g).unwrap();
        let p = PrefixParser::new(&g, &lc);
        let c = p.scan_prefix_str(&["a"; 4]).unwrap();
        for k in 1..=4 {
            assert!((c.prefix_log_prob(k) - 0.4f64.powi(k as i32 - 1).ln()).abs() < 1e-10, "k={k}");
            assert!((c.complete_log_prob(k) - (0.6 * 0.4f64.powi(k as i32 - 1)).ln()).abs() < 1e-10);
        }
        let d = c.next_token_distribution().unwrap();
        assert!((d.total_log_mass()).abs() < 1e-10);
    }

    #[test]
    fn agrees_with_inside() {
        let g = ambig();
        let lc = LeftCornerMatrices::build(&g).unwrap();
        let p = PrefixParser::new(&g, &lc);
        let closure = UnaryClosure::build(&g).unwrap();
        let io = crate::inside_outside::InsideOutside::new(&g, &closure).unwrap();
        let words: Vec<&str> = "john saw mary with telescope in park".split(' ').collect();
        let c = p.scan_prefix_str(&words).unwrap();
        let inside = io.inside_str(&words).unwrap().sentence_log_prob();
        assert!((c.complete_log_prob(words.len()) - inside).abs() < 1e-10);
        for i in 0..=words.len() {
            let d = p.scan_prefix_str(&words[..i]).unwrap().next_token_distribution().unwrap();
            assert!(d.total_log_mass().abs() < 1e-10);
        }
    }

    #[test]
    fn causal_ppl_g1() {
        let g = g1();
        let lc = LeftCornerMatrices::build(&g).unwrap();
        let p = PrefixParser::new(&g, &lc);
        let res = p.causal_ppl(&Corpus::from_text("a b"), None, false).unwrap();
        assert_eq!(res.n_scored, 2);
        assert!((res.records[0].logprob.unwrap() - 0.7f64.ln()).abs() < 1e-12);
        assert!((res.records[1].logprob.unwrap() - 0.6f64.ln()).abs() < 1e-12);
        assert!((res.ppl - 1.543).abs() < 1e-3);

        let with_eos = p.causal_ppl(&Corpus::from_text("a b"), None, true).unwrap();
        assert_eq!(with_eos.n_scored, 3);
        assert_eq!(with_eos.records[2].token, EOS_TOKEN);
        assert_eq!(with_eos.records[2].logprob, Some(0.0));
    }

    #[test]
    fn causal_skips() {
        let g = g1();
        let lc = LeftCornerMatrices::build(&g).unwrap();
        let p = PrefixParser::new(&g, &lc);
        let vocab = crate::sampler::build_vocab(&Corpus::from_text("b b"), 1).unwrap();
        let res = p.causal_ppl(&Corpus::from_text("a b"), Some(&vocab), false).unwrap();
        assert!(res.records[0].is_skipped());
        assert_eq!(res.n_scored, 1);
        assert!((res.log_likelihood - 0.6f64.ln()).abs() < 1e-12);

        let res = p.causal_ppl(&Corpus::from_text("a zz b\nb a"), None, false).unwrap();
        assert_eq!(res.n_scored, 3);
        assert!(res.records[1].is_skipped() && res.records[2].is_skipped());

        assert!(matches!(p.causal_ppl(&Corpus::from_text("a b a"), None, false), Err(Error::DeadPrefix(3))));
        assert!(matches!(p.causal_ppl(&Corpus::from_text("zz"), None, false), Err(Error::NoScoredTokens)));
    }

    #[test]
    fn deterministic_chain_has_unit_ppl() {
        let g = parse_grammar("start: S\nS -> 'a' B 1.0\nB -> 'b' 1.0").unwrap();
        let lc = LeftCornerMatrices::build(&g).unwrap();
        let p = PrefixParser::new(&g, &lc);
        let res = p.causal_ppl(&Corpus::from_text("a b\na b"), None, true).unwrap();
        assert_eq!(res.ppl, 1.0);
    }
}
