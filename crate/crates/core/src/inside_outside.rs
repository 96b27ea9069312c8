//! Inside/outside charts and masked-token quantities.
//!
//! Spans are 0-based and inclusive: `(start, end)` covers tokens
//! `start..=end`. Each cell stores two layers per quantity:
//!
//! * the *lexical* layer holds values for nodes built directly by a lexical or
//!   binary rule, before any unary rewrite;
//! * the *full* layer applies the unary closure on top, so `beta` is the usual
//!   inside probability `P(w[start..=end] | N)` summed over unary chains.
//!
//! The outside layers mirror this: `alpha` is the outside score of the topmost
//! node of a unary chain, `alpha_lexical` the outside score of the bottom node.
//! For width-one spans both pairings satisfy
//! `Σ_j alpha_j·beta_j = Σ_j alpha_lexical_j·beta_lexical_j = P(w)`.
//!
//! The masked distribution at position `i` marginalizes over the preterminal
//! that emits the token: `P(w_i = v | context) ∝ Σ_j alpha_lexical_j(i,i) ·
//! P(j -> v)`. Outside scores of spans containing `i` never depend on the
//! token at `i`, so the result is a function of the context alone.

use rayon::prelude::*;

use crate::corpus::Corpus;
use crate::distribution::TokenDistribution;
use crate::error::{Error, Result};
use crate::grammar::{Grammar, NonterminalId, RuleShape, TerminalId, UnaryClosure};
use crate::logspace::{log_add_assign, log_sum_exp, LOG_ZERO};
use crate::records::TokenLogProbRecord;
use crate::sampler::Vocabulary;

type Cell = Vec<(u32, f64)>;

fn lookup(cell: &Cell, nt: u32) -> Option<f64> {
    cell.binary_search_by_key(&nt, |&(k, _)| k).ok().map(|i| cell[i].1)
}

/// Inside and (optionally) outside log-probabilities for one sentence.
#[derive(Clone, Debug)]
pub struct Chart {
    tokens: Vec<TerminalId>,
    beta_lexical: Vec<Cell>,
    beta: Vec<Cell>,
    alpha: Option<Vec<Cell>>,
    alpha_lexical: Option<Vec<Cell>>,
    start: NonterminalId,
}

impl Chart {
    fn idx(&self, start: usize, end: usize) -> usize {
        let n = self.tokens.len();
        assert!(start <= end && end < n, "span ({start}, {end}) outside sentence of length {n}");
        start * n + end
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[TerminalId] {
        &self.tokens
    }

    pub fn has_outside(&self) -> bool {
        self.alpha.is_some()
    }

    /// Inside log-probability `ln β_nt(start, end)`; `-inf` when absent.
    pub fn beta(&self, nt: NonterminalId, start: usize, end: usize) -> f64 {
        lookup(&self.beta[self.idx(start, end)], nt.0).unwrap_or(LOG_ZERO)
    }

    pub fn beta_lexical(&self, nt: NonterminalId, start: usize, end: usize) -> f64 {
        lookup(&self.beta_lexical[self.idx(start, end)], nt.0).unwrap_or(LOG_ZERO)
    }

    /// Outside log-probability `ln α_nt(start, end)`. Panics if the outside
    /// pass has not been run.
    pub fn alpha(&self, nt: NonterminalId, start: usize, end: usize) -> f64 {
        let alpha = self.alpha.as_ref().expect("outside pass not run");
        lookup(&alpha[self.idx(start, end)], nt.0).unwrap_or(LOG_ZERO)
    }

    pub fn alpha_lexical(&self, nt: NonterminalId, start: usize, end: usize) -> f64 {
        let alpha = self.alpha_lexical.as_ref().expect("outside pass not run");
        lookup(&alpha[self.idx(start, end)], nt.0).unwrap_or(LOG_ZERO)
    }

    /// Nonzero inside entries of a span.
    pub fn beta_cell(&self, start: usize, end: usize) -> &[(u32, f64)] {
        &self.beta[self.idx(start, end)]
    }

    pub fn alpha_cell(&self, start: usize, end: usize) -> &[(u32, f64)] {
        let alpha = self.alpha.as_ref().expect("outside pass not run");
        &alpha[self.idx(start, end)]
    }

    pub fn alpha_lexical_cell(&self, start: usize, end: usize) -> &[(u32, f64)] {
        let alpha = self.alpha_lexical.as_ref().expect("outside pass not run");
        &alpha[self.idx(start, end)]
    }

    /// `ln P(w)`, the inside score of the start symbol over the sentence.
    pub fn sentence_log_prob(&self) -> f64 {
        if self.tokens.is_empty() {
            return LOG_ZERO;
        }
        self.beta(self.start, 0, self.tokens.len() - 1)
    }

    /// `ln Σ_j α_j(i,i)·β_j(i,i)`; equals `ln P(w)` at every position.
    pub fn position_log_mass(&self, i: usize) -> f64 {
        let alpha = self.alpha_cell(i, i);
        let beta = &self.beta[self.idx(i, i)];
        log_sum_exp(alpha.iter().filter_map(|&(j, a)| lookup(beta, j).map(|b| a + b)))
    }

    /// Same identity evaluated on the lexical layer.
    pub fn position_log_mass_lexical(&self, i: usize) -> f64 {
        let alpha = self.alpha_lexical_cell(i, i);
        let beta = &self.beta_lexical[self.idx(i, i)];
        log_sum_exp(alpha.iter().filter_map(|&(j, a)| lookup(beta, j).map(|b| a + b)))
    }
}

/// Dense accumulator that hands out sorted sparse cells.
struct Scratch {
    values: Vec<f64>,
    touched: Vec<u32>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            values: vec![LOG_ZERO; n],
            touched: Vec::new(),
        }
    }

    #[inline]
    fn add(&mut self, nt: u32, value: f64) {
        let slot = &mut self.values[nt as usize];
        if *slot == LOG_ZERO {
            if value == LOG_ZERO {
                return;
            }
            self.touched.push(nt);
            *slot = value;
        } else {
            log_add_assign(slot, value);
        }
    }

    fn take(&mut self) -> Cell {
        self.touched.sort_unstable();
        let cell = self
            .touched
            .iter()
            .map(|&k| (k, self.values[k as usize]))
            .collect();
        for &k in &self.touched {
            self.values[k as usize] = LOG_ZERO;
        }
        self.touched.clear();
        cell
    }
}

/// Inside-outside engine over a binarized grammar.
pub struct InsideOutside<'g> {
    grammar: &'g Grammar,
    closure: &'g UnaryClosure,
    closure_is_identity: bool,
    /// left child → (parent, right child, ln p)
    binary_by_left: Vec<Vec<(u32, u32, f64)>>,
    /// parent → (left child, right child, ln p)
    binary_by_parent: Vec<Vec<(u32, u32, f64)>>,
    /// preterminal → (terminal, ln p)
    lexical_by_lhs: Vec<Vec<(TerminalId, f64)>>,
    /// terminal → (preterminal, ln p)
    lexical_by_terminal: Vec<Vec<(u32, f64)>>,
}

impl<'g> InsideOutside<'g> {
    /// Fails with [`Error::NotBinarized`] unless every rule is lexical, unary,
    /// or binary over nonterminals.
    pub fn new(grammar: &'g Grammar, closure: &'g UnaryClosure) -> Result<Self> {
        grammar.require_binarized()?;
        assert_eq!(closure.matrix().dim(), grammar.num_nonterminals(), "closure built for another grammar");
        let n = grammar.num_nonterminals();
        let mut binary_by_left = vec![Vec::new(); n];
        let mut binary_by_parent = vec![Vec::new(); n];
        let mut lexical_by_lhs = vec![Vec::new(); n];
        let mut lexical_by_terminal = vec![Vec::new(); grammar.num_terminals()];
        for rule in grammar.rules() {
            match rule.shape() {
                RuleShape::Binary(l, r) => {
                    binary_by_left[l.index()].push((rule.lhs.0, r.0, rule.log_prob));
                    binary_by_parent[rule.lhs.index()].push((l.0, r.0, rule.log_prob));
                }
                RuleShape::Lexical(t) => {
                    lexical_by_lhs[rule.lhs.index()].push((t, rule.log_prob));
                    lexical_by_terminal[t.index()].push((rule.lhs.0, rule.log_prob));
                }
                RuleShape::Unary(_) | RuleShape::Other => {}
            }
        }
        Ok(InsideOutside {
            grammar,
            closure,
            closure_is_identity: closure.matrix().is_identity(),
            binary_by_left,
            binary_by_parent,
            lexical_by_lhs,
            lexical_by_terminal,
        })
    }

    pub fn grammar(&self) -> &'g Grammar {
        self.grammar
    }

    fn close_up(&self, pre: &Cell, scratch: &mut Scratch) -> Cell {
        if self.closure_is_identity {
            return pre.clone();
        }
        for &(b, v) in pre {
            for &(a, lc) in self.closure.matrix().log_col(NonterminalId(b)) {
                scratch.add(a, v + lc);
            }
        }
        scratch.take()
    }

    fn close_down(&self, post: &Cell, scratch: &mut Scratch) -> Cell {
        if self.closure_is_identity {
            return post.clone();
        }
        for &(k, v) in post {
            for &(j, lc) in self.closure.matrix().log_row(NonterminalId(k)) {
                scratch.add(j, v + lc);
            }
        }
        scratch.take()
    }

    /// Inside pass that does not insist on the sentence being parseable.
    pub fn inside_chart(&self, tokens: &[TerminalId]) -> Chart {
        let n = tokens.len();
        let mut scratch = Scratch::new(self.grammar.num_nonterminals());
        let mut beta_lexical = vec![Vec::new(); n * n];
        let mut beta = vec![Vec::new(); n * n];
        for (i, &t) in tokens.iter().enumerate() {
            for &(lhs, lp) in &self.lexical_by_terminal[t.index()] {
                scratch.add(lhs, lp);
            }
            let pre = scratch.take();
            beta[i * n + i] = self.close_up(&pre, &mut scratch);
            beta_lexical[i * n + i] = pre;
        }
        for width in 2..=n {
            for start in 0..=n - width {
                let end = start + width - 1;
                for mid in start..end {
                    let left = &beta[start * n + mid];
                    let right = &beta[(mid + 1) * n + end];
                    if left.is_empty() || right.is_empty() {
                        continue;
                    }
                    for &(b, lb) in left {
                        for &(a, c, lp) in &self.binary_by_left[b as usize] {
                            if let Some(rc) = lookup(right, c) {
                                scratch.add(a, lb + rc + lp);
                            }
                        }
                    }
                }
                let pre = scratch.take();
                beta[start * n + end] = self.close_up(&pre, &mut scratch);
                beta_lexical[start * n + end] = pre;
            }
        }
        Chart {
            tokens: tokens.to_vec(),
            beta_lexical,
            beta,
            alpha: None,
            alpha_lexical: None,
            start: self.grammar.start(),
        }
    }

    /// Inside pass. Errors when the start symbol cannot derive the sentence.
    pub fn inside(&self, tokens: &[TerminalId]) -> Result<Chart> {
        let chart = self.inside_chart(tokens);
        if chart.sentence_log_prob() == LOG_ZERO {
            return Err(Error::UnparseableSentence);
        }
        Ok(chart)
    }

    /// Like [`inside`](Self::inside) but takes surface tokens.
    pub fn inside_str<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Chart> {
        self.inside(&self.grammar.encode(tokens)?)
    }

    /// Outside pass, top-down from `α_start(0, n-1) = ln 1`.
    ///
    /// Outside scores are propagated regardless of whether the parent span
    /// has inside mass, so spans containing a position hold scores that only
    /// depend on the tokens outside them.
    pub fn outside(&self, chart: &mut Chart) {
        let n = chart.tokens.len();
        let mut alpha: Vec<Cell> = vec![Vec::new(); n * n];
        let mut alpha_lexical: Vec<Cell> = vec![Vec::new(); n * n];
        if n == 0 {
            chart.alpha = Some(alpha);
            chart.alpha_lexical = Some(alpha_lexical);
            return;
        }
        let mut scratch = Scratch::new(self.grammar.num_nonterminals());
        let beta = &chart.beta;
        for width in (1..=n).rev() {
            for start in 0..=n - width {
                let end = start + width - 1;
                let post = if width == n {
                    vec![(self.grammar.start().0, 0.0)]
                } else {
                    // parent (start, r) with right sibling (end+1, r)
                    for r in end + 1..n {
                        let sibling = &beta[(end + 1) * n + r];
                        if sibling.is_empty() {
                            continue;
                        }
                        for &(a, oa) in &alpha_lexical[start * n + r] {
                            for &(b, c, lp) in &self.binary_by_parent[a as usize] {
                                if let Some(bc) = lookup(sibling, c) {
                                    scratch.add(b, oa + lp + bc);
                                }
                            }
                        }
                    }
                    // parent (l, end) with left sibling (l, start-1)
                    for l in 0..start {
                        let sibling = &beta[l * n + start - 1];
                        if sibling.is_empty() {
                            continue;
                        }
                        for &(a, oa) in &alpha_lexical[l * n + end] {
                            for &(c, b, lp) in &self.binary_by_parent[a as usize] {
                                if let Some(bc) = lookup(sibling, c) {
                                    scratch.add(b, oa + lp + bc);
                                }
                            }
                        }
                    }
                    scratch.take()
                };
                alpha_lexical[start * n + end] = self.close_down(&post, &mut scratch);
                alpha[start * n + end] = post;
            }
        }
        chart.alpha = Some(alpha);
        chart.alpha_lexical = Some(alpha_lexical);
    }

    /// Inside followed by outside.
    pub fn inside_outside(&self, tokens: &[TerminalId]) -> Result<Chart> {
        let mut chart = self.inside(tokens)?;
        self.outside(&mut chart);
        Ok(chart)
    }

    fn distribution_from_chart(&self, chart: &Chart, i: usize) -> Result<TokenDistribution> {
        let mut acc = vec![LOG_ZERO; self.grammar.num_terminals()];
        for &(j, a) in chart.alpha_lexical_cell(i, i) {
            for &(t, lp) in &self.lexical_by_lhs[j as usize] {
                log_add_assign(&mut acc[t.index()], a + lp);
            }
        }
        let norm = log_sum_exp(acc.iter().copied());
        if norm == LOG_ZERO {
            return Err(Error::ContextUnparseable(i));
        }
        for v in acc.iter_mut() {
            if *v != LOG_ZERO {
                *v = (*v - norm).min(0.0);
            }
        }
        Ok(TokenDistribution::new(i, acc, None))
    }

    /// `P(w_i = v | w without position i)` for every terminal `v`
    /// (0-based `i`). The token currently at `i` is ignored.
    pub fn masked_distribution(&self, tokens: &[TerminalId], i: usize) -> Result<TokenDistribution> {
        if i >= tokens.len() {
            return Err(Error::PositionOutOfRange {
                position: i,
                len: tokens.len(),
            });
        }
        let mut chart = self.inside_chart(tokens);
        self.outside(&mut chart);
        self.distribution_from_chart(&chart, i)
    }

    /// Masked distributions for every position, sharing one chart.
    pub fn masked_distributions(&self, tokens: &[TerminalId]) -> Result<Vec<TokenDistribution>> {
        let mut chart = self.inside_chart(tokens);
        self.outside(&mut chart);
        (0..tokens.len())
            .map(|i| self.distribution_from_chart(&chart, i))
            .collect()
    }

    fn score_sentence(
        &self,
        sentence_id: usize,
        sentence: &[String],
        vocab: Option<&Vocabulary>,
    ) -> Result<Vec<TokenLogProbRecord>> {
        let tokens = self.grammar.encode(sentence)?;
        let mut chart = self.inside_chart(&tokens);
        self.outside(&mut chart);
        let mut records = Vec::with_capacity(tokens.len());
        for (i, word) in sentence.iter().enumerate() {
            if vocab.is_some_and(|v| !v.contains(word)) {
                records.push(TokenLogProbRecord::skipped(sentence_id, i + 1, word.as_str()));
                continue;
            }
            let dist = self.distribution_from_chart(&chart, i)?;
            let lp = dist.log_prob(tokens[i]);
            if lp == LOG_ZERO {
                return Err(Error::UnparseableSentence);
            }
            records.push(TokenLogProbRecord::scored(sentence_id, i + 1, word.as_str(), lp));
        }
        Ok(records)
    }

    /// Pseudo-perplexity `exp(-Σ ln P(w_i | w_∖i) / #scored)` over the corpus.
    /// Tokens outside `vocab` are skipped; they still condition the other
    /// positions of their sentence.
    pub fn pseudo_ppl(&self, corpus: &Corpus, vocab: Option<&Vocabulary>) -> Result<PerplexityResult> {
        let per_sentence: Vec<Vec<TokenLogProbRecord>> = corpus
            .sentences
            .par_iter()
            .enumerate()
            .map(|(sid, s)| self.score_sentence(sid, s, vocab))
            .collect::<Result<_>>()?;
        PerplexityResult::from_records(per_sentence.into_iter().flatten().collect())
    }
}

/// Corpus-level perplexity and the per-token records behind it.
#[derive(Clone, Debug)]
pub struct PerplexityResult {
    pub ppl: f64,
    pub log_likelihood: f64,
    pub n_scored: usize,
    pub records: Vec<TokenLogProbRecord>,
}

impl PerplexityResult {
    pub(crate) fn from_records(records: Vec<TokenLogProbRecord>) -> Result<Self> {
        let mut total = 0.0;
        let mut n = 0usize;
        for lp in records.iter().filter_map(|r| r.logprob) {
            total += lp;
            n += 1;
        }
        if n == 0 {
            return Err(Error::NoScoredTokens);
        }
        Ok(PerplexityResult {
            ppl: (-total / n as f64).exp(),
            log_likelihood: total,
            n_scored: n,
            records,
        })
    }
}
