//! Helpers shared by the integration test targets.
#![allow(dead_code)]

pub mod golden;

use std::collections::{BTreeMap, HashMap};

use pcfg_core::grammar::{grammar_from_rules, parse_grammar, Grammar, SymbolName};
use rand::seq::SliceRandom;
use rand::Rng;

pub const DESK_GRAMMAR: &str = include_str!("../data/desk.pcfg");
pub const NARY_GRAMMAR: &str = include_str!("../data/nary.pcfg");

pub fn desk_grammar() -> Grammar {
    parse_grammar(DESK_GRAMMAR).expect("desk grammar parses")
}

pub fn nary_grammar() -> Grammar {
    parse_grammar(NARY_GRAMMAR).expect("n-ary grammar parses")
}

const NT_NAMES: [&str; 5] = ["S", "A", "B", "C", "D"];

fn split_mass<R: Rng>(rng: &mut R, mass: f64, k: usize) -> Vec<f64> {
    let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| mass * w / total).collect()
}

/// Random proper grammar in binary normal form with at most 30 rules.
///
/// Every nonterminal has at least one lexical rule, and the expected number
/// of nonterminal children per expansion stays below 0.85, so derivations
/// terminate with probability one. Unary rules may form cycles.
pub fn random_grammar<R: Rng>(rng: &mut R, vocab: usize) -> Grammar {
    assert!((1..=6).contains(&vocab));
    let k = rng.gen_range(2..=5);
    let nts = &NT_NAMES[..k];
    let terminals: Vec<String> = (0..vocab).map(|i| ((b'a' + i as u8) as char).to_string()).collect();
    let mut rules: Vec<(String, Vec<SymbolName>, f64)> = Vec::new();
    for (x, lhs) in nts.iter().enumerate() {
        let n_lex = rng.gen_range(1..=vocab.min(3));
        let n_bin = if x == 0 { rng.gen_range(1..=2) } else { rng.gen_range(0..=2) };
        let n_un = if k > 1 { rng.gen_range(0..=1) } else { 0 };
        let bin_mass = if n_bin > 0 { rng.gen_range(0.1..0.3) } else { 0.0 };
        let un_mass = if n_un > 0 { rng.gen_range(0.05..0.2) } else { 0.0 };
        let lex_mass = 1.0 - bin_mass - un_mass;

        let mut lex: Vec<&String> = terminals.iter().collect();
        lex.shuffle(rng);
        for (t, p) in lex.iter().take(n_lex).zip(split_mass(rng, lex_mass, n_lex)) {
            rules.push((lhs.to_string(), vec![SymbolName::t(t.as_str())], p));
        }
        let mut pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (0..k).map(move |b| (a, b))).collect();
        pairs.shuffle(rng);
        for (&(l, r), p) in pairs.iter().take(n_bin).zip(split_mass(rng, bin_mass, n_bin)) {
            rules.push((lhs.to_string(), vec![SymbolName::nt(nts[l]), SymbolName::nt(nts[r])], p));
        }
        if n_un > 0 {
            let y = rng.gen_range(0..k);
            rules.push((lhs.to_string(), vec![SymbolName::nt(nts[y])], un_mass));
        }
    }
    // make sure every nonterminal is reachable from S
    let g = grammar_from_rules("S", rules.clone()).expect("generated grammar is well formed");
    if pcfg_core::grammar::validate(&g).unreachable.is_empty() {
        g
    } else {
        random_grammar(rng, vocab)
    }
}

/// Mixes every rule distribution with the uniform distribution over the
/// same left-hand side: `p' = (1 - lambda) p + lambda / k`.
pub fn smoothed(g: &Grammar, lambda: f64) -> Grammar {
    let rules = g.named_rules();
    let mut per_lhs: HashMap<String, usize> = HashMap::new();
    for (lhs, _, _) in &rules {
        *per_lhs.entry(lhs.clone()).or_insert(0) += 1;
    }
    let start = g.nonterminal_name(g.start()).to_string();
    grammar_from_rules(
        &start,
        rules.into_iter().map(|(lhs, rhs, p)| {
            let k = per_lhs[&lhs] as f64;
            (lhs, rhs, (1.0 - lambda) * p + lambda / k)
        }),
    )
    .expect("smoothing keeps the grammar well formed")
}

/// Every string over `vocab` symbols of length `1..=max_len`, as terminal
/// names `a`, `b`, ...
pub fn all_strings(vocab: usize, max_len: usize) -> Vec<Vec<String>> {
    let names: Vec<String> = (0..vocab).map(|i| ((b'a' + i as u8) as char).to_string()).collect();
    let mut out = Vec::new();
    let mut layer: Vec<Vec<String>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &layer {
            for n in &names {
                let mut t = s.clone();
                t.push(n.clone());
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// Length histogram as ordered pairs.
pub fn histogram(lengths: impl Iterator<Item = usize>) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for l in lengths {
        *h.entry(l).or_insert(0) += 1;
    }
    h
}
