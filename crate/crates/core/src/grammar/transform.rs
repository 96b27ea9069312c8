use std::collections::{HashMap, HashSet};

use super::parse::is_valid_nonterminal;
use super::{Grammar, GrammarBuilder, Symbol, SymbolName};
use crate::error::{Error, Result};

/// Rewrites the grammar so that every rule is lexical, unary, or binary over
/// nonterminals, leaving string probabilities unchanged.
///
/// An n-ary rule `L -> X1 … Xn (p)` becomes the chain
/// `L -> X1 @L_1 (p)`, `@L_1 -> X2 @L_2 (1)`, …, `@L_{n-2} -> X{n-1} Xn (1)`.
/// Terminals inside multi-symbol right-hand sides are lifted into dedicated
/// preterminals `@T_<token> -> '<token>' (1)`.
pub fn binarize(g: &Grammar) -> Grammar {
    let mut names: HashSet<String> = g.nonterminals().names().iter().cloned().collect();
    let mut counters: HashMap<String, usize> = HashMap::new();
    let mut preterminals: HashMap<String, String> = HashMap::new();
    let mut lifted: Vec<(String, String)> = Vec::new();
    let mut out: Vec<(String, Vec<SymbolName>, f64)> = Vec::new();

    for rule in g.rules() {
        let lhs = g.nonterminal_name(rule.lhs).to_string();
        let mut rhs: Vec<SymbolName> = rule.rhs.iter().map(|&s| g.symbol_name(s)).collect();
        if rhs.len() >= 2 {
            for sym in rhs.iter_mut() {
                if let SymbolName::Terminal(t) = sym {
                    let pre = preterminals
                        .entry(t.clone())
                        .or_insert_with(|| {
                            let base = if is_valid_nonterminal(&format!("@T_{t}")) {
                                format!("@T_{t}")
                            } else {
                                let id = g.terminal_id(t).expect("terminal of this grammar");
                                format!("@T{}", id.0)
                            };
                            let name = fresh(&base, &mut names);
                            lifted.push((name.clone(), t.clone()));
                            name
                        })
                        .clone();
                    *sym = SymbolName::Nonterminal(pre);
                }
            }
        }
        if rhs.len() <= 2 {
            out.push((lhs, rhs, rule.prob));
            continue;
        }
        let n = rhs.len();
        let mut chain = Vec::with_capacity(n - 2);
        for _ in 0..n - 2 {
            let counter = counters.entry(lhs.clone()).or_insert(0);
            loop {
                *counter += 1;
                let candidate = format!("@{lhs}_{counter}");
                if names.insert(candidate.clone()) {
                    chain.push(candidate);
                    break;
                }
            }
        }
        out.push((
            lhs.clone(),
            vec![rhs[0].clone(), SymbolName::Nonterminal(chain[0].clone())],
            rule.prob,
        ));
        for k in 0..n - 2 {
            let tail = if k + 1 < n - 2 {
                SymbolName::Nonterminal(chain[k + 1].clone())
            } else {
                rhs[n - 1].clone()
            };
            out.push((chain[k].clone(), vec![rhs[k + 1].clone(), tail], 1.0));
        }
    }
    for (pre, t) in lifted {
        out.push((pre, vec![SymbolName::Terminal(t)], 1.0));
    }

    let mut builder = GrammarBuilder::new(g.nonterminal_name(g.start()));
    for (i, (lhs, rhs, p)) in out.into_iter().enumerate() {
        builder
            .add_rule(&lhs, rhs, p, i + 1)
            .expect("binarization introduces only fresh symbols");
    }
    builder.build().expect("start symbol preserved")
}

fn fresh(base: &str, names: &mut HashSet<String>) -> String {
    let mut name = base.to_string();
    while names.contains(&name) {
        name.push('_');
    }
    names.insert(name.clone());
    name
}

/// Drops rules with probability below `threshold`, removes symbols that are
/// left non-productive or unreachable, and renormalizes every left-hand side
/// that lost rules.
pub fn prune_rules(g: &Grammar, threshold: f64) -> Result<Grammar> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidThreshold(threshold));
    }
    let n = g.num_nonterminals();
    let mut keep: Vec<bool> = g.rules().iter().map(|r| r.prob >= threshold).collect();

    // Drop rules that mention non-productive nonterminals until stable.
    loop {
        let mut productive = vec![false; n];
        loop {
            let mut changed = false;
            for (id, rule) in g.rules().iter().enumerate() {
                if !keep[id] || productive[rule.lhs.index()] {
                    continue;
                }
                if rule.rhs.iter().all(|s| match s {
                    Symbol::Terminal(_) => true,
                    Symbol::Nonterminal(x) => productive[x.index()],
                }) {
                    productive[rule.lhs.index()] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if !productive[g.start().index()] {
            return Err(Error::StartNonProductive(g.nonterminal_name(g.start()).to_string()));
        }
        let mut changed = false;
        for (id, rule) in g.rules().iter().enumerate() {
            if keep[id]
                && rule.rhs.iter().any(|s| matches!(s, Symbol::Nonterminal(x) if !productive[x.index()]))
            {
                keep[id] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut reachable = vec![false; n];
    reachable[g.start().index()] = true;
    let mut stack = vec![g.start()];
    while let Some(x) = stack.pop() {
        for &id in g.rules_for(x) {
            if !keep[id] {
                continue;
            }
            for s in &g.rule(id).rhs {
                if let Symbol::Nonterminal(y) = *s {
                    if !reachable[y.index()] {
                        reachable[y.index()] = true;
                        stack.push(y);
                    }
                }
            }
        }
    }

    let mut kept_mass = vec![0.0f64; n];
    let mut lost = vec![false; n];
    for (id, rule) in g.rules().iter().enumerate() {
        if keep[id] && reachable[rule.lhs.index()] {
            kept_mass[rule.lhs.index()] += rule.prob;
        } else {
            lost[rule.lhs.index()] = true;
        }
    }

    let mut builder = GrammarBuilder::new(g.nonterminal_name(g.start()));
    for (id, rule) in g.rules().iter().enumerate() {
        let lhs = rule.lhs.index();
        if !keep[id] || !reachable[lhs] {
            continue;
        }
        let prob = if lost[lhs] {
            (rule.prob / kept_mass[lhs]).min(1.0)
        } else {
            rule.prob
        };
        let rhs = rule.rhs.iter().map(|&s| g.symbol_name(s)).collect();
        builder.add_rule(g.nonterminal_name(rule.lhs), rhs, prob, id + 1)?;
    }
    builder.build()
}
