use serde::Serialize;

use super::{Grammar, NonterminalId, Symbol};

/// Allowed deviation of a left-hand side's probability mass from 1.
pub const SUM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    /// Probability mass per nonterminal that has rules, in id order.
    pub sums: Vec<LhsSum>,
    pub unreachable: Vec<String>,
    pub nonproductive: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LhsSum {
    pub lhs: String,
    pub sum: f64,
    pub ok: bool,
}

impl ValidationReport {
    pub fn bad_sums(&self) -> impl Iterator<Item = &LhsSum> {
        self.sums.iter().filter(|s| !s.ok)
    }
}

pub fn validate(g: &Grammar) -> ValidationReport {
    let mut sums = Vec::new();
    for id in 0..g.num_nonterminals() {
        let lhs = NonterminalId(id as u32);
        let rules = g.rules_for(lhs);
        if rules.is_empty() {
            continue;
        }
        let sum: f64 = rules.iter().map(|&r| g.rule(r).prob).sum();
        sums.push(LhsSum {
            lhs: g.nonterminal_name(lhs).to_string(),
            sum,
            ok: (sum - 1.0).abs() <= SUM_TOLERANCE,
        });
    }

    let productive = productive_set(g);
    let reachable = reachable_set(g);
    let names = |flags: &[bool]| -> Vec<String> {
        flags
            .iter()
            .enumerate()
            .filter(|(_, &f)| !f)
            .map(|(i, _)| g.nonterminal_name(NonterminalId(i as u32)).to_string())
            .collect()
    };
    let unreachable = names(&reachable);
    let nonproductive = names(&productive);
    let ok = sums.iter().all(|s| s.ok) && unreachable.is_empty() && nonproductive.is_empty();
    ValidationReport {
        ok,
        sums,
        unreachable,
        nonproductive,
    }
}

/// Nonterminals that derive at least one terminal string.
pub(crate) fn productive_set(g: &Grammar) -> Vec<bool> {
    let mut productive = vec![false; g.num_nonterminals()];
    loop {
        let mut changed = false;
        for rule in g.rules() {
            if productive[rule.lhs.index()] {
                continue;
            }
            let all = rule.rhs.iter().all(|s| match s {
                Symbol::Terminal(_) => true,
                Symbol::Nonterminal(n) => productive[n.index()],
            });
            if all {
                productive[rule.lhs.index()] = true;
                changed = true;
            }
        }
        if !changed {
            return productive;
        }
    }
}

pub(crate) fn reachable_set(g: &Grammar) -> Vec<bool> {
    let mut reachable = vec![false; g.num_nonterminals()];
    let mut stack = vec![g.start()];
    reachable[g.start().index()] = true;
    while let Some(nt) = stack.pop() {
        for &r in g.rules_for(nt) {
            for sym in &g.rule(r).rhs {
                if let Symbol::Nonterminal(n) = *sym {
                    if !reachable[n.index()] {
                        reachable[n.index()] = true;
                        stack.push(n);
                    }
                }
            }
        }
    }
    reachable
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{g1, G1};
    use crate::grammar::parse_grammar;

    #[test]
    fn g1_is_valid() {
        let report = validate(&g1());
        assert!(report.ok);
        assert_eq!(report.sums.len(), 3);
        for s in &report.sums {
            assert!((s.sum - 1.0).abs() < 1e-12, "{s:?}");
        }
    }

    #[test]
    fn improper_sum_is_reported() {
        let g = parse_grammar(&G1.replace("A -> 'b' 0.3", "A -> 'b' 0.2")).unwrap();
        let report = validate(&g);
        assert!(!report.ok);
        let bad: Vec<_> = report.bad_sums().collect();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].lhs, "A");
        assert!((bad[0].sum - 0.9).abs() < 1e-12);
    }

    #[test]
    fn orphan_is_unreachable() {
        let g = parse_grammar(&format!("{G1}\nX -> 'a' 1.0")).unwrap();
        let report = validate(&g);
        assert!(!report.ok);
        assert_eq!(report.unreachable, vec!["X".to_string()]);
        assert!(report.nonproductive.is_empty());
    }

    #[test]
    fn nonproductive_symbols() {
        // Y only rewrites to itself; Z never appears on a left-hand side
        let g = parse_grammar("start: S\nS -> 'a' 0.5\nS -> Y Z 0.5\nY -> Y 'a' 1.0").unwrap();
        let report = validate(&g);
        assert!(!report.ok);
        assert_eq!(report.nonproductive, vec!["Y".to_string(), "Z".to_string()]);
    }
}
