use std::collections::HashMap;

use super::{binarize, Grammar, GrammarBuilder, SymbolName};
use crate::error::{Error, Result};
use crate::tree::TreeNode;

/// Relative-frequency PCFG: `P(lhs -> rhs) = count(lhs -> rhs) / count(lhs)`.
///
/// All roots must share one label, which becomes the start symbol. Rules are
/// emitted in order of first occurrence.
pub fn induce_from_treebank(trees: &[TreeNode], binarize_output: bool) -> Result<Grammar> {
    let root = match trees.first() {
        Some(t) => t.label.clone(),
        None => return Err(Error::EmptyTreebank),
    };
    let mut order: Vec<(String, Vec<SymbolName>)> = Vec::new();
    let mut counts: HashMap<(String, Vec<SymbolName>), u64> = HashMap::new();
    let mut lhs_totals: HashMap<String, u64> = HashMap::new();

    for (i, tree) in trees.iter().enumerate() {
        if tree.label != root {
            return Err(Error::Treebank {
                line: i + 1,
                msg: format!("root label `{}` differs from `{root}`", tree.label),
            });
        }
        if tree.is_leaf() {
            return Err(Error::Treebank {
                line: i + 1,
                msg: "tree is a bare token".into(),
            });
        }
        let mut stack = vec![tree];
        while let Some(node) = stack.pop() {
            if node.is_leaf() {
                continue;
            }
            if !super::parse::is_valid_nonterminal(&node.label) {
                return Err(Error::Treebank {
                    line: i + 1,
                    msg: format!("invalid label `{}`", node.label),
                });
            }
            let rhs: Vec<SymbolName> = node
                .children
                .iter()
                .map(|c| {
                    if c.is_leaf() {
                        SymbolName::Terminal(c.label.clone())
                    } else {
                        SymbolName::Nonterminal(c.label.clone())
                    }
                })
                .collect();
            let key = (node.label.clone(), rhs);
            let count = counts.entry(key.clone()).or_insert(0);
            if *count == 0 {
                order.push(key);
            }
            *count += 1;
            *lhs_totals.entry(node.label.clone()).or_insert(0) += 1;
            // push in reverse so rules are discovered left to right
            stack.extend(node.children.iter().rev());
        }
    }

    let mut builder = GrammarBuilder::new(root);
    for (i, key) in order.iter().enumerate() {
        let prob = counts[key] as f64 / lhs_totals[&key.0] as f64;
        builder.add_rule(&key.0, key.1.clone(), prob, i + 1)?;
    }
    let g = builder.build()?;
    Ok(if binarize_output { binarize(&g) } else { g })
}
