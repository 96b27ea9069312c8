//! Small grammars shared by unit tests.

use crate::grammar::{parse_grammar, Grammar};

/// Two-token language {aa, ab, ba, bb}.
pub const G1: &str = "start: S\nS -> A B 1.0\nA -> 'a' 0.7\nA -> 'b' 0.3\nB -> 'a' 0.4\nB -> 'b' 0.6";

/// Geometric language a^n with P(a^n) = 2^-n.
pub const G2: &str = "start: S\nS -> 'a' S 0.5\nS -> 'a' 0.5";

/// Left-recursive grammar with a unary rule.
pub const GL: &str = "start: S\nS -> S A 0.4\nS -> A 0.6\nA -> 'a' 1.0";

/// Ambiguous PP-attachment grammar with unary chains.
pub const AMBIG: &str = "start: S
S -> NP VP 1.0
NP -> NP PP 0.2
NP -> 'john' 0.3
NP -> 'mary' 0.2
NP -> N 0.3
N -> 'telescope' 0.5
N -> 'park' 0.5
VP -> V NP 0.5
VP -> VP PP 0.3
VP -> 'ran' 0.2
V -> 'saw' 1.0
PP -> P NP 1.0
P -> 'with' 0.6
P -> 'in' 0.4
";

pub fn g1() -> Grammar {
    parse_grammar(G1).unwrap()
}

pub fn g2() -> Grammar {
    parse_grammar(G2).unwrap()
}

pub fn gl() -> Grammar {
    parse_grammar(GL).unwrap()
}

pub fn ambig() -> Grammar {
    parse_grammar(AMBIG).unwrap()
}
