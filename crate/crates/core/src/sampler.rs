//! Corpus generation by ancestral sampling, and evaluation vocabularies.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::grammar::{Grammar, Symbol, TerminalId};
use crate::tree::TreeNode;

/// Draw budget per split, as a multiple of the requested split size.
pub const SPLIT_BUDGET_FACTOR: usize = 100;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SplitSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub eval: usize,
}

#[derive(Clone, Debug)]
pub struct SamplerConfig {
    pub min_len: usize,
    pub max_len: usize,
    pub sizes: SplitSizes,
    pub seed: u64,
    /// Maximum number of nonterminal expansions per derivation.
    pub max_expansions: usize,
    pub allow_duplicates_within_split: bool,
}

impl SamplerConfig {
    /// Length window `[min_len, max_len]` with `max_expansions = 10 × max_len`.
    pub fn new(min_len: usize, max_len: usize, sizes: SplitSizes, seed: u64) -> Self {
        SamplerConfig {
            min_len,
            max_len,
            sizes,
            seed,
            max_expansions: 10 * max_len,
            allow_duplicates_within_split: true,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.min_len < 1 || self.min_len > self.max_len {
            return Err(Error::InvalidConfig(format!(
                "length window [{}, {}] must satisfy 1 <= min <= max",
                self.min_len, self.max_len
            )));
        }
        if self.max_expansions < self.max_len {
            return Err(Error::InvalidConfig(format!(
                "max_expansions {} is below max_len {}",
                self.max_expansions, self.max_len
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub tokens: Vec<TerminalId>,
    pub tree: TreeNode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rejection {
    TooShort,
    TooLong,
    ExpansionCap,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SampleOutcome {
    Accepted(Sample),
    Rejected(Rejection),
}

/// Top-down sampler with per-nonterminal cumulative rule tables.
pub struct Sampler<'g> {
    grammar: &'g Grammar,
    tables: Vec<Vec<(f64, usize)>>,
    min_len: usize,
    max_len: usize,
    max_expansions: usize,
}

struct Node {
    sym: Symbol,
    children: Vec<usize>,
}

impl<'g> Sampler<'g> {
    pub fn new(grammar: &'g Grammar, config: &SamplerConfig) -> Self {
        let tables = (0..grammar.num_nonterminals())
            .map(|i| {
                let mut acc = 0.0;
                grammar
                    .rules_for(crate::NonterminalId(i as u32))
                    .iter()
                    .map(|&r| {
                        acc += grammar.rule(r).prob;
                        (acc, r)
                    })
                    .collect()
            })
            .collect();
        Sampler {
            grammar,
            tables,
            min_len: config.min_len,
            max_len: config.max_len,
            max_expansions: config.max_expansions,
        }
    }

    /// Expands the leftmost nonterminal until only terminals remain.
    /// Derivations that leave the length window or exceed the expansion cap
    /// are rejected as soon as that is certain.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SampleOutcome {
        let g = self.grammar;
        let mut nodes = vec![Node {
            sym: Symbol::Nonterminal(g.start()),
            children: Vec::new(),
        }];
        let mut stack = vec![0usize];
        let mut tokens = Vec::new();
        let mut expansions = 0usize;
        while let Some(idx) = stack.pop() {
            match nodes[idx].sym {
                Symbol::Terminal(t) => tokens.push(t),
                Symbol::Nonterminal(nt) => {
                    expansions += 1;
                    if expansions > self.max_expansions {
                        return SampleOutcome::Rejected(Rejection::ExpansionCap);
                    }
                    let table = &self.tables[nt.index()];
                    let total = table.last().map(|e| e.0).unwrap_or(0.0);
                    let u = rng.gen::<f64>() * total;
                    let pick = table.partition_point(|&(c, _)| c <= u).min(table.len() - 1);
                    let rule = g.rule(table[pick].1);
                    let first_child = nodes.len();
                    for &sym in &rule.rhs {
                        nodes.push(Node {
                            sym,
                            children: Vec::new(),
                        });
                    }
                    let children: Vec<usize> = (first_child..nodes.len()).collect();
                    stack.extend(children.iter().rev());
                    nodes[idx].children = children;
                }
            }
            // every pending symbol yields at least one token
            if tokens.len() + stack.len() > self.max_len {
                return SampleOutcome::Rejected(Rejection::TooLong);
            }
        }
        if tokens.len() < self.min_len {
            return SampleOutcome::Rejected(Rejection::TooShort);
        }
        let tree = build_tree(g, &nodes, 0);
        SampleOutcome::Accepted(Sample { tokens, tree })
    }
}

fn build_tree(g: &Grammar, nodes: &[Node], idx: usize) -> TreeNode {
    match nodes[idx].sym {
        Symbol::Terminal(t) => TreeNode::leaf(g.terminal_name(t)),
        Symbol::Nonterminal(n) => TreeNode::node(
            g.nonterminal_name(n),
            nodes[idx].children.iter().map(|&c| build_tree(g, nodes, c)).collect(),
        ),
    }
}

/// Draws one sentence. See [`Sampler::sample`].
pub fn sample_sentence<R: Rng + ?Sized>(g: &Grammar, rng: &mut R, config: &SamplerConfig) -> SampleOutcome {
    Sampler::new(g, config).sample(rng)
}

#[derive(Clone, Debug)]
pub struct CorpusSplits {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
    pub eval: Corpus,
}

impl CorpusSplits {
    pub fn named(&self) -> [(&'static str, &Corpus); 4] {
        [
            ("train", &self.train),
            ("dev", &self.dev),
            ("test", &self.test),
            ("eval", &self.eval),
        ]
    }
}

/// Samples train, dev, test and eval splits in that order from one seeded
/// stream. Surface strings never occur in more than one of train, dev and
/// test; eval excludes train strings only.
pub fn generate_corpus(g: &Grammar, config: &SamplerConfig) -> Result<CorpusSplits> {
    config.check()?;
    let sampler = Sampler::new(g, config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let train = draw_split(&sampler, &mut rng, "train", config.sizes.train, &[], config)?;
    let train_set: HashSet<Vec<TerminalId>> = train.iter().map(|s| s.tokens.clone()).collect();
    let dev = draw_split(&sampler, &mut rng, "dev", config.sizes.dev, &[&train_set], config)?;
    let dev_set: HashSet<Vec<TerminalId>> = dev.iter().map(|s| s.tokens.clone()).collect();
    let test = draw_split(&sampler, &mut rng, "test", config.sizes.test, &[&train_set, &dev_set], config)?;
    let eval = draw_split(&sampler, &mut rng, "eval", config.sizes.eval, &[&train_set], config)?;

    let to_corpus = |samples: Vec<Sample>| {
        let mut sentences = Vec::with_capacity(samples.len());
        let mut trees = Vec::with_capacity(samples.len());
        for s in samples {
            sentences.push(s.tokens.iter().map(|&t| g.terminal_name(t).to_string()).collect());
            trees.push(s.tree);
        }
        Corpus {
            sentences,
            trees: Some(trees),
        }
    };
    Ok(CorpusSplits {
        train: to_corpus(train),
        dev: to_corpus(dev),
        test: to_corpus(test),
        eval: to_corpus(eval),
    })
}

fn draw_split(
    sampler: &Sampler<'_>,
    rng: &mut ChaCha8Rng,
    name: &str,
    size: usize,
    exclude: &[&HashSet<Vec<TerminalId>>],
    config: &SamplerConfig,
) -> Result<Vec<Sample>> {
    let budget = size.saturating_mul(SPLIT_BUDGET_FACTOR);
    let mut out = Vec::with_capacity(size);
    let mut seen: HashSet<Vec<TerminalId>> = HashSet::new();
    let mut draws = 0usize;
    let mut excluded = 0usize;
    while out.len() < size {
        if draws == budget {
            let why = if excluded > 0 {
                format!("{excluded} draws collided with other splits")
            } else {
                format!("length window [{}, {}] too narrow", config.min_len, config.max_len)
            };
            return Err(Error::SplitExhaustion(format!(
                "{name}: {} of {size} sentences after {draws} draws ({why})",
                out.len()
            )));
        }
        draws += 1;
        if let SampleOutcome::Accepted(sample) = sampler.sample(rng) {
            if exclude.iter().any(|set| set.contains(&sample.tokens)) {
                excluded += 1;
                continue;
            }
            if !config.allow_duplicates_within_split && !seen.insert(sample.tokens.clone()) {
                excluded += 1;
                continue;
            }
            out.push(sample);
        }
    }
    Ok(out)
}

/// Marker that replaces out-of-vocabulary tokens.
pub const UNK: &str = "<unk>";

/// Tokens kept for evaluation: those with frequency at least `min_freq` in a
/// reference corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    counts: BTreeMap<String, u64>,
    unk: String,
}

impl Vocabulary {
    pub fn contains(&self, token: &str) -> bool {
        self.counts.contains_key(token)
    }

    /// The token itself when kept, otherwise the unk marker.
    pub fn map<'a>(&'a self, token: &'a str) -> &'a str {
        if self.contains(token) {
            token
        } else {
            &self.unk
        }
    }

    pub fn unk(&self) -> &str {
        &self.unk
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.counts.keys().map(String::as_str)
    }

    /// Fails when the unk marker collides with a grammar terminal.
    pub fn check_against(&self, g: &Grammar) -> Result<()> {
        if g.terminal_id(&self.unk).is_some() {
            return Err(Error::Vocabulary(format!(
                "unk marker `{}` is a grammar terminal",
                self.unk
            )));
        }
        Ok(())
    }

    /// TSV with header `token\tcount`, most frequent first, ties by token.
    pub fn to_tsv(&self) -> String {
        let mut rows: Vec<(&String, &u64)> = self.counts.iter().collect();
        rows.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        let mut out = String::from("token\tcount\n");
        for (t, c) in rows {
            out.push_str(&format!("{t}\t{c}\n"));
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut counts = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() || (i == 0 && line == "token\tcount") {
                continue;
            }
            let bad = |msg: &str| Error::Records {
                file: "vocabulary".into(),
                line: i + 1,
                msg: msg.into(),
            };
            let (tok, count) = line.split_once('\t').ok_or_else(|| bad("expected `token<TAB>count`"))?;
            let count: u64 = count.parse().map_err(|_| bad("count is not an integer"))?;
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(bad("invalid token"));
            }
            if counts.insert(tok.to_string(), count).is_some() {
                return Err(bad("duplicate token"));
            }
        }
        Ok(Vocabulary {
            counts,
            unk: UNK.to_string(),
        })
    }
}

pub fn build_vocab(corpus: &Corpus, min_freq: u64) -> Result<Vocabulary> {
    if min_freq < 1 {
        return Err(Error::Vocabulary("min_freq must be at least 1".into()));
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for tok in corpus.tokens() {
        *counts.entry(tok.to_string()).or_insert(0) += 1;
    }
    counts.retain(|_, c| *c >= min_freq);
    Ok(Vocabulary {
        counts,
        unk: UNK.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{g1, g2};
    use crate::grammar::parse_grammar;
    use std::collections::HashMap;

    fn sizes(train: usize, dev: usize, test: usize, eval: usize) -> SplitSizes {
        SplitSizes { train, dev, test, eval }
    }

    fn empirical(g: &Grammar, min: usize, max: usize, n: usize, seed: u64) -> HashMap<String, f64> {
        let config = SamplerConfig::new(min, max, sizes(0, 0, 0, 0), seed);
        let sampler = Sampler::new(g, &config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts: HashMap<String, f64> = HashMap::new();
        let mut accepted = 0;
        while accepted < n {
            if let SampleOutcome::Accepted(s) = sampler.sample(&mut rng) {
                let key: Vec<&str> = s.tokens.iter().map(|&t| g.terminal_name(t)).collect();
                *counts.entry(key.join(" ")).or_default() += 1.0;
                accepted += 1;
            }
        }
        counts.values_mut().for_each(|v| *v /= n as f64);
        counts
    }

    #[test]
    fn g1_pair_frequency() {
        let freq = empirical(&g1(), 2, 2, 100_000, 7);
        assert!((freq["a b"] - 0.42).abs() < 0.01, "{freq:?}");
        assert_eq!(freq.len(), 4);
    }

    #[test]
    fn g2_windowed_lengths() {
        let freq = empirical(&g2(), 1, 3, 100_000, 11);
        let expect = [("a", 0.5 / 0.875), ("a a", 0.25 / 0.875), ("a a a", 0.125 / 0.875)];
        for (k, p) in expect {
            assert!((freq[k] - p).abs() < 0.01, "{k}: {} vs {p}", freq[k]);
        }
    }

    #[test]
    fn expansion_cap_binds() {
        let g = g1();
        let mut config = SamplerConfig::new(1, 2, sizes(0, 0, 0, 0), 0);
        config.max_expansions = 1;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(
                sample_sentence(&g, &mut rng, &config),
                SampleOutcome::Rejected(Rejection::ExpansionCap)
            );
        }
    }

    #[test]
    fn trees_match_tokens() {
        let g = g1();
        let config = SamplerConfig::new(2, 2, sizes(0, 0, 0, 0), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        match sample_sentence(&g, &mut rng, &config) {
            SampleOutcome::Accepted(s) => {
                let names: Vec<&str> = s.tokens.iter().map(|&t| g.terminal_name(t)).collect();
                assert_eq!(s.tree.yield_tokens(), names);
                assert_eq!(s.tree.preterminals(), vec!["A", "B"]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn splits_are_disjoint() {
        let config = SamplerConfig::new(2, 2, sizes(3, 1, 0, 0), 5);
        let splits = generate_corpus(&g1(), &config).unwrap();
        assert_eq!(splits.train.len(), 3);
        assert_eq!(splits.dev.len(), 1);
        for s in &splits.dev.sentences {
            assert!(!splits.train.sentences.contains(s));
        }
    }

    #[test]
    fn exhaustion_on_single_string_language() {
        let g = parse_grammar("start: S\nS -> 'a' 1").unwrap();
        let config = SamplerConfig::new(1, 1, sizes(1, 1, 0, 0), 0);
        let err = generate_corpus(&g, &config).unwrap_err();
        assert!(err.to_string().contains("split exhaustion"), "{err}");
    }

    #[test]
    fn exhaustion_when_train_covers_language() {
        // with 200 train draws every one of G1's four strings occurs
        let config = SamplerConfig::new(2, 2, sizes(200, 1, 0, 0), 0);
        assert!(matches!(generate_corpus(&g1(), &config), Err(Error::SplitExhaustion(_))));
    }

    #[test]
    fn same_seed_same_corpus() {
        let config = SamplerConfig::new(1, 6, sizes(50, 10, 10, 10), 42);
        let a = generate_corpus(&g2(), &config);
        let b = generate_corpus(&g2(), &config);
        // G2 has only six strings in the window; dev/test need fresh ones
        match (a, b) {
            (Ok(a), Ok(b)) => {
                for ((_, x), (_, y)) in a.named().iter().zip(b.named().iter()) {
                    assert_eq!(x.to_text(), y.to_text());
                }
            }
            (Err(a), Err(b)) => assert_eq!(a.to_string(), b.to_string()),
            _ => panic!("determinism violated"),
        }
        let config = SamplerConfig::new(2, 2, sizes(2, 0, 0, 5), 9);
        let a = generate_corpus(&g1(), &config).unwrap();
        let b = generate_corpus(&g1(), &config).unwrap();
        assert_eq!(a.train.to_text(), b.train.to_text());
        assert_eq!(a.eval.trees_text(), b.eval.trees_text());
    }

    #[test]
    fn config_checks() {
        assert!(SamplerConfig::new(0, 3, sizes(1, 0, 0, 0), 0).check().is_err());
        assert!(SamplerConfig::new(4, 3, sizes(1, 0, 0, 0), 0).check().is_err());
        let mut c = SamplerConfig::new(1, 3, sizes(1, 0, 0, 0), 0);
        c.max_expansions = 2;
        assert!(c.check().is_err());
    }

    #[test]
    fn vocab_threshold() {
        let c = Corpus::from_text("a a a b");
        let v = build_vocab(&c, 2).unwrap();
        assert!(v.contains("a"));
        assert!(!v.contains("b"));
        assert_eq!(v.map("b"), UNK);
        let v = build_vocab(&c, 1).unwrap();
        assert_eq!(v.len(), 2);
        assert!(build_vocab(&c, 0).is_err());
    }

    #[test]
    fn vocab_on_g1_sample() {
        let config = SamplerConfig::new(2, 2, sizes(10_000, 0, 0, 0), 1);
        let splits = generate_corpus(&g1(), &config).unwrap();
        let v = build_vocab(&splits.train, 5).unwrap();
        assert_eq!(v.tokens().collect::<Vec<_>>(), vec!["a", "b"]);
        assert!(v.check_against(&g1()).is_ok());
    }

    #[test]
    fn vocab_tsv_round_trip() {
        let v = build_vocab(&Corpus::from_text("x y y z z z"), 1).unwrap();
        let tsv = v.to_tsv();
        assert_eq!(tsv, "token\tcount\nz\t3\ny\t2\nx\t1\n");
        assert_eq!(Vocabulary::from_tsv(&tsv).unwrap(), v);
    }
}
