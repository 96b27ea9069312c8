//! Scoring external language-model log-probabilities against grammar
//! log-probabilities for the same tokens.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::records::TokenLogProbRecord;
use crate::stats::{pearson, spearman, variance};

pub const TAGS_HEADER: &str = "sentence_id\tposition\ttag";

/// Default Penn Treebank tag to coarse class map. A convention shipped for
/// convenience, not a published ground truth.
pub const DEFAULT_CLASS_MAP_JSON: &str = include_str!("../data/penn_classes.json");

/// Aggregate comparison of LM and grammar log-probabilities.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub ppl_lm: f64,
    pub ppl_pcfg: f64,
    /// Coefficient of determination of the regression of grammar log-probs
    /// on LM log-probs; absent when the grammar log-probs are constant.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_squared: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spearman_rho: Option<f64>,
    pub n_scored: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_class_divergence: Option<BTreeMap<String, f64>>,
}

/// A scored position present in both record sets.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedScore {
    pub sentence_id: usize,
    pub position: usize,
    pub lm: f64,
    pub pcfg: f64,
}

/// Positions scored on both sides, sorted by `(sentence_id, position)`.
/// Records present on both sides must agree on the token.
pub fn pair_records(lm: &[TokenLogProbRecord], pcfg: &[TokenLogProbRecord]) -> Result<Vec<PairedScore>> {
    let by_key: HashMap<(usize, usize), &TokenLogProbRecord> = pcfg.iter().map(|r| (r.key(), r)).collect();
    let mut pairs = Vec::new();
    for l in lm {
        let Some(p) = by_key.get(&l.key()) else {
            continue;
        };
        if l.token != p.token {
            return Err(Error::TokenMismatch {
                sentence_id: l.sentence_id,
                position: l.position,
                left: l.token.clone(),
                right: p.token.clone(),
            });
        }
        if let (Some(a), Some(b)) = (l.logprob, p.logprob) {
            pairs.push(PairedScore {
                sentence_id: l.sentence_id,
                position: l.position,
                lm: a,
                pcfg: b,
            });
        }
    }
    pairs.sort_by_key(|p| (p.sentence_id, p.position));
    Ok(pairs)
}

/// Perplexities, R² and Spearman ρ over the jointly scored positions.
pub fn compare(lm: &[TokenLogProbRecord], pcfg: &[TokenLogProbRecord]) -> Result<EvalReport> {
    let pairs = pair_records(lm, pcfg)?;
    if pairs.is_empty() {
        return Err(Error::NoScoredTokens);
    }
    let x: Vec<f64> = pairs.iter().map(|p| p.lm).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.pcfg).collect();
    let n = pairs.len() as f64;
    let ppl = |v: &[f64]| (-v.iter().sum::<f64>() / n).exp();
    let (r_squared, spearman_rho) = if pairs.len() < 2 || variance(&y) == 0.0 {
        (None, None)
    } else {
        (
            Some(pearson(&x, &y).map_or(0.0, |r| r * r)),
            Some(spearman(&x, &y).unwrap_or(0.0)),
        )
    };
    Ok(EvalReport {
        ppl_lm: ppl(&x),
        ppl_pcfg: ppl(&y),
        r_squared,
        spearman_rho,
        n_scored: pairs.len(),
        per_class_divergence: None,
    })
}

/// Per-token tags keyed by `(sentence_id, position)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TagTable {
    tags: HashMap<(usize, usize), String>,
}

impl TagTable {
    pub fn from_tsv(text: &str, file: &str) -> Result<Self> {
        let mut tags = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() || (i == 0 && line == TAGS_HEADER) {
                continue;
            }
            let bad = |msg: String| Error::Records {
                file: file.to_string(),
                line: i + 1,
                msg,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 || fields[2].is_empty() {
                return Err(bad("expected `sentence_id<TAB>position<TAB>tag`".into()));
            }
            let sid: usize = fields[0].parse().map_err(|_| bad(format!("invalid sentence_id `{}`", fields[0])))?;
            let pos: usize = fields[1].parse().map_err(|_| bad(format!("invalid position `{}`", fields[1])))?;
            if tags.insert((sid, pos), fields[2].to_string()).is_some() {
                return Err(bad(format!("duplicate tag for sentence {sid} position {pos}")));
            }
        }
        Ok(TagTable { tags })
    }

    pub fn insert(&mut self, sentence_id: usize, position: usize, tag: impl Into<String>) {
        self.tags.insert((sentence_id, position), tag.into());
    }

    pub fn get(&self, sentence_id: usize, position: usize) -> Option<&str> {
        self.tags.get(&(sentence_id, position)).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

/// Fine tag to coarse class.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClassMap {
    map: HashMap<String, String>,
}

impl ClassMap {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(ClassMap {
            map: serde_json::from_str(text)?,
        })
    }

    pub fn penn_default() -> Self {
        Self::from_json(DEFAULT_CLASS_MAP_JSON).expect("bundled class map is valid JSON")
    }

    pub fn from_pairs<I, K, V>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        ClassMap {
            map: pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }

    /// Class of `tag`. A tag not in the map is retried without a trailing
    /// `_<digits>` latent-state suffix, so split labels such as `NN_12`
    /// fall back to `NN`.
    pub fn class_of(&self, tag: &str) -> Option<&str> {
        if let Some(c) = self.map.get(tag) {
            return Some(c);
        }
        let (base, suffix) = tag.rsplit_once('_')?;
        if !base.is_empty() && !suffix.is_empty() && suffix.bytes().all(|b| b.is_ascii_digit()) {
            self.map.get(base).map(String::as_str)
        } else {
            None
        }
    }
}

/// Mean of `logP_LM - logP_PCFG` per coarse class over the jointly scored
/// positions. Classes without tokens are omitted.
pub fn pos_divergence(
    lm: &[TokenLogProbRecord],
    pcfg: &[TokenLogProbRecord],
    tags: &TagTable,
    classes: &ClassMap,
) -> Result<BTreeMap<String, f64>> {
    let pairs = pair_records(lm, pcfg)?;
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for p in &pairs {
        let tag = tags.get(p.sentence_id, p.position).ok_or(Error::MissingTag {
            sentence_id: p.sentence_id,
            position: p.position,
        })?;
        let class = classes.class_of(tag).ok_or_else(|| Error::UnmappedTag(tag.to_string()))?;
        let entry = sums.entry(class.to_string()).or_insert((0.0, 0));
        entry.0 += p.lm - p.pcfg;
        entry.1 += 1;
    }
    Ok(sums.into_iter().map(|(c, (s, n))| (c, s / n as f64)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recs(values: &[(usize, usize, &str, Option<f64>)]) -> Vec<TokenLogProbRecord> {
        values
            .iter()
            .map(|&(s, p, t, lp)| TokenLogProbRecord {
                sentence_id: s,
                position: p,
                token: t.to_string(),
                logprob: lp,
            })
            .collect()
    }

    fn sample() -> Vec<TokenLogProbRecord> {
        recs(&[
            (0, 1, "the", Some(-1.0)),
            (0, 2, "dog", Some(-2.5)),
            (0, 3, "ran", Some(-0.5)),
            (1, 1, "a", Some(-1.5)),
            (1, 2, "cat", None),
        ])
    }

    #[test]
    fn identity() {
        let r = compare(&sample(), &sample()).unwrap();
        assert_eq!(r.n_scored, 4);
        assert_eq!(r.ppl_lm, r.ppl_pcfg);
        assert!((r.r_squared.unwrap() - 1.0).abs() < 1e-12);
        assert!((r.spearman_rho.unwrap() - 1.0).abs() < 1e-12);
        assert!((r.ppl_pcfg - (5.5f64 / 4.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn constant_shift() {
        let c = -0.25;
        let lm: Vec<_> = sample()
            .into_iter()
            .map(|mut r| {
                r.logprob = r.logprob.map(|v| v + c);
                r
            })
            .collect();
        let r = compare(&lm, &sample()).unwrap();
        assert!((r.r_squared.unwrap() - 1.0).abs() < 1e-12);
        assert!((r.spearman_rho.unwrap() - 1.0).abs() < 1e-12);
        assert!((r.ppl_lm - r.ppl_pcfg * (-c).exp()).abs() < 1e-12);
    }

    #[test]
    fn skips_and_mismatches() {
        let mut lm = sample();
        lm[0].logprob = None;
        let r = compare(&lm, &sample()).unwrap();
        assert_eq!(r.n_scored, 3);
        lm[1].token = "cow".into();
        assert!(matches!(compare(&lm, &sample()), Err(Error::TokenMismatch { position: 2, .. })));
        let none: Vec<TokenLogProbRecord> = Vec::new();
        assert!(matches!(compare(&none, &sample()), Err(Error::NoScoredTokens)));
    }

    #[test]
    fn constant_pcfg_has_no_r_squared() {
        let pcfg = recs(&[(0, 1, "a", Some(-1.0)), (0, 2, "a", Some(-1.0))]);
        let lm = recs(&[(0, 1, "a", Some(-1.0)), (0, 2, "a", Some(-2.0))]);
        let r = compare(&lm, &pcfg).unwrap();
        assert_eq!(r.r_squared, None);
        let json = serde_json::to_string(&r).unwrap();
        assert!(!json.contains("r_squared"));
    }

    #[test]
    fn divergence_by_class() {
        let tags = TagTable::from_tsv("sentence_id\tposition\ttag\n0\t1\tDT\n0\t2\tNN_3\n0\t3\tVBD\n1\t1\tDT\n1\t2\tNN\n", "t").unwrap();
        let classes = ClassMap::penn_default();
        let same = pos_divergence(&sample(), &sample(), &tags, &classes).unwrap();
        assert!(same.values().all(|&v| v == 0.0));
        assert_eq!(same.keys().collect::<Vec<_>>(), vec!["function", "noun", "verb"]);

        let lm: Vec<_> = sample()
            .into_iter()
            .map(|mut r| {
                if r.token == "dog" {
                    r.logprob = r.logprob.map(|v| v - 0.3);
                }
                r
            })
            .collect();
        let d = pos_divergence(&lm, &sample(), &tags, &classes).unwrap();
        assert!((d["noun"] + 0.3).abs() < 1e-12);
        assert_eq!(d["function"], 0.0);

        let partial = TagTable::from_tsv("0\t1\tDT\n", "t").unwrap();
        assert!(matches!(
            pos_divergence(&sample(), &sample(), &partial, &classes),
            Err(Error::MissingTag { sentence_id: 0, position: 2 })
        ));
        let odd = TagTable::from_tsv("0\t1\tXX\n0\t2\tNN\n0\t3\tNN\n1\t1\tNN\n", "t").unwrap();
        assert!(matches!(pos_divergence(&sample(), &sample(), &odd, &classes), Err(Error::UnmappedTag(_))));
    }

    #[test]
    fn class_fallback() {
        let m = ClassMap::from_pairs([("NN", "noun")]);
        assert_eq!(m.class_of("NN"), Some("noun"));
        assert_eq!(m.class_of("NN_0"), Some("noun"));
        assert_eq!(m.class_of("NN_x"), None);
        assert_eq!(m.class_of("_1"), None);
    }
}
