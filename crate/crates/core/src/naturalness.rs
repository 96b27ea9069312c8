//! Corpus naturalness measures: Zipf-Mandelbrot fit, sentence lengths, and
//! n-gram frequency correlation against a reference corpus.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::stats::spearman;

const PARAM_TOLERANCE: f64 = 1e-6;
const NEWTON_MAX_ITERS: usize = 200;
const GOLDEN_MAX_ITERS: usize = 200;

/// Fitted `p(r) ∝ (r + beta_shift)^(-alpha)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZipfFit {
    pub alpha: f64,
    #[serde(rename = "beta")]
    pub beta_shift: f64,
    /// Multinomial log-likelihood of the frequency counts under the fit.
    #[serde(rename = "loglik")]
    pub log_likelihood: f64,
    /// Mean squared difference of log relative frequency and log model
    /// probability over ranks with non-zero count.
    #[serde(skip)]
    pub residual_mean: f64,
}

fn token_counts(corpus: &Corpus) -> HashMap<&str, u64> {
    let mut counts = HashMap::new();
    for t in corpus.tokens() {
        *counts.entry(t).or_insert(0) += 1;
    }
    counts
}

/// Ranks the types shared by both corpora by their frequency in `corpus_a`
/// (ties broken lexicographically) and fits the law to the counts of those
/// types in `corpus_b`.
pub fn zipf_fit(corpus_a: &Corpus, corpus_b: &Corpus) -> Result<ZipfFit> {
    let counts_a = token_counts(corpus_a);
    let counts_b = token_counts(corpus_b);
    let mut shared: Vec<(&str, u64)> = counts_a
        .iter()
        .filter(|(t, _)| counts_b.contains_key(*t))
        .map(|(&t, &c)| (t, c))
        .collect();
    if shared.len() < 3 {
        return Err(Error::ZipfFit(format!(
            "shared vocabulary has {} types; at least 3 are needed",
            shared.len()
        )));
    }
    shared.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let by_rank: Vec<f64> = shared.iter().map(|(t, _)| counts_b[t] as f64).collect();
    zipf_fit_counts(&by_rank)
}

/// Fits the law to `counts[r - 1]`, the frequency of rank `r`.
pub fn zipf_fit_counts(counts: &[f64]) -> Result<ZipfFit> {
    if counts.len() < 3 {
        return Err(Error::ZipfFit("need at least 3 ranks".into()));
    }
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZipfFit("all counts are zero".into()));
    }
    let model = ZipfModel { counts, total };

    // bracket the profile maximum on a geometric grid, then refine
    let mut grid = vec![0.0];
    grid.extend((0..=20).map(|k| 2f64.powi(k) / 8.0));
    let profile: Vec<(f64, f64)> = grid.iter().map(|&b| model.profile(b, 1.0)).collect();
    let best = (0..grid.len())
        .max_by(|&i, &j| profile[i].1.total_cmp(&profile[j].1).then(j.cmp(&i)))
        .unwrap();
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let beta = model.golden_section(lo, hi, profile[best].0);
    let (alpha, loglik) = model.profile(beta, profile[best].0);
    let (beta, alpha, loglik) = if loglik >= profile[best].1 {
        (beta, alpha, loglik)
    } else {
        (grid[best], profile[best].0, profile[best].1)
    };
    Ok(ZipfFit {
        alpha,
        beta_shift: beta,
        log_likelihood: loglik,
        residual_mean: model.residual_mean(alpha, beta),
    })
}

struct ZipfModel<'a> {
    counts: &'a [f64],
    total: f64,
}

impl ZipfModel<'_> {
    fn log_norm(&self, alpha: f64, beta: f64) -> f64 {
        let terms = (1..=self.counts.len()).map(|r| -alpha * (r as f64 + beta).ln());
        crate::logspace::log_sum_exp(terms)
    }

    fn loglik(&self, alpha: f64, beta: f64) -> f64 {
        let weighted: f64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(i, &f)| f * ((i + 1) as f64 + beta).ln())
            .sum();
        -alpha * weighted - self.total * self.log_norm(alpha, beta)
    }

    /// Gradient and second derivative of the log-likelihood in `alpha`.
    fn alpha_derivatives(&self, alpha: f64, beta: f64) -> (f64, f64) {
        let logs: Vec<f64> = (1..=self.counts.len()).map(|r| (r as f64 + beta).ln()).collect();
        let log_z = crate::logspace::log_sum_exp(logs.iter().map(|l| -alpha * l));
        let mut e1 = 0.0;
        let mut e2 = 0.0;
        for l in &logs {
            let p = (-alpha * l - log_z).exp();
            e1 += p * l;
            e2 += p * l * l;
        }
        let observed: f64 = self.counts.iter().zip(&logs).map(|(f, l)| f * l).sum();
        let grad = -observed + self.total * e1;
        let hess = -self.total * (e2 - e1 * e1).max(0.0);
        (grad, hess)
    }

    /// Maximizes over `alpha ≥ 0` for fixed `beta`; returns `(alpha, loglik)`.
    fn profile(&self, beta: f64, alpha0: f64) -> (f64, f64) {
        let mut alpha = alpha0.max(0.0);
        let mut ll = self.loglik(alpha, beta);
        for _ in 0..NEWTON_MAX_ITERS {
            let (g, h) = self.alpha_derivatives(alpha, beta);
            if alpha == 0.0 && g <= 0.0 {
                break;
            }
            let mut step = if h < 0.0 { -g / h } else { 0.1 * g.signum() };
            let mut accepted = None;
            for _ in 0..60 {
                let cand = (alpha + step).max(0.0);
                let cand_ll = self.loglik(cand, beta);
                if cand_ll >= ll {
                    accepted = Some((cand, cand_ll));
                    break;
                }
                step /= 2.0;
            }
            let Some((cand, cand_ll)) = accepted else {
                break;
            };
            let moved = (cand - alpha).abs();
            alpha = cand;
            ll = cand_ll;
            if moved < PARAM_TOLERANCE * 1e-3 {
                break;
            }
        }
        (alpha, ll)
    }

    fn golden_section(&self, mut lo: f64, mut hi: f64, alpha0: f64) -> f64 {
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = hi - inv_phi * (hi - lo);
        let mut x2 = lo + inv_phi * (hi - lo);
        let (mut a1, mut f1) = self.profile(x1, alpha0);
        let (mut a2, mut f2) = self.profile(x2, alpha0);
        for _ in 0..GOLDEN_MAX_ITERS {
            if hi - lo < PARAM_TOLERANCE {
                break;
            }
            if f1 < f2 {
                lo = x1;
                x1 = x2;
                f1 = f2;
                a1 = a2;
                x2 = lo + inv_phi * (hi - lo);
                (a2, f2) = self.profile(x2, a1);
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                a2 = a1;
                x1 = hi - inv_phi * (hi - lo);
                (a1, f1) = self.profile(x1, a2);
            }
        }
        (lo + hi) / 2.0
    }

    fn residual_mean(&self, alpha: f64, beta: f64) -> f64 {
        let log_z = self.log_norm(alpha, beta);
        let mut sum = 0.0;
        let mut n = 0usize;
        for (i, &f) in self.counts.iter().enumerate() {
            if f > 0.0 {
                let model = -alpha * ((i + 1) as f64 + beta).ln() - log_z;
                let d = (f / self.total).ln() - model;
                sum += d * d;
                n += 1;
            }
        }
        sum / n as f64
    }
}

/// Number of sentences of each length.
pub fn length_histogram(corpus: &Corpus) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for s in &corpus.sentences {
        *hist.entry(s.len()).or_insert(0) += 1;
    }
    hist
}

/// Counts of the n-grams occurring inside sentences (no boundary padding).
#[derive(Clone, Debug, PartialEq)]
pub struct NgramStats {
    pub n: usize,
    pub counts: HashMap<Vec<String>, u64>,
}

impl NgramStats {
    pub fn from_corpus(corpus: &Corpus, n: usize) -> Self {
        assert!(n >= 1, "n-gram order must be at least 1");
        let mut counts: HashMap<Vec<String>, u64> = HashMap::new();
        for s in &corpus.sentences {
            for w in s.windows(n) {
                *counts.entry(w.to_vec()).or_insert(0) += 1;
            }
        }
        NgramStats { n, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// Spearman correlation between n-gram counts of `corpus` and `reference`
/// over the reference's n-grams; n-grams missing from `corpus` count 0.
pub fn ngram_spearman(corpus: &Corpus, reference: &Corpus, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Ngram("n must be at least 1".into()));
    }
    let reference = NgramStats::from_corpus(reference, n);
    if reference.counts.is_empty() {
        return Err(Error::Ngram(format!("reference has no {n}-grams")));
    }
    let corpus = NgramStats::from_corpus(corpus, n);
    let mut support: Vec<(&Vec<String>, u64)> = reference.counts.iter().map(|(k, &v)| (k, v)).collect();
    support.sort_unstable();
    let x: Vec<f64> = support
        .iter()
        .map(|(k, _)| corpus.counts.get(*k).copied().unwrap_or(0) as f64)
        .collect();
    let y: Vec<f64> = support.iter().map(|&(_, v)| v as f64).collect();
    spearman(&x, &y).ok_or_else(|| Error::Ngram(format!("{n}-gram counts have zero variance")))
}

/// Report emitted by the `naturalness` command.
#[derive(Clone, Debug, Serialize)]
pub struct NaturalnessReport {
    pub zipf: ZipfFit,
    pub lengths: BTreeMap<usize, usize>,
    pub spearman: BTreeMap<usize, f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram() {
        let h = length_histogram(&Corpus::from_text("a b\na b c"));
        assert_eq!(h, BTreeMap::from([(2, 1), (3, 1)]));
        assert!(length_histogram(&Corpus::default()).is_empty());
    }

    #[test]
    fn ngram_identity() {
        let c = Corpus::from_text("a b a\nb a c\nc c a b");
        for n in 1..=2 {
            assert!((ngram_spearman(&c, &c, n).unwrap() - 1.0).abs() < 1e-12);
        }
        assert!(ngram_spearman(&c, &Corpus::from_text("a"), 2).is_err());
    }

    #[test]
    fn zipf_errors() {
        let a = Corpus::from_text("x y z");
        let b = Corpus::from_text("p q r");
        assert!(matches!(zipf_fit(&a, &b), Err(Error::ZipfFit(_))));
    }

    #[test]
    fn zipf_exact_counts() {
        // counts proportional to the law itself are fitted exactly
        let counts: Vec<f64> = (1..=200).map(|r| 1e6 * (r as f64 + 2.0).powf(-1.2)).collect();
        let fit = zipf_fit_counts(&counts).unwrap();
        assert!((fit.alpha - 1.2).abs() < 1e-4, "{fit:?}");
        assert!((fit.beta_shift - 2.0).abs() < 1e-3, "{fit:?}");
        assert!(fit.residual_mean < 1e-8);
    }

    #[test]
    fn zipf_uniform_is_flat() {
        let counts = vec![1000.0; 50];
        let fit = zipf_fit_counts(&counts).unwrap();
        assert!(fit.alpha < 1e-6, "{fit:?}");
        let uniform = -50_000.0 * 50f64.ln();
        assert!((fit.log_likelihood - uniform).abs() / 50_000.0 < 1e-3);
    }

    #[test]
    fn zipf_scale_invariant() {
        let counts: Vec<f64> = (1..=100).map(|r| (5000.0 / (r as f64 + 1.0).powf(1.1)).round()).collect();
        let doubled: Vec<f64> = counts.iter().map(|c| 2.0 * c).collect();
        let a = zipf_fit_counts(&counts).unwrap();
        let b = zipf_fit_counts(&doubled).unwrap();
        assert!((a.alpha - b.alpha).abs() < 1e-6);
        assert!((a.beta_shift - b.beta_shift).abs() < 1e-6);
    }
}
