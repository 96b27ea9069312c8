//! Tokenized corpora: one sentence per line, tokens separated by spaces.

use crate::tree::TreeNode;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub sentences: Vec<Vec<String>>,
    /// Derivation of each sentence, when the corpus was sampled from a grammar.
    pub trees: Option<Vec<TreeNode>>,
}

impl Corpus {
    pub fn new(sentences: Vec<Vec<String>>) -> Self {
        Corpus { sentences, trees: None }
    }

    /// Parses corpus text. Blank lines are ignored, so sentence ids count
    /// non-blank lines only.
    pub fn from_text(text: &str) -> Self {
        let sentences = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.split_whitespace().map(str::to_string).collect())
            .collect();
        Corpus::new(sentences)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            out.push_str(&s.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn trees_text(&self) -> Option<String> {
        self.trees.as_ref().map(|trees| {
            let mut out = String::new();
            for t in trees {
                out.push_str(&t.to_string());
                out.push('\n');
            }
            out
        })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flatten().map(String::as_str)
    }
}
