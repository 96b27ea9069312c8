//! Per-token log-probability records and their TSV form.
//!
//! Tab-separated, with a header line:
//!
//! ```text
//! sentence_id  position  token  logprob              skipped
//! 0            1         a      -0.35667494393873245  0
//! 0            2         <unk>                        1
//! ```
//!
//! Sentence ids are 0-based corpus indexes, positions are 1-based, and
//! log-probabilities are natural logs. Skipped records leave `logprob` empty.

use std::collections::HashSet;

use crate::error::{Error, Result};

pub const RECORDS_HEADER: &str = "sentence_id\tposition\ttoken\tlogprob\tskipped";

#[derive(Clone, Debug, PartialEq)]
pub struct TokenLogProbRecord {
    pub sentence_id: usize,
    /// 1-based.
    pub position: usize,
    pub token: String,
    /// `None` when the position was skipped.
    pub logprob: Option<f64>,
}

impl TokenLogProbRecord {
    pub fn scored(sentence_id: usize, position: usize, token: impl Into<String>, logprob: f64) -> Self {
        TokenLogProbRecord {
            sentence_id,
            position,
            token: token.into(),
            logprob: Some(logprob),
        }
    }

    pub fn skipped(sentence_id: usize, position: usize, token: impl Into<String>) -> Self {
        TokenLogProbRecord {
            sentence_id,
            position,
            token: token.into(),
            logprob: None,
        }
    }

    pub fn is_skipped(&self) -> bool {
        self.logprob.is_none()
    }

    pub fn key(&self) -> (usize, usize) {
        (self.sentence_id, self.position)
    }
}

pub fn records_to_tsv(records: &[TokenLogProbRecord]) -> String {
    let mut out = String::from(RECORDS_HEADER);
    out.push('\n');
    for r in records {
        match r.logprob {
            Some(lp) => out.push_str(&format!("{}\t{}\t{}\t{}\t0\n", r.sentence_id, r.position, r.token, lp)),
            None => out.push_str(&format!("{}\t{}\t{}\t\t1\n", r.sentence_id, r.position, r.token)),
        }
    }
    out
}

/// Parses a record TSV. The header line is optional; `(sentence_id,
/// position)` must be unique and scored log-probabilities must be `≤ 0`.
pub fn load_records(text: &str, file: &str) -> Result<Vec<TokenLogProbRecord>> {
    let mut out = Vec::new();
    let mut keys = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.is_empty() || (i == 0 && line == RECORDS_HEADER) {
            continue;
        }
        let bad = |msg: String| Error::Records {
            file: file.to_string(),
            line: line_no,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(bad(format!("expected 5 tab-separated fields, found {}", fields.len())));
        }
        let sentence_id: usize = fields[0]
            .parse()
            .map_err(|_| bad(format!("invalid sentence_id `{}`", fields[0])))?;
        let position: usize = fields[1]
            .parse()
            .map_err(|_| bad(format!("invalid position `{}`", fields[1])))?;
        if position == 0 {
            return Err(bad("positions are 1-based".into()));
        }
        let token = fields[2];
        if token.is_empty() {
            return Err(bad("empty token".into()));
        }
        let skipped = match fields[4] {
            "0" | "false" => false,
            "1" | "true" => true,
            other => return Err(bad(format!("invalid skipped flag `{other}`"))),
        };
        let logprob = if skipped {
            if !fields[3].is_empty() {
                return Err(bad("skipped record carries a log-probability".into()));
            }
            None
        } else {
            let lp: f64 = fields[3]
                .parse()
                .map_err(|_| bad(format!("invalid log-probability `{}`", fields[3])))?;
            if lp.is_nan() || lp == f64::NEG_INFINITY {
                return Err(bad(format!("log-probability `{}` is not finite", fields[3])));
            }
            if lp > 0.0 {
                return Err(bad("log-probability must be ≤ 0".into()));
            }
            Some(lp)
        };
        if !keys.insert((sentence_id, position)) {
            return Err(Error::DuplicateRecord { sentence_id, position });
        }
        out.push(TokenLogProbRecord {
            sentence_id,
            position,
            token: token.to_string(),
            logprob,
        });
    }
    Ok(out)
}
