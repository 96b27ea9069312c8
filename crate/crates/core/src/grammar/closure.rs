//! Reflexive-transitive closures `Σ_k M^k` of nonterminal relation matrices.
//!
//! Used for unary chains (CKY and Earley completion) and for the left-corner
//! relation (Earley prediction). The series is accumulated row by row until the
//! newest term drops below [`CLOSURE_TOLERANCE`]; a series that keeps growing
//! means the grammar leaks probability mass into an infinite cycle.

use super::{Grammar, NonterminalId, RuleShape};
use crate::error::{Error, Result};

pub const CLOSURE_TOLERANCE: f64 = 1e-12;
pub const CLOSURE_MAX_STEPS: usize = 10_000;
pub const CLOSURE_MAX_ENTRY: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum SeriesFailure {
    Diverged { row: usize, steps: usize },
    NoConvergence { row: usize, residual: f64 },
}

/// Sparse closure matrix over nonterminals.
#[derive(Clone, Debug)]
pub struct ClosureMatrix {
    n: usize,
    /// row a: (b, C[a][b]) for C[a][b] > 0, sorted by b
    rows: Vec<Vec<(u32, f64)>>,
    log_rows: Vec<Vec<(u32, f64)>>,
    /// column b: (a, ln C[a][b]), sorted by a
    log_cols: Vec<Vec<(u32, f64)>>,
}

impl ClosureMatrix {
    fn from_rows(rows: Vec<Vec<(u32, f64)>>) -> Self {
        let n = rows.len();
        let mut log_cols = vec![Vec::new(); n];
        let log_rows: Vec<Vec<(u32, f64)>> = rows
            .iter()
            .map(|row| row.iter().map(|&(b, v)| (b, v.ln())).collect())
            .collect();
        for (a, row) in log_rows.iter().enumerate() {
            for &(b, lv) in row {
                log_cols[b as usize].push((a as u32, lv));
            }
        }
        ClosureMatrix {
            n,
            rows,
            log_rows,
            log_cols,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, a: NonterminalId, b: NonterminalId) -> f64 {
        let row = &self.rows[a.index()];
        match row.binary_search_by_key(&b.0, |&(c, _)| c) {
            Ok(i) => row[i].1,
            Err(_) => 0.0,
        }
    }

    /// Nonzero entries of row `a` as `(b, ln C[a][b])`.
    pub fn log_row(&self, a: NonterminalId) -> &[(u32, f64)] {
        &self.log_rows[a.index()]
    }

    /// Nonzero entries of column `b` as `(a, ln C[a][b])`.
    pub fn log_col(&self, b: NonterminalId) -> &[(u32, f64)] {
        &self.log_cols[b.index()]
    }

    /// True when the matrix is the identity.
    pub fn is_identity(&self) -> bool {
        self.rows
            .iter()
            .enumerate()
            .all(|(a, row)| row.len() == 1 && row[0].0 as usize == a && row[0].1 == 1.0)
    }
}

/// Computes `Σ_{k≥0} M^k` for the sparse matrix given as `(row, col, value)`
/// triples with non-negative values.
pub(crate) fn geometric_series(
    n: usize,
    entries: &[(usize, usize, f64)],
) -> std::result::Result<ClosureMatrix, SeriesFailure> {
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(a, b, v) in entries {
        if v > 0.0 {
            adjacency[a].push((b, v));
        }
    }

    let mut rows = Vec::with_capacity(n);
    let mut sum = vec![0.0f64; n];
    let mut term = vec![0.0f64; n];
    let mut next = vec![0.0f64; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut in_touched = vec![false; n];
    let mut active: Vec<usize> = Vec::new();

    for row in 0..n {
        // term_0 = e_row
        active.clear();
        active.push(row);
        term[row] = 1.0;
        sum[row] = 1.0;
        touched.push(row);
        in_touched[row] = true;
        let mut steps = 0usize;
        loop {
            if active.iter().all(|&c| term[c] == 0.0) || active.is_empty() {
                break;
            }
            if steps == CLOSURE_MAX_STEPS {
                let residual = active.iter().map(|&c| term[c]).fold(0.0, f64::max);
                cleanup(&mut sum, &mut term, &mut touched, &mut in_touched, &active);
                return Err(SeriesFailure::NoConvergence { row, residual });
            }
            steps += 1;
            // next = term · M
            let mut next_active = Vec::new();
            for &k in &active {
                let t = term[k];
                if t == 0.0 {
                    continue;
                }
                for &(b, v) in &adjacency[k] {
                    if next[b] == 0.0 {
                        next_active.push(b);
                    }
                    next[b] += t * v;
                }
            }
            for &k in &active {
                term[k] = 0.0;
            }
            let mut residual = 0.0f64;
            for &b in &next_active {
                let v = next[b];
                next[b] = 0.0;
                term[b] = v;
                sum[b] += v;
                residual = residual.max(v);
                if !in_touched[b] {
                    in_touched[b] = true;
                    touched.push(b);
                }
                if sum[b] > CLOSURE_MAX_ENTRY || !sum[b].is_finite() {
                    cleanup(&mut sum, &mut term, &mut touched, &mut in_touched, &next_active);
                    return Err(SeriesFailure::Diverged { row, steps });
                }
            }
            active = next_active;
            if residual < CLOSURE_TOLERANCE {
                break;
            }
        }
        for &k in &active {
            term[k] = 0.0;
        }
        touched.sort_unstable();
        let entries: Vec<(u32, f64)> = touched
            .iter()
            .filter(|&&b| sum[b] > 0.0)
            .map(|&b| (b as u32, sum[b]))
            .collect();
        for &b in &touched {
            sum[b] = 0.0;
            in_touched[b] = false;
        }
        touched.clear();
        rows.push(entries);
    }
    Ok(ClosureMatrix::from_rows(rows))
}

fn cleanup(sum: &mut [f64], term: &mut [f64], touched: &mut Vec<usize>, in_touched: &mut [bool], active: &[usize]) {
    for &b in touched.iter() {
        sum[b] = 0.0;
        in_touched[b] = false;
    }
    for &b in active {
        term[b] = 0.0;
    }
    touched.clear();
}

/// Total probability `C[a][b]` that `a` rewrites to `b` through zero or more
/// unary nonterminal rules.
#[derive(Clone, Debug)]
pub struct UnaryClosure {
    matrix: ClosureMatrix,
}

impl UnaryClosure {
    pub fn build(g: &Grammar) -> Result<Self> {
        let entries = unary_entries(g);
        let matrix = geometric_series(g.num_nonterminals(), &entries).map_err(|f| {
            Error::ImproperUnaryCycle(describe_failure(g, &f))
        })?;
        Ok(UnaryClosure { matrix })
    }

    pub fn matrix(&self) -> &ClosureMatrix {
        &self.matrix
    }

    pub fn get(&self, a: NonterminalId, b: NonterminalId) -> f64 {
        self.matrix.get(a, b)
    }
}

pub(crate) fn unary_entries(g: &Grammar) -> Vec<(usize, usize, f64)> {
    g.rules()
        .iter()
        .filter_map(|r| match r.shape() {
            RuleShape::Unary(b) => Some((r.lhs.index(), b.index(), r.prob)),
            _ => None,
        })
        .collect()
}

pub(crate) fn describe_failure(g: &Grammar, f: &SeriesFailure) -> String {
    match *f {
        SeriesFailure::Diverged { row, steps } => format!(
            "series from `{}` exceeds {CLOSURE_MAX_ENTRY:e} after {steps} steps",
            g.nonterminal_name(NonterminalId(row as u32))
        ),
        SeriesFailure::NoConvergence { row, residual } => format!(
            "series from `{}` not converged after {CLOSURE_MAX_STEPS} steps (residual {residual:e})",
            g.nonterminal_name(NonterminalId(row as u32))
        ),
    }
}
