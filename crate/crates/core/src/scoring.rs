//! Multi-vector token embeddings and late-interaction (MaxSim) scoring.
//!
//! A [`TokenMatrix`] is an `L x d` bag of per-token vectors. Queries and
//! documents are encoded independently and only combined at scoring time:
//! every query token picks its best-matching document token and the
//! per-token maxima are summed.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

/// Row-major `L x d` matrix of token embeddings. Always has at least one row.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl TokenMatrix {
    /// Builds a matrix from explicit rows; all rows must share a dimension.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::Structural("token matrix needs at least one row".into()));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(Error::Structural("token dimension must be positive".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Structural(format!(
                    "row {i} has dimension {} but row 0 has {dim}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { dim, data })
    }

    /// Builds a matrix from a flat row-major buffer.
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::Structural(format!(
                "flat buffer of {} values is not a non-empty multiple of dim {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    /// A zero-filled matrix with the same shape as `self`.
    pub fn zeros_like(&self) -> Self {
        Self {
            dim: self.dim,
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of token rows (`L`).
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    /// Always false: construction rejects empty matrices.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Appends a row, checking its dimension.
    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::Structural(format!(
                "cannot append row of dimension {} to matrix of dimension {}",
                row.len(),
                self.dim
            )));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    /// `self += scale * other`, shapes must match.
    pub fn add_scaled(&mut self, other: &TokenMatrix, scale: f64) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scales every row to unit Euclidean norm. All-zero rows pass through unchanged.
pub fn l2_normalize(m: &TokenMatrix) -> TokenMatrix {
    let mut out = m.clone();
    for i in 0..out.len() {
        let row = out.row_mut(i);
        let norm = dot(row, row).sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|x| *x /= norm);
        }
    }
    out
}

fn check_dims(query: &TokenMatrix, doc: &TokenMatrix) -> Result<()> {
    if query.dim() != doc.dim() {
        return Err(Error::Structural(format!(
            "query dimension {} does not match document dimension {}",
            query.dim(),
            doc.dim()
        )));
    }
    Ok(())
}

/// Index of the best-matching doc row for every query row.
/// Ties resolve to the lowest doc-row index.
pub fn argmax_routing(query: &TokenMatrix, doc: &TokenMatrix) -> Result<Vec<(usize, f64)>> {
    check_dims(query, doc)?;
    Ok(query
        .rows()
        .map(|q| {
            let mut best = (0, f64::NEG_INFINITY);
            for (j, d) in doc.rows().enumerate() {
                let s = dot(q, d);
                if s > best.1 {
                    best = (j, s);
                }
            }
            best
        })
        .collect())
}

/// Late-interaction score: `sum_l max_j q_l . d_j`.
///
/// The first argument iterates the outer sum; callers that score with an
/// image as anchor pass the image first.
pub fn maxsim(query: &TokenMatrix, doc: &TokenMatrix) -> Result<f64> {
    Ok(argmax_routing(query, doc)?.iter().map(|&(_, s)| s).sum())
}

/// Subgradient of [`maxsim`] scaled by `upstream`.
///
/// Each query row receives the doc row it was routed to; each doc row
/// receives the sum of the query rows routed to it.
pub fn maxsim_backward(query: &TokenMatrix, doc: &TokenMatrix, upstream: f64) -> Result<(TokenMatrix, TokenMatrix)> {
    let routing = argmax_routing(query, doc)?;
    let mut grad_q = query.zeros_like();
    let mut grad_d = doc.zeros_like();
    for (l, &(j, _)) in routing.iter().enumerate() {
        let q = query.row(l);
        let d = doc.row(j);
        for (g, x) in grad_q.row_mut(l).iter_mut().zip(d) {
            *g += upstream * x;
        }
        for (g, x) in grad_d.row_mut(j).iter_mut().zip(q) {
            *g += upstream * x;
        }
    }
    Ok((grad_q, grad_d))
}

/// Items ordered by descending score with unique ids.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RankedList {
    entries: Vec<(String, f64)>,
}

impl RankedList {
    /// Sorts scored items (descending score, ties by ascending id).
    pub fn from_scores(mut items: Vec<(String, f64)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(items.len());
        for (id, score) in &items {
            if score.is_nan() {
                return Err(Error::Numeric(format!("NaN score for {id}")));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::Data(format!("duplicate id {id} in ranking")));
            }
        }
        items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(Self { entries: items })
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Binary-gain nDCG truncated at `k`. Returns 0 when nothing is relevant.
pub fn ndcg_at_k(ranking: &RankedList, relevant: &BTreeSet<String>, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Usage("ndcg cutoff k must be >= 1".into()));
    }
    if relevant.is_empty() {
        return Ok(0.0);
    }
    let discount = |rank: usize| 1.0 / ((rank + 2) as f64).log2();
    let dcg: f64 = ranking
        .ids()
        .take(k)
        .enumerate()
        .filter(|(_, id)| relevant.contains(*id))
        .map(|(rank, _)| discount(rank))
        .sum();
    let idcg: f64 = (0..relevant.len().min(k)).map(discount).sum();
    Ok(dcg / idcg)
}

/// One JSON Lines record of an encoded item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub id: String,
    pub tokens: Vec<Vec<f64>>,
}

impl TokenRecord {
    pub fn new(id: impl Into<String>, m: &TokenMatrix) -> Self {
        Self {
            id: id.into(),
            tokens: m.to_rows(),
        }
    }

    pub fn matrix(&self) -> Result<TokenMatrix> {
        TokenMatrix::from_rows(self.tokens.clone())
    }
}

pub fn write_token_records(path: &Path, records: &[TokenRecord]) -> Result<()> {
    jsonl::write(path, records)
}

pub fn read_token_records(path: &Path) -> Result<Vec<TokenRecord>> {
    jsonl::read(path)
}
