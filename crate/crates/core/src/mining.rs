//! Offline candidate-pool mining and per-step negative selection.
//!
//! Difficulty is measured relative to the positive: a negative's ratio is
//! `s_neg / s_pos`, so `1.0` means "scores exactly like the positive".

use std::cmp::Ordering;
use std::collections::HashMap;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curriculum::DifficultyInterval;
use crate::error::{Error, Result};
use crate::jsonl;
use crate::scoring::{maxsim, TokenMatrix};

pub const DEFAULT_POOL_SIZE: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub doc_id: String,
    pub sim: f64,
    pub ratio: f64,
}

/// Top-N non-positive documents for one query, sorted by `sim` descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub query_id: String,
    pub sim_pos: f64,
    pub entries: Vec<PoolEntry>,
}

/// A query to mine for: id, encoded tokens, id of its positive document.
pub struct MiningQuery<'a> {
    pub id: &'a str,
    pub tokens: &'a TokenMatrix,
    pub positive: &'a str,
}

pub fn difficulty_ratio(s_neg: f64, s_pos: f64) -> Result<f64> {
    if !(s_pos > 0.0) {
        return Err(Error::DegeneratePositive(s_pos));
    }
    Ok(s_neg / s_pos)
}

fn by_score_then_id(a: &(&str, f64), b: &(&str, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

/// Brute-force MaxSim mining over the whole corpus.
///
/// Per query: score every document, drop the positive, keep the top `n`
/// (ties by ascending doc id). Queries are mined in parallel; output order
/// follows the input order.
pub fn build_candidate_pool(
    queries: &[MiningQuery<'_>],
    corpus: &[(String, TokenMatrix)],
    n: usize,
) -> Result<Vec<CandidatePool>> {
    let index: HashMap<&str, &TokenMatrix> = corpus.iter().map(|(id, m)| (id.as_str(), m)).collect();
    queries
        .par_iter()
        .map(|q| {
            let pos = index.get(q.positive).ok_or_else(|| {
                Error::Data(format!(
                    "positive document {} of query {} not in corpus",
                    q.positive, q.id
                ))
            })?;
            let sim_pos = maxsim(q.tokens, pos)?;
            let mut scored = corpus
                .iter()
                .filter(|(id, _)| id != q.positive)
                .map(|(id, m)| Ok((id.as_str(), maxsim(q.tokens, m)?)))
                .collect::<Result<Vec<_>>>()?;
            scored.sort_by(by_score_then_id);
            scored.truncate(n);
            let entries = scored
                .into_iter()
                .map(|(id, sim)| {
                    Ok(PoolEntry {
                        doc_id: id.to_string(),
                        sim,
                        ratio: difficulty_ratio(sim, sim_pos)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(CandidatePool {
                query_id: q.id.to_string(),
                sim_pos,
                entries,
            })
        })
        .collect()
}

/// Negatives chosen for one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeSelection {
    pub doc_ids: Vec<String>,
    /// True when the interval held fewer than `count` entries and others filled in.
    pub fallback: bool,
}

/// Picks the `count` highest-similarity entries whose ratio lies in the closed interval.
///
/// Shortfalls are filled with the entries just below `low` (closest first),
/// then with entries just above `high`, and the selection is flagged.
pub fn select_negatives(
    pool: &CandidatePool,
    interval: &DifficultyInterval,
    count: usize,
) -> Result<NegativeSelection> {
    if pool.entries.is_empty() {
        return Err(Error::Data(format!("candidate pool for {} is empty", pool.query_id)));
    }
    if count == 0 {
        return Err(Error::Usage("negative count must be >= 1".into()));
    }
    let mut doc_ids: Vec<String> = pool
        .entries
        .iter()
        .filter(|e| interval.contains(e.ratio))
        .take(count)
        .map(|e| e.doc_id.clone())
        .collect();
    let fallback = doc_ids.len() < count;
    if fallback {
        let mut below: Vec<&PoolEntry> = pool.entries.iter().filter(|e| e.ratio < interval.low).collect();
        below.sort_by(|a, b| b.ratio.total_cmp(&a.ratio).then_with(|| a.doc_id.cmp(&b.doc_id)));
        let mut above: Vec<&PoolEntry> = pool.entries.iter().filter(|e| e.ratio > interval.high).collect();
        above.sort_by(|a, b| a.ratio.total_cmp(&b.ratio).then_with(|| a.doc_id.cmp(&b.doc_id)));
        let need = count - doc_ids.len();
        doc_ids.extend(below.into_iter().chain(above).take(need).map(|e| e.doc_id.clone()));
    }
    Ok(NegativeSelection { doc_ids, fallback })
}

/// Uniform seeded sample of `count` distinct indices into a pool of `pool_len`
/// negative-query candidates (all of them if the pool is smaller).
pub fn select_negative_queries(pool_len: usize, count: usize, seed: u64) -> Result<Vec<usize>> {
    if pool_len == 0 {
        return Err(Error::Data("negative query pool is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, pool_len, count.min(pool_len)).into_vec())
}

pub fn write_pools(path: &Path, pools: &[CandidatePool]) -> Result<()> {
    jsonl::write(path, pools)
}

pub fn read_pools(path: &Path) -> Result<Vec<CandidatePool>> {
    jsonl::read(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curriculum::{ActionId, Zone};

    fn interval(low: f64, high: f64) -> DifficultyInterval {
        DifficultyInterval {
            action: ActionId(0),
            low,
            high,
            zone: Zone::EffectiveLearning,
        }
    }

    fn pool(ratios: &[f64]) -> CandidatePool {
        CandidatePool {
            query_id: "q".into(),
            sim_pos: 1.0,
            entries: ratios
                .iter()
                .enumerate()
                .map(|(i, r)| PoolEntry {
                    doc_id: format!("d{i}"),
                    sim: *r,
                    ratio: *r,
                })
                .collect(),
        }
    }

    fn tm(rows: &[&[f64]]) -> TokenMatrix {
        TokenMatrix::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn ratio_examples() {
        assert!((difficulty_ratio(0.76, 0.80).unwrap() - 0.95).abs() < 1e-12);
        assert_eq!(difficulty_ratio(0.8, 0.8).unwrap(), 1.0);
        assert_eq!(difficulty_ratio(0.7, 1.0).unwrap(), 0.70);
        assert!(matches!(difficulty_ratio(0.5, 0.0), Err(Error::DegeneratePositive(_))));
        assert!(matches!(difficulty_ratio(0.5, -0.1), Err(Error::DegeneratePositive(_))));
    }

    #[test]
    fn select_examples() {
        let p = pool(&[0.99, 0.93, 0.88, 0.72]);
        let s = select_negatives(&p, &interval(0.85, 0.96), 2).unwrap();
        assert_eq!(s.doc_ids, ["d1", "d2"]);
        assert!(!s.fallback);

        let s = select_negatives(&p, &interval(0.95, 0.995), 2).unwrap();
        assert_eq!(s.doc_ids, ["d0", "d1"]);
        assert!(s.fallback);

        let s = select_negatives(&p, &interval(0.0, 1.0), 2).unwrap();
        assert_eq!(s.doc_ids, ["d0", "d1"]);
        assert!(!s.fallback);
    }

    #[test]
    fn select_fills_from_above_when_nothing_below() {
        let p = pool(&[0.99, 0.97]);
        let s = select_negatives(&p, &interval(0.70, 0.85), 2).unwrap();
        assert_eq!(s.doc_ids, ["d1", "d0"]);
        assert!(s.fallback);
    }

    #[test]
    fn select_rejects_empty_pool() {
        let p = pool(&[]);
        assert!(matches!(
            select_negatives(&p, &interval(0.7, 0.9), 2),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn mining_small_corpus() {
        let corpus = vec![
            ("a".to_string(), tm(&[&[1.0, 0.0]])),
            ("b".to_string(), tm(&[&[0.8, 0.6]])),
            ("c".to_string(), tm(&[&[0.6, 0.8]])),
            ("d".to_string(), tm(&[&[0.0, 1.0]])),
        ];
        let q = tm(&[&[1.0, 0.0]]);
        let queries = [MiningQuery {
            id: "q",
            tokens: &q,
            positive: "a",
        }];
        let pools = build_candidate_pool(&queries, &corpus, 2).unwrap();
        let ids: Vec<_> = pools[0].entries.iter().map(|e| e.doc_id.as_str()).collect();
        assert_eq!(ids, ["b", "c"]);
        assert_eq!(pools[0].sim_pos, 1.0);
        assert!((pools[0].entries[0].ratio - 0.8).abs() < 1e-12);

        let pools = build_candidate_pool(&queries, &corpus, 50).unwrap();
        assert_eq!(pools[0].entries.len(), 3);

        let only = vec![("a".to_string(), tm(&[&[1.0, 0.0]]))];
        assert!(build_candidate_pool(&queries, &only, 5).unwrap()[0].entries.is_empty());

        let missing = [MiningQuery {
            id: "q",
            tokens: &q,
            positive: "zz",
        }];
        assert!(matches!(
            build_candidate_pool(&missing, &corpus, 2),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn mining_ties_break_by_doc_id() {
        let corpus = vec![
            ("p".to_string(), tm(&[&[1.0, 0.0]])),
            ("z".to_string(), tm(&[&[0.6, 0.8]])),
            ("m".to_string(), tm(&[&[0.6, 0.8]])),
        ];
        let q = tm(&[&[1.0, 0.0]]);
        let pools = build_candidate_pool(
            &[MiningQuery {
                id: "q",
                tokens: &q,
                positive: "p",
            }],
            &corpus,
            5,
        )
        .unwrap();
        let ids: Vec<_> = pools[0].entries.iter().map(|e| e.doc_id.as_str()).collect();
        assert_eq!(ids, ["m", "z"]);
    }

    #[test]
    fn negative_query_sampling() {
        let mut two = select_negative_queries(2, 2, 9).unwrap();
        two.sort();
        assert_eq!(two, [0, 1]);
        assert_eq!(
            select_negative_queries(20, 2, 42).unwrap(),
            select_negative_queries(20, 2, 42).unwrap()
        );
        let s = select_negative_queries(20, 2, 5).unwrap();
        assert_eq!(s.len(), 2);
        assert_ne!(s[0], s[1]);
        assert!(matches!(select_negative_queries(0, 2, 1), Err(Error::Data(_))));
    }

    #[test]
    fn pools_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pools.jsonl");
        let pools = vec![pool(&[0.9, 0.8])];
        write_pools(&path, &pools).unwrap();
        assert_eq!(read_pools(&path).unwrap(), pools);
    }
}
