//! Synthetic retrieval corpus with controllable hard negatives.
//!
//! Raw tokens have `signal_dims` topic-bearing coordinates followed by
//! nuisance coordinates. Queries copy a subset of their positive's tokens;
//! query noise hits the nuisance coordinates harder, so an encoder that
//! learns to ignore them retrieves better. Near-duplicate distractors are
//! perturbed copies of other documents at graded noise levels.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hnqs::VARIANT_COUNT;
use crate::scoring::TokenMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Corpus size, distractors included.
    pub num_docs: usize,
    pub num_topics: usize,
    pub tokens_min: usize,
    pub tokens_max: usize,
    pub query_tokens_min: usize,
    pub query_tokens_max: usize,
    pub d_in: usize,
    /// Leading coordinates that carry topic signal; the rest are nuisance.
    pub signal_dims: usize,
    /// Spread of document tokens around their topic direction.
    pub token_spread: f64,
    /// Scale of nuisance coordinates in documents.
    pub nuisance_scale: f64,
    /// Query noise on signal coordinates.
    pub noise_scale: f64,
    /// Query noise multiplier applied on nuisance coordinates.
    pub nuisance_noise_gain: f64,
    /// Fraction of the corpus made of near-duplicate distractors.
    pub distractor_rate: f64,
    pub distractor_noise_min: f64,
    pub distractor_noise_max: f64,
    pub heldout_fraction: f64,
    /// Synthesized negative queries per query.
    pub negative_queries: usize,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            num_docs: 200,
            num_topics: 16,
            tokens_min: 4,
            tokens_max: 8,
            query_tokens_min: 2,
            query_tokens_max: 4,
            d_in: 12,
            signal_dims: 8,
            token_spread: 0.6,
            nuisance_scale: 0.6,
            noise_scale: 0.25,
            nuisance_noise_gain: 3.0,
            distractor_rate: 0.2,
            distractor_noise_min: 0.1,
            distractor_noise_max: 0.8,
            heldout_fraction: 0.25,
            negative_queries: VARIANT_COUNT,
            seed: 0,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Usage(m));
        if self.num_docs < 2 {
            return bad(format!("num_docs must be >= 2, got {}", self.num_docs));
        }
        if self.tokens_min == 0 || self.tokens_min > self.tokens_max {
            return bad("need 1 <= tokens_min <= tokens_max".into());
        }
        if self.query_tokens_min == 0 || self.query_tokens_min > self.query_tokens_max {
            return bad("need 1 <= query_tokens_min <= query_tokens_max".into());
        }
        if self.signal_dims == 0 || self.signal_dims > self.d_in {
            return bad("need 1 <= signal_dims <= d_in".into());
        }
        if self.num_topics == 0 {
            return bad("num_topics must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.distractor_rate) || !(0.0..1.0).contains(&self.heldout_fraction) {
            return bad("distractor_rate and heldout_fraction must lie in [0, 1)".into());
        }
        if self.negative_queries == 0 {
            return bad("negative_queries must be >= 1".into());
        }
        if !(self.distractor_noise_min > 0.0 && self.distractor_noise_min <= self.distractor_noise_max) {
            return bad("need 0 < distractor_noise_min <= distractor_noise_max".into());
        }
        for v in [
            self.token_spread,
            self.nuisance_scale,
            self.noise_scale,
            self.nuisance_noise_gain,
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad("noise scales must be finite and >= 0".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDoc {
    pub id: String,
    pub topic: usize,
    /// Id of the document this one near-duplicates, if it is a distractor.
    pub duplicate_of: Option<String>,
    pub tokens: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticQuery {
    pub id: String,
    pub positive: String,
    pub question: String,
    pub heldout: bool,
    pub tokens: Vec<Vec<f64>>,
    /// Raw tokens of the synthesized negative queries.
    pub negatives: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub config: DataConfig,
    pub docs: Vec<SyntheticDoc>,
    pub queries: Vec<SyntheticQuery>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn unit(rng: &mut ChaCha8Rng, dims: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dims).map(|_| normal(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

pub fn gen_synthetic_dataset(config: &DataConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let c = config;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let topics: Vec<Vec<f64>> = (0..c.num_topics).map(|_| unit(&mut rng, c.signal_dims)).collect();
    let nuisance_dims = c.d_in - c.signal_dims;

    let num_distractors = ((c.num_docs as f64 * c.distractor_rate).round() as usize).min(c.num_docs - 1);
    let num_base = c.num_docs - num_distractors;

    let mut docs: Vec<SyntheticDoc> = Vec::with_capacity(c.num_docs);
    for i in 0..num_base {
        let topic = rng.gen_range(0..c.num_topics);
        let len = rng.gen_range(c.tokens_min..=c.tokens_max);
        let tokens = (0..len)
            .map(|_| {
                let mut t: Vec<f64> = topics[topic]
                    .iter()
                    .map(|x| x + c.token_spread * normal(&mut rng))
                    .collect();
                t.extend((0..nuisance_dims).map(|_| c.nuisance_scale * normal(&mut rng)));
                t
            })
            .collect();
        docs.push(SyntheticDoc {
            id: format!("doc{i:04}"),
            topic,
            duplicate_of: None,
            tokens,
        });
    }
    for k in 0..num_distractors {
        let src = docs[rng.gen_range(0..num_base)].clone();
        let level = if num_distractors > 1 {
            c.distractor_noise_min
                + (c.distractor_noise_max - c.distractor_noise_min) * k as f64 / (num_distractors - 1) as f64
        } else {
            c.distractor_noise_min
        };
        let tokens = src
            .tokens
            .iter()
            .map(|t| t.iter().map(|x| x + level * normal(&mut rng)).collect())
            .collect();
        docs.push(SyntheticDoc {
            id: format!("doc{:04}", num_base + k),
            topic: src.topic,
            duplicate_of: Some(src.id.clone()),
            tokens,
        });
    }

    let num_heldout = (num_base as f64 * c.heldout_fraction).round() as usize;
    let mut order: Vec<usize> = (0..num_base).collect();
    order.shuffle(&mut rng);
    let mut heldout = vec![false; num_base];
    order[..num_heldout].iter().for_each(|&i| heldout[i] = true);

    let noisy = |rng: &mut ChaCha8Rng, t: &[f64]| -> Vec<f64> {
        t.iter()
            .enumerate()
            .map(|(d, x)| {
                let gain = if d < c.signal_dims { 1.0 } else { c.nuisance_noise_gain };
                x + c.noise_scale * gain * normal(rng)
            })
            .collect()
    };

    let mut queries = Vec::with_capacity(num_base);
    for i in 0..num_base {
        let doc = &docs[i];
        let len = rng
            .gen_range(c.query_tokens_min..=c.query_tokens_max)
            .min(doc.tokens.len());
        let picked = index::sample(&mut rng, doc.tokens.len(), len).into_vec();
        let tokens: Vec<Vec<f64>> = picked.iter().map(|&j| noisy(&mut rng, &doc.tokens[j])).collect();

        // Negative queries: a query of the same length read off another
        // document, drawn from the same topic when one exists.
        let same_topic: Vec<usize> = (0..num_base)
            .filter(|&o| o != i && docs[o].topic == doc.topic)
            .collect();
        let negatives = (0..c.negative_queries)
            .map(|_| {
                let other = if !same_topic.is_empty() && rng.gen_bool(0.5) {
                    same_topic[rng.gen_range(0..same_topic.len())]
                } else if num_base > 1 {
                    (i + 1 + rng.gen_range(0..num_base - 1)) % num_base
                } else {
                    i
                };
                let src = &docs[other].tokens;
                (0..tokens.len())
                    .map(|_| {
                        let j = rng.gen_range(0..src.len());
                        noisy(&mut rng, &src[j])
                    })
                    .collect()
            })
            .collect();
        queries.push(SyntheticQuery {
            id: format!("q{i:04}"),
            positive: doc.id.clone(),
            question: format!("What does document {} report about topic {}?", doc.id, doc.topic),
            heldout: heldout[i],
            tokens,
            negatives,
        });
    }
    Ok(SyntheticDataset {
        config: c.clone(),
        docs,
        queries,
    })
}

impl SyntheticDataset {
    pub fn doc_matrix(&self, i: usize) -> TokenMatrix {
        TokenMatrix::from_rows(self.docs[i].tokens.clone()).expect("generated docs are well formed")
    }

    pub fn query_matrix(&self, i: usize) -> TokenMatrix {
        TokenMatrix::from_rows(self.queries[i].tokens.clone()).expect("generated queries are well formed")
    }

    pub fn negative_query_matrix(&self, i: usize, k: usize) -> TokenMatrix {
        TokenMatrix::from_rows(self.queries[i].negatives[k].clone()).expect("generated negatives are well formed")
    }

    pub fn doc_index(&self, id: &str) -> Option<usize> {
        self.docs.iter().position(|d| d.id == id)
    }

    pub fn train_queries(&self) -> Vec<usize> {
        (0..self.queries.len()).filter(|&i| !self.queries[i].heldout).collect()
    }

    pub fn heldout_queries(&self) -> Vec<usize> {
        (0..self.queries.len()).filter(|&i| self.queries[i].heldout).collect()
    }

    /// Checks structural consistency of a dataset read from disk.
    pub fn validate(&self) -> Result<()> {
        let d = self.config.d_in;
        let bad_shape = |toks: &Vec<Vec<f64>>| toks.is_empty() || toks.iter().any(|t| t.len() != d);
        if let Some(doc) = self.docs.iter().find(|doc| bad_shape(&doc.tokens)) {
            return Err(Error::Data(format!("document {} has malformed tokens", doc.id)));
        }
        for q in &self.queries {
            if bad_shape(&q.tokens) || q.negatives.is_empty() || q.negatives.iter().any(bad_shape) {
                return Err(Error::Data(format!("query {} has malformed tokens", q.id)));
            }
            if self.doc_index(&q.positive).is_none() {
                return Err(Error::Data(format!(
                    "query {} references missing document {}",
                    q.id, q.positive
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        serde_json::to_writer(BufWriter::new(File::create(path)?), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ds: Self = serde_json::from_reader(BufReader::new(File::open(path)?)).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        ds.validate()?;
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{l2_normalize, maxsim};

    #[test]
    fn deterministic_from_seed() {
        let cfg = DataConfig {
            num_docs: 30,
            seed: 5,
            ..Default::default()
        };
        assert_eq!(
            gen_synthetic_dataset(&cfg).unwrap(),
            gen_synthetic_dataset(&cfg).unwrap()
        );
        let other = DataConfig { seed: 6, ..cfg.clone() };
        assert_ne!(
            gen_synthetic_dataset(&cfg).unwrap(),
            gen_synthetic_dataset(&other).unwrap()
        );
    }

    #[test]
    fn minimal_dataset() {
        let cfg = DataConfig {
            num_docs: 2,
            ..Default::default()
        };
        let ds = gen_synthetic_dataset(&cfg).unwrap();
        assert_eq!(ds.docs.len(), 2);
        assert!(!ds.queries.is_empty());
        ds.validate().unwrap();
        assert!(matches!(
            gen_synthetic_dataset(&DataConfig {
                num_docs: 1,
                ..Default::default()
            }),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn noiseless_queries_retrieve_their_positive() {
        // Brute-force oracle: identity encoder, full corpus scan.
        let cfg = DataConfig {
            num_docs: 80,
            noise_scale: 0.0,
            seed: 3,
            ..Default::default()
        };
        let ds = gen_synthetic_dataset(&cfg).unwrap();
        let docs: Vec<TokenMatrix> = (0..ds.docs.len()).map(|i| l2_normalize(&ds.doc_matrix(i))).collect();
        for (qi, q) in ds.queries.iter().enumerate() {
            let qm = l2_normalize(&ds.query_matrix(qi));
            let pos = ds.doc_index(&q.positive).unwrap();
            let s_pos = maxsim(&qm, &docs[pos]).unwrap();
            for (j, d) in docs.iter().enumerate() {
                if j != pos {
                    assert!(maxsim(&qm, d).unwrap() < s_pos, "query {} beaten by doc {j}", q.id);
                }
            }
        }
    }

    #[test]
    fn split_and_negatives() {
        let ds = gen_synthetic_dataset(&DataConfig::default()).unwrap();
        assert_eq!(ds.docs.len(), 200);
        assert_eq!(ds.docs.iter().filter(|d| d.duplicate_of.is_some()).count(), 40);
        assert_eq!(ds.heldout_queries().len(), 40);
        assert!(ds.queries.iter().all(|q| q.negatives.len() == VARIANT_COUNT));
        assert!(ds.queries.iter().all(|q| q.negatives.iter().all(|n| *n != q.tokens)));
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.json");
        let ds = gen_synthetic_dataset(&DataConfig {
            num_docs: 10,
            ..Default::default()
        })
        .unwrap();
        ds.save(&path).unwrap();
        assert_eq!(SyntheticDataset::load(&path).unwrap(), ds);
        std::fs::write(&path, "{not json").unwrap();
        assert!(matches!(SyntheticDataset::load(&path), Err(Error::Parse { .. })));
    }
}
