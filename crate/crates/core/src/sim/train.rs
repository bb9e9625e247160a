//! Warm-up, pool mining and curriculum training on the toy encoder.

use std::collections::{BTreeSet, HashMap};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{decide_with_fallback, summarize_state, ChatBackend};
use crate::curriculum::{
    advance, linear_action, zone_for_bounds, ActionId, ActionSpace, ControllerState, DifficultyInterval, PhaseConfig,
};
use crate::error::{Error, Result};
use crate::losses::{
    infonce_inbatch, infonce_inbatch_grad, margin_term, total_loss, LossBreakdown, LossConfig, LossParts,
};
use crate::mining::{build_candidate_pool, select_negative_queries, select_negatives, CandidatePool, MiningQuery};
use crate::scoring::{argmax_routing, maxsim, maxsim_backward, ndcg_at_k, RankedList, TokenMatrix};

use super::data::SyntheticDataset;
use super::encoder::{Encoded, ToyEncoder};
use super::log::{PairRecord, TrajectoryLog, TrajectoryRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub warmup_lr: f64,
    pub batch_size: usize,
    pub warmup_batch_size: usize,
    /// Curriculum training steps after warm-up.
    pub steps: u64,
    pub d_out: usize,
    pub seed: u64,
    /// Held-out evaluation cadence in steps; 0 evaluates only at the start and end.
    pub eval_every: u64,
    /// Candidate pool size; `None` means `min(200, corpus - 1)`.
    pub pool_size: Option<usize>,
    /// Std-dev of the Gaussian noise in augmented views.
    pub aug_noise: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            warmup_lr: 0.05,
            batch_size: 8,
            warmup_batch_size: 8,
            steps: 660,
            d_out: 8,
            seed: 0,
            eval_every: 20,
            pool_size: None,
            aug_noise: 0.05,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite() && self.warmup_lr >= 0.0 && self.warmup_lr.is_finite()) {
            return Err(Error::Usage("learning rates must be finite and >= 0".into()));
        }
        if self.batch_size == 0 || self.warmup_batch_size == 0 || self.d_out == 0 {
            return Err(Error::Usage("batch sizes and d_out must be >= 1".into()));
        }
        if self.pool_size == Some(0) {
            return Err(Error::Usage("pool_size must be >= 1".into()));
        }
        if !(self.aug_noise >= 0.0 && self.aug_noise.is_finite()) {
            return Err(Error::Usage("aug_noise must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerMode {
    Oracle,
    Llm,
    Mock,
    FixedWindow,
    Linear,
}

impl ControllerMode {
    pub fn label(self) -> &'static str {
        match self {
            ControllerMode::Oracle => "oracle",
            ControllerMode::Llm => "llm",
            ControllerMode::Mock => "mock",
            ControllerMode::FixedWindow => "fixed-window",
            ControllerMode::Linear => "linear",
        }
    }

    fn reviews(self) -> bool {
        matches!(
            self,
            ControllerMode::Oracle | ControllerMode::Llm | ControllerMode::Mock
        )
    }
}

/// Everything [`run_training`] needs besides the data.
#[derive(Debug, Clone)]
pub struct TrainingSetup {
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub phases: PhaseConfig,
    pub space: ActionSpace,
    pub mode: ControllerMode,
    pub fixed_interval: (f64, f64),
    pub max_retries: u32,
}

impl TrainingSetup {
    pub fn new(mode: ControllerMode) -> Self {
        Self {
            loss: LossConfig::default(),
            train: TrainConfig::default(),
            phases: PhaseConfig::default(),
            space: crate::curriculum::default_action_space(),
            mode,
            fixed_interval: (0.80, 0.98),
            max_retries: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.train.validate()?;
        self.phases.validate()?;
        let (lo, hi) = self.fixed_interval;
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::Usage(format!(
                "fixed interval [{lo}, {hi}] is not a valid range"
            )));
        }
        Ok(())
    }
}

pub struct TrainingOutcome {
    pub log: TrajectoryLog,
    pub encoder: ToyEncoder,
    pub pools: Vec<CandidatePool>,
    /// Set when any Transition review found no usable anchor.
    pub calibration_failure: bool,
}

/// splitmix64 over `a` and `b`, used to derive per-step and per-pair seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn toy_encode(params: &ToyEncoder, raw: &TokenMatrix) -> Result<TokenMatrix> {
    params.encode(raw)
}

/// Augmented view: drop one token (when more than one) and add Gaussian noise.
pub fn augment_tokens(raw: &TokenMatrix, seed: u64, noise: f64) -> TokenMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drop = if raw.len() > 1 {
        Some(index::sample(&mut rng, raw.len(), 1).index(0))
    } else {
        None
    };
    let normal = Normal::new(0.0, noise).expect("noise validated as finite and >= 0");
    let rows = raw
        .rows()
        .enumerate()
        .filter(|(i, _)| Some(*i) != drop)
        .map(|(_, r)| r.iter().map(|x| x + normal.sample(&mut rng)).collect())
        .collect();
    TokenMatrix::from_rows(rows).expect("augmentation keeps at least one row")
}

/// Raw matrices of one training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairInputs {
    pub query: TokenMatrix,
    pub doc: TokenMatrix,
    pub doc_aug: TokenMatrix,
    pub neg_docs: Vec<TokenMatrix>,
    pub neg_docs_aug: Vec<TokenMatrix>,
    pub neg_queries: Vec<TokenMatrix>,
}

struct EncodedPair {
    query: Encoded,
    doc: Encoded,
    doc_aug: Encoded,
    neg_docs: Vec<Encoded>,
    neg_docs_aug: Vec<Encoded>,
    neg_queries: Vec<Encoded>,
}

fn encode_pair(enc: &ToyEncoder, p: &PairInputs) -> Result<EncodedPair> {
    let all = |ms: &[TokenMatrix]| ms.iter().map(|m| enc.encode_full(m)).collect::<Result<Vec<_>>>();
    Ok(EncodedPair {
        query: enc.encode_full(&p.query)?,
        doc: enc.encode_full(&p.doc)?,
        doc_aug: enc.encode_full(&p.doc_aug)?,
        neg_docs: all(&p.neg_docs)?,
        neg_docs_aug: all(&p.neg_docs_aug)?,
        neg_queries: all(&p.neg_queries)?,
    })
}

fn normalized(es: &[Encoded]) -> Vec<&TokenMatrix> {
    es.iter().map(|e| &e.normalized).collect()
}

/// Loss of one pair under the current parameters.
pub fn pair_loss(enc: &ToyEncoder, p: &PairInputs, cfg: &LossConfig) -> Result<LossBreakdown> {
    Ok(pair_loss_and_grad(enc, p, cfg)?.0)
}

/// Loss of one pair and its gradient with respect to the projection (row-major).
pub fn pair_loss_and_grad(enc: &ToyEncoder, p: &PairInputs, cfg: &LossConfig) -> Result<(LossBreakdown, Vec<f64>)> {
    let e = encode_pair(enc, p)?;
    let (q, d, da) = (&e.query.normalized, &e.doc.normalized, &e.doc_aug.normalized);
    let fo = margin_term(q, d, &normalized(&e.neg_docs), cfg.tau)?;
    let fa = margin_term(q, da, &normalized(&e.neg_docs_aug), cfg.tau)?;
    let qn = normalized(&e.neg_queries);
    let bo = margin_term(d, q, &qn, cfg.tau)?;
    let ba = margin_term(da, q, &qn, cfg.tau)?;
    let breakdown = total_loss(
        LossParts {
            forward_orig: fo.loss,
            forward_aug: fa.loss,
            backward_orig: bo.loss,
            backward_aug: ba.loss,
        },
        cfg,
    )?;

    let (a, b) = (cfg.alpha, cfg.beta);
    let mut g_q = fo.grad_anchor.clone();
    g_q.add_scaled(&fa.grad_anchor, b);
    g_q.add_scaled(&bo.grad_pos, a);
    g_q.add_scaled(&ba.grad_pos, a * b);
    let mut g_d = fo.grad_pos.clone();
    g_d.add_scaled(&bo.grad_anchor, a);
    let mut g_da = fa.grad_pos.clone();
    g_da.scale_in_place(b);
    g_da.add_scaled(&ba.grad_anchor, a * b);

    let mut acc = vec![0.0; enc.d_in() * enc.d_out()];
    enc.backprop(&e.query, &g_q, &mut acc);
    enc.backprop(&e.doc, &g_d, &mut acc);
    enc.backprop(&e.doc_aug, &g_da, &mut acc);
    for (n, g) in e.neg_docs.iter().zip(&fo.grad_negs) {
        enc.backprop(n, g, &mut acc);
    }
    for (n, g) in e.neg_docs_aug.iter().zip(&fa.grad_negs) {
        let mut g = g.clone();
        g.scale_in_place(b);
        enc.backprop(n, &g, &mut acc);
    }
    for ((n, go), ga) in e.neg_queries.iter().zip(&bo.grad_negs).zip(&ba.grad_negs) {
        let mut g = go.zeros_like();
        g.add_scaled(go, a);
        g.add_scaled(ga, a * b);
        enc.backprop(n, &g, &mut acc);
    }
    Ok((breakdown, acc))
}

/// Argmax routing of every MaxSim evaluated by [`pair_loss_and_grad`].
fn pair_routing(enc: &ToyEncoder, p: &PairInputs) -> Result<Vec<Vec<usize>>> {
    let e = encode_pair(enc, p)?;
    let (q, d, da) = (&e.query.normalized, &e.doc.normalized, &e.doc_aug.normalized);
    let mut pairs: Vec<(&TokenMatrix, &TokenMatrix)> = vec![(q, d), (q, da)];
    pairs.extend(e.neg_docs.iter().map(|n| (q, &n.normalized)));
    pairs.extend(e.neg_docs_aug.iter().map(|n| (q, &n.normalized)));
    for anchor in [d, da] {
        pairs.push((anchor, q));
        pairs.extend(e.neg_queries.iter().map(|n| (anchor, &n.normalized)));
    }
    pairs
        .into_iter()
        .map(|(x, y)| Ok(argmax_routing(x, y)?.into_iter().map(|r| r.0).collect()))
        .collect()
}

/// Largest entry-wise relative error between the analytic projection gradient
/// and central differences with step `epsilon`.
///
/// Entries whose perturbation changes any argmax routing are skipped. The
/// relative error of an entry is `|a - f| / max(|a|, |f|)`, and 0 when both vanish.
pub fn fd_gradient_check(enc: &ToyEncoder, p: &PairInputs, cfg: &LossConfig, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::Usage(format!("epsilon must be > 0, got {epsilon}")));
    }
    let (_, analytic) = pair_loss_and_grad(enc, p, cfg)?;
    let base_routing = pair_routing(enc, p)?;
    let mut worst = 0.0_f64;
    let mut probe = enc.clone();
    for (k, &a) in analytic.iter().enumerate() {
        let orig = probe.projection()[k];
        probe.projection_mut()[k] = orig + epsilon;
        let plus_routing = pair_routing(&probe, p)?;
        let plus = pair_loss(&probe, p, cfg)?.total;
        probe.projection_mut()[k] = orig - epsilon;
        let minus_routing = pair_routing(&probe, p)?;
        let minus = pair_loss(&probe, p, cfg)?.total;
        probe.projection_mut()[k] = orig;
        if plus_routing != base_routing || minus_routing != base_routing {
            continue;
        }
        let f = (plus - minus) / (2.0 * epsilon);
        let denom = a.abs().max(f.abs());
        if denom > 0.0 {
            worst = worst.max((a - f).abs() / denom);
        }
    }
    Ok(worst)
}

fn query_negatives(ds: &SyntheticDataset, qi: usize, picks: &[usize]) -> Result<Vec<TokenMatrix>> {
    let q = &ds.queries[qi];
    picks
        .iter()
        .map(|&k| {
            q.negatives
                .get(k)
                .ok_or_else(|| Error::Data(format!("query {} has no negative query #{k}", q.id)))
                .map(|_| ds.negative_query_matrix(qi, k))
        })
        .collect()
}

/// Rebuilds the raw inputs of a logged pair.
pub fn pair_inputs(
    ds: &SyntheticDataset,
    query_index: &HashMap<&str, usize>,
    doc_index: &HashMap<&str, usize>,
    rec: &PairRecord,
    aug_noise: f64,
) -> Result<PairInputs> {
    let qi = *query_index
        .get(rec.query_id.as_str())
        .ok_or_else(|| Error::Data(format!("unknown query {}", rec.query_id)))?;
    let doc_of = |id: &str| {
        doc_index
            .get(id)
            .map(|&i| ds.doc_matrix(i))
            .ok_or_else(|| Error::Data(format!("unknown document {id}")))
    };
    let doc = doc_of(&ds.queries[qi].positive)?;
    let neg_docs = rec.neg_docs.iter().map(|id| doc_of(id)).collect::<Result<Vec<_>>>()?;
    let doc_aug = augment_tokens(&doc, mix_seed(rec.aug_seed, 0), aug_noise);
    let neg_docs_aug = neg_docs
        .iter()
        .enumerate()
        .map(|(k, m)| augment_tokens(m, mix_seed(rec.aug_seed, k as u64 + 1), aug_noise))
        .collect();
    Ok(PairInputs {
        query: ds.query_matrix(qi),
        doc,
        doc_aug,
        neg_docs,
        neg_docs_aug,
        neg_queries: query_negatives(ds, qi, &rec.neg_queries)?,
    })
}

/// Lookup tables from ids to dataset indices.
pub struct DatasetIndex<'a> {
    pub queries: HashMap<&'a str, usize>,
    pub docs: HashMap<&'a str, usize>,
}

impl<'a> DatasetIndex<'a> {
    pub fn new(ds: &'a SyntheticDataset) -> Self {
        Self {
            queries: ds.queries.iter().enumerate().map(|(i, q)| (q.id.as_str(), i)).collect(),
            docs: ds.docs.iter().enumerate().map(|(i, d)| (d.id.as_str(), i)).collect(),
        }
    }
}

/// One gradient-descent step over a batch of planned pairs. Returns the batch-mean loss.
pub fn train_step(
    enc: &mut ToyEncoder,
    ds: &SyntheticDataset,
    idx: &DatasetIndex<'_>,
    batch: &[PairRecord],
    cfg: &LossConfig,
    lr: f64,
    aug_noise: f64,
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::Usage("empty training batch".into()));
    }
    let frozen: &ToyEncoder = enc;
    let results = batch
        .par_iter()
        .map(|rec| {
            let p = pair_inputs(ds, &idx.queries, &idx.docs, rec, aug_noise)?;
            pair_loss_and_grad(frozen, &p, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = results.len() as f64;
    let mut grad = vec![0.0; enc.d_in() * enc.d_out()];
    for (_, g) in &results {
        for (acc, x) in grad.iter_mut().zip(g) {
            *acc += x / n;
        }
    }
    let losses: Vec<LossBreakdown> = results.into_iter().map(|r| r.0).collect();
    enc.apply_gradient(&grad, lr);
    Ok(LossBreakdown::mean(&losses).expect("non-empty batch"))
}

/// Picks negatives for each query of a step's batch.
pub fn plan_batch(
    ds: &SyntheticDataset,
    pools: &HashMap<&str, &CandidatePool>,
    queries: &[usize],
    interval: &DifficultyInterval,
    k: usize,
    step_seed: u64,
) -> Result<Vec<PairRecord>> {
    queries
        .iter()
        .enumerate()
        .map(|(slot, &qi)| {
            let q = &ds.queries[qi];
            let pool = pools
                .get(q.id.as_str())
                .ok_or_else(|| Error::Data(format!("no candidate pool for query {}", q.id)))?;
            let sel = select_negatives(pool, interval, k)?;
            let pair_seed = mix_seed(step_seed, slot as u64);
            Ok(PairRecord {
                query_id: q.id.clone(),
                neg_docs: sel.doc_ids,
                neg_queries: select_negative_queries(q.negatives.len(), k, mix_seed(pair_seed, 1))?,
                aug_seed: mix_seed(pair_seed, 2),
                fallback: sel.fallback,
            })
        })
        .collect()
}

/// Mean nDCG@5 over `queries`, ranking the whole corpus.
pub fn evaluate_ndcg(enc: &ToyEncoder, ds: &SyntheticDataset, queries: &[usize]) -> Result<f64> {
    if queries.is_empty() {
        return Ok(0.0);
    }
    let docs = (0..ds.docs.len())
        .map(|i| enc.encode(&ds.doc_matrix(i)))
        .collect::<Result<Vec<_>>>()?;
    let scores = queries
        .par_iter()
        .map(|&qi| {
            let q = enc.encode(&ds.query_matrix(qi))?;
            let items = ds
                .docs
                .iter()
                .zip(&docs)
                .map(|(d, m)| Ok((d.id.clone(), maxsim(&q, m)?)))
                .collect::<Result<Vec<_>>>()?;
            let relevant = BTreeSet::from([ds.queries[qi].positive.clone()]);
            ndcg_at_k(&RankedList::from_scores(items)?, &relevant, 5)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarmupReport {
    pub batches: usize,
    pub loss_start: f64,
    pub loss_end: f64,
}

fn infonce_batch(
    enc: &ToyEncoder,
    ds: &SyntheticDataset,
    idx: &DatasetIndex<'_>,
    batch: &[usize],
    tau: f64,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    let qs = batch
        .iter()
        .map(|&qi| enc.encode_full(&ds.query_matrix(qi)))
        .collect::<Result<Vec<_>>>()?;
    let ds_ = batch
        .iter()
        .map(|&qi| {
            let di = idx.docs[ds.queries[qi].positive.as_str()];
            enc.encode_full(&ds.doc_matrix(di))
        })
        .collect::<Result<Vec<_>>>()?;
    let sim = qs
        .iter()
        .map(|q| {
            ds_.iter()
                .map(|d| maxsim(&q.normalized, &d.normalized))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let loss = infonce_inbatch(&sim, tau)?;
    if let Some(acc) = grad {
        let g = infonce_inbatch_grad(&sim, tau)?;
        let mut gq: Vec<TokenMatrix> = qs.iter().map(|e| e.normalized.zeros_like()).collect();
        let mut gd: Vec<TokenMatrix> = ds_.iter().map(|e| e.normalized.zeros_like()).collect();
        for i in 0..qs.len() {
            for j in 0..ds_.len() {
                let (a, b) = maxsim_backward(&qs[i].normalized, &ds_[j].normalized, g[i][j])?;
                gq[i].add_scaled(&a, 1.0);
                gd[j].add_scaled(&b, 1.0);
            }
        }
        for (e, g) in qs.iter().zip(&gq).chain(ds_.iter().zip(&gd)) {
            enc.backprop(e, g, acc);
        }
    }
    Ok(loss)
}

/// One epoch of in-batch InfoNCE over `queries`. The reported losses are
/// measured on the same batches before and after the epoch.
pub fn warmup_epoch(
    enc: &mut ToyEncoder,
    ds: &SyntheticDataset,
    queries: &[usize],
    tau: f64,
    lr: f64,
    batch_size: usize,
    seed: u64,
) -> Result<WarmupReport> {
    let idx = DatasetIndex::new(ds);
    let mut order = queries.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let batches: Vec<&[usize]> = order.chunks(batch_size.max(1)).collect();
    if batches.is_empty() {
        return Err(Error::Data("warm-up needs at least one training query".into()));
    }
    let measure = |enc: &ToyEncoder| -> Result<f64> {
        let total = batches
            .iter()
            .map(|b| infonce_batch(enc, ds, &idx, b, tau, None))
            .sum::<Result<f64>>()?;
        Ok(total / batches.len() as f64)
    };
    let loss_start = measure(enc)?;
    for b in &batches {
        let mut grad = vec![0.0; enc.d_in() * enc.d_out()];
        infonce_batch(enc, ds, &idx, b, tau, Some(&mut grad))?;
        enc.apply_gradient(&grad, lr);
    }
    Ok(WarmupReport {
        batches: batches.len(),
        loss_start,
        loss_end: measure(enc)?,
    })
}

/// Default pool size at toy scale.
pub fn default_pool_size(num_docs: usize) -> usize {
    crate::mining::DEFAULT_POOL_SIZE.min(num_docs.saturating_sub(1)).max(1)
}

/// Mines candidate pools with the current encoder. Queries whose positive
/// scores <= 0 cannot define a difficulty ratio and are returned separately.
pub fn mine_pools(
    enc: &ToyEncoder,
    ds: &SyntheticDataset,
    queries: &[usize],
    n: usize,
) -> Result<(Vec<CandidatePool>, Vec<usize>)> {
    let idx = DatasetIndex::new(ds);
    let corpus = ds
        .docs
        .iter()
        .enumerate()
        .map(|(i, d)| Ok((d.id.clone(), enc.encode(&ds.doc_matrix(i))?)))
        .collect::<Result<Vec<_>>>()?;
    let encoded = queries
        .iter()
        .map(|&qi| enc.encode(&ds.query_matrix(qi)))
        .collect::<Result<Vec<_>>>()?;
    let mut keep = Vec::new();
    let mut skipped = Vec::new();
    for (&qi, q) in queries.iter().zip(&encoded) {
        let pos = &corpus[idx.docs[ds.queries[qi].positive.as_str()]].1;
        if maxsim(q, pos)? > 0.0 {
            keep.push((qi, q));
        } else {
            skipped.push(qi);
        }
    }
    let mq: Vec<MiningQuery<'_>> = keep
        .iter()
        .map(|(qi, q)| MiningQuery {
            id: &ds.queries[*qi].id,
            tokens: q,
            positive: &ds.queries[*qi].positive,
        })
        .collect();
    Ok((build_candidate_pool(&mq, &corpus, n)?, skipped))
}

fn fixed_interval(lo: f64, hi: f64) -> DifficultyInterval {
    DifficultyInterval {
        action: ActionId(0),
        low: lo,
        high: hi,
        zone: zone_for_bounds(lo, hi),
    }
}

/// Curriculum training from a warmed-up encoder and mined pools.
/// Appends step, decision and eval records to `log`; returns whether a
/// calibration failure occurred.
pub fn curriculum_train(
    enc: &mut ToyEncoder,
    ds: &SyntheticDataset,
    pools: &[CandidatePool],
    setup: &TrainingSetup,
    mut backend: Option<&mut dyn ChatBackend>,
    log: &mut TrajectoryLog,
) -> Result<bool> {
    setup.validate()?;
    if setup.mode.reviews() && setup.mode != ControllerMode::Oracle && backend.is_none() {
        return Err(Error::Usage(format!(
            "controller mode {} needs a chat backend",
            setup.mode.label()
        )));
    }
    if pools.is_empty() {
        return Err(Error::Data("no candidate pools to train from".into()));
    }
    let idx = DatasetIndex::new(ds);
    let pool_map: HashMap<&str, &CandidatePool> = pools.iter().map(|p| (p.query_id.as_str(), p)).collect();
    let trainable: Vec<usize> = pools
        .iter()
        .map(|p| {
            idx.queries
                .get(p.query_id.as_str())
                .copied()
                .ok_or_else(|| Error::Data(format!("pool references unknown query {}", p.query_id)))
        })
        .collect::<Result<_>>()?;
    let heldout = ds.heldout_queries();
    let tc = &setup.train;
    let k = setup.loss.k;
    let mut state = ControllerState::new(setup.phases);
    let mut window: Vec<f64> = Vec::new();
    let mut calibration_failure = false;

    for step in 0..tc.steps {
        let (interval, action, phase) = match setup.mode {
            ControllerMode::FixedWindow => (
                fixed_interval(setup.fixed_interval.0, setup.fixed_interval.1),
                None,
                None,
            ),
            ControllerMode::Linear => {
                let a = linear_action(step, tc.steps, &setup.space);
                (*setup.space.interval(a), Some(a), None)
            }
            _ => (
                *setup.space.interval(state.current_action),
                Some(state.current_action),
                Some(state.phase),
            ),
        };
        let step_seed = mix_seed(tc.seed, step);
        let mut rng = ChaCha8Rng::seed_from_u64(step_seed);
        let picks = index::sample(&mut rng, trainable.len(), tc.batch_size.min(trainable.len()));
        let batch_q: Vec<usize> = picks.iter().map(|i| trainable[i]).collect();
        let batch = plan_batch(ds, &pool_map, &batch_q, &interval, k, step_seed)?;
        let loss = train_step(enc, ds, &idx, &batch, &setup.loss, tc.lr, tc.aug_noise)?;
        log.push(TrajectoryRecord::Step {
            step,
            phase,
            action,
            interval: (interval.low, interval.high),
            loss,
            fallback_pairs: batch.iter().filter(|p| p.fallback).count(),
            pairs: batch,
        });

        if setup.mode.reviews() {
            window.push(loss.total);
            if window.len() as u64 >= state.window_len() {
                let report = summarize_state(&state, &window, &setup.space)?;
                let outcome = decide_with_fallback(
                    &state,
                    &report,
                    &setup.space,
                    backend.as_mut().map(|b| &mut **b as &mut dyn ChatBackend),
                    setup.max_retries,
                );
                calibration_failure |= outcome.decision.calibration_failure;
                let next = advance(&state, &outcome.decision, &report);
                log.push(TrajectoryRecord::Decision {
                    step: step + 1,
                    from: state.current_action,
                    to: outcome.decision.next_action,
                    decision: outcome.decision,
                    attempts: outcome.attempts,
                    failures: outcome.failures,
                    state,
                    report,
                });
                state = next;
                window.clear();
            }
        }
        if tc.eval_every > 0 && (step + 1) % tc.eval_every == 0 && step + 1 < tc.steps {
            log.push(TrajectoryRecord::Eval {
                step: step + 1,
                label: "periodic".into(),
                ndcg_at_5: evaluate_ndcg(enc, ds, &heldout)?,
            });
        }
    }
    log.push(TrajectoryRecord::Eval {
        step: tc.steps,
        label: "final".into(),
        ndcg_at_5: evaluate_ndcg(enc, ds, &heldout)?,
    });
    Ok(calibration_failure)
}

/// Full pipeline: warm-up epoch, pool mining, curriculum training.
pub fn run_training(
    ds: &SyntheticDataset,
    setup: &TrainingSetup,
    backend: Option<&mut dyn ChatBackend>,
) -> Result<TrainingOutcome> {
    setup.validate()?;
    ds.validate()?;
    let tc = &setup.train;
    let mut enc = ToyEncoder::random(ds.config.d_in, tc.d_out, mix_seed(tc.seed, u64::MAX));
    let train = ds.train_queries();
    let heldout = ds.heldout_queries();
    let mut log = TrajectoryLog::default();

    let initial = evaluate_ndcg(&enc, ds, &heldout)?;
    let warm = warmup_epoch(
        &mut enc,
        ds,
        &train,
        setup.loss.tau,
        tc.warmup_lr,
        tc.warmup_batch_size,
        tc.seed,
    )?;
    let post = evaluate_ndcg(&enc, ds, &heldout)?;
    let pool_size = tc.pool_size.unwrap_or_else(|| default_pool_size(ds.docs.len()));
    let (pools, skipped) = mine_pools(&enc, ds, &train, pool_size)?;

    log.push(TrajectoryRecord::Meta {
        seed: tc.seed,
        mode: setup.mode.label().into(),
        steps: tc.steps,
        train_queries: train.len(),
        heldout_queries: heldout.len(),
        skipped_queries: skipped.len(),
        pool_size,
    });
    log.push(TrajectoryRecord::Eval {
        step: 0,
        label: "initial".into(),
        ndcg_at_5: initial,
    });
    log.push(TrajectoryRecord::Warmup {
        batches: warm.batches,
        loss_start: warm.loss_start,
        loss_end: warm.loss_end,
    });
    log.push(TrajectoryRecord::Eval {
        step: 0,
        label: "post_warmup".into(),
        ndcg_at_5: post,
    });

    let calibration_failure = curriculum_train(&mut enc, ds, &pools, setup, backend, &mut log)?;
    Ok(TrainingOutcome {
        log,
        encoder: enc,
        pools,
        calibration_failure,
    })
}
