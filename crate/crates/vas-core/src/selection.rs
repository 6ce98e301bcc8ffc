//! Subset-selection pipelines: top-k, threshold, two-stage quality plus
//! alignment filtering, and dynamic greedy removal.
//!
//! Tie handling is uniform across every pipeline: when two samples score
//! equally, the smaller original index is kept. Index lists are always
//! returned strictly ascending in original coordinates.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::embed::{EmbeddingMatrix, PairedEmbeddings};
use crate::error::Error;
use crate::linalg::Mat;
use crate::scoring::{
    clip_scores, vas_scores, vas_subset_chunk, MomentMatrix, ScoreVector, CHUNK_ROWS,
};
use crate::Result;

/// Rebuild the maintained moment from scratch every this many greedy rounds.
pub const MOMENT_RECOMPUTE_INTERVAL: usize = 16;

/// One pipeline stage: how many samples went in, how many survived, and the
/// effective cut.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub name: String,
    pub input_n: usize,
    pub output_n: usize,
    pub threshold_used: Option<f64>,
    pub objective_value: Option<f64>,
}

/// Ordered selection outcome plus per-stage provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    kept: Vec<usize>,
    stages: Vec<StageRecord>,
    target_n: usize,
}

impl SelectionResult {
    /// Validating constructor; `kept` must be strictly ascending and within
    /// `0..source_n`.
    pub fn new(
        kept: Vec<usize>,
        stages: Vec<StageRecord>,
        target_n: usize,
        source_n: usize,
    ) -> Result<Self> {
        for w in kept.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidShape(format!(
                    "kept indices not strictly ascending at {} >= {}",
                    w[0], w[1]
                )));
            }
        }
        if let Some(&last) = kept.last() {
            if last >= source_n {
                return Err(Error::InvalidShape(format!(
                    "kept index {last} out of range for n={source_n}"
                )));
            }
        }
        if target_n > 0 && kept.len() != target_n {
            return Err(Error::InvalidShape(format!(
                "kept {} samples but target is {target_n}",
                kept.len()
            )));
        }
        if stages.is_empty() {
            return Err(Error::InvalidShape("stages must be non-empty".into()));
        }
        Ok(SelectionResult { kept, stages, target_n })
    }

    /// The identity selection over `0..n`.
    pub fn full(n: usize) -> Self {
        SelectionResult {
            kept: (0..n).collect(),
            stages: vec![StageRecord {
                name: String::from("input"),
                input_n: n,
                output_n: n,
                threshold_used: None,
                objective_value: None,
            }],
            target_n: n,
        }
    }

    #[inline]
    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn stages(&self) -> &[StageRecord] {
        &self.stages
    }

    pub fn target_n(&self) -> usize {
        self.target_n
    }
}

/// Per-round record of a dynamic greedy run.
#[derive(Debug, Clone, PartialEq)]
pub struct VasDStep {
    pub t: usize,
    pub n_t: usize,
    pub removed: usize,
    pub tr_sigma_sq: f64,
}

/// Trace of the full greedy schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct VasDTrace {
    pub steps: Vec<VasDStep>,
    pub tau: usize,
}

/// Stage-1 cut rule for the two-stage filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KeepRule {
    /// Keep the top `round(fraction * n)` samples by score.
    Fraction(f64),
    /// Keep the top `count` samples by score.
    Count(usize),
    /// Keep every sample with score >= threshold.
    Threshold(f64),
}

/// Positions of the `k` largest values, ties broken toward smaller index,
/// returned ascending.
fn top_k_positions(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&i, &j| {
        scores[j].partial_cmp(&scores[i]).expect("scores are finite").then(i.cmp(&j))
    });
    let mut kept = order[..k].to_vec();
    kept.sort_unstable();
    kept
}

/// Keep the `k` highest-scoring samples.
///
/// For a fixed score vector the maximizer of any sum of kept scores over
/// size-`k` subsets is exactly the top-`k` set, so this is the optimal
/// selection for additive objectives.
pub fn select_top_k(scores: &ScoreVector, k: usize) -> Result<SelectionResult> {
    let n = scores.len();
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    let kept = top_k_positions(scores.values(), k);
    let objective: f64 = kept.iter().map(|&i| scores.values()[i]).sum();
    let cutoff = kept
        .iter()
        .map(|&i| scores.values()[i])
        .fold(f64::INFINITY, f64::min);
    let stage = StageRecord {
        name: String::from("top_k"),
        input_n: n,
        output_n: k,
        threshold_used: Some(cutoff),
        objective_value: Some(objective),
    };
    SelectionResult::new(kept, vec![stage], k, n)
}

/// Keep every sample scoring at least `min_score`. May return an empty set;
/// downstream stages are expected to reject empty input.
pub fn select_by_threshold(scores: &ScoreVector, min_score: f64) -> Result<SelectionResult> {
    if !min_score.is_finite() {
        return Err(Error::NonFiniteParam("min_score"));
    }
    let kept: Vec<usize> = scores
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= min_score)
        .map(|(i, _)| i)
        .collect();
    let objective: f64 = kept.iter().map(|&i| scores.values()[i]).sum();
    let stage = StageRecord {
        name: String::from("threshold"),
        input_n: scores.len(),
        output_n: kept.len(),
        threshold_used: Some(min_score),
        objective_value: Some(objective),
    };
    SelectionResult::new(kept, vec![stage], 0, scores.len())
}

/// Two-stage pipeline: drop low cosine-similarity pairs, then keep the
/// samples whose vision embeddings best align with the prior moment.
///
/// The final kept list is expressed in original indices; both stages are
/// recorded.
pub fn two_stage_filter(
    pairs: &PairedEmbeddings<'_>,
    clip_keep: KeepRule,
    vas_target: usize,
    prior: &MomentMatrix,
) -> Result<SelectionResult> {
    let n = pairs.n();
    if prior.d() != pairs.vision().d() {
        return Err(Error::DimMismatch { left: prior.d(), right: pairs.vision().d() });
    }
    let clip = clip_scores(pairs)?;
    let (stage1_kept, stage1_threshold) = match clip_keep {
        KeepRule::Fraction(f) => {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::ConfigInvalid(format!(
                    "clip keep fraction {f} outside (0, 1]"
                )));
            }
            let k = (libm::round(f * n as f64) as usize).clamp(1, n);
            (top_k_positions(clip.values(), k), None)
        }
        KeepRule::Count(k) => {
            if k == 0 || k > n {
                return Err(Error::KOutOfRange { k, n });
            }
            (top_k_positions(clip.values(), k), None)
        }
        KeepRule::Threshold(t) => {
            if !t.is_finite() {
                return Err(Error::NonFiniteParam("clip threshold"));
            }
            let kept: Vec<usize> = clip
                .values()
                .iter()
                .enumerate()
                .filter(|(_, &s)| s >= t)
                .map(|(i, _)| i)
                .collect();
            (kept, Some(t))
        }
    };
    if stage1_kept.is_empty() {
        return Err(Error::EmptyStage("clip_filter"));
    }
    if vas_target == 0 {
        return Err(Error::KOutOfRange { k: 0, n: stage1_kept.len() });
    }
    if vas_target > stage1_kept.len() {
        return Err(Error::TargetExceedsStage1 {
            target: vas_target,
            stage1: stage1_kept.len(),
        });
    }

    let stage1_cut = stage1_threshold.unwrap_or_else(|| {
        stage1_kept.iter().map(|&i| clip.values()[i]).fold(f64::INFINITY, f64::min)
    });
    let stage1 = StageRecord {
        name: String::from("clip_filter"),
        input_n: n,
        output_n: stage1_kept.len(),
        threshold_used: Some(stage1_cut),
        objective_value: Some(stage1_kept.iter().map(|&i| clip.values()[i]).sum()),
    };

    let survivors = pairs.vision().gather(&stage1_kept)?;
    let vas = vas_scores(&survivors, &survivors, prior)?;
    let local_kept = top_k_positions(vas.values(), vas_target);
    let kept: Vec<usize> = local_kept.iter().map(|&p| stage1_kept[p]).collect();
    let stage2 = StageRecord {
        name: String::from("vas_filter"),
        input_n: stage1_kept.len(),
        output_n: vas_target,
        threshold_used: Some(
            local_kept.iter().map(|&p| vas.values()[p]).fold(f64::INFINITY, f64::min),
        ),
        objective_value: Some(local_kept.iter().map(|&p| vas.values()[p]).sum()),
    };

    SelectionResult::new(kept, vec![stage1, stage2], vas_target, n)
}

/// Greedy-removal size schedule: `len() == tau + 1`, starts at `n0`, ends at
/// `target`. Intermediate sizes follow the linear ramp rounded to nearest,
/// clamped to be decreasing (strictly while above `target`).
pub fn vasd_schedule(n0: usize, target: usize, tau: usize) -> Vec<usize> {
    debug_assert!(target <= n0);
    debug_assert!(tau >= 1);
    let mut sched = Vec::with_capacity(tau + 1);
    sched.push(n0);
    let mut prev = n0;
    for t in 1..=tau {
        let raw = n0 as f64 - (t as f64 / tau as f64) * (n0 - target) as f64;
        let mut v = libm::round(raw) as usize;
        if v >= prev && prev > target {
            v = prev - 1;
        }
        v = v.clamp(target, prev);
        sched.push(v);
        prev = v;
    }
    sched[tau] = target;
    sched
}

/// Scores a subset of rows against a raw moment matrix. Implementations may
/// run data-parallel provided chunk boundaries and per-chunk results match
/// the sequential [`SequentialScorer`].
pub trait SubsetScorer {
    fn score_subset(
        &mut self,
        emb: &EmbeddingMatrix,
        subset: &[usize],
        sigma: &Mat,
        out: &mut [f64],
    );
}

/// Single-threaded reference scorer; chunks the subset exactly like the
/// parallel drivers do.
pub struct SequentialScorer;

impl SubsetScorer for SequentialScorer {
    fn score_subset(
        &mut self,
        emb: &EmbeddingMatrix,
        subset: &[usize],
        sigma: &Mat,
        out: &mut [f64],
    ) {
        for (idx_chunk, out_chunk) in subset.chunks(CHUNK_ROWS).zip(out.chunks_mut(CHUNK_ROWS)) {
            vas_subset_chunk(emb, idx_chunk, sigma, out_chunk);
        }
    }
}

/// Unnormalized sum of outer products over the given rows.
pub fn subset_outer_sum(emb: &EmbeddingMatrix, subset: &[usize]) -> Mat {
    let d = emb.d();
    let mut m = Mat::zeros(d, d);
    for &r in subset {
        let row = emb.row(r);
        for (j, &fj) in row.iter().enumerate() {
            let s = fj as f64;
            if s == 0.0 {
                continue;
            }
            let dst = &mut m.data_mut()[j * d..(j + 1) * d];
            for (dv, &fv) in dst.iter_mut().zip(row.iter()) {
                *dv += s * fv as f64;
            }
        }
    }
    m
}

fn subtract_outer(emb: &EmbeddingMatrix, row: usize, m: &mut Mat) {
    let d = emb.d();
    let r = emb.row(row);
    for (j, &fj) in r.iter().enumerate() {
        let s = fj as f64;
        if s == 0.0 {
            continue;
        }
        let dst = &mut m.data_mut()[j * d..(j + 1) * d];
        for (dv, &fv) in dst.iter_mut().zip(r.iter()) {
            *dv -= s * fv as f64;
        }
    }
}

fn trace_of_square(m: &Mat) -> f64 {
    let n = m.rows();
    let mut total = 0.0;
    for j in 0..n {
        for k in 0..n {
            total += m.get(j, k) * m.get(k, j);
        }
    }
    total
}

/// One greedy round: score the current set against the frozen moment and
/// keep the `keep_n` highest. Returns (kept, removed), both ascending.
pub fn vasd_round(
    emb: &EmbeddingMatrix,
    current: &[usize],
    moment: &Mat,
    keep_n: usize,
    scorer: &mut dyn SubsetScorer,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut scores = vec![0.0f64; current.len()];
    scorer.score_subset(emb, current, moment, &mut scores);
    if let Some(p) = scores.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteScore(current[p]));
    }
    let mut order: Vec<usize> = (0..current.len()).collect();
    order.sort_unstable_by(|&p, &q| {
        scores[q].partial_cmp(&scores[p]).expect("finite").then(current[p].cmp(&current[q]))
    });
    let mut kept: Vec<usize> = order[..keep_n].iter().map(|&p| current[p]).collect();
    let mut removed: Vec<usize> = order[keep_n..].iter().map(|&p| current[p]).collect();
    kept.sort_unstable();
    removed.sort_unstable();
    Ok((kept, removed))
}

/// Dynamic greedy removal with the default sequential scorer.
pub fn vas_d(
    emb: &EmbeddingMatrix,
    input_set: &SelectionResult,
    target_n: usize,
    tau: usize,
) -> Result<(SelectionResult, VasDTrace)> {
    vas_d_with(emb, input_set, target_n, tau, &mut SequentialScorer)
}

/// Dynamic greedy removal.
///
/// Runs `tau` rounds. Each round freezes the sum-of-outer-products moment of
/// the surviving set, scores every survivor by its quadratic form against
/// that moment, and drops the lowest scorers down to the scheduled size.
/// The moment is maintained by rank-1 downdates and rebuilt from scratch
/// every [`MOMENT_RECOMPUTE_INTERVAL`] rounds to bound drift.
pub fn vas_d_with(
    emb: &EmbeddingMatrix,
    input_set: &SelectionResult,
    target_n: usize,
    tau: usize,
    scorer: &mut dyn SubsetScorer,
) -> Result<(SelectionResult, VasDTrace)> {
    if tau == 0 {
        return Err(Error::TauZero);
    }
    let base = input_set.kept();
    let n0 = base.len();
    if target_n == 0 || target_n > n0 {
        return Err(Error::TargetExceedsInput { target: target_n, input: n0 });
    }
    if let Some(&max) = base.last() {
        if max >= emb.n() {
            return Err(Error::InvalidShape(format!(
                "input set index {max} out of range for n={}",
                emb.n()
            )));
        }
    }

    let sched = vasd_schedule(n0, target_n, tau);
    let mut current: Vec<usize> = base.to_vec();
    let mut moment = subset_outer_sum(emb, &current);
    let mut steps = Vec::with_capacity(tau);
    for t in 1..=tau {
        if t % MOMENT_RECOMPUTE_INTERVAL == 0 {
            moment = subset_outer_sum(emb, &current);
        }
        let keep_n = sched[t];
        let before = current.len();
        if keep_n < before {
            let (kept, removed) = vasd_round(emb, &current, &moment, keep_n, scorer)?;
            for &r in &removed {
                subtract_outer(emb, r, &mut moment);
            }
            current = kept;
        }
        steps.push(VasDStep {
            t,
            n_t: current.len(),
            removed: before - current.len(),
            tr_sigma_sq: trace_of_square(&moment),
        });
    }
    debug_assert_eq!(current.len(), target_n);

    let final_objective = steps.last().map(|s| s.tr_sigma_sq);
    let stage = StageRecord {
        name: String::from("vas_d"),
        input_n: n0,
        output_n: target_n,
        threshold_used: None,
        objective_value: final_objective,
    };
    let result = SelectionResult::new(current, vec![stage], target_n, emb.n())?;
    Ok((result, VasDTrace { steps, tau }))
}

/// Map kept indices to the matrix's sample ids, preserving order.
pub fn remap_to_ids(result: &SelectionResult, m: &EmbeddingMatrix) -> Result<Vec<u64>> {
    let ids = m.ids().ok_or(Error::MissingIds)?;
    result
        .kept()
        .iter()
        .map(|&i| {
            ids.get(i).copied().ok_or_else(|| {
                Error::InvalidShape(format!("kept index {i} out of range for id list"))
            })
        })
        .collect()
}
