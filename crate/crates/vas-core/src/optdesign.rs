//! Greedy experimental-design baselines: backward elimination under
//! A-optimality (minimize the trace of the ridge-regularized inverse moment)
//! and V-optimality (trace weighted by a prior moment), plus seeded uniform
//! random selection.
//!
//! The elimination runs on the same round schedule as the dynamic greedy
//! pipeline so comparisons isolate the objective rather than the search
//! procedure. The inverse is maintained by Sherman-Morrison downdates.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::embed::EmbeddingMatrix;
use crate::error::Error;
use crate::linalg::{invert, Mat};
use crate::rng::DetRng;
use crate::scoring::MomentMatrix;
use crate::selection::{subset_outer_sum, vasd_schedule, SelectionResult, StageRecord};
use crate::Result;

/// Stability floor for the downdate denominator `1 - f^T M^{-1} f`.
pub const DOWNDATE_FLOOR: f64 = 1e-10;

/// Maintained inverse of the ridge-regularized sum moment
/// `(sum_{i in S} f_i f_i^T + lambda I)^{-1}`.
pub struct RidgeInverse {
    inv: Mat,
    lambda: f64,
    count: usize,
}

impl RidgeInverse {
    /// Build from scratch for the given subset.
    pub fn build(emb: &EmbeddingMatrix, subset: &[usize], lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::ConfigInvalid(format!("lambda must be positive, got {lambda}")));
        }
        let d = emb.d();
        let mut a = subset_outer_sum(emb, subset);
        for i in 0..d {
            let v = a.get(i, i) + lambda;
            a.set(i, i, v);
        }
        let inv = invert(&a)?;
        Ok(RidgeInverse { inv, lambda, count: subset.len() })
    }

    pub fn d(&self) -> usize {
        self.inv.rows()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn inv(&self) -> &Mat {
        &self.inv
    }

    pub fn trace(&self) -> f64 {
        self.inv.trace()
    }

    /// `Tr(prior * inv)`.
    pub fn weighted_trace(&self, prior: &Mat) -> f64 {
        let d = self.inv.rows();
        let mut total = 0.0;
        for j in 0..d {
            for k in 0..d {
                total += prior.get(j, k) * self.inv.get(k, j);
            }
        }
        total
    }

    fn row_f64(emb: &EmbeddingMatrix, row: usize) -> Vec<f64> {
        emb.row(row).iter().map(|&v| v as f64).collect()
    }

    /// Increase in `Tr(inv)` if `row` were removed, using the rank-1
    /// downdate formula against the current inverse.
    pub fn removal_delta_trace(&self, emb: &EmbeddingMatrix, row: usize) -> Result<f64> {
        let f = Self::row_f64(emb, row);
        let g = self.inv.matvec(&f);
        let q: f64 = f.iter().zip(g.iter()).map(|(&a, &b)| a * b).sum();
        let denom = 1.0 - q;
        if denom.abs() < DOWNDATE_FLOOR {
            return Err(Error::SingularDowndate { denom });
        }
        Ok(g.iter().map(|&v| v * v).sum::<f64>() / denom)
    }

    /// Increase in `Tr(prior * inv)` if `row` were removed.
    pub fn removal_delta_weighted(
        &self,
        emb: &EmbeddingMatrix,
        row: usize,
        prior: &Mat,
    ) -> Result<f64> {
        let f = Self::row_f64(emb, row);
        let g = self.inv.matvec(&f);
        let q: f64 = f.iter().zip(g.iter()).map(|(&a, &b)| a * b).sum();
        let denom = 1.0 - q;
        if denom.abs() < DOWNDATE_FLOOR {
            return Err(Error::SingularDowndate { denom });
        }
        let pg = prior.matvec(&g);
        let num: f64 = g.iter().zip(pg.iter()).map(|(&a, &b)| a * b).sum();
        Ok(num / denom)
    }

    /// Remove `row` from the maintained subset: Sherman-Morrison update of
    /// the inverse for `A' = A - f f^T`.
    pub fn downdate(&mut self, emb: &EmbeddingMatrix, row: usize) -> Result<()> {
        let f = Self::row_f64(emb, row);
        let g = self.inv.matvec(&f);
        let q: f64 = f.iter().zip(g.iter()).map(|(&a, &b)| a * b).sum();
        let denom = 1.0 - q;
        if denom.abs() < DOWNDATE_FLOOR {
            return Err(Error::SingularDowndate { denom });
        }
        let d = self.inv.rows();
        let scale = 1.0 / denom;
        for j in 0..d {
            let gj = g[j] * scale;
            if gj == 0.0 {
                continue;
            }
            let dst = &mut self.inv.data_mut()[j * d..(j + 1) * d];
            for (v, &gk) in dst.iter_mut().zip(g.iter()) {
                *v += gj * gk;
            }
        }
        self.count -= 1;
        Ok(())
    }

    /// Frobenius-relative error between the maintained inverse and an
    /// explicit inversion of the rebuilt matrix.
    pub fn consistency_error(&self, emb: &EmbeddingMatrix, subset: &[usize]) -> Result<f64> {
        let rebuilt = RidgeInverse::build(emb, subset, self.lambda)?;
        let mut diff = self.inv.clone();
        diff.add_scaled(&rebuilt.inv, -1.0);
        Ok(diff.frob_norm() / rebuilt.inv.frob_norm().max(1e-300))
    }
}

enum DesignObjective<'a> {
    Trace,
    WeightedTrace(&'a Mat),
}

impl DesignObjective<'_> {
    fn name(&self) -> &'static str {
        match self {
            DesignObjective::Trace => "a_optimal",
            DesignObjective::WeightedTrace(_) => "v_optimal",
        }
    }

    fn value(&self, inv: &RidgeInverse) -> f64 {
        match self {
            DesignObjective::Trace => inv.trace(),
            DesignObjective::WeightedTrace(p) => inv.weighted_trace(p),
        }
    }

    fn removal_delta(&self, inv: &RidgeInverse, emb: &EmbeddingMatrix, row: usize) -> Result<f64> {
        match self {
            DesignObjective::Trace => inv.removal_delta_trace(emb, row),
            DesignObjective::WeightedTrace(p) => inv.removal_delta_weighted(emb, row, p),
        }
    }
}

fn greedy_backward(
    emb: &EmbeddingMatrix,
    input_set: &SelectionResult,
    target_n: usize,
    tau: usize,
    lambda: f64,
    objective: DesignObjective<'_>,
) -> Result<SelectionResult> {
    if tau == 0 {
        return Err(Error::TauZero);
    }
    let base = input_set.kept();
    let n0 = base.len();
    if target_n == 0 || target_n > n0 {
        return Err(Error::TargetExceedsInput { target: target_n, input: n0 });
    }
    let sched = vasd_schedule(n0, target_n, tau);
    let mut current: Vec<usize> = base.to_vec();
    let mut ridge = RidgeInverse::build(emb, &current, lambda)?;
    let mut stages = Vec::with_capacity(tau);
    for t in 1..=tau {
        let before = current.len();
        let keep_n = sched[t];
        if keep_n < before {
            // score every candidate against the frozen round inverse
            let mut deltas = vec![0.0f64; current.len()];
            for (slot, &row) in current.iter().enumerate() {
                deltas[slot] = objective.removal_delta(&ridge, emb, row)?;
            }
            // remove the least-damaging; on ties the larger index goes first
            let mut order: Vec<usize> = (0..current.len()).collect();
            order.sort_unstable_by(|&p, &q| {
                deltas[p]
                    .partial_cmp(&deltas[q])
                    .expect("finite deltas")
                    .then(current[q].cmp(&current[p]))
            });
            let remove_m = before - keep_n;
            let mut removed: Vec<usize> = order[..remove_m].iter().map(|&p| current[p]).collect();
            removed.sort_unstable();
            for &row in &removed {
                ridge.downdate(emb, row)?;
            }
            let removed_set: Vec<usize> = removed;
            current.retain(|i| removed_set.binary_search(i).is_err());
        }
        stages.push(StageRecord {
            name: String::from(objective.name()),
            input_n: before,
            output_n: current.len(),
            threshold_used: Some(lambda),
            objective_value: Some(objective.value(&ridge)),
        });
    }
    SelectionResult::new(current, stages, target_n, emb.n())
}

/// Greedy backward elimination minimizing `Tr((sum moment + lambda I)^{-1})`.
pub fn a_optimal_select(
    emb: &EmbeddingMatrix,
    input_set: &SelectionResult,
    target_n: usize,
    tau: usize,
    lambda: f64,
) -> Result<SelectionResult> {
    greedy_backward(emb, input_set, target_n, tau, lambda, DesignObjective::Trace)
}

/// Greedy backward elimination minimizing
/// `Tr(prior * (sum moment + lambda I)^{-1})`.
pub fn v_optimal_select(
    emb: &EmbeddingMatrix,
    input_set: &SelectionResult,
    target_n: usize,
    tau: usize,
    lambda: f64,
    prior: &MomentMatrix,
) -> Result<SelectionResult> {
    if prior.d() != emb.d() {
        return Err(Error::DimMismatch { left: prior.d(), right: emb.d() });
    }
    greedy_backward(
        emb,
        input_set,
        target_n,
        tau,
        lambda,
        DesignObjective::WeightedTrace(prior.entries()),
    )
}

/// Default ridge: `1e-6 * mean squared row norm` of the candidate rows.
pub fn default_lambda(emb: &EmbeddingMatrix, subset: &[usize]) -> f64 {
    let mut total = 0.0f64;
    for &i in subset {
        total += emb.row(i).iter().map(|&v| v as f64 * v as f64).sum::<f64>();
    }
    let mean = if subset.is_empty() { 1.0 } else { total / subset.len() as f64 };
    (1e-6 * mean).max(1e-300)
}

/// Uniform sample of `target_n` indices from `0..n` without replacement,
/// drawn from the crate's fixed ChaCha8 generator. Same seed, same set.
pub fn random_select(n: usize, target_n: usize, seed: u64) -> Result<SelectionResult> {
    if target_n == 0 || target_n > n {
        return Err(Error::TargetExceedsInput { target: target_n, input: n });
    }
    let mut rng = DetRng::new(seed);
    let kept = rng.sample_without_replacement(n, target_n);
    let stage = StageRecord {
        name: String::from("random"),
        input_n: n,
        output_n: target_n,
        threshold_used: None,
        objective_value: None,
    };
    SelectionResult::new(kept, vec![stage], target_n, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::for_each_combination;
    use crate::embed::Modality;
    use crate::rng::DetRng;

    fn emb(d: usize, rows: &[&[f32]]) -> EmbeddingMatrix {
        let mut data = Vec::new();
        for r in rows {
            data.extend_from_slice(r);
        }
        EmbeddingMatrix::new(d, data, None, Modality::Vision, false).unwrap()
    }

    fn random_emb(rng: &mut DetRng, n: usize, d: usize) -> EmbeddingMatrix {
        let data: Vec<f32> = (0..n * d).map(|_| rng.normal_f64() as f32).collect();
        EmbeddingMatrix::new(d, data, None, Modality::Vision, false).unwrap()
    }

    /// Brute-force objective: invert the rebuilt regularized moment.
    fn explicit_trace(e: &EmbeddingMatrix, subset: &[usize], lambda: f64) -> f64 {
        let mut a = subset_outer_sum(e, subset);
        for i in 0..e.d() {
            let v = a.get(i, i) + lambda;
            a.set(i, i, v);
        }
        invert(&a).unwrap().trace()
    }

    #[test]
    fn spanning_pair_beats_duplicates() {
        // candidates e1, e1, e2: the trace-minimizing pair must span both axes
        let e = emb(2, &[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let input = SelectionResult::full(3);
        let r = a_optimal_select(&e, &input, 2, 1, 1e-6).unwrap();
        assert!(r.kept().contains(&2), "must keep the e2 direction: {:?}", r.kept());
        assert_eq!(r.kept().len(), 2);

        // exhaustive check over the three pairs
        let mut best: Option<(f64, Vec<usize>)> = None;
        for_each_combination(3, 2, |s| {
            let tr = explicit_trace(&e, s, 1e-6);
            if best.as_ref().map_or(true, |(b, _)| tr < *b) {
                best = Some((tr, s.to_vec()));
            }
        });
        let (_, best_set) = best.unwrap();
        assert_eq!(r.kept(), best_set.as_slice());
    }

    #[test]
    fn zero_rows_removed_first() {
        let e = emb(2, &[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]);
        let input = SelectionResult::full(4);
        let r = a_optimal_select(&e, &input, 2, 2, 1e-3).unwrap();
        assert_eq!(r.kept(), &[1, 2]);
    }

    #[test]
    fn greedy_tracks_exhaustive_on_small_instance() {
        let mut rng = DetRng::new(31);
        let e = random_emb(&mut rng, 10, 3);
        let input = SelectionResult::full(10);
        let lambda = default_lambda(&e, input.kept());
        let r = a_optimal_select(&e, &input, 5, 5, lambda).unwrap();
        let greedy_tr = explicit_trace(&e, r.kept(), lambda);

        let mut best = f64::INFINITY;
        let mut sum = 0.0;
        let mut count = 0usize;
        for_each_combination(10, 5, |s| {
            let tr = explicit_trace(&e, s, lambda);
            best = best.min(tr);
            sum += tr;
            count += 1;
        });
        let mean = sum / count as f64;
        assert!(
            greedy_tr <= mean && greedy_tr >= best - 1e-9,
            "greedy {greedy_tr} vs best {best}, mean {mean}"
        );
    }

    #[test]
    fn v_optimal_with_identity_prior_matches_a_optimal() {
        let mut rng = DetRng::new(32);
        let e = random_emb(&mut rng, 12, 4);
        let input = SelectionResult::full(12);
        let prior = MomentMatrix::identity(4, Modality::Vision);
        let a = a_optimal_select(&e, &input, 6, 3, 1e-4).unwrap();
        let v = v_optimal_select(&e, &input, 6, 3, 1e-4, &prior).unwrap();
        assert_eq!(a.kept(), v.kept());
    }

    #[test]
    fn v_optimal_zero_prior_keeps_lowest_indices() {
        let mut rng = DetRng::new(33);
        let e = random_emb(&mut rng, 8, 3);
        let input = SelectionResult::full(8);
        let prior = MomentMatrix::new(
            Mat::zeros(3, 3),
            1,
            Modality::Vision,
            Modality::Vision,
            String::new(),
        )
        .unwrap();
        let v = v_optimal_select(&e, &input, 3, 2, 1e-4, &prior).unwrap();
        assert_eq!(v.kept(), &[0, 1, 2]);
    }

    #[test]
    fn sherman_morrison_stays_consistent() {
        let mut rng = DetRng::new(34);
        let e = random_emb(&mut rng, 200, 6);
        let all: Vec<usize> = (0..200).collect();
        let lambda = default_lambda(&e, &all);
        let mut ridge = RidgeInverse::build(&e, &all, lambda).unwrap();
        let mut current = all;
        for step in 0..100 {
            let victim = current[(step * 7) % current.len()];
            ridge.downdate(&e, victim).unwrap();
            current.retain(|&i| i != victim);
            if step % 25 == 24 {
                let err = ridge.consistency_error(&e, &current).unwrap();
                assert!(err < 1e-6, "step {step}: drift {err}");
            }
        }
    }

    #[test]
    fn random_select_deterministic_and_complete() {
        let a = random_select(20, 7, 99).unwrap();
        let b = random_select(20, 7, 99).unwrap();
        assert_eq!(a.kept(), b.kept());
        assert_ne!(a.kept(), random_select(20, 7, 100).unwrap().kept());

        let full = random_select(9, 9, 1).unwrap();
        assert_eq!(full.kept(), (0..9).collect::<Vec<_>>().as_slice());
        assert!(matches!(
            random_select(5, 6, 1),
            Err(Error::TargetExceedsInput { target: 6, input: 5 })
        ));
    }

    #[test]
    fn random_select_frequencies_balanced() {
        // 10^4 draws of one index from n=4: each bucket within 3 sigma of 2500
        let mut counts = [0u64; 4];
        for trial in 0..10_000u64 {
            let r = random_select(4, 1, trial).unwrap();
            counts[r.kept()[0]] += 1;
        }
        let sigma = (10_000.0f64 * 0.25 * 0.75).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            let dev = (c as f64 - 2500.0).abs();
            assert!(dev <= 3.0 * sigma, "index {i} count {c} deviates {dev}");
        }
    }

    #[test]
    fn lambda_rejected_when_not_positive() {
        let mut rng = DetRng::new(35);
        let e = random_emb(&mut rng, 5, 2);
        let input = SelectionResult::full(5);
        assert!(matches!(
            a_optimal_select(&e, &input, 2, 1, 0.0),
            Err(Error::ConfigInvalid(_))
        ));
    }
}
