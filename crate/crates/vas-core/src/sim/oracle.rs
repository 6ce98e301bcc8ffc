//! Exhaustive hindsight-best subset search over latent cross-moments.

use alloc::vec::Vec;

use crate::combinatorics::{count_combinations, for_each_combination};
use crate::error::Error;
use crate::linalg::Mat;
use crate::Result;

use super::train::closed_form_train;
use super::world::SynthWorld;

/// Enumeration cap for the exhaustive searches.
pub const ORACLE_BUDGET: u128 = 1_000_000;

/// Raw (uncentered) latent cross-moment of a train subset:
/// `(1/k) sum_{i in S} z_i^v (z_i^l)^T`.
pub fn subset_cross_moment_raw(world: &SynthWorld, subset: &[usize]) -> Mat {
    let r = world.cfg.latent_dim;
    let mut m = Mat::zeros(r, r);
    for &i in subset {
        let zv = world.train.latents_v.row(i);
        let zl = world.train.latents_l.row(i);
        for (a, &va) in zv.iter().enumerate() {
            for (b, &vb) in zl.iter().enumerate() {
                m.set(a, b, m.get(a, b) + va * vb);
            }
        }
    }
    m.scale(1.0 / subset.len() as f64);
    m
}

/// Mean-removed latent cross-moment: the quantity the closed-form trainer
/// actually aligns the head with (zero noise), `raw - mean_v mean_l^T`.
pub fn subset_cross_moment_centered(world: &SynthWorld, subset: &[usize]) -> Mat {
    let r = world.cfg.latent_dim;
    let mut m = subset_cross_moment_raw(world, subset);
    let k = subset.len() as f64;
    let mut mv = alloc::vec![0.0f64; r];
    let mut ml = alloc::vec![0.0f64; r];
    for &i in subset {
        for (a, v) in world.train.latents_v.row(i).iter().enumerate() {
            mv[a] += v;
        }
        for (b, v) in world.train.latents_l.row(i).iter().enumerate() {
            ml[b] += v;
        }
    }
    for v in mv.iter_mut().chain(ml.iter_mut()) {
        *v /= k;
    }
    for a in 0..r {
        for b in 0..r {
            m.set(a, b, m.get(a, b) - mv[a] * ml[b]);
        }
    }
    m
}

fn guard_budget(pool: usize, k: usize) -> Result<()> {
    let combos = count_combinations(pool, k);
    if combos > ORACLE_BUDGET {
        return Err(Error::CombinatorialBlowup { combinations: combos, budget: ORACLE_BUDGET });
    }
    Ok(())
}

/// Exhaustively maximize the alignment `<sigma_test, Sigma_{S'}>` (Frobenius
/// pairing; equal to the trace form whenever `sigma_test` is symmetric) over
/// size-`k` subsets of `pool`, with the raw latent cross-moment. Ties
/// resolve to the lexicographically smallest subset. Returns the winning
/// subset (world indices, ascending) and its objective value.
pub fn best_subset_oracle(
    world: &SynthWorld,
    pool: &[usize],
    k: usize,
    sigma_test: &Mat,
) -> Result<(Vec<usize>, f64)> {
    guard_budget(pool.len(), k)?;
    if k == 0 || k > pool.len() {
        return Err(Error::TargetExceedsInput { target: k, input: pool.len() });
    }
    // Tr(Sigma_test * z_v z_l^T) = z_l^T Sigma_test^T z_v ... evaluate per
    // sample once; the raw-moment objective is additive in the subset.
    let per_sample: Vec<f64> = pool
        .iter()
        .map(|&i| {
            let zv = world.train.latents_v.row(i);
            let zl = world.train.latents_l.row(i);
            let mut acc = 0.0;
            for (a, &va) in zv.iter().enumerate() {
                for (b, &vb) in zl.iter().enumerate() {
                    acc += sigma_test.get(a, b) * va * vb;
                }
            }
            acc
        })
        .collect();
    let mut best_val = f64::NEG_INFINITY;
    let mut best: Vec<usize> = Vec::new();
    for_each_combination(pool.len(), k, |combo| {
        let total: f64 = combo.iter().map(|&p| per_sample[p]).sum();
        let val = total / k as f64;
        if val > best_val {
            best_val = val;
            best = combo.iter().map(|&p| pool[p]).collect();
        }
    });
    Ok((best, best_val))
}

/// Exhaustively maximize the same trace objective with the centered subset
/// moment (the trainer-consistent form; not additive, so every subset is
/// evaluated in full).
pub fn best_subset_centered(
    world: &SynthWorld,
    pool: &[usize],
    k: usize,
    sigma_test: &Mat,
) -> Result<(Vec<usize>, f64)> {
    guard_budget(pool.len(), k)?;
    if k == 0 || k > pool.len() {
        return Err(Error::TargetExceedsInput { target: k, input: pool.len() });
    }
    let mut best_val = f64::NEG_INFINITY;
    let mut best: Vec<usize> = Vec::new();
    let mut scratch: Vec<usize> = Vec::with_capacity(k);
    for_each_combination(pool.len(), k, |combo| {
        scratch.clear();
        scratch.extend(combo.iter().map(|&p| pool[p]));
        let moment = subset_cross_moment_centered(world, &scratch);
        let val = sigma_test.frob_inner(&moment);
        if val > best_val {
            best_val = val;
            best = scratch.clone();
        }
    });
    Ok((best, best_val))
}

/// Exhaustively minimize the simplified test loss of the closed-form-trained
/// head over size-`k` subsets. Slow; intended for small pools as an
/// independent cross-check of the moment-space searches.
pub fn best_trained_subset(
    world: &SynthWorld,
    pool: &[usize],
    k: usize,
    rho: f64,
) -> Result<(Vec<usize>, f64)> {
    guard_budget(pool.len(), k)?;
    if k < 2 || k > pool.len() {
        return Err(Error::TargetExceedsInput { target: k, input: pool.len() });
    }
    let mut best_val = f64::INFINITY;
    let mut best: Vec<usize> = Vec::new();
    let mut scratch: Vec<usize> = Vec::with_capacity(k);
    let mut failure: Option<Error> = None;
    for_each_combination(pool.len(), k, |combo| {
        if failure.is_some() {
            return;
        }
        scratch.clear();
        scratch.extend(combo.iter().map(|&p| pool[p]));
        match closed_form_train(world, &scratch, rho) {
            Ok(map) => match super::metrics::test_loss(&map, world) {
                Ok(tl) => {
                    if tl.simplified < best_val {
                        best_val = tl.simplified;
                        best = scratch.clone();
                    }
                }
                Err(e) => failure = Some(e),
            },
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((best, best_val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::SynthConfig;
    use crate::sim::world::gen_world;

    #[test]
    fn full_pool_is_the_only_candidate() {
        let cfg = SynthConfig::default_with(3, 8, 71);
        let w = gen_world(&cfg).unwrap();
        let pool: Vec<usize> = (0..6).collect();
        let sigma = Mat::identity(3);
        let (best, _) = best_subset_oracle(&w, &pool, 6, &sigma).unwrap();
        assert_eq!(best, pool);
    }

    #[test]
    fn identity_sigma_reduces_to_top_k_alignment() {
        let cfg = SynthConfig::default_with(3, 8, 73);
        let w = gen_world(&cfg).unwrap();
        let pool: Vec<usize> = (0..12).collect();
        let sigma = Mat::identity(3);
        let (best, _) = best_subset_oracle(&w, &pool, 5, &sigma).unwrap();
        // additive objective: top-k by per-sample <z_v, z_l>
        let mut scored: Vec<(f64, usize)> = pool
            .iter()
            .map(|&i| {
                (
                    crate::linalg::dot(w.train.latents_v.row(i), w.train.latents_l.row(i)),
                    i,
                )
            })
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let mut expect: Vec<usize> = scored[..5].iter().map(|&(_, i)| i).collect();
        expect.sort_unstable();
        assert_eq!(best, expect);
    }

    #[test]
    fn matches_independent_recursive_enumerator() {
        let cfg = SynthConfig::default_with(3, 8, 79);
        let w = gen_world(&cfg).unwrap();
        let pool: Vec<usize> = (0..10).collect();
        let mut sigma = Mat::identity(3);
        sigma.set(0, 1, 0.3);
        sigma.set(2, 2, 2.0);

        let (best, val) = best_subset_oracle(&w, &pool, 4, &sigma).unwrap();

        // second, recursive enumerator written independently of the
        // combination iterator
        fn recurse(
            w: &SynthWorld,
            sigma: &Mat,
            pool: &[usize],
            k: usize,
            start: usize,
            chosen: &mut Vec<usize>,
            best: &mut (f64, Vec<usize>),
        ) {
            if chosen.len() == k {
                let m = subset_cross_moment_raw(w, chosen);
                let v = sigma.frob_inner(&m);
                if v > best.0 {
                    *best = (v, chosen.clone());
                }
                return;
            }
            for p in start..pool.len() {
                chosen.push(pool[p]);
                recurse(w, sigma, pool, k, p + 1, chosen, best);
                chosen.pop();
            }
        }
        let mut best2 = (f64::NEG_INFINITY, Vec::new());
        let mut scratch = Vec::new();
        recurse(&w, &sigma, &pool, 4, 0, &mut scratch, &mut best2);
        assert_eq!(best, best2.1);
        assert!((val - best2.0).abs() < 1e-12);
    }

    #[test]
    fn budget_guard_trips() {
        let cfg = SynthConfig::default_with(2, 6, 81);
        let mut cfg = cfg;
        cfg.n_train = 64;
        let w = gen_world(&cfg).unwrap();
        let pool: Vec<usize> = (0..64).collect();
        let sigma = Mat::identity(2);
        assert!(matches!(
            best_subset_oracle(&w, &pool, 32, &sigma),
            Err(Error::CombinatorialBlowup { .. })
        ));
    }
}
