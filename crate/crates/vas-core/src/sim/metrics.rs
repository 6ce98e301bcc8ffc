//! Test-side metrics: paired-contrast and simplified test losses,
//! classification accuracy, and teacher recovery error.

use alloc::vec::Vec;

use crate::error::Error;
use crate::linalg::{nuclear_norm, Mat};
use crate::rng::DetRng;
use crate::Result;

use super::train::TrainedMap;
use super::world::{SplitData, SynthWorld};

const TAG_CONTRAST_RESAMPLE: u64 = 0xC0;

/// Both test-loss estimates plus the Monte-Carlo scale of the contrast term.
#[derive(Debug, Clone, Copy)]
pub struct TestLoss {
    /// `mean_i [ s(x_i, x'_i) - s(x_i, x_i) ]` with an independent resample `x'`.
    pub contrast: f64,
    /// `-mean_i s(x_i, x_i)`.
    pub simplified: f64,
    /// RMS of the cross terms; the contrast estimate fluctuates at
    /// `mc_scale / sqrt(n_test)`.
    pub mc_scale: f64,
}

fn bilinear(product: &Mat, xv: &[f64], xl: &[f64]) -> f64 {
    // xv^T * product * xl
    let d = product.rows();
    let mut total = 0.0;
    for (j, &a) in xv.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let row = &product.data()[j * d..(j + 1) * d];
        let mut acc = 0.0;
        for (r, &b) in row.iter().zip(xl.iter()) {
            acc += r * b;
        }
        total += a * acc;
    }
    total
}

/// Evaluate both test-loss forms over the world's test split.
pub fn test_loss(map: &TrainedMap, world: &SynthWorld) -> Result<TestLoss> {
    let test = &world.test;
    let n = test.n();
    if n == 0 {
        return Err(Error::EmptyTest);
    }
    let resampled = world.resample_test(TAG_CONTRAST_RESAMPLE);
    let mut paired_sum = 0.0f64;
    let mut cross_sum = 0.0f64;
    let mut cross_sq = 0.0f64;
    for i in 0..n {
        let paired = bilinear(&map.product, test.obs_v.row(i), test.obs_l.row(i));
        let cross = bilinear(&map.product, test.obs_v.row(i), resampled.obs_l.row(i));
        paired_sum += paired;
        cross_sum += cross;
        cross_sq += cross * cross;
    }
    let nf = n as f64;
    Ok(TestLoss {
        contrast: (cross_sum - paired_sum) / nf,
        simplified: -paired_sum / nf,
        mc_scale: libm::sqrt(cross_sq / nf),
    })
}

/// Class templates (latent space) plus a per-test-sample class assignment.
#[derive(Debug, Clone)]
pub struct ClassSpec {
    /// `C x r` unit-norm latent templates.
    pub template_latents: Mat,
    /// Class index per test sample.
    pub assignment: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
}

impl ClassSpec {
    /// Assign each test sample to its nearest template by latent similarity.
    pub fn nearest_assignment(world: &SynthWorld, templates: Mat, trials: usize, seed: u64) -> Self {
        let n = world.test.n();
        let c = templates.rows();
        let mut assignment = Vec::with_capacity(n);
        for i in 0..n {
            let z = world.test.latents_v.row(i);
            let mut best = 0usize;
            let mut best_sim = f64::NEG_INFINITY;
            for t in 0..c {
                let sim = crate::linalg::dot(z, templates.row(t));
                if sim > best_sim {
                    best_sim = sim;
                    best = t;
                }
            }
            assignment.push(best);
        }
        ClassSpec { template_latents: templates, assignment, trials, seed }
    }
}

/// Monte-Carlo zero-shot accuracy: the chance that a test sample scores its
/// own class template above a random contrast template. Ties count one half.
pub fn classification_accuracy(
    map: &TrainedMap,
    world: &SynthWorld,
    spec: &ClassSpec,
) -> Result<f64> {
    let c = spec.template_latents.rows();
    let n = world.test.n();
    if c < 2 || spec.trials == 0 {
        return Err(Error::DegenerateClasses);
    }
    if spec.assignment.len() != n {
        return Err(Error::ShapeMismatch("class assignment length"));
    }
    let mut seen = alloc::vec![false; c];
    for &a in &spec.assignment {
        if a >= c {
            return Err(Error::DegenerateClasses);
        }
        seen[a] = true;
    }
    if seen.iter().any(|&s| !s) {
        return Err(Error::DegenerateClasses);
    }
    // noiseless language template observations
    let template_obs = spec.template_latents.matmul_nt(&world.map_l); // C x d
    let mut rng = DetRng::new(spec.seed);
    let mut score = 0.0f64;
    for _ in 0..spec.trials {
        let i = rng.below(n as u64) as usize;
        let true_c = spec.assignment[i];
        let mut contrast = rng.below((c - 1) as u64) as usize;
        if contrast >= true_c {
            contrast += 1;
        }
        let xv = world.test.obs_v.row(i);
        let s_true = bilinear(&map.product, xv, template_obs.row(true_c));
        let s_false = bilinear(&map.product, xv, template_obs.row(contrast));
        if s_true > s_false {
            score += 1.0;
        } else if s_true == s_false {
            score += 0.5;
        }
    }
    Ok(score / spec.trials as f64)
}

/// Nuclear-norm gaps between teacher-recovered latent moments and the
/// ground-truth latent moments over a subset.
#[derive(Debug, Clone, Copy)]
pub struct TeacherErrorReport {
    pub eps_v: f64,
    pub eps_l: f64,
    pub eps_cross: f64,
}

fn teacher_embed(teacher: &Mat, obs: &[f64]) -> Vec<f64> {
    // teacher^T x
    let r = teacher.cols();
    let mut out = alloc::vec![0.0f64; r];
    for (j, &x) in obs.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (c, o) in out.iter_mut().enumerate() {
            *o += teacher.get(j, c) * x;
        }
    }
    out
}

/// Evaluate the teacher discrepancy on the given subset of the train split.
pub fn measure_teacher_error(
    world: &SynthWorld,
    teacher_v: &Mat,
    teacher_l: &Mat,
    subset: &[usize],
) -> Result<TeacherErrorReport> {
    let d = world.cfg.ambient_dim;
    let r = world.cfg.latent_dim;
    for t in [teacher_v, teacher_l] {
        if t.rows() != d || t.cols() != r {
            return Err(Error::ShapeMismatch("teacher map must be d x r"));
        }
    }
    if subset.is_empty() {
        return Err(Error::SubsetTooSmall(0));
    }
    let k = subset.len() as f64;
    let mut acc_v = Mat::zeros(r, r);
    let mut acc_l = Mat::zeros(r, r);
    let mut acc_x = Mat::zeros(r, r);
    for &i in subset {
        let ev = teacher_embed(teacher_v, world.train.obs_v.row(i));
        let el = teacher_embed(teacher_l, world.train.obs_l.row(i));
        let zv = world.train.latents_v.row(i);
        let zl = world.train.latents_l.row(i);
        for a in 0..r {
            for b in 0..r {
                let dv = ev[a] * ev[b] - zv[a] * zv[b];
                let dl = el[a] * el[b] - zl[a] * zl[b];
                let dx = ev[a] * el[b] - zv[a] * zl[b];
                acc_v.set(a, b, acc_v.get(a, b) + dv);
                acc_l.set(a, b, acc_l.get(a, b) + dl);
                acc_x.set(a, b, acc_x.get(a, b) + dx);
            }
        }
    }
    Ok(TeacherErrorReport {
        eps_v: nuclear_norm(&acc_v) / k,
        eps_l: nuclear_norm(&acc_l) / k,
        eps_cross: nuclear_norm(&acc_x) / k,
    })
}

/// Mean latent alignment `mean_{i in subset} <z_v, z_l>` over the train split.
pub fn mean_alignment(split: &SplitData, subset: &[usize]) -> f64 {
    let mut acc = 0.0;
    for &i in subset {
        acc += crate::linalg::dot(split.latents_v.row(i), split.latents_l.row(i));
    }
    acc / subset.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::SynthConfig;
    use crate::sim::train::closed_form_train;
    use crate::sim::world::gen_world;

    fn zero_map(d: usize) -> TrainedMap {
        TrainedMap {
            product: Mat::zeros(d, d),
            rho: 1.0,
            subset_size: 2,
            gamma_spectrum: alloc::vec![0.0; d],
        }
    }

    #[test]
    fn zero_map_gives_zero_losses() {
        let cfg = SynthConfig::default_with(3, 8, 51);
        let w = gen_world(&cfg).unwrap();
        let tl = test_loss(&zero_map(8), &w).unwrap();
        assert_eq!(tl.contrast, 0.0);
        assert_eq!(tl.simplified, 0.0);
    }

    #[test]
    fn contrast_and_simplified_agree_within_mc_error() {
        let mut cfg = SynthConfig::default_with(3, 10, 53);
        cfg.n_test = 10_000;
        cfg.noise_std = 0.0;
        let w = gen_world(&cfg).unwrap();
        let subset: Vec<usize> = (0..40).collect();
        let map = closed_form_train(&w, &subset, 1.0).unwrap();
        let tl = test_loss(&map, &w).unwrap();
        let tol = 5.0 * tl.mc_scale.max(1e-12) / libm::sqrt(cfg.n_test as f64);
        assert!(
            (tl.contrast - tl.simplified).abs() <= tol,
            "contrast {} vs simplified {} tol {tol}",
            tl.contrast,
            tl.simplified
        );
    }

    #[test]
    fn exact_map_with_orthogonal_templates_is_perfect() {
        let mut cfg = SynthConfig::default_with(2, 6, 57);
        cfg.noise_std = 0.0;
        cfg.n_test = 64;
        let mut w = gen_world(&cfg).unwrap();
        // orthogonal templates; overwrite test latents to sit exactly on them
        let templates = Mat::from_vec(2, 2, alloc::vec![1.0, 0.0, 0.0, 1.0]);
        for i in 0..w.test.n() {
            let t = i % 2;
            for j in 0..2 {
                let v = templates.get(t, j);
                w.test.latents_v.set(i, j, v);
                w.test.latents_l.set(i, j, v);
            }
        }
        let fresh_v = w.test.latents_v.matmul_nt(&w.map_v);
        let fresh_l = w.test.latents_l.matmul_nt(&w.map_l);
        w.test.obs_v = fresh_v;
        w.test.obs_l = fresh_l;

        let exact = TrainedMap {
            product: w.map_v.matmul_nt(&w.map_l),
            rho: 1.0,
            subset_size: 2,
            gamma_spectrum: alloc::vec![1.0; 2],
        };
        let spec = ClassSpec::nearest_assignment(&w, templates, 2000, 7);
        let acc = classification_accuracy(&exact, &w, &spec).unwrap();
        assert_eq!(acc, 1.0);

        // the zero map ties every comparison
        let acc0 = classification_accuracy(&zero_map(6), &w, &spec).unwrap();
        assert_eq!(acc0, 0.5);
    }

    #[test]
    fn random_map_near_chance() {
        let mut cfg = SynthConfig::default_with(3, 8, 59);
        cfg.n_test = 512;
        let w = gen_world(&cfg).unwrap();
        let mut rng = crate::rng::DetRng::new(8);
        let mut product = Mat::zeros(8, 8);
        for v in product.data_mut() {
            *v = rng.normal_f64();
        }
        let map = TrainedMap { product, rho: 1.0, subset_size: 2, gamma_spectrum: alloc::vec![] };
        let templates = {
            let mut t = Mat::zeros(2, 3);
            t.set(0, 0, 1.0);
            t.set(1, 1, 1.0);
            t
        };
        let spec = ClassSpec::nearest_assignment(&w, templates, 10_000, 11);
        let acc = classification_accuracy(&map, &w, &spec).unwrap();
        assert!((acc - 0.5).abs() < 0.02, "accuracy {acc}");
    }

    #[test]
    fn exact_teacher_zero_noise_has_zero_error() {
        let mut cfg = SynthConfig::default_with(3, 9, 61);
        cfg.noise_std = 0.0;
        let w = gen_world(&cfg).unwrap();
        let subset: Vec<usize> = (0..20).collect();
        let rep = measure_teacher_error(&w, &w.map_v, &w.map_l, &subset).unwrap();
        assert!(rep.eps_v < 1e-10);
        assert!(rep.eps_l < 1e-10);
        assert!(rep.eps_cross < 1e-10);
    }

    #[test]
    fn zero_teacher_error_is_mean_square_norm() {
        let cfg = SynthConfig::default_with(3, 9, 63);
        let w = gen_world(&cfg).unwrap();
        let subset: Vec<usize> = (0..20).collect();
        let zero = Mat::zeros(9, 3);
        let rep = measure_teacher_error(&w, &zero, &zero, &subset).unwrap();
        // latents are unit norm, so the ground-truth moment has nuclear norm 1 per sample
        assert!((rep.eps_v - 1.0).abs() < 1e-9, "eps_v {}", rep.eps_v);
        assert!((rep.eps_l - 1.0).abs() < 1e-9);
    }

    #[test]
    fn noisy_teacher_error_tracks_dimension_scaling() {
        // calibrate the sqrt(d/n) constant over a few seeds, then check each
        let mut ratios = Vec::new();
        for seed in 0..20u64 {
            let mut cfg = SynthConfig::default_with(3, 12, 700 + seed);
            cfg.noise_std = 0.1;
            cfg.n_train = 1000;
            let w = gen_world(&cfg).unwrap();
            let subset: Vec<usize> = (0..1000).collect();
            let rep = measure_teacher_error(&w, &w.map_v, &w.map_l, &subset).unwrap();
            let shape = libm::sqrt(12.0 / 1000.0);
            ratios.push(rep.eps_v / shape);
        }
        let mean: f64 = ratios.iter().sum::<f64>() / ratios.len() as f64;
        for r in &ratios {
            assert!(*r <= 3.0 * mean && *r >= mean / 3.0, "ratio {r} vs mean {mean}");
        }
    }
}
