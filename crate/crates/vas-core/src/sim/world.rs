//! World generation for the linear latent-variable model.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{orthonormalize_columns, Mat};
use crate::rng::{derive_seed, DetRng};
use crate::Result;

use super::config::SynthConfig;

// Stream tags so every consumer of randomness has its own substream.
const TAG_MAP_V: u64 = 2;
const TAG_MAP_L: u64 = 3;
const TAG_TRAIN_Z: u64 = 4;
const TAG_TEST_Z: u64 = 5;
const TAG_TRAIN_NOISE_V: u64 = 6;
const TAG_TRAIN_NOISE_L: u64 = 7;
const TAG_TEST_NOISE_V: u64 = 8;
const TAG_TEST_NOISE_L: u64 = 9;
const TAG_CAL_TRAIN: u64 = 10;
const TAG_CAL_TEST: u64 = 11;

const CALIBRATION_SAMPLES: usize = 50_000;
const CALIBRATION_ITERS: usize = 3;

/// One data split: latent pairs (`n x r`) and their observations (`n x d`).
#[derive(Debug, Clone)]
pub struct SplitData {
    pub latents_v: Mat,
    pub latents_l: Mat,
    pub obs_v: Mat,
    pub obs_l: Mat,
}

impl SplitData {
    pub fn n(&self) -> usize {
        self.latents_v.rows()
    }
}

/// Calibrated shared/independent variance split used to sample latent pairs.
///
/// Latents are built per coordinate as `sqrt(shared) * s + sqrt(indep) * a`
/// with `s` common to both modalities, then each vector is renormalized to
/// unit norm. Renormalization biases the cross-moment, so the weights are
/// fitted numerically against the configured diagonal and recorded here.
#[derive(Debug, Clone)]
pub struct MixWeights {
    pub shared_var: Vec<f64>,
    pub indep_var: Vec<f64>,
    pub iterations: usize,
    pub calibration_samples: usize,
}

/// A sampled world instance.
#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub cfg: SynthConfig,
    /// Ground-truth maps with orthonormal columns, `d x r`.
    pub map_v: Mat,
    pub map_l: Mat,
    pub train: SplitData,
    pub test: SplitData,
    pub mix_train: MixWeights,
    pub mix_test: MixWeights,
}

fn weights_from_targets(targets: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let total: f64 = targets.iter().sum();
    let total = total.min(1.0 - 1e-12).max(1e-12);
    let shared: Vec<f64> = targets.iter().map(|&t| t.max(0.0)).collect();
    let indep: Vec<f64> = shared.iter().map(|&w| (w / total - w).max(0.0)).collect();
    (shared, indep)
}

fn sample_pair(
    rng: &mut DetRng,
    shared: &[f64],
    indep: &[f64],
    zv: &mut [f64],
    zl: &mut [f64],
) {
    let r = shared.len();
    for j in 0..r {
        let s = rng.normal_f64();
        let a = rng.normal_f64();
        let b = rng.normal_f64();
        let sw = libm::sqrt(shared[j]);
        let iw = libm::sqrt(indep[j]);
        zv[j] = sw * s + iw * a;
        zl[j] = sw * s + iw * b;
    }
    normalize(zv);
    normalize(zl);
}

fn normalize(v: &mut [f64]) {
    let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
    if norm > 0.0 {
        for x in v {
            *x /= norm;
        }
    }
}

fn sample_latents(rng: &mut DetRng, n: usize, shared: &[f64], indep: &[f64]) -> (Mat, Mat) {
    let r = shared.len();
    let mut zv = Mat::zeros(n, r);
    let mut zl = Mat::zeros(n, r);
    let mut bv = vec![0.0; r];
    let mut bl = vec![0.0; r];
    for i in 0..n {
        sample_pair(rng, shared, indep, &mut bv, &mut bl);
        zv.row_mut(i).copy_from_slice(&bv);
        zl.row_mut(i).copy_from_slice(&bl);
    }
    (zv, zl)
}

/// Fit the mixing weights so the post-normalization empirical cross-moment
/// diagonal lands on `targets`.
fn calibrate(targets: &[f64], seed: u64) -> MixWeights {
    let r = targets.len();
    let mut raw: Vec<f64> = targets.to_vec();
    let mut rng = DetRng::new(seed);
    for _ in 0..CALIBRATION_ITERS {
        let (shared, indep) = weights_from_targets(&raw);
        let mut achieved = vec![0.0f64; r];
        let mut bv = vec![0.0; r];
        let mut bl = vec![0.0; r];
        for _ in 0..CALIBRATION_SAMPLES {
            sample_pair(&mut rng, &shared, &indep, &mut bv, &mut bl);
            for j in 0..r {
                achieved[j] += bv[j] * bl[j];
            }
        }
        for a in &mut achieved {
            *a /= CALIBRATION_SAMPLES as f64;
        }
        for j in 0..r {
            let ratio = if achieved[j].abs() > 1e-12 { targets[j] / achieved[j] } else { 1.0 };
            raw[j] *= ratio.clamp(0.5, 2.0);
        }
        let total: f64 = raw.iter().sum();
        if total > 1.0 - 1e-9 {
            let scale = (1.0 - 1e-9) / total;
            for v in &mut raw {
                *v *= scale;
            }
        }
    }
    let (shared_var, indep_var) = weights_from_targets(&raw);
    MixWeights {
        shared_var,
        indep_var,
        iterations: CALIBRATION_ITERS,
        calibration_samples: CALIBRATION_SAMPLES,
    }
}

fn gaussian_mat(rng: &mut DetRng, rows: usize, cols: usize) -> Mat {
    let mut m = Mat::zeros(rows, cols);
    for v in m.data_mut() {
        *v = rng.normal_f64();
    }
    m
}

fn observations(latents: &Mat, map: &Mat, noise_std: f64, rng: &mut DetRng) -> Mat {
    // x = z * map^T + noise
    let mut x = latents.matmul_nt(map);
    if noise_std > 0.0 {
        for v in x.data_mut() {
            *v += noise_std * rng.normal_f64();
        }
    }
    x
}

fn build_split(
    cfg: &SynthConfig,
    mix: &MixWeights,
    map_v: &Mat,
    map_l: &Mat,
    n: usize,
    z_tag: u64,
    noise_v_tag: u64,
    noise_l_tag: u64,
) -> SplitData {
    let mut z_rng = DetRng::new(derive_seed(cfg.seed, z_tag));
    let (latents_v, latents_l) = sample_latents(&mut z_rng, n, &mix.shared_var, &mix.indep_var);
    let mut nv_rng = DetRng::new(derive_seed(cfg.seed, noise_v_tag));
    let mut nl_rng = DetRng::new(derive_seed(cfg.seed, noise_l_tag));
    let obs_v = observations(&latents_v, map_v, cfg.noise_std, &mut nv_rng);
    let obs_l = observations(&latents_l, map_l, cfg.noise_std, &mut nl_rng);
    SplitData { latents_v, latents_l, obs_v, obs_l }
}

/// Sample a full world: orthonormal ground-truth maps, calibrated latent
/// pairs, noisy observations, train and test splits. Same config (including
/// seed) reproduces the world bit for bit.
pub fn gen_world(cfg: &SynthConfig) -> Result<SynthWorld> {
    cfg.validate()?;
    let d = cfg.ambient_dim;
    let r = cfg.latent_dim;

    let mut map_v = gaussian_mat(&mut DetRng::new(derive_seed(cfg.seed, TAG_MAP_V)), d, r);
    orthonormalize_columns(&mut map_v)?;
    let mut map_l = gaussian_mat(&mut DetRng::new(derive_seed(cfg.seed, TAG_MAP_L)), d, r);
    orthonormalize_columns(&mut map_l)?;

    let mix_train = calibrate(&cfg.sigma_train_diag, derive_seed(cfg.seed, TAG_CAL_TRAIN));
    let mix_test = calibrate(&cfg.sigma_test_diag, derive_seed(cfg.seed, TAG_CAL_TEST));

    let train = build_split(
        cfg,
        &mix_train,
        &map_v,
        &map_l,
        cfg.n_train,
        TAG_TRAIN_Z,
        TAG_TRAIN_NOISE_V,
        TAG_TRAIN_NOISE_L,
    );
    let test = build_split(
        cfg,
        &mix_test,
        &map_v,
        &map_l,
        cfg.n_test,
        TAG_TEST_Z,
        TAG_TEST_NOISE_V,
        TAG_TEST_NOISE_L,
    );

    Ok(SynthWorld { cfg: cfg.clone(), map_v, map_l, train, test, mix_train, mix_test })
}

impl SynthWorld {
    /// Draw a fresh test split from the same distribution under a distinct
    /// stream tag; used for paired-contrast loss estimates.
    pub fn resample_test(&self, tag: u64) -> SplitData {
        build_split(
            &self.cfg,
            &self.mix_test,
            &self.map_v,
            &self.map_l,
            self.cfg.n_test,
            derive_seed(tag, TAG_TEST_Z),
            derive_seed(tag, TAG_TEST_NOISE_V),
            derive_seed(tag, TAG_TEST_NOISE_L),
        )
    }

    /// Exact inverse teacher `map^T` for one modality.
    pub fn exact_teacher(&self) -> (Mat, Mat) {
        (self.map_v.clone(), self.map_l.clone())
    }

    /// Max reconstruction residual `max_i ||x_i - map * z_i||` over a split.
    pub fn reconstruction_residual(split: &SplitData, map_v: &Mat, map_l: &Mat) -> f64 {
        let mut worst = 0.0f64;
        for (latents, obs, map) in
            [(&split.latents_v, &split.obs_v, map_v), (&split.latents_l, &split.obs_l, map_l)]
        {
            let ideal = latents.matmul_nt(map);
            for (a, b) in ideal.data().iter().zip(obs.data().iter()) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_are_orthonormal() {
        let cfg = SynthConfig::default_with(4, 16, 42);
        let w = gen_world(&cfg).unwrap();
        for map in [&w.map_v, &w.map_l] {
            let gram = map.matmul_tn(map);
            let mut err = 0.0f64;
            for i in 0..4 {
                for j in 0..4 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    err = err.max((gram.get(i, j) - want).abs());
                }
            }
            assert!(err <= 1e-10, "gram deviation {err}");
        }
    }

    #[test]
    fn latents_unit_norm_and_zero_noise_reconstructs() {
        let mut cfg = SynthConfig::default_with(3, 8, 5);
        cfg.noise_std = 0.0;
        let w = gen_world(&cfg).unwrap();
        for i in 0..w.train.n() {
            let norm: f64 = w.train.latents_v.row(i).iter().map(|v| v * v).sum::<f64>();
            assert!((norm - 1.0).abs() < 1e-9);
        }
        let resid = SynthWorld::reconstruction_residual(&w.train, &w.map_v, &w.map_l);
        assert!(resid < 1e-12, "zero-noise residual {resid}");
    }

    #[test]
    fn same_seed_same_world() {
        let cfg = SynthConfig::default_with(3, 10, 77);
        let a = gen_world(&cfg).unwrap();
        let b = gen_world(&cfg).unwrap();
        assert_eq!(a.train.obs_v.data(), b.train.obs_v.data());
        assert_eq!(a.test.latents_l.data(), b.test.latents_l.data());
        let mut cfg2 = cfg.clone();
        cfg2.seed = 78;
        let c = gen_world(&cfg2).unwrap();
        assert_ne!(a.train.obs_v.data(), c.train.obs_v.data());
    }

    #[test]
    fn cross_moment_diagonal_concentrates_on_target() {
        let mut cfg = SynthConfig::default_with(4, 8, 11);
        cfg.n_train = 10_000;
        cfg.noise_std = 0.0;
        let w = gen_world(&cfg).unwrap();
        let n = w.train.n();
        let tol = 5.0 / libm::sqrt(n as f64);
        for j in 0..4 {
            let mut acc = 0.0;
            for i in 0..n {
                acc += w.train.latents_v.get(i, j) * w.train.latents_l.get(i, j);
            }
            let achieved = acc / n as f64;
            let target = cfg.sigma_train_diag[j];
            assert!(
                (achieved - target).abs() <= tol,
                "coord {j}: achieved {achieved} target {target} tol {tol}"
            );
        }
    }
}
