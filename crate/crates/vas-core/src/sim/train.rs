//! Closed-form training of the rank-constrained bilinear head.
//!
//! Minimizing the regularized pairwise-gap loss over rank-`r` factor pairs
//! reduces to a truncated SVD of the centered empirical cross-moment of the
//! selected observations; the trainer builds that moment, truncates, and
//! rescales.

use alloc::vec::Vec;

use crate::error::Error;
use crate::linalg::{svd, truncated_product, Mat};
use crate::Result;

use super::world::SynthWorld;

/// Trained bilinear head `product = G_v G_l^T` (rank at most `latent_dim`).
#[derive(Debug, Clone)]
pub struct TrainedMap {
    pub product: Mat,
    pub rho: f64,
    pub subset_size: usize,
    /// Full singular spectrum of the training cross-moment, descending.
    pub gamma_spectrum: Vec<f64>,
}

/// Centered cross-moment of the selected observation pairs:
/// `(1/(k-1)) sum_i x_i^v (x_i^l)^T - (k/(k-1)) mean_v mean_l^T`.
pub fn training_gamma(world: &SynthWorld, subset: &[usize]) -> Result<Mat> {
    let k = subset.len();
    if k < 2 {
        return Err(Error::SubsetTooSmall(k));
    }
    let d = world.cfg.ambient_dim;
    let mut sum = Mat::zeros(d, d);
    let mut mean_v = alloc::vec![0.0f64; d];
    let mut mean_l = alloc::vec![0.0f64; d];
    for &i in subset {
        let xv = world.train.obs_v.row(i);
        let xl = world.train.obs_l.row(i);
        for (j, &a) in xv.iter().enumerate() {
            mean_v[j] += a;
            if a == 0.0 {
                continue;
            }
            let dst = &mut sum.data_mut()[j * d..(j + 1) * d];
            for (v, &b) in dst.iter_mut().zip(xl.iter()) {
                *v += a * b;
            }
        }
        for (j, &b) in xl.iter().enumerate() {
            mean_l[j] += b;
        }
    }
    let kf = k as f64;
    for v in &mut mean_v {
        *v /= kf;
    }
    for v in &mut mean_l {
        *v /= kf;
    }
    let c1 = 1.0 / (kf - 1.0);
    let c2 = kf / (kf - 1.0);
    let mut gamma = sum;
    gamma.scale(c1);
    for (j, &mv) in mean_v.iter().enumerate() {
        let s = c2 * mv;
        if s == 0.0 {
            continue;
        }
        let dst = &mut gamma.data_mut()[j * d..(j + 1) * d];
        for (v, &ml) in dst.iter_mut().zip(mean_l.iter()) {
            *v -= s * ml;
        }
    }
    Ok(gamma)
}

/// Exact minimizer of the regularized loss: rank-`r` truncation of the
/// training moment scaled by `(k-1)/(rho k)`.
pub fn closed_form_train(world: &SynthWorld, subset: &[usize], rho: f64) -> Result<TrainedMap> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::ConfigInvalid("rho must be > 0".into()));
    }
    let gamma = training_gamma(world, subset)?;
    let dec = svd(&gamma);
    let k = subset.len() as f64;
    let scale = (k - 1.0) / (rho * k);
    let mut product = truncated_product(&dec, world.cfg.latent_dim);
    product.scale(scale);
    Ok(TrainedMap {
        product,
        rho,
        subset_size: subset.len(),
        gamma_spectrum: dec.s,
    })
}

/// True when the rank-`r` truncation is not unique: the last kept and first
/// dropped singular values agree within `1e-12` of the spectral scale.
pub fn spectrum_degenerate(spectrum: &[f64], r: usize) -> bool {
    if r == 0 || r >= spectrum.len() {
        return false;
    }
    let top = spectrum[0].max(1.0);
    (spectrum[r - 1] - spectrum[r]).abs() <= 1e-12 * top
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::svd;
    use crate::sim::config::SynthConfig;
    use crate::sim::world::gen_world;

    #[test]
    fn rank_one_gamma_is_reproduced_exactly() {
        // any 2-sample moment is rank 1, so truncation is the identity
        let cfg = SynthConfig::default_with(3, 8, 19);
        let w = gen_world(&cfg).unwrap();
        let subset = [0usize, 1];
        let gamma = training_gamma(&w, &subset).unwrap();
        let dec = svd(&gamma);
        assert!(dec.s[1] < 1e-12 * dec.s[0].max(1.0), "2-sample moment must be rank 1");
        let trained = closed_form_train(&w, &subset, 1.0).unwrap();
        let scale = 0.5; // (k-1)/(rho k) with k=2, rho=1
        for (p, g) in trained.product.data().iter().zip(gamma.data().iter()) {
            assert!((p - scale * g).abs() < 1e-12);
        }
    }

    #[test]
    fn doubling_rho_halves_the_product() {
        let cfg = SynthConfig::default_with(4, 12, 23);
        let w = gen_world(&cfg).unwrap();
        let subset: Vec<usize> = (0..32).collect();
        let a = closed_form_train(&w, &subset, 1.0).unwrap();
        let b = closed_form_train(&w, &subset, 2.0).unwrap();
        for (x, y) in a.product.data().iter().zip(b.product.data().iter()) {
            assert!((x - 2.0 * y).abs() < 1e-12 * x.abs().max(1e-9));
        }
    }

    #[test]
    fn product_rank_is_bounded_by_latent_dim() {
        let mut cfg = SynthConfig::default_with(3, 10, 29);
        cfg.noise_std = 0.2;
        let w = gen_world(&cfg).unwrap();
        let subset: Vec<usize> = (0..64).collect();
        let trained = closed_form_train(&w, &subset, 1.0).unwrap();
        let spec = svd(&trained.product).s;
        let top = spec[0];
        for &s in spec.iter().skip(3) {
            assert!(s <= 1e-8 * top, "rank leak: {s} vs top {top}");
        }
    }

    #[test]
    fn subset_too_small_is_rejected() {
        let cfg = SynthConfig::default_with(2, 6, 31);
        let w = gen_world(&cfg).unwrap();
        assert!(matches!(
            closed_form_train(&w, &[0], 1.0),
            Err(Error::SubsetTooSmall(1))
        ));
    }

    #[test]
    fn degeneracy_detector() {
        assert!(spectrum_degenerate(&[1.0, 0.5, 0.5, 0.1], 2));
        assert!(!spectrum_degenerate(&[1.0, 0.5, 0.4, 0.1], 2));
        assert!(!spectrum_degenerate(&[1.0, 0.5], 2));
    }
}
