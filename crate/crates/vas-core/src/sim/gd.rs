//! Gradient-descent reference minimizer for the regularized training loss.
//!
//! This is the slow, independent route used by the validation suites to
//! check the closed-form trainer. It factorizes the head as `G_v G_l^T`
//! and descends the same objective the trainer minimizes; the final loss is
//! re-evaluated through the raw pairwise double sum as an internal
//! consistency check on the moment-form rewrite.

use crate::linalg::{operator_norm, Mat};
use crate::rng::{derive_seed, DetRng};
use crate::Result;

use super::train::training_gamma;
use super::world::SynthWorld;

/// Fixed, versioned oracle hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct GdSettings {
    /// Step size is `step_scale / sigma_max(Gamma)^2`.
    pub step_scale: f64,
    pub max_iters: usize,
    /// Stop when the relative loss change drops below this.
    pub rel_tol: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for GdSettings {
    fn default() -> Self {
        GdSettings {
            step_scale: 0.1,
            max_iters: 10_000,
            rel_tol: 1e-10,
            init_scale: 0.1,
            seed: 0x6d0f,
        }
    }
}

/// Converged factors and diagnostics.
#[derive(Debug, Clone)]
pub struct GdResult {
    pub product: Mat,
    pub loss: f64,
    pub pairwise_loss: f64,
    pub iters: usize,
}

/// Regularized loss in moment form: `-Tr(G_v^T Gamma G_l) + (rho'/2) ||G_v G_l^T||_F^2`.
fn moment_loss(gamma: &Mat, gv: &Mat, gl: &Mat, rho_eff: f64) -> f64 {
    let gtg = gamma.matmul(gl); // d x r
    let fit: f64 = gv.frob_inner(&gtg);
    let product = gv.matmul_nt(gl);
    let frob2: f64 = product.data().iter().map(|v| v * v).sum();
    -fit + 0.5 * rho_eff * frob2
}

/// Raw pairwise evaluation of the same loss, straight from the definition.
pub fn pairwise_loss(world: &SynthWorld, subset: &[usize], gv: &Mat, gl: &Mat, rho: f64) -> f64 {
    let k = subset.len();
    let kf = k as f64;
    // per-sample projected embeddings
    let mut ev = Mat::zeros(k, gv.cols());
    let mut el = Mat::zeros(k, gl.cols());
    for (slot, &i) in subset.iter().enumerate() {
        let xv = world.train.obs_v.row(i);
        let xl = world.train.obs_l.row(i);
        for c in 0..gv.cols() {
            let mut av = 0.0;
            let mut al = 0.0;
            for j in 0..gv.rows() {
                av += gv.get(j, c) * xv[j];
                al += gl.get(j, c) * xl[j];
            }
            ev.set(slot, c, av);
            el.set(slot, c, al);
        }
    }
    let mut gap = 0.0f64;
    for i in 0..k {
        let si = crate::linalg::dot(ev.row(i), el.row(i));
        for j in 0..k {
            let sij = crate::linalg::dot(ev.row(i), el.row(j));
            gap += sij - si;
        }
    }
    let product = gv.matmul_nt(gl);
    let frob2: f64 = product.data().iter().map(|v| v * v).sum();
    gap / (kf * (kf - 1.0)) + 0.5 * rho * (kf / (kf - 1.0)) * frob2
}

/// Run plain gradient descent from a small random initialization.
pub fn gd_train(
    world: &SynthWorld,
    subset: &[usize],
    rho: f64,
    settings: &GdSettings,
) -> Result<GdResult> {
    let gamma = training_gamma(world, subset)?;
    let d = world.cfg.ambient_dim;
    let r = world.cfg.latent_dim;
    let kf = subset.len() as f64;
    let rho_eff = rho * kf / (kf - 1.0);

    let sigma_max = operator_norm(&gamma).max(1e-12);
    let step = settings.step_scale / (sigma_max * sigma_max);

    let mut rng = DetRng::new(derive_seed(settings.seed, subset.len() as u64));
    let scale = settings.init_scale / libm::sqrt(d as f64);
    let mut gv = Mat::zeros(d, r);
    let mut gl = Mat::zeros(d, r);
    for v in gv.data_mut() {
        *v = scale * rng.normal_f64();
    }
    for v in gl.data_mut() {
        *v = scale * rng.normal_f64();
    }

    let gamma_t = gamma.transpose();
    let mut loss = moment_loss(&gamma, &gv, &gl, rho_eff);
    let mut iters = 0;
    for it in 0..settings.max_iters {
        iters = it + 1;
        // grad_v = -Gamma G_l + rho' G_v (G_l^T G_l)
        let gll = gl.matmul_tn(&gl); // r x r
        let gvv = gv.matmul_tn(&gv);
        let mut grad_v = gamma.matmul(&gl);
        grad_v.scale(-1.0);
        grad_v.add_scaled(&gv.matmul(&gll), rho_eff);
        let mut grad_l = gamma_t.matmul(&gv);
        grad_l.scale(-1.0);
        grad_l.add_scaled(&gl.matmul(&gvv), rho_eff);

        gv.add_scaled(&grad_v, -step);
        gl.add_scaled(&grad_l, -step);

        let new_loss = moment_loss(&gamma, &gv, &gl, rho_eff);
        if (loss - new_loss).abs() <= settings.rel_tol * (1.0 + loss.abs()) {
            loss = new_loss;
            break;
        }
        loss = new_loss;
    }

    let pairwise = pairwise_loss(world, subset, &gv, &gl, rho);
    Ok(GdResult { product: gv.matmul_nt(&gl), loss, pairwise_loss: pairwise, iters })
}
