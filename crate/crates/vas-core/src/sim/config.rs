//! Simulator configuration.

use alloc::format;
use alloc::vec::Vec;

use crate::error::Error;
use crate::Result;

/// Parameters of one synthetic world.
///
/// Latent pairs are zero-mean with per-coordinate cross-moment targeted at
/// `sigma_train_diag` (train split) or `sigma_test_diag` (test split), and
/// every latent vector is renormalized to unit norm, so each diagonal must
/// sum to at most one. Observations are the latent image under a sampled
/// orthonormal-column map plus isotropic Gaussian noise of scale
/// `noise_std`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Latent dimension.
    pub latent_dim: usize,
    /// Ambient (observation) dimension; at least `latent_dim`.
    pub ambient_dim: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub sigma_train_diag: Vec<f64>,
    pub sigma_test_diag: Vec<f64>,
    pub noise_std: f64,
    /// Regularizer constant used by the closed-form trainer.
    pub rho: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let r = self.latent_dim;
        if r == 0 {
            return Err(Error::ConfigInvalid("latent_dim must be >= 1".into()));
        }
        if self.ambient_dim < r {
            return Err(Error::ConfigInvalid(format!(
                "ambient_dim {} < latent_dim {r}",
                self.ambient_dim
            )));
        }
        if self.n_train < 2 {
            return Err(Error::ConfigInvalid("n_train must be >= 2".into()));
        }
        if self.n_test == 0 {
            return Err(Error::ConfigInvalid("n_test must be >= 1".into()));
        }
        for (name, diag) in [
            ("sigma_train_diag", &self.sigma_train_diag),
            ("sigma_test_diag", &self.sigma_test_diag),
        ] {
            if diag.len() != r {
                return Err(Error::ConfigInvalid(format!(
                    "{name} has {} entries, expected {r}",
                    diag.len()
                )));
            }
            if diag.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::ConfigInvalid(format!("{name} entries must be positive")));
            }
            let sum: f64 = diag.iter().sum();
            if sum > 1.0 + 1e-9 {
                return Err(Error::ConfigInvalid(format!(
                    "{name} sums to {sum}; unit-norm latents need sum <= 1"
                )));
            }
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::ConfigInvalid("noise_std must be >= 0".into()));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::ConfigInvalid("rho must be > 0".into()));
        }
        Ok(())
    }

    /// Small well-conditioned default used by reports and tests: uniform
    /// train spectrum, geometrically decaying test spectrum.
    pub fn default_with(latent_dim: usize, ambient_dim: usize, seed: u64) -> Self {
        let r = latent_dim.max(1);
        let uniform = 0.8 / r as f64;
        let mut test = Vec::with_capacity(r);
        let mut w = 1.0;
        for _ in 0..r {
            test.push(w);
            w *= 0.5;
        }
        let total: f64 = test.iter().sum();
        for v in &mut test {
            *v *= 0.8 / total;
        }
        SynthConfig {
            latent_dim: r,
            ambient_dim,
            n_train: 256,
            n_test: 2048,
            sigma_train_diag: alloc::vec![uniform; r],
            sigma_test_diag: test,
            noise_std: 0.05,
            rho: 1.0,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        SynthConfig::default_with(4, 16, 7).validate().unwrap();
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut c = SynthConfig::default_with(4, 16, 7);
        c.ambient_dim = 3;
        assert!(c.validate().is_err());

        let mut c = SynthConfig::default_with(4, 16, 7);
        c.sigma_train_diag = alloc::vec![0.5; 3];
        assert!(c.validate().is_err());

        let mut c = SynthConfig::default_with(4, 16, 7);
        c.sigma_test_diag = alloc::vec![0.5; 4]; // sums to 2.0
        assert!(c.validate().is_err());

        let mut c = SynthConfig::default_with(4, 16, 7);
        c.rho = 0.0;
        assert!(c.validate().is_err());
    }
}
