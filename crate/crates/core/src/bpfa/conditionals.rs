//! Closed-form full conditionals of the beta-Bernoulli factor model
//!
//! ```text
//! x_i = D (z_i ∘ s_i) + ε_i      (observed entries only)
//! d_k ~ N(0, I/P)      s_ik ~ N(0, 1/γ_s)      ε ~ N(0, I/γ_ε)
//! z_ik ~ Bern(π_k)     π_k ~ Beta(a0/K, b0(K-1)/K)
//! γ_s ~ Gamma(c0, d0)  γ_ε ~ Gamma(e0, f0)     (shape, rate)
//! ```
//!
//! Each function returns distribution parameters only; sampling lives in
//! the Gibbs driver. Kept separate so the density-oracle tests can check
//! them one at a time.

/// Floor applied to every precision before it is inverted.
pub const PRECISION_FLOOR: f64 = 1e-12;

/// Gaussian given as mean and precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPosterior {
    pub mean: f64,
    pub precision: f64,
}

impl GaussianPosterior {
    pub fn variance(&self) -> f64 {
        1.0 / self.precision
    }
}

/// Gamma in shape/rate form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPosterior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPosterior {
    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }
}

/// Beta over `π_k` given how many of `n` patches use atom `k`.
pub fn pi_posterior(a0: f64, b0: f64, k_atoms: usize, n_active: usize, n_patches: usize) -> (f64, f64) {
    let k = k_atoms as f64;
    let alpha = a0 / k + n_active as f64;
    let beta = b0 * (k - 1.0) / k + (n_patches - n_active) as f64;
    (alpha, beta)
}

/// One dictionary element `d_pk` given the residuals that exclude atom `k`.
///
/// `weighted_residual` is `Σ_i s_ik r_ip` and `weight_energy` is `Σ_i s_ik²`,
/// both taken over active patches that observe entry `p`.
pub fn atom_element_posterior(
    patch_dim: usize,
    gamma_eps: f64,
    weighted_residual: f64,
    weight_energy: f64,
) -> GaussianPosterior {
    let precision = (patch_dim as f64 + gamma_eps * weight_energy).max(PRECISION_FLOOR);
    GaussianPosterior {
        mean: gamma_eps * weighted_residual / precision,
        precision,
    }
}

/// Blocked `(z_ik, s_ik)` conditional with `s` marginalized for `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationPosterior {
    /// `log P(z=1|·) - log P(z=0|·)`.
    pub log_odds: f64,
    /// Conditional of `s_ik` given `z_ik = 1`.
    pub weight: GaussianPosterior,
}

impl ActivationPosterior {
    pub fn prob_active(&self) -> f64 {
        if self.log_odds >= 0.0 {
            1.0 / (1.0 + (-self.log_odds).exp())
        } else {
            let e = self.log_odds.exp();
            e / (1.0 + e)
        }
    }
}

/// `atom_energy = Σ_o d_ok²` and `atom_residual = Σ_o d_ok r_o` over the
/// patch's observed entries, with `r` the residual excluding atom `k`.
pub fn activation_posterior(
    pi: f64,
    gamma_s: f64,
    gamma_eps: f64,
    atom_energy: f64,
    atom_residual: f64,
) -> ActivationPosterior {
    let gamma_s = gamma_s.max(PRECISION_FLOOR);
    let precision = (gamma_s + gamma_eps * atom_energy).max(PRECISION_FLOOR);
    let mean = gamma_eps * atom_residual / precision;
    let pi = pi.clamp(0.0, 1.0);
    let prior_log_odds = pi.max(f64::MIN_POSITIVE).ln() - (1.0 - pi).max(f64::MIN_POSITIVE).ln();
    let log_odds = prior_log_odds + 0.5 * (gamma_s / precision).ln() + 0.5 * precision * mean * mean;
    ActivationPosterior {
        log_odds,
        weight: GaussianPosterior { mean, precision },
    }
}

/// Weight precision given the active weights only (inactive weights are
/// integrated out).
pub fn gamma_s_posterior(c0: f64, d0: f64, n_active: usize, active_weight_energy: f64) -> GammaPosterior {
    GammaPosterior {
        shape: c0 + 0.5 * n_active as f64,
        rate: d0 + 0.5 * active_weight_energy,
    }
}

/// Noise precision from residuals on observed entries.
pub fn gamma_eps_posterior(e0: f64, f0: f64, n_observed: usize, residual_energy: f64) -> GammaPosterior {
    GammaPosterior {
        shape: e0 + 0.5 * n_observed as f64,
        rate: f0 + 0.5 * residual_energy,
    }
}
