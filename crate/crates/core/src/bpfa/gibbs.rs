use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::conditionals::{
    activation_posterior, atom_element_posterior, gamma_eps_posterior, gamma_s_posterior,
    pi_posterior, GammaPosterior, PRECISION_FLOOR,
};
use super::{BpfaHyperParams, BpfaState, ObservedPatches};
use crate::error::{Error, Result};
use crate::patcher::PatchSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepDiagnostics {
    /// 1-based sweep counter.
    pub sweep: usize,
    pub rmse_observed: f64,
    pub active_atoms: usize,
    pub gamma_eps: f64,
}

fn sample_gamma(rng: &mut ChaCha8Rng, post: GammaPosterior) -> f64 {
    let g = Gamma::new(post.shape, 1.0 / post.rate.max(PRECISION_FLOOR))
        .expect("gamma posterior parameters are positive");
    g.sample(rng).max(PRECISION_FLOOR)
}

/// Beta draw as a ratio of unit-scale gammas. A zero shape (K = 1 with
/// every patch using the atom) puts all mass on the endpoint.
pub(crate) fn sample_beta(rng: &mut ChaCha8Rng, alpha: f64, beta: f64) -> f64 {
    if beta <= 0.0 {
        return 1.0;
    }
    if alpha <= 0.0 {
        return 0.0;
    }
    let x = Gamma::new(alpha, 1.0).expect("alpha > 0").sample(rng);
    let y = Gamma::new(beta, 1.0).expect("beta > 0").sample(rng);
    if x + y > 0.0 {
        (x / (x + y)).clamp(0.0, 1.0)
    } else {
        alpha / (alpha + beta)
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Gibbs driver over a fixed set of observed patches. Keeps the residual
/// `x - D(z∘s)` on observed entries in step with the state.
pub struct GibbsSampler<'a> {
    data: &'a ObservedPatches,
    hp: BpfaHyperParams,
    state: BpfaState,
    residual: Vec<f64>,
}

impl<'a> GibbsSampler<'a> {
    pub fn new(data: &'a ObservedPatches, hp: &BpfaHyperParams, state: BpfaState) -> Result<Self> {
        hp.validate()?;
        if state.dim != data.dim() || state.n != data.n_patches() || state.k != hp.k {
            return Err(Error::domain(format!(
                "state is {}x{} with {} patches; data has dim {} with {} patches, K = {}",
                state.dim,
                state.k,
                state.n,
                data.dim(),
                data.n_patches(),
                hp.k
            )));
        }
        let mut sampler = GibbsSampler {
            data,
            hp: hp.clone(),
            state,
            residual: vec![0.0; data.n_observed()],
        };
        sampler.refresh_residual();
        Ok(sampler)
    }

    pub fn state(&self) -> &BpfaState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut BpfaState {
        &mut self.state
    }

    pub fn into_state(self) -> BpfaState {
        self.state
    }

    /// Recomputes the residual from scratch.
    pub fn refresh_residual(&mut self) {
        let st = &self.state;
        for i in 0..st.n {
            let range = self.data.range(i);
            let entries = self.data.entries(i);
            let res = &mut self.residual[range.clone()];
            res.copy_from_slice(self.data.values(i));
            for k in 0..st.k {
                let idx = i * st.k + k;
                if st.z[idx] {
                    let s = st.s[idx];
                    let atom = st.atom(k);
                    for (r, &p) in res.iter_mut().zip(entries) {
                        *r -= atom[p as usize] * s;
                    }
                }
            }
        }
    }

    pub fn residual_energy(&self) -> f64 {
        self.residual.iter().map(|r| r * r).sum()
    }

    /// Samples every atom `d_k` from its diagonal Gaussian conditional.
    /// Unused atoms get a fresh prior draw.
    pub fn sample_dictionary(&mut self) {
        let (dim, k_atoms, n) = (self.state.dim, self.state.k, self.state.n);
        let mut users: Vec<Vec<u32>> = vec![Vec::new(); k_atoms];
        for i in 0..n {
            for (k, &z) in self.state.z[i * k_atoms..(i + 1) * k_atoms].iter().enumerate() {
                if z {
                    users[k].push(i as u32);
                }
            }
        }
        let mut num = vec![0.0; dim];
        let mut den = vec![0.0; dim];
        let mut delta = vec![0.0; dim];
        for (k, users_k) in users.iter().enumerate() {
            num.iter_mut().for_each(|v| *v = 0.0);
            den.iter_mut().for_each(|v| *v = 0.0);
            let atom_off = k * dim;
            for &i in users_k {
                let i = i as usize;
                let s = self.state.s[i * k_atoms + k];
                let range = self.data.range(i);
                for (&p, &r) in self.data.entries(i).iter().zip(&self.residual[range]) {
                    let p = p as usize;
                    let r_excl = r + self.state.dict[atom_off + p] * s;
                    num[p] += s * r_excl;
                    den[p] += s * s;
                }
            }
            for p in 0..dim {
                let post = atom_element_posterior(dim, self.state.gamma_eps, num[p], den[p]);
                let draw = post.mean + normal(&mut self.state.rng) / post.precision.sqrt();
                delta[p] = draw - self.state.dict[atom_off + p];
                self.state.dict[atom_off + p] = draw;
            }
            for &i in users_k {
                let i = i as usize;
                let s = self.state.s[i * k_atoms + k];
                let range = self.data.range(i);
                for (&p, r) in self.data.entries(i).iter().zip(&mut self.residual[range]) {
                    *r -= delta[p as usize] * s;
                }
            }
        }
    }

    /// Blocked `(z_ik, s_ik)` update for every patch, atoms in order.
    pub fn sample_codes(&mut self) {
        let k_atoms = self.state.k;
        let mut sub = Vec::new();
        for i in 0..self.state.n {
            let entries = self.data.entries(i);
            let m = entries.len();
            sub.clear();
            for k in 0..k_atoms {
                let atom = self.state.atom(k);
                sub.extend(entries.iter().map(|&p| atom[p as usize]));
            }
            let range = self.data.range(i);
            let res = &mut self.residual[range];
            for k in 0..k_atoms {
                let idx = i * k_atoms + k;
                let d = &sub[k * m..(k + 1) * m];
                let old = if self.state.z[idx] { self.state.s[idx] } else { 0.0 };
                let (energy, dot) = d
                    .iter()
                    .zip(res.iter())
                    .fold((0.0, 0.0), |(e, c), (&dv, &rv)| (e + dv * dv, c + dv * rv));
                let post = activation_posterior(
                    self.state.pi[k],
                    self.state.gamma_s,
                    self.state.gamma_eps,
                    energy,
                    dot + old * energy,
                );
                let prob = post.prob_active();
                let u: f64 = self.state.rng.gen();
                let new = if u < prob {
                    let w = post.weight;
                    self.state.z[idx] = true;
                    w.mean + normal(&mut self.state.rng) / w.precision.sqrt()
                } else {
                    self.state.z[idx] = false;
                    0.0
                };
                self.state.s[idx] = new;
                let change = new - old;
                if change != 0.0 {
                    for (r, &dv) in res.iter_mut().zip(d) {
                        *r -= dv * change;
                    }
                }
            }
        }
    }

    pub fn sample_pi(&mut self) {
        let usage = self.state.usage();
        for (k, &n_k) in usage.iter().enumerate() {
            let (a, b) = pi_posterior(self.hp.a0, self.hp.b0, self.state.k, n_k, self.state.n);
            self.state.pi[k] = sample_beta(&mut self.state.rng, a, b);
        }
    }

    pub fn sample_gamma_s(&mut self) {
        let (count, energy) = self
            .state
            .z
            .iter()
            .zip(&self.state.s)
            .filter(|(&z, _)| z)
            .fold((0usize, 0.0), |(c, e), (_, &s)| (c + 1, e + s * s));
        let post = gamma_s_posterior(self.hp.c0, self.hp.d0, count, energy);
        self.state.gamma_s = sample_gamma(&mut self.state.rng, post);
    }

    pub fn sample_gamma_eps(&mut self) {
        let post = gamma_eps_posterior(
            self.hp.e0,
            self.hp.f0,
            self.data.n_observed(),
            self.residual_energy(),
        );
        self.state.gamma_eps = sample_gamma(&mut self.state.rng, post);
    }

    /// One full sweep: dictionary, codes, `π`, `γ_s`, `γ_ε`.
    pub fn sweep(&mut self) -> Result<SweepDiagnostics> {
        self.refresh_residual();
        self.sample_dictionary();
        self.sample_codes();
        self.sample_pi();
        self.sample_gamma_s();
        self.sample_gamma_eps();
        self.state.sweeps += 1;
        let sweep = self.state.sweeps;
        self.state
            .check_finite()
            .map_err(|what| Error::Numerical { sweep, what })?;
        let n_obs = self.data.n_observed();
        let rmse_observed = if n_obs == 0 {
            0.0
        } else {
            (self.residual_energy() / n_obs as f64).sqrt()
        };
        if !rmse_observed.is_finite() {
            return Err(Error::Numerical {
                sweep,
                what: "residual is not finite".into(),
            });
        }
        Ok(SweepDiagnostics {
            sweep,
            rmse_observed,
            active_atoms: self.state.active_atoms(),
            gamma_eps: self.state.gamma_eps,
        })
    }
}

/// One sweep over a patch set, consuming and returning the state.
/// Repeated sweeps should reuse a [`GibbsSampler`] instead.
pub fn gibbs_sweep(
    state: BpfaState,
    patches: &PatchSet,
    hp: &BpfaHyperParams,
) -> Result<(BpfaState, SweepDiagnostics)> {
    let data = ObservedPatches::from_patch_set(patches);
    let mut sampler = GibbsSampler::new(&data, hp, state)?;
    let diag = sampler.sweep()?;
    Ok((sampler.into_state(), diag))
}
