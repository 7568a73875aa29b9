//! Beta Process Factor Analysis: joint dictionary learning and sparse
//! coding of partially observed patches by Gibbs sampling.
//!
//! Only observed patch entries enter any likelihood term. Values stored at
//! unobserved entries are never read, so the fill used off the sampling
//! set has no effect on the sampler.

pub mod conditionals;
mod gibbs;
mod inpaint;
mod io;

pub use gibbs::{gibbs_sweep, GibbsSampler, SweepDiagnostics};
pub use inpaint::{inpaint, InpaintConfig, InpaintResult};
pub use io::{read_dictionary, write_diagnostics_csv, write_dictionary, DIAGNOSTICS_CSV_HEADER};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patcher::PatchSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BpfaHyperParams {
    /// Dictionary size.
    pub k: usize,
    pub a0: f64,
    pub b0: f64,
    pub c0: f64,
    pub d0: f64,
    pub e0: f64,
    pub f0: f64,
    pub burn_in: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for BpfaHyperParams {
    fn default() -> Self {
        BpfaHyperParams {
            k: 64,
            a0: 1.0,
            b0: 1.0,
            c0: 0.1,
            d0: 0.1,
            e0: 0.1,
            f0: 0.1,
            burn_in: 20,
            samples: 20,
            seed: 0,
        }
    }
}

impl BpfaHyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::domain("dictionary size K must be positive"));
        }
        if self.samples == 0 {
            return Err(Error::domain("at least one retained sample is required"));
        }
        for (name, v) in [
            ("a0", self.a0),
            ("b0", self.b0),
            ("c0", self.c0),
            ("d0", self.d0),
            ("e0", self.e0),
            ("f0", self.f0),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("hyperparameter {name} = {v} must be positive")));
            }
        }
        Ok(())
    }
}

/// Observed entries of each patch in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedPatches {
    dim: usize,
    offsets: Vec<usize>,
    entries: Vec<u32>,
    values: Vec<f64>,
}

impl ObservedPatches {
    pub fn from_patch_set(patches: &PatchSet) -> Self {
        Self::from_dense(patches.dim(), patches.values(), patches.observed_flags(), None)
    }

    /// `centering[p]`, when given, is subtracted from every observed value at
    /// patch entry `p`.
    pub fn from_dense(dim: usize, values: &[f64], observed: &[bool], centering: Option<&[f64]>) -> Self {
        assert_eq!(values.len(), observed.len());
        assert!(dim > 0 && values.len() % dim == 0);
        if let Some(c) = centering {
            assert_eq!(c.len(), dim);
        }
        let n = values.len() / dim;
        let mut offsets = Vec::with_capacity(n + 1);
        let mut entries = Vec::new();
        let mut vals = Vec::new();
        offsets.push(0);
        for i in 0..n {
            for p in 0..dim {
                if observed[i * dim + p] {
                    entries.push(p as u32);
                    vals.push(values[i * dim + p] - centering.map_or(0.0, |c| c[p]));
                }
            }
            offsets.push(entries.len());
        }
        ObservedPatches {
            dim,
            offsets,
            entries,
            values: vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_patches(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_observed(&self) -> usize {
        self.entries.len()
    }

    pub(crate) fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn entries(&self, i: usize) -> &[u32] {
        &self.entries[self.range(i)]
    }

    pub fn values(&self, i: usize) -> &[f64] {
        &self.values[self.range(i)]
    }
}

/// Full sampler state. The dictionary is stored atom-major: atom `k`
/// occupies `dict[k*P .. (k+1)*P]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BpfaState {
    pub(crate) dim: usize,
    pub(crate) k: usize,
    pub(crate) n: usize,
    pub(crate) dict: Vec<f64>,
    pub(crate) z: Vec<bool>,
    pub(crate) s: Vec<f64>,
    pub(crate) pi: Vec<f64>,
    pub(crate) gamma_s: f64,
    pub(crate) gamma_eps: f64,
    pub(crate) rng: ChaCha8Rng,
    pub(crate) sweeps: usize,
}

impl BpfaState {
    pub fn patch_dim(&self) -> usize {
        self.dim
    }

    pub fn n_atoms(&self) -> usize {
        self.k
    }

    pub fn n_patches(&self) -> usize {
        self.n
    }

    pub fn atom(&self, k: usize) -> &[f64] {
        &self.dict[k * self.dim..(k + 1) * self.dim]
    }

    /// Element `(p, k)` of the P×K dictionary.
    pub fn dict_element(&self, p: usize, k: usize) -> f64 {
        self.dict[k * self.dim + p]
    }

    pub fn active(&self, i: usize, k: usize) -> bool {
        self.z[i * self.k + k]
    }

    pub fn weight(&self, i: usize, k: usize) -> f64 {
        self.s[i * self.k + k]
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn gamma_s(&self) -> f64 {
        self.gamma_s
    }

    pub fn gamma_eps(&self) -> f64 {
        self.gamma_eps
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweeps
    }

    /// Number of patches using each atom.
    pub fn usage(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for row in self.z.chunks_exact(self.k) {
            for (c, &z) in counts.iter_mut().zip(row) {
                *c += z as usize;
            }
        }
        counts
    }

    /// Atoms with `π_k > 1/K`.
    pub fn active_atoms(&self) -> usize {
        let thresh = 1.0 / self.k as f64;
        self.pi.iter().filter(|&&p| p > thresh).count()
    }

    /// `D (z_i ∘ s_i)` for patch `i`, written into `out`.
    pub fn reconstruct_into(&self, i: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..self.k {
            if self.z[i * self.k + k] {
                let s = self.s[i * self.k + k];
                for (o, d) in out.iter_mut().zip(self.atom(k)) {
                    *o += d * s;
                }
            }
        }
    }

    pub fn reconstruct(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.reconstruct_into(i, &mut out);
        out
    }

    /// Sets activations and weights directly, for tests and warm starts.
    pub fn set_code(&mut self, i: usize, k: usize, active: bool, weight: f64) {
        self.z[i * self.k + k] = active;
        self.s[i * self.k + k] = if active { weight } else { 0.0 };
    }

    pub fn set_atom(&mut self, k: usize, atom: &[f64]) {
        assert_eq!(atom.len(), self.dim);
        self.dict[k * self.dim..(k + 1) * self.dim].copy_from_slice(atom);
    }

    pub(crate) fn check_finite(&self) -> std::result::Result<(), String> {
        if let Some(i) = self.dict.iter().position(|v| !v.is_finite()) {
            return Err(format!("dictionary element {i} is not finite"));
        }
        if let Some(i) = self.s.iter().position(|v| !v.is_finite()) {
            return Err(format!("weight {i} is not finite"));
        }
        if let Some(k) = self.pi.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(format!("pi[{k}] = {} outside [0, 1]", self.pi[k]));
        }
        if !(self.gamma_s > 0.0 && self.gamma_s.is_finite()) {
            return Err(format!("gamma_s = {}", self.gamma_s));
        }
        if !(self.gamma_eps > 0.0 && self.gamma_eps.is_finite()) {
            return Err(format!("gamma_eps = {}", self.gamma_eps));
        }
        Ok(())
    }
}

/// Prior draw for the dictionary, empty codes, `π = 1/2`, and the prior
/// means for both precisions.
pub fn init_state(patches: &PatchSet, hp: &BpfaHyperParams) -> Result<BpfaState> {
    init_state_dims(patches.dim(), patches.n_patches(), hp)
}

pub fn init_state_dims(dim: usize, n_patches: usize, hp: &BpfaHyperParams) -> Result<BpfaState> {
    hp.validate()?;
    if n_patches == 0 {
        return Err(Error::domain("cannot initialise BPFA with zero patches"));
    }
    if dim == 0 {
        return Err(Error::domain("patch dimension must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let scale = (1.0 / dim as f64).sqrt();
    let dict = (0..dim * hp.k)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        })
        .collect();
    Ok(BpfaState {
        dim,
        k: hp.k,
        n: n_patches,
        dict,
        z: vec![false; n_patches * hp.k],
        s: vec![0.0; n_patches * hp.k],
        pi: vec![0.5; hp.k],
        gamma_s: hp.c0 / hp.d0,
        gamma_eps: hp.e0 / hp.f0,
        rng,
        sweeps: 0,
    })
}
