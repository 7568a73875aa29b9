use serde::{Deserialize, Serialize};

use super::{init_state_dims, BpfaHyperParams, BpfaState, GibbsSampler, ObservedPatches, SweepDiagnostics};
use crate::error::{Error, Result};
use crate::maps::MapImage;
use crate::patcher::{extract_patches, reassemble, DEFAULT_PATCH_SIZE, DEFAULT_STRIDE};
use crate::sampler::MaskedMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InpaintConfig {
    pub patch_size: usize,
    pub stride: usize,
    /// `None` picks `true` for noiseless measurements and `false` otherwise.
    pub keep_measured: Option<bool>,
    /// Subtract the per-channel mean of the observed pixels before coding.
    pub center: bool,
    pub hp: BpfaHyperParams,
}

impl Default for InpaintConfig {
    fn default() -> Self {
        InpaintConfig {
            patch_size: DEFAULT_PATCH_SIZE,
            stride: DEFAULT_STRIDE,
            keep_measured: None,
            center: true,
            hp: BpfaHyperParams::default(),
        }
    }
}

impl InpaintConfig {
    pub fn keep_measured_for(&self, noise_sigma: f64) -> bool {
        self.keep_measured.unwrap_or(noise_sigma == 0.0)
    }
}

#[derive(Debug, Clone)]
pub struct InpaintResult {
    pub image: MapImage,
    pub state: BpfaState,
    pub diagnostics: Vec<SweepDiagnostics>,
}

/// Per-channel mean over observed positions.
fn observed_channel_means(masked: &MaskedMap) -> Vec<f64> {
    let c = masked.map().channels();
    let mut sums = vec![0.0; c];
    let idx = masked.sampling().indices();
    for &j in idx {
        for (s, v) in sums.iter_mut().zip(masked.map().pixel(j)) {
            *s += v;
        }
    }
    sums.into_iter().map(|s| s / idx.len() as f64).collect()
}

/// Patch extraction, `burn_in + samples` Gibbs sweeps, posterior-mean
/// patch estimates over the retained sweeps, and reassembly.
///
/// When every position is measured and measured values are kept, the
/// reassembled output is the measurement itself whatever the sampler does,
/// so no sweeps are run: the result carries the initial state and no
/// diagnostics.
pub fn inpaint(masked: &MaskedMap, config: &InpaintConfig) -> Result<InpaintResult> {
    config.hp.validate()?;
    if masked.sampling().is_empty() {
        return Err(Error::domain("no observed positions to inpaint from"));
    }
    let patches = extract_patches(masked, config.patch_size, config.stride)?;
    let dim = patches.dim();
    let channels = masked.map().channels();
    let keep = config.keep_measured_for(masked.noise_sigma());
    if keep && masked.sampling().len() == masked.map().n_positions() {
        return Ok(InpaintResult {
            image: masked.map().clone(),
            state: init_state_dims(dim, patches.n_patches(), &config.hp)?,
            diagnostics: Vec::new(),
        });
    }

    let centering: Vec<f64> = if config.center {
        let means = observed_channel_means(masked);
        (0..dim).map(|p| means[p % channels]).collect()
    } else {
        vec![0.0; dim]
    };
    let data = ObservedPatches::from_dense(
        dim,
        patches.values(),
        patches.observed_flags(),
        Some(&centering),
    );
    let state = init_state_dims(dim, patches.n_patches(), &config.hp)?;
    let mut sampler = GibbsSampler::new(&data, &config.hp, state)?;
    let total = config.hp.burn_in + config.hp.samples;
    let mut diagnostics = Vec::with_capacity(total);
    let mut estimate = vec![0.0; patches.values().len()];
    let mut scratch = vec![0.0; dim];
    for sweep in 0..total {
        diagnostics.push(sampler.sweep()?);
        if sweep >= config.hp.burn_in {
            let st = sampler.state();
            for (i, acc) in estimate.chunks_exact_mut(dim).enumerate() {
                st.reconstruct_into(i, &mut scratch);
                for (a, v) in acc.iter_mut().zip(&scratch) {
                    *a += v;
                }
            }
        }
    }
    let scale = 1.0 / config.hp.samples as f64;
    for row in estimate.chunks_exact_mut(dim) {
        for (v, c) in row.iter_mut().zip(&centering) {
            *v = *v * scale + c;
        }
    }
    let image = reassemble(&estimate, patches.geometry(), masked, keep)?;
    Ok(InpaintResult {
        image,
        state: sampler.into_state(),
        diagnostics,
    })
}
