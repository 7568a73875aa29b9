use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sweep::SweepConfig;
use crate::bpfa::{BpfaHyperParams, InpaintConfig};
use crate::error::{Error, Result};
use crate::maps::MapKind;
use crate::metrics::SsimParams;
use crate::patcher::{DEFAULT_PATCH_SIZE, DEFAULT_STRIDE};
use crate::phantom::PhantomSpec;

/// Every tunable of the pipeline as one flat record. This is the schema of
/// `--config` files; command-line flags are applied on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub seed: u64,
    pub ratio: f64,
    pub noise_sigma: f64,

    pub patch_size: usize,
    pub stride: usize,
    pub keep_measured: Option<bool>,
    pub center: bool,

    pub k: usize,
    pub a0: f64,
    pub b0: f64,
    pub c0: f64,
    pub d0: f64,
    pub e0: f64,
    pub f0: f64,
    pub burn_in: usize,
    pub samples: usize,

    pub width: usize,
    pub height: usize,
    pub n_grains: usize,
    pub boundary_width_px: f64,
    pub bc_grain_low: f64,
    pub bc_grain_high: f64,
    pub bc_boundary_level: f64,

    pub ratios: Vec<f64>,
    pub seeds: Vec<u64>,
    pub kinds: Vec<MapKind>,
    pub patterns_per_second: f64,
}

impl Default for Settings {
    fn default() -> Self {
        let hp = BpfaHyperParams::default();
        let ph = PhantomSpec::default();
        let sw = SweepConfig::default();
        Settings {
            seed: 0,
            ratio: 0.1,
            noise_sigma: 0.0,
            patch_size: DEFAULT_PATCH_SIZE,
            stride: DEFAULT_STRIDE,
            keep_measured: None,
            center: true,
            k: hp.k,
            a0: hp.a0,
            b0: hp.b0,
            c0: hp.c0,
            d0: hp.d0,
            e0: hp.e0,
            f0: hp.f0,
            burn_in: hp.burn_in,
            samples: hp.samples,
            width: ph.width,
            height: ph.height,
            n_grains: ph.n_grains,
            boundary_width_px: ph.boundary_width_px,
            bc_grain_low: ph.bc_grain_range.0,
            bc_grain_high: ph.bc_grain_range.1,
            bc_boundary_level: ph.bc_boundary_level,
            ratios: sw.ratios,
            seeds: sw.seeds,
            kinds: sw.kinds,
            patterns_per_second: sw.patterns_per_second,
        }
    }
}

impl Settings {
    /// Reads a flat JSON object; keys absent from the file keep defaults.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        Self::from_json(&text)
    }

    pub fn hyper_params(&self) -> BpfaHyperParams {
        BpfaHyperParams {
            k: self.k,
            a0: self.a0,
            b0: self.b0,
            c0: self.c0,
            d0: self.d0,
            e0: self.e0,
            f0: self.f0,
            burn_in: self.burn_in,
            samples: self.samples,
            seed: self.seed,
        }
    }

    pub fn inpaint_config(&self) -> InpaintConfig {
        InpaintConfig {
            patch_size: self.patch_size,
            stride: self.stride,
            keep_measured: self.keep_measured,
            center: self.center,
            hp: self.hyper_params(),
        }
    }

    pub fn phantom_spec(&self) -> PhantomSpec {
        PhantomSpec {
            width: self.width,
            height: self.height,
            n_grains: self.n_grains,
            boundary_width_px: self.boundary_width_px,
            seed: self.seed,
            bc_grain_range: (self.bc_grain_low, self.bc_grain_high),
            bc_boundary_level: self.bc_boundary_level,
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            ratios: self.ratios.clone(),
            seeds: self.seeds.clone(),
            kinds: self.kinds.clone(),
            patterns_per_second: self.patterns_per_second,
            noise_sigma: self.noise_sigma,
            phantom: self.phantom_spec(),
            inpaint: self.inpaint_config(),
            ssim: SsimParams::default(),
        }
    }
}
