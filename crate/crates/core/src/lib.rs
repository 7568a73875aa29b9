//! Compressive EBSD acquisition on indexed maps: probe-position
//! subsampling, BPFA inpainting of band-contrast and IPF maps, and
//! SSIM/PSNR evaluation against the fully sampled reference.

pub mod bpfa;
pub mod cli;
pub mod error;
pub mod maps;
pub mod metrics;
pub mod patcher;
pub mod phantom;
pub mod sampler;

pub use error::{Error, Result};
pub use maps::{MapImage, MapKind, MetricsRecord};
pub use sampler::{MaskedMap, SamplingSet};
