//! Overlapping B×B patches with per-element observation flags, and
//! reassembly by uniform averaging over covering patches.

use crate::error::{Error, Result};
use crate::maps::MapImage;
use crate::sampler::MaskedMap;

pub const DEFAULT_PATCH_SIZE: usize = 8;
pub const DEFAULT_STRIDE: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGeometry {
    pub patch_size: usize,
    pub stride: usize,
    pub image_width: usize,
    pub image_height: usize,
    pub channels: usize,
}

/// Anchors `0, s, 2s, ...` with a final anchor clamped to `len - b`.
fn anchors(len: usize, b: usize, s: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..=len - b).step_by(s).collect();
    if let Some(&last) = out.last() {
        if last + b < len {
            out.push(len - b);
        }
    }
    out
}

impl PatchGeometry {
    pub fn new(
        image_width: usize,
        image_height: usize,
        channels: usize,
        patch_size: usize,
        stride: usize,
    ) -> Result<Self> {
        if patch_size == 0 || patch_size > image_width.min(image_height) {
            return Err(Error::domain(format!(
                "patch size {patch_size} must be in 1..={}",
                image_width.min(image_height)
            )));
        }
        if stride == 0 || stride > patch_size {
            return Err(Error::domain(format!(
                "stride {stride} must be in 1..={patch_size}"
            )));
        }
        Ok(PatchGeometry {
            patch_size,
            stride,
            image_width,
            image_height,
            channels,
        })
    }

    pub fn row_anchors(&self) -> Vec<usize> {
        anchors(self.image_height, self.patch_size, self.stride)
    }

    pub fn col_anchors(&self) -> Vec<usize> {
        anchors(self.image_width, self.patch_size, self.stride)
    }

    /// Top-left corners `(row, col)` of every patch, row-major.
    pub fn patch_origins(&self) -> Vec<(usize, usize)> {
        let cols = self.col_anchors();
        self.row_anchors()
            .into_iter()
            .flat_map(|r| cols.iter().map(move |&c| (r, c)))
            .collect()
    }

    pub fn n_patches(&self) -> usize {
        self.row_anchors().len() * self.col_anchors().len()
    }

    /// Patch vector length `B² · channels`.
    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    /// Probe position of each pixel in a patch anchored at `origin`,
    /// in patch-vector pixel order.
    fn positions(&self, origin: (usize, usize)) -> impl Iterator<Item = usize> + '_ {
        let b = self.patch_size;
        (0..b).flat_map(move |dy| {
            (0..b).map(move |dx| (origin.0 + dy) * self.image_width + origin.1 + dx)
        })
    }
}

/// Vectorized patches `x_i` (rows of an N×P matrix) and their flags.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    geometry: PatchGeometry,
    n_patches: usize,
    patches: Vec<f64>,
    observed: Vec<bool>,
}

impl PatchSet {
    pub fn geometry(&self) -> &PatchGeometry {
        &self.geometry
    }

    pub fn n_patches(&self) -> usize {
        self.n_patches
    }

    pub fn dim(&self) -> usize {
        self.geometry.patch_dim()
    }

    /// Row-major N×P values.
    pub fn values(&self) -> &[f64] {
        &self.patches
    }

    pub fn observed_flags(&self) -> &[bool] {
        &self.observed
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        let p = self.dim();
        &self.patches[i * p..(i + 1) * p]
    }

    pub fn patch_observed(&self, i: usize) -> &[bool] {
        let p = self.dim();
        &self.observed[i * p..(i + 1) * p]
    }

    /// Builds a patch set directly from matrices, for callers that already
    /// hold vectorized data.
    pub fn from_matrices(
        geometry: PatchGeometry,
        n_patches: usize,
        patches: Vec<f64>,
        observed: Vec<bool>,
    ) -> Result<Self> {
        let p = geometry.patch_dim();
        if patches.len() != n_patches * p || observed.len() != n_patches * p {
            return Err(Error::domain("patch matrix dimensions do not match"));
        }
        Ok(PatchSet {
            geometry,
            n_patches,
            patches,
            observed,
        })
    }

    /// Returns a copy with every unobserved entry replaced by `fill`.
    pub fn with_unobserved_fill(&self, fill: f64) -> PatchSet {
        let mut out = self.clone();
        for (v, &o) in out.patches.iter_mut().zip(&self.observed) {
            if !o {
                *v = fill;
            }
        }
        out
    }
}

pub fn extract_patches(masked: &MaskedMap, patch_size: usize, stride: usize) -> Result<PatchSet> {
    let map = masked.map();
    let geometry = PatchGeometry::new(map.width(), map.height(), map.channels(), patch_size, stride)?;
    let c = geometry.channels;
    let origins = geometry.patch_origins();
    let p = geometry.patch_dim();
    let mut patches = Vec::with_capacity(origins.len() * p);
    let mut observed = Vec::with_capacity(origins.len() * p);
    for &origin in &origins {
        for pos in geometry.positions(origin) {
            patches.extend_from_slice(map.pixel(pos));
            observed.extend(std::iter::repeat(masked.is_observed(pos)).take(c));
        }
    }
    Ok(PatchSet {
        geometry,
        n_patches: origins.len(),
        patches,
        observed,
    })
}

/// Number of patches covering each probe position.
pub fn cover_counts(geometry: &PatchGeometry) -> Vec<u32> {
    let mut counts = vec![0u32; geometry.image_width * geometry.image_height];
    for origin in geometry.patch_origins() {
        for pos in geometry.positions(origin) {
            counts[pos] += 1;
        }
    }
    counts
}

/// Averages patch estimates back onto the image grid. With
/// `keep_measured`, positions on Ω take the measured value afterwards.
pub fn reassemble(
    patches: &[f64],
    geometry: &PatchGeometry,
    masked: &MaskedMap,
    keep_measured: bool,
) -> Result<MapImage> {
    let map = masked.map();
    if map.width() != geometry.image_width
        || map.height() != geometry.image_height
        || map.channels() != geometry.channels
    {
        return Err(Error::domain("geometry does not match masked map"));
    }
    let p = geometry.patch_dim();
    let origins = geometry.patch_origins();
    if patches.len() != origins.len() * p {
        return Err(Error::domain(format!(
            "patch matrix has {} values, expected {}x{}",
            patches.len(),
            origins.len(),
            p
        )));
    }
    let c = geometry.channels;
    let mut sums = vec![0.0; map.data().len()];
    let mut counts = vec![0u32; map.n_positions()];
    for (origin, patch) in origins.iter().zip(patches.chunks_exact(p)) {
        for (pos, vals) in geometry.positions(*origin).zip(patch.chunks_exact(c)) {
            counts[pos] += 1;
            for (s, v) in sums[pos * c..(pos + 1) * c].iter_mut().zip(vals) {
                *s += v;
            }
        }
    }
    for (pos, &n) in counts.iter().enumerate() {
        debug_assert!(n > 0);
        let measured = keep_measured && masked.is_observed(pos);
        for ch in 0..c {
            let idx = pos * c + ch;
            let v = if measured {
                map.data()[idx]
            } else {
                sums[idx] / n as f64
            };
            sums[idx] = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
    }
    MapImage::new(map.width(), map.height(), c, sums, map.kind())
}
