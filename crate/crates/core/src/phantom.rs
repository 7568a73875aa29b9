//! Voronoi grain-structure phantoms: a band-contrast map with darkened
//! grain boundaries, a hard-edged IPF colour map, and the label map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{MapImage, MapKind};

const IPF_MIN_COLOR_DISTANCE: f64 = 0.1;
const IPF_MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub n_grains: usize,
    pub boundary_width_px: f64,
    pub seed: u64,
    pub bc_grain_range: (f64, f64),
    pub bc_boundary_level: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            width: 256,
            height: 256,
            n_grains: 60,
            boundary_width_px: 1.5,
            seed: 0,
            bc_grain_range: (0.55, 0.9),
            bc_boundary_level: 0.45,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::domain("phantom dimensions must be positive"));
        }
        if self.n_grains == 0 || self.n_grains > self.width * self.height {
            return Err(Error::domain(format!(
                "cannot place {} grains on a {}x{} grid",
                self.n_grains, self.width, self.height
            )));
        }
        if !(self.boundary_width_px > 0.0 && self.boundary_width_px.is_finite()) {
            return Err(Error::domain("boundary width must be positive"));
        }
        let (lo, hi) = self.bc_grain_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::domain(format!("bad grain range [{lo}, {hi}]")));
        }
        if !(0.0 <= self.bc_boundary_level && self.bc_boundary_level < lo) {
            return Err(Error::domain(format!(
                "boundary level {} must lie in [0, {lo})",
                self.bc_boundary_level
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub band_contrast: MapImage,
    pub ipf: MapImage,
    /// Grain index per probe position, row-major.
    pub labels: Vec<u32>,
    /// Grain seed points as `(col, row)`.
    pub seeds: Vec<(f64, f64)>,
}

/// Nearest-seed labelling with ties going to the lowest seed index.
pub fn label_grid(width: usize, height: usize, seeds: &[(f64, f64)]) -> Vec<u32> {
    let mut labels = Vec::with_capacity(width * height);
    for row in 0..height {
        for col in 0..width {
            let (x, y) = (col as f64, row as f64);
            let mut best = (f64::INFINITY, 0u32);
            for (k, &(sx, sy)) in seeds.iter().enumerate() {
                let d = (x - sx).powi(2) + (y - sy).powi(2);
                if d < best.0 {
                    best = (d, k as u32);
                }
            }
            labels.push(best.1);
        }
    }
    labels
}

/// Distance from each pixel to the nearest Voronoi edge of its own cell.
fn boundary_distance(width: usize, height: usize, seeds: &[(f64, f64)], labels: &[u32]) -> Vec<f64> {
    let mut out = Vec::with_capacity(width * height);
    for row in 0..height {
        for col in 0..width {
            let p = (col as f64, row as f64);
            let own = labels[row * width + col] as usize;
            let a = seeds[own];
            let da = (p.0 - a.0).powi(2) + (p.1 - a.1).powi(2);
            let mut best = f64::INFINITY;
            for (k, &b) in seeds.iter().enumerate() {
                if k == own {
                    continue;
                }
                let sep = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
                if sep == 0.0 {
                    continue;
                }
                let db = (p.0 - b.0).powi(2) + (p.1 - b.1).powi(2);
                best = best.min((db - da) / (2.0 * sep));
            }
            out.push(best.max(0.0));
        }
    }
    out
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn adjacency(width: usize, height: usize, labels: &[u32], n: usize) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    let mut link = |a: u32, b: u32| {
        if a != b {
            let (a, b) = (a as usize, b as usize);
            if !adj[a].contains(&b) {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
    };
    for row in 0..height {
        for col in 0..width {
            let l = labels[row * width + col];
            if col + 1 < width {
                link(l, labels[row * width + col + 1]);
            }
            if row + 1 < height {
                link(l, labels[(row + 1) * width + col]);
            }
        }
    }
    adj
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_pix = spec.width * spec.height;
    // distinct pixel sites so that every grain owns at least its seed pixel
    let mut sites: Vec<usize> = (0..n_pix).collect();
    for i in 0..spec.n_grains {
        let j = rng.gen_range(i..n_pix);
        sites.swap(i, j);
    }
    let seeds: Vec<(f64, f64)> = sites[..spec.n_grains]
        .iter()
        .map(|&s| ((s % spec.width) as f64, (s / spec.width) as f64))
        .collect();
    generate_with_seeds(spec, seeds, &mut rng)
}

/// Builds a phantom from explicit seed points `(col, row)`.
pub fn generate_phantom_with_seeds(spec: &PhantomSpec, seeds: Vec<(f64, f64)>) -> Result<Phantom> {
    spec.validate()?;
    if seeds.len() != spec.n_grains {
        return Err(Error::domain("seed count does not match n_grains"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    generate_with_seeds(spec, seeds, &mut rng)
}

fn generate_with_seeds(spec: &PhantomSpec, seeds: Vec<(f64, f64)>, rng: &mut ChaCha8Rng) -> Result<Phantom> {
    let (w, h, n) = (spec.width, spec.height, spec.n_grains);
    let labels = label_grid(w, h, &seeds);

    let (lo, hi) = spec.bc_grain_range;
    let grain_bc: Vec<f64> = (0..n).map(|_| lo + (hi - lo) * rng.gen::<f64>()).collect();
    let dist = boundary_distance(w, h, &seeds, &labels);
    let level = spec.bc_boundary_level;
    let bc: Vec<f64> = labels
        .iter()
        .zip(&dist)
        .map(|(&l, &d)| {
            let g = grain_bc[l as usize];
            (level + (g - level) * smoothstep(d / spec.boundary_width_px)).clamp(level, hi)
        })
        .collect();

    let adj = adjacency(w, h, &labels, n);
    let mut colors: Vec<[f64; 3]> = Vec::with_capacity(n);
    for g in 0..n {
        let mut color = [0.0; 3];
        for _ in 0..IPF_MAX_REDRAWS {
            color = [rng.gen(), rng.gen(), rng.gen()];
            let clash = adj[g].iter().filter(|&&o| o < g).any(|&o| {
                colors[o]
                    .iter()
                    .zip(&color)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
                    < IPF_MIN_COLOR_DISTANCE
            });
            if !clash {
                break;
            }
        }
        colors.push(color);
    }
    let ipf: Vec<f64> = labels.iter().flat_map(|&l| colors[l as usize]).collect();

    Ok(Phantom {
        band_contrast: MapImage::new(w, h, 1, bc, MapKind::BandContrast)?,
        ipf: MapImage::new(w, h, 3, ipf, MapKind::Ipf)?,
        labels,
        seeds,
    })
}
