//! Probe-position subsampling and the masked acquisition model
//! `y = P_Ω v + n`, shared across all channels of a map.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::maps::MapImage;

/// The set Ω of visited probe positions, in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingSet {
    n_positions: usize,
    indices: Vec<usize>,
    seed: u64,
}

impl SamplingSet {
    /// Builds a set from arbitrary indices; they are sorted and must be
    /// distinct, in range and non-empty.
    pub fn from_indices(n_positions: usize, mut indices: Vec<usize>, seed: u64) -> Result<Self> {
        if n_positions == 0 {
            return Err(Error::domain("n_positions must be positive"));
        }
        if indices.is_empty() {
            return Err(Error::domain("sampling set must contain at least one position"));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::domain("sampling set contains duplicate positions"));
        }
        if let Some(&last) = indices.last() {
            if last >= n_positions {
                return Err(Error::domain(format!(
                    "position {last} out of range for {n_positions} positions"
                )));
            }
        }
        Ok(SamplingSet {
            n_positions,
            indices,
            seed,
        })
    }

    /// Every position observed.
    pub fn full(n_positions: usize) -> Result<Self> {
        Self::from_indices(n_positions, (0..n_positions).collect(), 0)
    }

    pub fn n_positions(&self) -> usize {
        self.n_positions
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// |Ω|.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn ratio(&self) -> f64 {
        self.indices.len() as f64 / self.n_positions as f64
    }

    /// Dense per-position membership flags.
    pub fn membership(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_positions];
        for &j in &self.indices {
            mask[j] = true;
        }
        mask
    }

    /// Text form: `n_positions M seed` then one index per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {}\n", self.n_positions, self.indices.len(), self.seed);
        for j in &self.indices {
            writeln!(s, "{j}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty mask file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Format(format!("bad mask header '{header}'")));
        }
        let parse = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| Error::Format(format!("bad mask header field '{s}'")))
        };
        let (n, m, seed) = (parse(fields[0])? as usize, parse(fields[1])? as usize, parse(fields[2])?);
        let indices = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Format(format!("bad mask index '{l}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        if indices.len() != m {
            return Err(Error::Format(format!(
                "mask header promises {m} indices, found {}",
                indices.len()
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format("mask indices not strictly ascending".into()));
        }
        Self::from_indices(n, indices, seed)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io_at(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        Self::from_text(&text)
    }
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::domain(format!("sampling ratio {ratio} not in (0, 1]")));
    }
    Ok(())
}

/// `M = round(ratio * n_positions)`.
pub fn sample_count(n_positions: usize, ratio: f64) -> Result<usize> {
    check_ratio(ratio)?;
    let m = (ratio * n_positions as f64).round() as usize;
    if m < 1 {
        return Err(Error::domain(format!(
            "ratio {ratio} selects no positions out of {n_positions}"
        )));
    }
    Ok(m.min(n_positions))
}

/// Draws `round(ratio * n_positions)` positions uniformly without
/// replacement. Reproducible in `(n_positions, ratio, seed)`.
pub fn generate_uniform_mask(n_positions: usize, ratio: f64, seed: u64) -> Result<SamplingSet> {
    if n_positions == 0 {
        return Err(Error::domain("n_positions must be positive"));
    }
    let m = sample_count(n_positions, ratio)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // partial Fisher-Yates
    let mut perm: Vec<usize> = (0..n_positions).collect();
    for i in 0..m {
        let j = rand::Rng::gen_range(&mut rng, i..n_positions);
        perm.swap(i, j);
    }
    perm.truncate(m);
    SamplingSet::from_indices(n_positions, perm, seed)
}

/// Measurements `y = P_Ω v + n` on a map. Values off Ω are a fill of 0
/// and must never be read as data; use [`MaskedMap::observed`].
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMap {
    map: MapImage,
    sampling: SamplingSet,
    noise_sigma: f64,
    observed: Vec<bool>,
}

impl MaskedMap {
    /// Assembles a masked map without touching the values stored off Ω.
    pub fn from_parts(map: MapImage, sampling: SamplingSet, noise_sigma: f64) -> Result<Self> {
        if sampling.n_positions() != map.n_positions() {
            return Err(Error::domain(format!(
                "sampling set covers {} positions but map has {}",
                sampling.n_positions(),
                map.n_positions()
            )));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::domain("noise sigma must be finite and non-negative"));
        }
        let observed = sampling.membership();
        Ok(MaskedMap {
            map,
            sampling,
            noise_sigma,
            observed,
        })
    }

    pub fn map(&self) -> &MapImage {
        &self.map
    }

    pub fn sampling(&self) -> &SamplingSet {
        &self.sampling
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    /// Per-position observation flags, common to all channels.
    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn is_observed(&self, position: usize) -> bool {
        self.observed[position]
    }
}

/// The projector `P_Ω`: keeps values on Ω, zeroes the rest.
pub fn project(map: &MapImage, sampling: &SamplingSet) -> Result<MapImage> {
    if sampling.n_positions() != map.n_positions() {
        return Err(Error::domain("sampling set does not match map size"));
    }
    let c = map.channels();
    let mut data = vec![0.0; map.data().len()];
    for &j in sampling.indices() {
        data[j * c..(j + 1) * c].copy_from_slice(map.pixel(j));
    }
    MapImage::new(map.width(), map.height(), c, data, map.kind())
}

/// Applies the acquisition model. Noise is drawn per (position, channel)
/// on Ω in ascending position order, then the value is clamped to [0, 1].
pub fn apply_acquisition(
    map: &MapImage,
    sampling: &SamplingSet,
    noise_sigma: f64,
    seed: u64,
) -> Result<MaskedMap> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::domain("noise sigma must be finite and non-negative"));
    }
    let mut projected = project(map, sampling)?;
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::domain(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = map.channels();
        let mut data = projected.into_data();
        for &j in sampling.indices() {
            for v in &mut data[j * c..(j + 1) * c] {
                *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
            }
        }
        projected = MapImage::new(map.width(), map.height(), c, data, map.kind())?;
    }
    MaskedMap::from_parts(projected, sampling.clone(), noise_sigma)
}

/// Scan time in seconds at a given pattern rate: `ratio * n / rate`.
pub fn acquisition_time_estimate(n_positions: usize, ratio: f64, patterns_per_second: f64) -> Result<f64> {
    check_ratio(ratio)?;
    if !(patterns_per_second > 0.0 && patterns_per_second.is_finite()) {
        return Err(Error::domain(format!(
            "pattern rate {patterns_per_second} must be positive"
        )));
    }
    Ok(ratio * n_positions as f64 / patterns_per_second)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cardinality_forced() {
        for seed in 0..5 {
            assert_eq!(generate_uniform_mask(16, 0.25, seed).unwrap().len(), 4);
        }
        assert_eq!(sample_count(65536, 0.1).unwrap(), 6554);
    }

    #[test]
    fn full_sampling_is_everything() {
        let s = generate_uniform_mask(100, 1.0, 42).unwrap();
        assert_eq!(s.indices(), (0..100).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn bad_ratios_rejected() {
        for r in [0.0, -0.1, 1.0001, f64::NAN] {
            assert!(matches!(generate_uniform_mask(10, r, 0), Err(Error::Domain(_))));
        }
        assert!(generate_uniform_mask(10, 0.01, 0).is_err());
    }

    #[test]
    fn uniform_selection_frequency() {
        let mut counts = [0u32; 100];
        let draws = 10_000;
        for seed in 0..draws {
            for &j in generate_uniform_mask(100, 0.1, seed).unwrap().indices() {
                counts[j] += 1;
            }
        }
        for (j, &c) in counts.iter().enumerate() {
            let f = c as f64 / draws as f64;
            assert!((f - 0.1).abs() <= 0.01, "index {j} frequency {f}");
        }
    }

    #[test]
    fn identity_at_full_sampling() {
        let map = MapImage::from_data(3, 2, 3, (0..18).map(|i| i as f64 / 17.0).collect()).unwrap();
        let full = SamplingSet::full(6).unwrap();
        let masked = apply_acquisition(&map, &full, 0.0, 9).unwrap();
        assert_eq!(masked.map(), &map);
    }

    #[test]
    fn direct_masking() {
        let map = MapImage::from_data(2, 1, 1, vec![0.3, 0.9]).unwrap();
        let s = SamplingSet::from_indices(2, vec![0], 0).unwrap();
        let masked = apply_acquisition(&map, &s, 0.0, 0).unwrap();
        assert_eq!(masked.map().data(), &[0.3, 0.0]);
        assert_eq!(masked.observed(), &[true, false]);
    }

    #[test]
    fn noise_statistics() {
        let map = MapImage::filled(64, 64, 1, 0.5, crate::maps::MapKind::BandContrast).unwrap();
        let full = SamplingSet::full(4096).unwrap();
        let masked = apply_acquisition(&map, &full, 0.1, 3).unwrap();
        let diffs: Vec<f64> = masked.map().data().iter().map(|v| v - 0.5).collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64;
        let sd = var.sqrt();
        assert!((0.08..=0.12).contains(&sd), "sd {sd}");
    }

    #[test]
    fn size_mismatch_rejected() {
        let map = MapImage::from_data(2, 1, 1, vec![0.3, 0.9]).unwrap();
        let s = SamplingSet::full(3).unwrap();
        assert!(matches!(apply_acquisition(&map, &s, 0.0, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn acquisition_time() {
        let t = acquisition_time_estimate(100, 0.5, 100.0).unwrap();
        assert!((t - 0.5).abs() < 1e-15);
        assert!(acquisition_time_estimate(100, 0.5, 0.0).is_err());
        assert!(acquisition_time_estimate(100, 0.5, -2.0).is_err());
        let full = acquisition_time_estimate(1024 * 704, 1.0, 1623.4).unwrap();
        assert!((full - 444.0).abs() <= 1.0, "{full}");
    }

    #[test]
    fn mask_text_roundtrip_and_validation() {
        let s = generate_uniform_mask(50, 0.2, 11).unwrap();
        let text = s.to_text();
        assert!(text.starts_with("50 10 11\n"));
        assert_eq!(SamplingSet::from_text(&text).unwrap(), s);
        assert!(SamplingSet::from_text("5 2 0\n3\n1\n").is_err());
        assert!(SamplingSet::from_text("5 3 0\n1\n2\n").is_err());
        assert!(SamplingSet::from_text("5 1 0\n7\n").is_err());
    }

    proptest! {
        #[test]
        fn exact_cardinality_and_canonical(n in 1usize..500, ratio in 0.001f64..=1.0, seed in any::<u64>()) {
            let m = (ratio * n as f64).round() as usize;
            prop_assume!(m >= 1);
            let s = generate_uniform_mask(n, ratio, seed).unwrap();
            prop_assert_eq!(s.len(), m);
            prop_assert!(s.indices().windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(generate_uniform_mask(n, ratio, seed).unwrap(), s);
        }

        #[test]
        fn projector_idempotent(data in proptest::collection::vec(0.0f64..=1.0, 24), ratio in 0.0625f64..=1.0, seed in any::<u64>()) {
            let map = MapImage::from_data(4, 2, 3, data).unwrap();
            let s = generate_uniform_mask(8, ratio, seed).unwrap();
            let once = project(&map, &s).unwrap();
            let twice = project(&once, &s).unwrap();
            prop_assert_eq!(&once, &twice);
            let acq = apply_acquisition(&once, &s, 0.0, seed).unwrap();
            prop_assert_eq!(acq.map(), &once);
        }

        #[test]
        fn noisy_acquisition_deterministic(seed in any::<u64>()) {
            let map = MapImage::filled(8, 8, 3, 0.4, crate::maps::MapKind::Ipf).unwrap();
            let s = generate_uniform_mask(64, 0.3, seed).unwrap();
            let a = apply_acquisition(&map, &s, 0.05, seed).unwrap();
            let b = apply_acquisition(&map, &s, 0.05, seed).unwrap();
            prop_assert_eq!(&a, &b);
            for j in 0..64 {
                if !a.is_observed(j) {
                    prop_assert!(a.map().pixel(j).iter().all(|&v| v == 0.0));
                }
            }
        }
    }
}
