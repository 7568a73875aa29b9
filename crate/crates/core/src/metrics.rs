//! Full-reference quality metrics: Gaussian-window SSIM and PSNR.

use crate::error::{Error, Result};
use crate::maps::MapImage;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    /// Window side length (odd).
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn taps(&self) -> Vec<f64> {
        let r = (self.window / 2) as f64;
        let raw: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - r;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window % 2 == 0 {
            return Err(Error::domain("SSIM window must be odd and positive"));
        }
        if !(self.sigma > 0.0 && self.k1 > 0.0 && self.k2 > 0.0 && self.dynamic_range > 0.0) {
            return Err(Error::domain("SSIM parameters must be positive"));
        }
        Ok(())
    }
}

fn check_shapes(a: &MapImage, b: &MapImage) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::domain(format!(
            "image shapes differ: {}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    Ok(())
}

/// Valid-mode separable filtering of a `w`×`h` plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let n = taps.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let line = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&line[x..x + n]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * rows[(y + k) * ow + x])
                .sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], w: usize, h: usize, params: &SsimParams) -> f64 {
    let taps = params.taps();
    let c1 = (params.k1 * params.dynamic_range).powi(2);
    let c2 = (params.k2 * params.dynamic_range).powi(2);
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
    };
    let mu_a = filter_valid(a, w, h, &taps);
    let mu_b = filter_valid(b, w, h, &taps);
    let e_aa = filter_valid(&prod(&|x, _| x * x), w, h, &taps);
    let e_bb = filter_valid(&prod(&|_, y| y * y), w, h, &taps);
    let e_ab = filter_valid(&prod(&|x, y| x * y), w, h, &taps);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    total / n as f64
}

/// Mean SSIM over the fully-windowed interior, averaged over channels.
pub fn ssim(a: &MapImage, b: &MapImage, params: &SsimParams) -> Result<f64> {
    check_shapes(a, b)?;
    params.validate()?;
    if a.width() < params.window || a.height() < params.window {
        return Err(Error::domain(format!(
            "image {}x{} smaller than the {}-pixel SSIM window",
            a.width(),
            a.height(),
            params.window
        )));
    }
    let c = a.channels();
    let total: f64 = (0..c)
        .map(|ch| {
            let pa = a.channel(ch);
            let pb = b.channel(ch);
            ssim_plane(pa.data(), pb.data(), a.width(), a.height(), params)
        })
        .sum();
    Ok((total / c as f64).clamp(-1.0, 1.0))
}

/// Mean squared error over all pixels and channels.
pub fn mse(a: &MapImage, b: &MapImage) -> Result<f64> {
    check_shapes(a, b)?;
    let n = a.data().len() as f64;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

/// `10·log10(1 / MSE)` in dB; `+∞` for identical images.
pub fn psnr(a: &MapImage, b: &MapImage) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / m).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::MapKind;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random(w: usize, h: usize, c: usize, seed: u64) -> MapImage {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        MapImage::from_data(w, h, c, (0..w * h * c).map(|_| rng.gen()).collect()).unwrap()
    }

    #[test]
    fn window_weights_sum_to_one() {
        let taps = SsimParams::default().taps();
        assert_eq!(taps.len(), 11);
        let sum2: f64 = taps.iter().flat_map(|a| taps.iter().map(move |b| a * b)).sum();
        assert!((sum2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn identity_gives_one() {
        let p = SsimParams::default();
        for seed in 0..5 {
            let x = random(20, 17, 3, seed);
            assert!((ssim(&x, &x, &p).unwrap() - 1.0).abs() < 1e-12);
            assert_eq!(psnr(&x, &x).unwrap(), f64::INFINITY);
        }
    }

    #[test]
    fn inverted_halves_negative() {
        let (w, h) = (64, 64);
        let data: Vec<f64> = (0..w * h).map(|i| if i % w < w / 2 { 0.0 } else { 1.0 }).collect();
        let inv: Vec<f64> = data.iter().map(|v| 1.0 - v).collect();
        let a = MapImage::from_data(w, h, 1, data).unwrap();
        let b = MapImage::from_data(w, h, 1, inv).unwrap();
        let s = ssim(&a, &b, &SsimParams::default()).unwrap();
        assert!(s < 0.0, "{s}");
    }

    #[test]
    fn constant_offset_psnr() {
        let a = MapImage::filled(16, 16, 1, 0.3, MapKind::BandContrast).unwrap();
        let b = MapImage::filled(16, 16, 1, 0.4, MapKind::BandContrast).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch() {
        let a = random(16, 16, 1, 0);
        let b = random(16, 16, 3, 0).with_kind(MapKind::Other).unwrap();
        assert!(ssim(&a, &b, &SsimParams::default()).is_err());
        assert!(psnr(&a, &b).is_err());
        let small = random(8, 8, 1, 0);
        assert!(ssim(&small, &small, &SsimParams::default()).is_err());
    }

    proptest! {
        #[test]
        fn symmetric(seed in any::<u64>()) {
            let a = random(16, 14, 3, seed);
            let b = random(16, 14, 3, seed ^ 0xdead);
            let p = SsimParams::default();
            prop_assert!((ssim(&a, &b, &p).unwrap() - ssim(&b, &a, &p).unwrap()).abs() < 1e-14);
            prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        }
    }
}
