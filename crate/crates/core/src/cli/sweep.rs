use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use crate::bpfa::{inpaint, InpaintConfig, SweepDiagnostics};
use crate::error::{Error, Result};
use crate::maps::{MapImage, MapKind, MetricsRecord, MetricsWriter};
use crate::metrics::{psnr, ssim, SsimParams};
use crate::phantom::{generate_phantom, PhantomSpec};
use crate::sampler::{acquisition_time_estimate, apply_acquisition, generate_uniform_mask};

use super::plot::{line_plot_svg, Series};

pub const DEFAULT_RATIOS: [f64; 5] = [0.01, 0.05, 0.10, 0.15, 0.25];
pub const DEFAULT_PATTERNS_PER_SECOND: f64 = 1623.4;

/// Keeps the noise stream apart from the mask stream for the same seed.
pub fn noise_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub ratios: Vec<f64>,
    pub seeds: Vec<u64>,
    pub kinds: Vec<MapKind>,
    pub patterns_per_second: f64,
    pub noise_sigma: f64,
    pub phantom: PhantomSpec,
    pub inpaint: InpaintConfig,
    pub ssim: SsimParams,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            ratios: DEFAULT_RATIOS.to_vec(),
            seeds: (0..5).collect(),
            kinds: vec![MapKind::BandContrast, MapKind::Ipf],
            patterns_per_second: DEFAULT_PATTERNS_PER_SECOND,
            noise_sigma: 0.0,
            phantom: PhantomSpec::default(),
            inpaint: InpaintConfig::default(),
            ssim: SsimParams::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ratios.is_empty() || self.seeds.is_empty() || self.kinds.is_empty() {
            return Err(Error::domain("ratios, seeds and kinds must be non-empty"));
        }
        if self.ratios.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::domain("ratios must be sorted ascending without repeats"));
        }
        if let Some(r) = self.ratios.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
            return Err(Error::domain(format!("ratio {r} outside (0, 1]")));
        }
        if self.kinds.contains(&MapKind::Other) {
            return Err(Error::domain("sweeps run on band_contrast and ipf maps only"));
        }
        if !(self.patterns_per_second > 0.0 && self.patterns_per_second.is_finite()) {
            return Err(Error::domain("patterns per second must be positive"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::domain("noise sigma must be finite and non-negative"));
        }
        self.phantom.validate()?;
        self.inpaint.hp.validate()
    }
}

#[derive(Debug, Clone)]
pub struct LegOutcome {
    pub record: MetricsRecord,
    pub reconstruction: MapImage,
    pub diagnostics: Vec<SweepDiagnostics>,
}

/// One (kind, ratio, seed) evaluation: mask → acquisition → inpaint →
/// SSIM/PSNR against `truth`. The leg seed drives the mask, the noise and
/// the sampler.
pub fn run_leg(
    truth: &MapImage,
    ratio: f64,
    seed: u64,
    noise_sigma: f64,
    config: &InpaintConfig,
    ssim_params: &SsimParams,
    patterns_per_second: f64,
) -> Result<LegOutcome> {
    let start = Instant::now();
    let n = truth.n_positions();
    let mask = generate_uniform_mask(n, ratio, seed)?;
    let masked = apply_acquisition(truth, &mask, noise_sigma, noise_seed(seed))?;
    let mut config = config.clone();
    config.hp.seed = seed;
    let result = inpaint(&masked, &config)?;
    let record = MetricsRecord {
        sampling_ratio: ratio,
        map_kind: truth.kind(),
        seed,
        ssim: ssim(&result.image, truth, ssim_params)?,
        psnr_db: psnr(&result.image, truth)?,
        wall_time_s: start.elapsed().as_secs_f64(),
        estimated_acquisition_s: acquisition_time_estimate(n, ratio, patterns_per_second)?,
    };
    Ok(LegOutcome {
        record,
        reconstruction: result.image,
        diagnostics: result.diagnostics,
    })
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Median over seeds of `metric` per ratio, for one kind, in ratio order.
pub fn median_curve(
    records: &[MetricsRecord],
    kind: MapKind,
    ratios: &[f64],
    metric: impl Fn(&MetricsRecord) -> f64,
) -> Vec<(f64, f64)> {
    ratios
        .iter()
        .filter_map(|&r| {
            let vals: Vec<f64> = records
                .iter()
                .filter(|m| m.map_kind == kind && m.sampling_ratio == r)
                .map(&metric)
                .collect();
            (!vals.is_empty()).then(|| (r, median(&vals)))
        })
        .collect()
}

fn truth_for(kind: MapKind, band_contrast: &MapImage, ipf: &MapImage) -> MapImage {
    match kind {
        MapKind::Ipf => ipf.clone(),
        _ => band_contrast.clone(),
    }
}

/// Runs every leg in (kind, ratio, seed) order, appending each record to
/// `out_dir/metrics.csv` as it completes, then writes `ssim.svg`,
/// `psnr.svg` and `report.txt`. A failing leg aborts the sweep; rows
/// already written stay on disk.
pub fn run_sweep(
    config: &SweepConfig,
    out_dir: &Path,
    mut on_leg: impl FnMut(&MetricsRecord),
) -> Result<Vec<MetricsRecord>> {
    config.validate()?;
    let phantom = generate_phantom(&config.phantom)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io_at(out_dir, e))?;
    let csv_path = out_dir.join("metrics.csv");
    let file = File::create(&csv_path).map_err(|e| Error::io_at(&csv_path, e))?;
    let mut writer = MetricsWriter::new(BufWriter::new(file))?;

    let mut records = Vec::new();
    for &kind in &config.kinds {
        let truth = truth_for(kind, &phantom.band_contrast, &phantom.ipf);
        for &ratio in &config.ratios {
            for &seed in &config.seeds {
                let leg = run_leg(
                    &truth,
                    ratio,
                    seed,
                    config.noise_sigma,
                    &config.inpaint,
                    &config.ssim,
                    config.patterns_per_second,
                )?;
                writer.write(&leg.record)?;
                on_leg(&leg.record);
                records.push(leg.record);
            }
        }
    }

    let write = |name: &str, text: String| -> Result<()> {
        let path = out_dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io_at(path, e))
    };
    write("ssim.svg", ssim_plot(config, &records))?;
    write("psnr.svg", psnr_plot(config, &records))?;
    write("report.txt", report(config, &records))?;
    Ok(records)
}

fn curves(
    config: &SweepConfig,
    records: &[MetricsRecord],
    metric: impl Fn(&MetricsRecord) -> f64 + Copy,
) -> Vec<Series> {
    config
        .kinds
        .iter()
        .map(|&kind| Series {
            label: kind.to_string(),
            points: median_curve(records, kind, &config.ratios, metric)
                .into_iter()
                .filter(|(_, y)| y.is_finite())
                .collect(),
        })
        .collect()
}

pub fn ssim_plot(config: &SweepConfig, records: &[MetricsRecord]) -> String {
    line_plot_svg(
        "Median SSIM vs sampling ratio",
        "SSIM",
        &curves(config, records, |m| m.ssim),
    )
}

pub fn psnr_plot(config: &SweepConfig, records: &[MetricsRecord]) -> String {
    line_plot_svg(
        "Median PSNR vs sampling ratio",
        "PSNR (dB)",
        &curves(config, records, |m| m.psnr_db),
    )
}

/// Plain-text summary: every modelling assumption, then the median curves.
/// Contains no timings so that reruns are byte-identical.
pub fn report(config: &SweepConfig, records: &[MetricsRecord]) -> String {
    let mut s = String::new();
    let hp = &config.inpaint.hp;
    let ph = &config.phantom;
    let ss = &config.ssim;
    let keep = match config.inpaint.keep_measured {
        Some(v) => v.to_string(),
        None => format!("auto ({})", config.inpaint.keep_measured_for(config.noise_sigma)),
    };
    let _ = writeln!(s, "compressive EBSD sweep report");
    let _ = writeln!(s);
    let _ = writeln!(s, "[phantom]");
    let _ = writeln!(s, "size                {}x{}", ph.width, ph.height);
    let _ = writeln!(s, "grains              {}", ph.n_grains);
    let _ = writeln!(s, "boundary width      {} px", ph.boundary_width_px);
    let _ = writeln!(s, "grain contrast      [{}, {}]", ph.bc_grain_range.0, ph.bc_grain_range.1);
    let _ = writeln!(s, "boundary level      {}", ph.bc_boundary_level);
    let _ = writeln!(s, "phantom seed        {}", ph.seed);
    let _ = writeln!(s);
    let _ = writeln!(s, "[acquisition]");
    let _ = writeln!(s, "mask family         uniform random positions without replacement, M = round(ratio * N), shared by all channels");
    let _ = writeln!(s, "noise sigma         {}", config.noise_sigma);
    let _ = writeln!(s, "pattern rate        {} patterns/s", config.patterns_per_second);
    let _ = writeln!(s);
    let _ = writeln!(s, "[patches]");
    let _ = writeln!(s, "patch size          {}", config.inpaint.patch_size);
    let _ = writeln!(s, "stride              {}", config.inpaint.stride);
    let _ = writeln!(s, "keep measured       {keep}");
    let _ = writeln!(s, "centering           {}", if config.inpaint.center { "observed per-channel mean" } else { "none" });
    let _ = writeln!(s, "ipf channels        stacked into one patch vector");
    let _ = writeln!(s);
    let _ = writeln!(s, "[bpfa]");
    let _ = writeln!(s, "K                   {}", hp.k);
    let _ = writeln!(s, "a0, b0              {}, {}", hp.a0, hp.b0);
    let _ = writeln!(s, "c0, d0              {}, {}", hp.c0, hp.d0);
    let _ = writeln!(s, "e0, f0              {}, {}", hp.e0, hp.f0);
    let _ = writeln!(s, "burn-in sweeps      {}", hp.burn_in);
    let _ = writeln!(s, "retained sweeps     {}", hp.samples);
    let _ = writeln!(s, "estimate            mean of D(z*s) over retained sweeps");
    let _ = writeln!(s);
    let _ = writeln!(s, "[ssim]");
    let _ = writeln!(s, "window              {}x{} gaussian, sigma {}", ss.window, ss.window, ss.sigma);
    let _ = writeln!(s, "k1, k2              {}, {}", ss.k1, ss.k2);
    let _ = writeln!(s, "dynamic range       {}", ss.dynamic_range);
    let _ = writeln!(s, "averaging           valid (interior) windows; channel mean for ipf");
    let _ = writeln!(s);
    let _ = writeln!(s, "[legs]");
    let _ = writeln!(s, "ratios              {:?}", config.ratios);
    let _ = writeln!(s, "seeds               {:?}", config.seeds);
    let _ = writeln!(s, "records             {}", records.len());
    let _ = writeln!(s);
    let _ = writeln!(s, "[median over seeds]");
    let _ = writeln!(s, "{:<14} {:>6} {:>8} {:>10} {:>12}", "kind", "ratio", "ssim", "psnr_db", "acq_time_s");
    for &kind in &config.kinds {
        let sv = median_curve(records, kind, &config.ratios, |m| m.ssim);
        let pv = median_curve(records, kind, &config.ratios, |m| m.psnr_db);
        let tv = median_curve(records, kind, &config.ratios, |m| m.estimated_acquisition_s);
        for ((&(r, sm), &(_, pm)), &(_, tm)) in sv.iter().zip(&pv).zip(&tv) {
            let _ = writeln!(s, "{:<14} {:>6.2} {:>8.4} {:>10.3} {:>12.2}", kind.as_str(), r, sm, pm, tm);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(kind: MapKind, ratio: f64, seed: u64, ssim: f64) -> MetricsRecord {
        MetricsRecord {
            sampling_ratio: ratio,
            map_kind: kind,
            seed,
            ssim,
            psnr_db: 20.0 * ssim,
            wall_time_s: 0.0,
            estimated_acquisition_s: 1.0,
        }
    }

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn curve_takes_median_per_ratio() {
        let bc = MapKind::BandContrast;
        let recs = vec![
            rec(bc, 0.1, 0, 0.5),
            rec(bc, 0.1, 1, 0.9),
            rec(bc, 0.1, 2, 0.6),
            rec(bc, 0.2, 0, 0.7),
            rec(MapKind::Ipf, 0.1, 0, 0.1),
        ];
        assert_eq!(
            median_curve(&recs, bc, &[0.1, 0.2, 0.3], |m| m.ssim),
            vec![(0.1, 0.6), (0.2, 0.7)]
        );
    }

    #[test]
    fn config_validation() {
        assert!(SweepConfig::default().validate().is_ok());
        let mut c = SweepConfig::default();
        c.ratios = vec![0.1, 0.05];
        assert!(c.validate().is_err());
        let mut c = SweepConfig::default();
        c.seeds.clear();
        assert!(c.validate().is_err());
        let mut c = SweepConfig::default();
        c.ratios = vec![0.5, 1.5];
        assert!(c.validate().is_err());
    }

    #[test]
    fn report_lists_assumptions() {
        let c = SweepConfig::default();
        let r = report(&c, &[rec(MapKind::BandContrast, 0.01, 0, 0.5)]);
        for needle in ["mask family", "patch size", "stride", "K ", "burn-in", "window", "k1, k2"] {
            assert!(r.contains(needle), "missing {needle}");
        }
    }

    #[test]
    fn tiny_sweep_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = SweepConfig::default();
        c.phantom.width = 24;
        c.phantom.height = 20;
        c.phantom.n_grains = 4;
        c.ratios = vec![0.5, 1.0];
        c.seeds = vec![3, 4];
        c.inpaint.hp.k = 4;
        c.inpaint.hp.burn_in = 1;
        c.inpaint.hp.samples = 1;
        let mut seen = 0;
        let recs = run_sweep(&c, dir.path(), |_| seen += 1).unwrap();
        assert_eq!(recs.len(), 2 * 2 * 2);
        assert_eq!(seen, 8);
        let csv = crate::maps::read_metrics_csv(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(csv.len(), 8);
        for name in ["ssim.svg", "psnr.svg", "report.txt"] {
            assert!(dir.path().join(name).exists());
        }
        // full sampling is exact
        assert!(recs.iter().filter(|m| m.sampling_ratio == 1.0).all(|m| m.ssim == 1.0));
    }
}
