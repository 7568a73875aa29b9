//! Post-indexing map images and their file formats.
//!
//! Maps live in memory as normalized `[0, 1]` reals, pixel-interleaved
//! (`(row * width + col) * channels + channel`). Quantization happens only
//! when reading or writing binary PGM (P5) and PPM (P6) files.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    BandContrast,
    Ipf,
    Other,
}

impl MapKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MapKind::BandContrast => "band_contrast",
            MapKind::Ipf => "ipf",
            MapKind::Other => "other",
        }
    }

    /// Channel count implied by the kind, if any.
    pub fn required_channels(&self) -> Option<usize> {
        match self {
            MapKind::BandContrast => Some(1),
            MapKind::Ipf => Some(3),
            MapKind::Other => None,
        }
    }

    fn for_channels(channels: usize) -> MapKind {
        match channels {
            1 => MapKind::BandContrast,
            3 => MapKind::Ipf,
            _ => MapKind::Other,
        }
    }
}

impl fmt::Display for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "band_contrast" | "bandcontrast" | "bc" => Ok(MapKind::BandContrast),
            "ipf" => Ok(MapKind::Ipf),
            "other" => Ok(MapKind::Other),
            _ => Err(Error::domain(format!("unknown map kind '{s}'"))),
        }
    }
}

/// An indexed map over the probe-position grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MapImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
    kind: MapKind,
}

impl MapImage {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
        kind: MapKind,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain("map dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::domain(format!(
                "map must have 1 or 3 channels, got {channels}"
            )));
        }
        if let Some(req) = kind.required_channels() {
            if req != channels {
                return Err(Error::domain(format!(
                    "{kind} map requires {req} channel(s), got {channels}"
                )));
            }
        }
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(Error::domain(format!(
                "map data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some((i, v)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::domain(format!(
                "map value {v} at index {i} outside [0, 1]"
            )));
        }
        Ok(MapImage {
            width,
            height,
            channels,
            data,
            kind,
        })
    }

    /// Like [`MapImage::new`] with the kind inferred from the channel count.
    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(width, height, channels, data, MapKind::for_channels(channels))
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64, kind: MapKind) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels], kind)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    /// Number of probe positions (`width * height`).
    pub fn n_positions(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    /// All channel values at one probe position.
    pub fn pixel(&self, position: usize) -> &[f64] {
        &self.data[position * self.channels..(position + 1) * self.channels]
    }

    /// Extracts one channel as a single-channel map of kind `Other`.
    pub fn channel(&self, channel: usize) -> MapImage {
        assert!(channel < self.channels, "channel {channel} out of range");
        let data = self
            .data
            .iter()
            .skip(channel)
            .step_by(self.channels)
            .copied()
            .collect();
        MapImage {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
            kind: MapKind::Other,
        }
    }

    pub fn with_kind(mut self, kind: MapKind) -> Result<Self> {
        if let Some(req) = kind.required_channels() {
            if req != self.channels {
                return Err(Error::domain(format!(
                    "{kind} map requires {req} channel(s), got {}",
                    self.channels
                )));
            }
        }
        self.kind = kind;
        Ok(self)
    }

    pub fn same_shape(&self, other: &MapImage) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }
}

// ---------------------------------------------------------------------------
// PGM / PPM
// ---------------------------------------------------------------------------

struct PnmHeader {
    channels: usize,
    width: usize,
    height: usize,
    maxval: u32,
}

fn read_token<R: BufRead>(reader: &mut R) -> Result<String> {
    let mut token = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if reader.read(&mut byte)? == 0 {
            return Err(Error::Format("unexpected end of header".into()));
        }
        match byte[0] {
            b'#' if token.is_empty() => {
                let mut skipped = Vec::new();
                reader.read_until(b'\n', &mut skipped)?;
            }
            b if b.is_ascii_whitespace() => {
                if !token.is_empty() {
                    break;
                }
            }
            b => token.push(b),
        }
    }
    String::from_utf8(token).map_err(|_| Error::Format("non-ASCII header".into()))
}

fn read_header<R: BufRead>(reader: &mut R) -> Result<PnmHeader> {
    let channels = match read_token(reader)?.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(Error::Format(format!("unsupported magic '{other}'"))),
    };
    let mut field = |name: &str| -> Result<u32> {
        let tok = read_token(reader)?;
        tok.parse::<u32>()
            .map_err(|_| Error::Format(format!("bad {name} '{tok}'")))
    };
    let width = field("width")? as usize;
    let height = field("height")? as usize;
    let maxval = field("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Format("zero image dimension".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("maxval {maxval} out of range")));
    }
    Ok(PnmHeader {
        channels,
        width,
        height,
        maxval,
    })
}

fn read_samples<R: Read>(reader: &mut R, header: &PnmHeader) -> Result<Vec<u32>> {
    let count = header.width * header.height * header.channels;
    let wide = header.maxval > 255;
    let mut raw = vec![0u8; if wide { 2 * count } else { count }];
    reader.read_exact(&mut raw)?;
    let samples: Vec<u32> = if wide {
        raw.chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as u32)
            .collect()
    } else {
        raw.into_iter().map(u32::from).collect()
    };
    if let Some(s) = samples.iter().find(|&&s| s > header.maxval) {
        return Err(Error::Format(format!(
            "sample {s} exceeds maxval {}",
            header.maxval
        )));
    }
    Ok(samples)
}

/// Reads a binary PGM/PPM map; the kind follows from the channel count.
pub fn load_map(path: impl AsRef<Path>) -> Result<MapImage> {
    load_map_inner(path.as_ref(), None)
}

/// Reads a binary PGM/PPM map with an explicit kind.
pub fn load_map_as(path: impl AsRef<Path>, kind: MapKind) -> Result<MapImage> {
    load_map_inner(path.as_ref(), Some(kind))
}

fn load_map_inner(path: &Path, kind: Option<MapKind>) -> Result<MapImage> {
    let file = File::open(path).map_err(|e| Error::io_at(path, e))?;
    let mut reader = BufReader::new(file);
    let header = read_header(&mut reader)?;
    let samples = read_samples(&mut reader, &header)?;
    let scale = header.maxval as f64;
    let data = samples.into_iter().map(|s| s as f64 / scale).collect();
    let kind = kind.unwrap_or(MapKind::for_channels(header.channels));
    MapImage::new(header.width, header.height, header.channels, data, kind)
}

/// Quantizes a normalized value to 8 bits, rounding half up.
pub fn quantize_u8(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Writes P5 (1 channel) or P6 (3 channels) with maxval 255.
pub fn save_map(map: &MapImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_map(map);
    std::fs::write(path, bytes).map_err(|e| Error::io_at(path, e))
}

/// In-memory encoding used by [`save_map`].
pub fn encode_map(map: &MapImage) -> Vec<u8> {
    let magic = if map.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", map.width, map.height).into_bytes();
    out.extend(map.data.iter().map(|&v| quantize_u8(v)));
    out
}

/// Writes an integer label map as a 16-bit P5 (maxval 65535).
pub fn save_labels(labels: &[u32], width: usize, height: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if labels.len() != width * height {
        return Err(Error::domain("label count does not match dimensions"));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 65535) {
        return Err(Error::domain(format!("label {l} does not fit 16 bits")));
    }
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for &l in labels {
        out.extend_from_slice(&(l as u16).to_be_bytes());
    }
    std::fs::write(path, out).map_err(|e| Error::io_at(path, e))
}

/// Reads a single-channel PGM as raw integer samples.
pub fn load_labels(path: impl AsRef<Path>) -> Result<(Vec<u32>, usize, usize)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io_at(path, e))?;
    let mut reader = BufReader::new(file);
    let header = read_header(&mut reader)?;
    if header.channels != 1 {
        return Err(Error::Format("label map must be P5".into()));
    }
    let samples = read_samples(&mut reader, &header)?;
    Ok((samples, header.width, header.height))
}

// ---------------------------------------------------------------------------
// Metrics records
// ---------------------------------------------------------------------------

pub const METRICS_CSV_HEADER: &str =
    "sampling_ratio,map_kind,seed,ssim,psnr_db,wall_time_s,estimated_acquisition_s";

/// One (kind, ratio, seed) evaluation result.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub sampling_ratio: f64,
    pub map_kind: MapKind,
    pub seed: u64,
    pub ssim: f64,
    /// `f64::INFINITY` for identical images.
    pub psnr_db: f64,
    pub wall_time_s: f64,
    pub estimated_acquisition_s: f64,
}

fn fmt_real(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v:.6}")
    }
}

fn parse_real(s: &str) -> Result<f64> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s
            .parse()
            .map_err(|_| Error::Format(format!("bad real '{s}'"))),
    }
}

impl MetricsRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            fmt_real(self.sampling_ratio),
            self.map_kind,
            self.seed,
            fmt_real(self.ssim),
            fmt_real(self.psnr_db),
            fmt_real(self.wall_time_s),
            fmt_real(self.estimated_acquisition_s),
        )
    }

    pub fn from_csv_row(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Format(format!(
                "expected 7 fields, got {}",
                fields.len()
            )));
        }
        Ok(MetricsRecord {
            sampling_ratio: parse_real(fields[0])?,
            map_kind: fields[1].parse()?,
            seed: fields[2]
                .parse()
                .map_err(|_| Error::Format(format!("bad seed '{}'", fields[2])))?,
            ssim: parse_real(fields[3])?,
            psnr_db: parse_real(fields[4])?,
            wall_time_s: parse_real(fields[5])?,
            estimated_acquisition_s: parse_real(fields[6])?,
        })
    }
}

/// Incremental CSV writer; every row is flushed as it is written.
pub struct MetricsWriter<W: Write> {
    inner: W,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(mut inner: W) -> Result<Self> {
        writeln!(inner, "{METRICS_CSV_HEADER}")?;
        inner.flush()?;
        Ok(MetricsWriter { inner })
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        writeln!(self.inner, "{}", record.to_csv_row())?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_metrics_csv(records: &[MetricsRecord], path: impl AsRef<Path>) -> Result<()> {
    if records.is_empty() {
        return Err(Error::domain("no metrics records to write"));
    }
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io_at(path, e))?;
    let mut writer = MetricsWriter::new(BufWriter::new(file))?;
    for r in records {
        writer.write(r)?;
    }
    Ok(())
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_CSV_HEADER => {}
        _ => return Err(Error::Format("missing metrics CSV header".into())),
    }
    lines
        .filter(|l| !l.is_empty())
        .map(MetricsRecord::from_csv_row)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn load_p5_scales_by_maxval() {
        let dir = tmp();
        let path = dir.path().join("a.pgm");
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([0u8, 255, 128, 64]);
        std::fs::write(&path, bytes).unwrap();
        let m = load_map(&path).unwrap();
        assert_eq!(m.kind(), MapKind::BandContrast);
        assert_eq!(m.data(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn load_p6_saturated() {
        let dir = tmp();
        let path = dir.path().join("a.ppm");
        let mut bytes = b"P6 3 1 255\n".to_vec();
        bytes.extend([255u8; 9]);
        std::fs::write(&path, bytes).unwrap();
        let m = load_map(&path).unwrap();
        assert_eq!(m.channels(), 3);
        assert_eq!(m.kind(), MapKind::Ipf);
        assert!(m.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn load_16bit_with_comment() {
        let dir = tmp();
        let path = dir.path().join("a.pgm");
        let mut bytes = b"P5\n# comment\n2 1\n65535\n".to_vec();
        bytes.extend([0xff, 0xff, 0x80, 0x00]);
        std::fs::write(&path, bytes).unwrap();
        let m = load_map(&path).unwrap();
        assert_eq!(m.data()[0], 1.0);
        assert!((m.data()[1] - 32768.0 / 65535.0).abs() < 1e-15);
    }

    #[test]
    fn malformed_header_is_format_error() {
        let dir = tmp();
        let path = dir.path().join("bad.pgm");
        std::fs::write(&path, b"P2\n2 2\n255\n0 0 0 0").unwrap();
        assert!(matches!(load_map(&path), Err(Error::Format(_))));
        std::fs::write(&path, b"P5\nx 2\n255\n").unwrap();
        assert!(matches!(load_map(&path), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload_is_io_error() {
        let dir = tmp();
        let path = dir.path().join("short.pgm");
        std::fs::write(&path, b"P5\n2 2\n255\n\x00\x01").unwrap();
        assert!(matches!(load_map(&path), Err(Error::Io(_))));
    }

    #[test]
    fn save_quantizes_round_half_up() {
        let m = MapImage::from_data(2, 1, 1, vec![0.0, 1.0]).unwrap();
        assert_eq!(&encode_map(&m)[b"P5\n2 1\n255\n".len()..], &[0, 255]);
        assert_eq!(quantize_u8(0.5), 128);
    }

    #[test]
    fn rejects_invalid_maps() {
        assert!(MapImage::from_data(1, 1, 1, vec![1.5]).is_err());
        assert!(MapImage::from_data(1, 1, 1, vec![f64::NAN]).is_err());
        assert!(MapImage::from_data(2, 1, 1, vec![0.0]).is_err());
        assert!(MapImage::new(1, 1, 1, vec![0.0], MapKind::Ipf).is_err());
        assert!(MapImage::new(1, 1, 3, vec![0.0; 3], MapKind::BandContrast).is_err());
        assert!(MapImage::from_data(1, 1, 2, vec![0.0; 2]).is_err());
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let m = MapImage::from_data(1, 1, 1, vec![0.0]).unwrap();
        let err = save_map(&m, "/nonexistent-dir/x.pgm").unwrap_err();
        assert!(matches!(err, Error::IoPath { .. }));
    }

    #[test]
    fn labels_roundtrip_16bit() {
        let dir = tmp();
        let path = dir.path().join("labels.pgm");
        let labels = vec![0, 1, 300, 65535];
        save_labels(&labels, 2, 2, &path).unwrap();
        let (back, w, h) = load_labels(&path).unwrap();
        assert_eq!((w, h), (2, 2));
        assert_eq!(back, labels);
    }

    #[test]
    fn metrics_csv_format() {
        let dir = tmp();
        let path = dir.path().join("m.csv");
        let rec = MetricsRecord {
            sampling_ratio: 0.1,
            map_kind: MapKind::BandContrast,
            seed: 7,
            ssim: 0.8,
            psnr_db: 25.0,
            wall_time_s: 1.0,
            estimated_acquisition_s: 44.4,
        };
        write_metrics_csv(&[rec.clone()], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "sampling_ratio,map_kind,seed,ssim,psnr_db,wall_time_s,estimated_acquisition_s\n\
             0.100000,band_contrast,7,0.800000,25.000000,1.000000,44.400000\n"
        );
        assert_eq!(read_metrics_csv(&path).unwrap(), vec![rec]);
    }

    #[test]
    fn metrics_csv_inf_and_empty() {
        let dir = tmp();
        let path = dir.path().join("m.csv");
        assert!(write_metrics_csv(&[], &path).is_err());
        let rec = MetricsRecord {
            sampling_ratio: 1.0,
            map_kind: MapKind::Ipf,
            seed: 0,
            ssim: 1.0,
            psnr_db: f64::INFINITY,
            wall_time_s: 0.0,
            estimated_acquisition_s: 0.0,
        };
        write_metrics_csv(&[rec], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().nth(1).unwrap().contains(",inf,"));
        assert_eq!(read_metrics_csv(&path).unwrap()[0].psnr_db, f64::INFINITY);
    }

    proptest! {
        #[test]
        fn p5_byte_roundtrip(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
            bytes.extend((0..w * h).map(|_| rng.gen::<u8>()));
            let dir = tmp();
            let path = dir.path().join("r.pgm");
            std::fs::write(&path, &bytes).unwrap();
            let out = encode_map(&load_map(&path).unwrap());
            prop_assert_eq!(out, bytes);
        }

        #[test]
        fn save_load_quantization_bound(data in proptest::collection::vec(0.0f64..=1.0, 12)) {
            let m = MapImage::from_data(2, 2, 3, data).unwrap();
            let dir = tmp();
            let path = dir.path().join("q.ppm");
            save_map(&m, &path).unwrap();
            let back = load_map(&path).unwrap();
            for (a, b) in m.data().iter().zip(back.data()) {
                prop_assert!((a - b).abs() <= 1.0 / 510.0 + 1e-15);
            }
        }

        #[test]
        fn metrics_csv_roundtrip(
            ratio in 0.0001f64..=1.0,
            seed in any::<u64>(),
            ssim in -1.0f64..=1.0,
            psnr in 0.1f64..200.0,
            wall in 0.0f64..1e4,
            est in 0.0f64..1e4,
        ) {
            let rec = MetricsRecord {
                sampling_ratio: ratio,
                map_kind: MapKind::Ipf,
                seed,
                ssim,
                psnr_db: psnr,
                wall_time_s: wall,
                estimated_acquisition_s: est,
            };
            let back = MetricsRecord::from_csv_row(&rec.to_csv_row()).unwrap();
            prop_assert_eq!(back.seed, seed);
            prop_assert_eq!(back.map_kind, MapKind::Ipf);
            for (a, b) in [
                (back.sampling_ratio, ratio),
                (back.ssim, ssim),
                (back.psnr_db, psnr),
                (back.wall_time_s, wall),
                (back.estimated_acquisition_s, est),
            ] {
                prop_assert!((a - b).abs() <= 1e-6);
            }
        }
    }
}
