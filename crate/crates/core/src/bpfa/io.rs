//! Dictionary dumps and per-sweep diagnostics.

use std::io::Write;
use std::path::{Path, PathBuf};

use super::{BpfaState, SweepDiagnostics};
use crate::error::{Error, Result};

pub const DIAGNOSTICS_CSV_HEADER: &str = "sweep,rmse_observed,active_atoms,gamma_eps";

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

/// Writes the P×K dictionary row-major as little-endian f64, plus a
/// `<path>.hdr` text sidecar holding `P K`.
pub fn write_dictionary(state: &BpfaState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (p_dim, k) = (state.patch_dim(), state.n_atoms());
    let mut bytes = Vec::with_capacity(p_dim * k * 8);
    for p in 0..p_dim {
        for a in 0..k {
            bytes.extend_from_slice(&state.dict_element(p, a).to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io_at(path, e))?;
    let hdr = sidecar(path);
    std::fs::write(&hdr, format!("{p_dim} {k}\n")).map_err(|e| Error::io_at(hdr, e))
}

/// Reads a dump written by [`write_dictionary`] as `(P, K, row-major data)`.
pub fn read_dictionary(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f64>)> {
    let path = path.as_ref();
    let hdr = sidecar(path);
    let text = std::fs::read_to_string(&hdr).map_err(|e| Error::io_at(&hdr, e))?;
    let dims: Vec<usize> = text
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Format(format!("bad dictionary header '{t}'"))))
        .collect::<Result<_>>()?;
    let [p_dim, k] = dims[..] else {
        return Err(Error::Format("dictionary header must be 'P K'".into()));
    };
    let bytes = std::fs::read(path).map_err(|e| Error::io_at(path, e))?;
    if bytes.len() != p_dim * k * 8 {
        return Err(Error::Format(format!(
            "dictionary holds {} bytes, expected {}",
            bytes.len(),
            p_dim * k * 8
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((p_dim, k, data))
}

pub fn write_diagnostics_csv(diags: &[SweepDiagnostics], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    writeln!(out, "{DIAGNOSTICS_CSV_HEADER}")?;
    for d in diags {
        writeln!(
            out,
            "{},{:.6},{},{:.6}",
            d.sweep, d.rmse_observed, d.active_atoms, d.gamma_eps
        )?;
    }
    std::fs::write(path, out).map_err(|e| Error::io_at(path, e))
}
