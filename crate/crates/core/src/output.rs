//! Output directory layout and the diagnostics CSV.

use std::fs;
use std::path::{Path, PathBuf};

use crate::chb::{DiagnosticsRecord, RunOutput};
use crate::error::{ChbError, Result};
use crate::snapshot::{phi_file_name, u_file_name, write_scalar, write_vector};

pub const DIAGNOSTICS_HEADER: [&str; 9] = [
    "t",
    "mass",
    "energy",
    "grad_mu_sq",
    "visc_diss",
    "darcy_diss",
    "residual",
    "phi_l2",
    "phi_h1",
];

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| ChbError::io(dir, e))
}

fn row(r: &DiagnosticsRecord) -> [String; 9] {
    [r.t, r.mass, r.energy, r.grad_mu_sq, r.visc_diss, r.darcy_diss, r.residual, r.phi_l2, r.phi_h1]
        .map(|v| format!("{v:.16e}"))
}

/// The diagnostics table as CSV text, 17 significant digits per value.
pub fn diagnostics_csv(records: &[DiagnosticsRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(DIAGNOSTICS_HEADER)?;
    for r in records {
        w.write_record(row(r))?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
}

pub fn write_diagnostics(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    fs::write(path, diagnostics_csv(records)?).map_err(|e| ChbError::io(path, e))
}

/// Writes the diagnostics table and every snapshot; returns the files written.
pub fn write_run(dir: &Path, out: &RunOutput) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut files = Vec::with_capacity(1 + 2 * out.snapshots.len());
    let diag = dir.join(DIAGNOSTICS_FILE);
    write_diagnostics(&diag, &out.records)?;
    files.push(diag);
    for (step, phi, u) in &out.snapshots {
        let p = dir.join(phi_file_name(*step));
        write_scalar(&p, phi)?;
        files.push(p);
        let p = dir.join(u_file_name(*step));
        write_vector(&p, u)?;
        files.push(p);
    }
    Ok(files)
}

/// Plain `key value` text file.
pub fn write_report(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| ChbError::io(path, e))
}
