//! Tabulated tridiagonal operator entries over a grid of (ρ, ∇ρ) points.
//!
//! Entries of one row are the column centered at the profile node `c`:
//! `sub = ⟨Kγ_c, γ_{c+1}⟩`, `diag = ⟨Kγ_c, γ_c⟩`, `super = ⟨Kγ_c, γ_{c−1}⟩`.
//! The CSV holds the numbers; a JSON sidecar holds everything else.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::EstimatorParams;

pub const TABLE_SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: [&str; 9] =
    ["profile_index", "rho", "grad_rho", "k_sub", "k_diag", "k_super", "se_sub", "se_diag", "se_super"];

#[derive(Debug, Error)]
pub enum TableError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("table schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("metadata schema error in {path}: {message}")]
    Metadata { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub profile_index: usize,
    pub rho: f64,
    pub grad_rho: f64,
    pub k_sub: f64,
    pub k_diag: f64,
    pub k_super: f64,
    pub se_sub: f64,
    pub se_diag: f64,
    pub se_super: f64,
}

impl TableRow {
    pub fn entries(&self) -> [f64; 3] {
        [self.k_sub, self.k_diag, self.k_super]
    }

    pub fn stderrs(&self) -> [f64; 3] {
        [self.se_sub, self.se_diag, self.se_super]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableSource {
    Particles,
    Analytic,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowFailure {
    pub profile_index: usize,
    pub rho: f64,
    pub grad_rho: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableMetadata {
    pub schema_version: u32,
    pub source: TableSource,
    pub n_basis: usize,
    pub rho_min: f64,
    /// Estimator settings; absent for analytic or synthetic tables.
    pub estimator: Option<EstimatorParams>,
    pub master_seed: Option<u64>,
    pub timestamp_unix: u64,
    pub requested_points: usize,
    pub failures: Vec<RowFailure>,
    pub complete: bool,
}

impl TableMetadata {
    pub fn new(source: TableSource, n_basis: usize, rho_min: f64) -> Self {
        Self {
            schema_version: TABLE_SCHEMA_VERSION,
            source,
            n_basis,
            rho_min,
            estimator: None,
            master_seed: None,
            timestamp_unix: unix_now(),
            requested_points: 0,
            failures: Vec::new(),
            complete: true,
        }
    }
}

pub(crate) fn unix_now() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawOperatorTable {
    pub rows: Vec<TableRow>,
    pub metadata: TableMetadata,
}

/// Sidecar path: `table.csv` → `table.meta.json`.
pub fn metadata_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

impl RawOperatorTable {
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        if self.rows.is_empty() {
            w.write_record(CSV_HEADER)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the CSV and its metadata sidecar.
    pub fn save(&self, csv_path: &Path) -> Result<(), TableError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| TableError::Io { path: csv_path.into(), source: e.into() })?;
        fs::write(csv_path, buf).map_err(|source| TableError::Io { path: csv_path.into(), source })?;
        let meta_path = metadata_path(csv_path);
        let json = serde_json::to_string_pretty(&self.metadata).expect("metadata serializes");
        fs::write(&meta_path, json + "\n").map_err(|source| TableError::Io { path: meta_path, source })
    }

    pub fn load(csv_path: &Path) -> Result<Self, TableError> {
        let text = fs::read_to_string(csv_path).map_err(|source| TableError::Io { path: csv_path.into(), source })?;
        let rows = parse_csv(&text).map_err(|message| TableError::Schema { path: csv_path.into(), message })?;
        let meta_path = metadata_path(csv_path);
        let meta_text =
            fs::read_to_string(&meta_path).map_err(|source| TableError::Io { path: meta_path.clone(), source })?;
        let metadata: TableMetadata = serde_json::from_str(&meta_text)
            .map_err(|e| TableError::Metadata { path: meta_path.clone(), message: e.to_string() })?;
        if metadata.schema_version != TABLE_SCHEMA_VERSION {
            return Err(TableError::Metadata {
                path: meta_path,
                message: format!(
                    "schema_version {} not supported (expected {TABLE_SCHEMA_VERSION})",
                    metadata.schema_version
                ),
            });
        }
        Ok(Self { rows, metadata })
    }
}

pub fn parse_csv(text: &str) -> Result<Vec<TableRow>, String> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        let missing: Vec<&str> = CSV_HEADER.iter().copied().filter(|c| !header.iter().any(|h| h == *c)).collect();
        return Err(if missing.is_empty() {
            format!("header must be `{}`", CSV_HEADER.join(","))
        } else {
            format!("missing column(s): {}", missing.join(", "))
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.deserialize::<TableRow>().enumerate() {
        let row = record.map_err(|e| format!("row {}: {e}", i + 1))?;
        let values = [row.rho, row.grad_rho, row.k_sub, row.k_diag, row.k_super, row.se_sub, row.se_diag, row.se_super];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(format!("row {}: non-finite value", i + 1));
        }
        if row.stderrs().iter().any(|&s| s < 0.0) {
            return Err(format!("row {}: negative standard error", i + 1));
        }
        rows.push(row);
    }
    Ok(rows)
}
