use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::ReportRow;
use super::sweep::csv_err;
use super::BenchError;

/// Departures from the reference method, written at the top of every report.
pub const DEVIATIONS: &[&str] = &[
    "grayscale: mean over channels, quantized to the histogram bins",
    "perturbation %: 100 * ||x_adv - x||_2 / ||x||_2 of the clean image",
    "denoising: 3x3 median filter in place of wavelet denoising",
    "deflection saliency: normalized |grad_x J| in place of class activation maps",
    "data: synthetic blob images stand in for the clinical datasets",
    "kryptonite: RoI fixed from the clean image; returns the iterate after T updates",
    "deepfool: accumulated step projected into the epsilon ball",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(format!("unknown report format '{s}'")),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonReport {
    deviations: Vec<String>,
    rows: Vec<ReportRow>,
}

/// Writes `rows` to `path`. CSV output starts with `#` comment lines listing
/// [`DEVIATIONS`]; JSON carries them in a `deviations` field.
pub fn emit_report(rows: &[ReportRow], format: ReportFormat, path: &Path) -> Result<(), BenchError> {
    if rows.is_empty() {
        return Err(BenchError::EmptyReport);
    }
    match format {
        ReportFormat::Csv => {
            let mut file = std::fs::File::create(path)?;
            for d in DEVIATIONS {
                writeln!(file, "# {d}")?;
            }
            let mut w = csv::Writer::from_writer(file);
            for r in rows {
                w.serialize(r).map_err(csv_err)?;
            }
            w.flush()?;
        }
        ReportFormat::Json => {
            let report = JsonReport {
                deviations: DEVIATIONS.iter().map(|s| s.to_string()).collect(),
                rows: rows.to_vec(),
            };
            std::fs::write(path, serde_json::to_vec_pretty(&report).expect("rows serialize"))?;
        }
    }
    Ok(())
}

pub fn read_json_report(path: &Path) -> Result<Vec<ReportRow>, BenchError> {
    let bytes = std::fs::read(path)?;
    let r: JsonReport = serde_json::from_slice(&bytes).map_err(|e| BenchError::BadFormat {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    Ok(r.rows)
}
