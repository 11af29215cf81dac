//! On-disk result formats.
//!
//! A run directory holds `result.csv` (one row per grid point, axis columns
//! first), `fits.json` (fitted scalars, metadata and the headline),
//! `config_snapshot.json` (the resolved configuration) and `summary.txt`.

use std::fs;
use std::path::{Path, PathBuf};

use phaseq_core::experiments::ExperimentResult;
use serde_json::{json, Map, Value};

use crate::error::CliError;

pub const RESULT_CSV: &str = "result.csv";
pub const FITS_JSON: &str = "fits.json";
pub const CONFIG_SNAPSHOT: &str = "config_snapshot.json";
pub const SUMMARY_TXT: &str = "summary.txt";
/// Written only when a fit is rejected, so the scan is not lost.
pub const RAW_SCAN_CSV: &str = "raw_scan.csv";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Grid table with one header row.
pub fn result_csv(result: &ExperimentResult) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> =
        result.axes.iter().map(|a| a.name.as_str()).chain(result.columns.iter().map(|c| c.name.as_str())).collect();
    w.write_record(&header).map_err(csv_error)?;
    for k in 0..result.grid_len() {
        let row: Vec<String> = result
            .coordinates(k)
            .into_iter()
            .chain(result.columns.iter().map(|c| c.values[k]))
            .map(format_value)
            .collect();
        w.write_record(&row).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ascii"))
}

/// Two-column table of a rejected scan.
pub fn raw_scan_csv(x_name: &str, x: &[f64], y: &[f64]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([x_name, "p_tunnel"]).map_err(csv_error)?;
    for (a, b) in x.iter().zip(y) {
        w.write_record([format_value(*a), format_value(*b)]).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ascii"))
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Config(format!("csv: {e}"))
}

pub fn fits_json(result: &ExperimentResult, run_id: &str) -> Result<String, CliError> {
    let fits: Map<String, Value> = result.fits.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
    let metadata: Map<String, Value> = result.metadata.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
    let doc = json!({
        "experiment": result.name,
        "run_id": run_id,
        "summary": result.summary,
        "statistics": "noiseless expectation values; no repetition sampling",
        "fits": fits,
        "metadata": metadata,
    });
    serde_json::to_string_pretty(&doc).map(|s| s + "\n").map_err(|e| CliError::Config(e.to_string()))
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use phaseq_core::experiments::{run_scurve, Lab};

    #[test]
    fn values_round_trip_through_text() {
        for v in [0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300, 0.0] {
            assert_eq!(format_value(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_has_a_row_per_grid_point() {
        let r = run_scurve(&Lab::default(), 11).unwrap();
        let text = result_csv(&r).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 12);
        assert_eq!(lines[0], "iz,p_tunnel_0,p_tunnel_1,p_tunnel_2");
        let first: Vec<f64> = lines[1].split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(first[0], r.axes[0].values[0]);
        assert_eq!(first[3], r.columns[2].values[0]);
    }

    #[test]
    fn fits_document_lists_every_fit() {
        let r = run_scurve(&Lab::default(), 11).unwrap();
        let doc: Value = serde_json::from_str(&fits_json(&r, "x").unwrap()).unwrap();
        for (k, v) in &r.fits {
            assert_eq!(doc["fits"][k].as_f64().unwrap(), *v);
        }
        assert_eq!(doc["experiment"], "scurve");
    }
}
