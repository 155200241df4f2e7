//! Study reports on disk: one CSV row per sweep point and metric, plus a
//! JSON manifest. File names carry the study kind and the input hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use otdr_core::eval::StudyReport;
use serde_json::{json, Value};

use crate::error::Result;
use crate::fsio;

pub const CSV_HEADER: &str = "study,axis_name,axis_value,label,metric,value,lower,upper";

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn report_csv(report: &StudyReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            report.kind.name(),
            report.axis_name,
            r.axis_value,
            r.label,
            r.metric,
            cell(r.value),
            cell(r.lower),
            cell(r.upper),
        ));
    }
    out
}

/// Inputs and settings that, with the tool version, reproduce an output.
#[derive(Debug, Clone, Default)]
pub struct Provenance {
    pub config: Value,
    /// Name to SHA-256 of every input file or generated corpus.
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WrittenReport {
    pub csv: PathBuf,
    pub manifest: PathBuf,
}

/// Writes `<kind>-<hash>.csv` and `<kind>-<hash>.json` into `dir`.
pub fn write_report(dir: &Path, report: &StudyReport, input_hash: &str, prov: &Provenance) -> Result<WrittenReport> {
    let stem = format!("{}-{}", report.kind.name(), fsio::short_hash(input_hash));
    let csv_path = dir.join(format!("{stem}.csv"));
    let manifest_path = dir.join(format!("{stem}.json"));
    let csv = report_csv(report);
    let manifest = json!({
        "study": report.kind.name(),
        "axis_name": report.axis_name,
        "provenance": report.provenance,
        "notes": report.notes,
        "inputs": prov.inputs,
        "config": prov.config,
        "tool_version": crate::TOOL_VERSION,
        "files": { "csv": format!("{stem}.csv"), "csv_sha256": fsio::sha256_hex(csv.as_bytes()) },
    });
    fsio::write_atomic(&csv_path, csv.as_bytes())?;
    fsio::write_json(&manifest_path, &manifest)?;
    Ok(WrittenReport {
        csv: csv_path,
        manifest: manifest_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use otdr_core::eval::StudyKind;

    #[test]
    fn csv_rows_and_empty_cells() {
        let mut r = StudyReport::new(StudyKind::SnrSweep, "snr_db");
        r.push_interval(3.0, "", "accuracy", Some(0.9), Some((0.8, 0.95)));
        r.push(3.0, "", "rmse_position_m", None);
        let text = report_csv(&r);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "snr_sweep,snr_db,3,,accuracy,0.9,0.8,0.95");
        assert_eq!(lines[2], "snr_sweep,snr_db,3,,rmse_position_m,,,");
    }

    #[test]
    fn file_names_embed_kind_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        let r = StudyReport::new(StudyKind::Robustness, "scenario_index");
        let w = write_report(dir.path(), &r, "abcdef0123456789", &Provenance::default()).unwrap();
        assert!(w.csv.ends_with("robustness-abcdef012345.csv"));
        assert!(w.manifest.ends_with("robustness-abcdef012345.json"));
    }
}
