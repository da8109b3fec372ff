//! Manifest CSV reading and writing.
//!
//! Format: UTF-8 CSV with the exact header
//! `patient_id,image_path,label,source`; labels spelled
//! `normal|pneumonia|covid19`.

use crate::error::{PipelineError, Result};
use cxrnet_core::data::{ClassLabel, Manifest, SampleRecord};
use std::path::Path;

const HEADER: [&str; 4] = ["patient_id", "image_path", "label", "source"];

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| PipelineError::format(path, e.to_string()))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| PipelineError::format(path, e.to_string()))?;
        let got: Vec<&str> = headers.iter().collect();
        if got != HEADER {
            return Err(PipelineError::format(
                path,
                format!("bad header {got:?}, expected {HEADER:?}"),
            ));
        }
    }
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| PipelineError::format(path, e.to_string()))?;
        if row.len() != 4 {
            return Err(PipelineError::format(
                path,
                format!("row {} has {} fields, expected 4", i + 2, row.len()),
            ));
        }
        let label = ClassLabel::parse(&row[2])
            .map_err(|e| PipelineError::format(path, format!("row {}: {e}", i + 2)))?;
        records.push(SampleRecord {
            patient_id: row[0].to_string(),
            image_path: row[1].to_string(),
            label,
            source: row[3].to_string(),
        });
    }
    Manifest::new(records).map_err(|e| PipelineError::format(path, e.to_string()))
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| PipelineError::format(path, e.to_string()))?;
    writer
        .write_record(HEADER)
        .map_err(|e| PipelineError::format(path, e.to_string()))?;
    for rec in manifest.records() {
        writer
            .write_record([
                rec.patient_id.as_str(),
                rec.image_path.as_str(),
                rec.label.as_str(),
                rec.source.as_str(),
            ])
            .map_err(|e| PipelineError::format(path, e.to_string()))?;
    }
    writer
        .flush()
        .map_err(PipelineError::io(path))?;
    Ok(())
}
