//! File formats: CSV tables, JSON sidecars, model and report files.
//!
//! All writers format floats with the shortest round-trip representation,
//! so outputs are byte-stable and lossless for a given input and seed.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eval::EvalReport;
use crate::features::{ColumnMeta, FeatureMatrix, RawColumn, RawColumnData, RawTable};
use crate::model::RuleModel;
use crate::train::TrainingHistory;
use crate::{Error, Result};

/// Reads a raw CSV table. A `row_id` column (if present) provides row
/// identifiers; otherwise `row0..rowN` ids are generated. Columns whose
/// non-empty cells all parse as numbers become continuous (empty cells
/// become NaN); anything else is categorical.
pub fn read_raw_csv(path: &Path) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new().from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
    for record in reader.records() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Data(format!(
                "csv row has {} fields, header has {}",
                record.len(),
                headers.len()
            )));
        }
        for (c, field) in record.iter().enumerate() {
            cells[c].push(field.to_string());
        }
    }
    let n_rows = cells.first().map(|c| c.len()).unwrap_or(0);

    let id_col = headers.iter().position(|h| h == "row_id");
    let row_ids: Vec<String> = match id_col {
        Some(c) => cells[c].clone(),
        None => (0..n_rows).map(|i| format!("row{i}")).collect(),
    };

    let mut columns = Vec::new();
    for (c, name) in headers.iter().enumerate() {
        if Some(c) == id_col {
            continue;
        }
        let numeric = cells[c]
            .iter()
            .all(|v| v.trim().is_empty() || v.trim().parse::<f64>().is_ok());
        let data = if numeric {
            RawColumnData::Continuous(
                cells[c]
                    .iter()
                    .map(|v| {
                        let t = v.trim();
                        if t.is_empty() {
                            f64::NAN
                        } else {
                            t.parse().unwrap()
                        }
                    })
                    .collect(),
            )
        } else {
            RawColumnData::Categorical(
                cells[c]
                    .iter()
                    .map(|v| {
                        let t = v.trim();
                        if t.is_empty() {
                            None
                        } else {
                            Some(t.to_string())
                        }
                    })
                    .collect(),
            )
        };
        columns.push(RawColumn { name: name.clone(), data });
    }
    let table = RawTable { columns, row_ids };
    table.validate()?;
    Ok(table)
}

/// Writes a feature matrix as CSV with a leading `row_id` column.
pub fn write_feature_csv(matrix: &FeatureMatrix, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["row_id".to_string()];
    header.extend(matrix.meta().iter().map(|m| m.name.clone()));
    writer.write_record(&header)?;
    for row in 0..matrix.n_rows() {
        let mut record = vec![matrix.row_ids()[row].clone()];
        record.extend(matrix.row(row).iter().map(|v| format!("{v}")));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a feature matrix from CSV. Without a meta sidecar the column
/// metadata is reconstructed from the header alone.
pub fn read_feature_csv(path: &Path) -> Result<FeatureMatrix> {
    let mut reader = csv::ReaderBuilder::new().from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    if headers.first().map(|h| h.as_str()) != Some("row_id") {
        return Err(Error::Data("feature csv must start with a row_id column".into()));
    }
    let n_cols = headers.len() - 1;
    let mut row_ids = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Data("feature csv has ragged rows".into()));
        }
        row_ids.push(record[0].to_string());
        for field in record.iter().skip(1) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Data(format!("feature cell '{field}' is not a number")))?;
            values.push(v);
        }
    }
    let meta = headers[1..]
        .iter()
        .map(|name| ColumnMeta {
            name: name.clone(),
            source: name.clone(),
            scheme: "unspecified".into(),
            group: None,
            threshold: None,
        })
        .collect();
    let _ = n_cols;
    FeatureMatrix::new(values, meta, row_ids)
}

/// Column-metadata sidecar document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaDoc {
    pub schema_version: u32,
    pub columns: Vec<ColumnMeta>,
}

pub fn write_column_meta(meta: &[ColumnMeta], path: &Path) -> Result<()> {
    let doc = MetaDoc { schema_version: 1, columns: meta.to_vec() };
    fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

pub fn read_column_meta(path: &Path) -> Result<Vec<ColumnMeta>> {
    let doc: MetaDoc = serde_json::from_str(&fs::read_to_string(path)?)?;
    Ok(doc.columns)
}

/// Reads a feature matrix plus its meta sidecar, checking that the
/// column names line up.
pub fn read_feature_csv_with_meta(csv_path: &Path, meta_path: &Path) -> Result<FeatureMatrix> {
    let bare = read_feature_csv(csv_path)?;
    let meta = read_column_meta(meta_path)?;
    if meta.len() != bare.n_cols() {
        return Err(Error::Dimension {
            context: "meta sidecar columns".into(),
            expected: bare.n_cols(),
            got: meta.len(),
        });
    }
    for (a, b) in bare.meta().iter().zip(&meta) {
        if a.name != b.name {
            return Err(Error::Data(format!(
                "meta sidecar column '{}' does not match csv column '{}'",
                b.name, a.name
            )));
        }
    }
    let mut values = Vec::with_capacity(bare.n_rows() * bare.n_cols());
    for row in 0..bare.n_rows() {
        values.extend_from_slice(bare.row(row));
    }
    FeatureMatrix::new(values, meta, bare.row_ids().to_vec())
}

fn read_id_value_csv(path: &Path, value_column: &str) -> Result<Vec<(String, f64)>> {
    let mut reader = csv::ReaderBuilder::new().from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "row_id" || &headers[1] != value_column {
        return Err(Error::Data(format!(
            "expected csv header 'row_id,{value_column}', got '{}'",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let value: f64 = record[1]
            .parse()
            .map_err(|_| Error::Data(format!("cell '{}' is not a number", &record[1])))?;
        out.push((record[0].to_string(), value));
    }
    Ok(out)
}

fn write_id_value_csv(rows: &[(String, f64)], value_column: &str, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["row_id", value_column])?;
    for (id, value) in rows {
        writer.write_record([id.as_str(), &format!("{value}")])?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads `row_id,target` pairs.
pub fn read_targets_csv(path: &Path) -> Result<Vec<(String, f64)>> {
    read_id_value_csv(path, "target")
}

pub fn write_targets_csv(rows: &[(String, f64)], path: &Path) -> Result<()> {
    write_id_value_csv(rows, "target", path)
}

/// Reads `row_id,prediction` pairs (also the format for external model
/// predictions joined into evaluation reports).
pub fn read_predictions_csv(path: &Path) -> Result<Vec<(String, f64)>> {
    read_id_value_csv(path, "prediction")
}

pub fn write_predictions_csv(rows: &[(String, f64)], path: &Path) -> Result<()> {
    write_id_value_csv(rows, "prediction", path)
}

pub fn write_model(model: &RuleModel, path: &Path) -> Result<()> {
    fs::write(path, model.to_json()?)?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<RuleModel> {
    RuleModel::from_json(&fs::read_to_string(path)?)
}

/// Writes per-epoch training curves as CSV.
pub fn write_history_csv(history: &TrainingHistory, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "epoch",
        "train_loss",
        "val_loss",
        "lambda_long",
        "lambda_fuzzy",
        "lambda_implied",
        "lambda_exclusive",
        "alpha",
    ])?;
    for rec in &history.records {
        writer.write_record([
            rec.epoch.to_string(),
            format!("{}", rec.train_loss),
            format!("{}", rec.val_loss),
            format!("{}", rec.lambda_long),
            format!("{}", rec.lambda_fuzzy),
            format!("{}", rec.lambda_implied),
            format!("{}", rec.lambda_exclusive),
            format!("{}", rec.alpha),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_eval_report_json(report: &EvalReport, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

/// Flat plot-ready records: one `(model, row_id, abs_error)` line per
/// model and row.
pub fn write_eval_report_csv(report: &EvalReport, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["model", "row_id", "abs_error"])?;
    for entry in &report.entries {
        for (row_id, err) in report.row_ids.iter().zip(&entry.errors) {
            writer.write_record([entry.label.as_str(), row_id.as_str(), &format!("{err}")])?;
        }
    }
    writer.flush()?;
    Ok(())
}
