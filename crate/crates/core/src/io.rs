//! File formats: CSV and binary data ingest, label files, training bundles,
//! and the CSV/JSON tables written by runs.
//!
//! The binary matrix layout is a 32-byte little-endian header
//!
//! | offset | size | field                    |
//! |--------|------|--------------------------|
//! | 0      | 8    | magic `PERMMAT\0`        |
//! | 8      | 4    | version (u32, 1)         |
//! | 12     | 4    | dtype (u32, 1 = f64)     |
//! | 16     | 8    | rows (u64)               |
//! | 24     | 8    | cols (u64)               |
//!
//! followed by `rows · cols` little-endian f64 values in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nulldist::{threshold, MaxNullDistribution, Tail};
use crate::permcore::LabeledDataset;
use crate::pipeline::{RunReport, SweepReport, TrainingBundle, SCHEMA_VERSION};
use crate::rmt::ScenarioSummary;

pub const BINARY_MAGIC: [u8; 8] = *b"PERMMAT\0";
pub const BINARY_VERSION: u32 = 1;
pub const DTYPE_F64: u32 = 1;
const HEADER_LEN: usize = 32;

/// Name of the embedded label column in CSV data.
pub const LABEL_COLUMN: &str = "label";

fn parse_label(row: usize, raw: &str) -> Result<u8> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::InvalidLabel {
            row,
            value: other.to_string(),
        }),
    }
}

/// One label (`0` or `1`) per line; blank lines and a leading `label`
/// header are ignored.
pub fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let text = std::fs::read_to_string(path)?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.eq_ignore_ascii_case(LABEL_COLUMN)) {
            continue;
        }
        labels.push(parse_label(labels.len(), line)?);
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{LABEL_COLUMN}")?;
    for l in labels {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

/// Rows are subjects, columns features, with a header line. A column named
/// `label` holds the groups unless `labels` is given.
pub fn read_csv_dataset(path: &Path, labels: Option<&Path>) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header = reader.headers()?.clone();
    let label_col = header.iter().position(|h| h.eq_ignore_ascii_case(LABEL_COLUMN));
    let width = header.len();
    let features = width - usize::from(label_col.is_some());
    let mut values = Vec::new();
    let mut embedded = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(row + 2, |p| p.line() as usize);
        if record.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let mut column = 0;
        for (j, field) in record.iter().enumerate() {
            if Some(j) == label_col {
                embedded.push(parse_label(row, field)?);
                continue;
            }
            let x: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("field {} is not a number: {field:?}", j + 1),
            })?;
            if !x.is_finite() {
                return Err(Error::NonFiniteValue { row, column });
            }
            values.push(x);
            column += 1;
        }
    }
    let rows = values.len() / features.max(1);
    let matrix = DMatrix::from_row_slice(rows, features, &values);
    let labels = match labels {
        Some(p) => read_labels(p)?,
        None if label_col.is_some() => embedded,
        None => {
            return Err(Error::InvalidParameter(
                "no label file given and no label column in the data".into(),
            ))
        }
    };
    LabeledDataset::new(matrix, labels)
}

/// Writes `data` as CSV with feature columns `f0, f1, …` and a trailing
/// `label` column. Values use the shortest exact representation.
pub fn write_csv_dataset(path: &Path, data: &LabeledDataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let v = data.feature_count();
    let mut header: Vec<String> = (0..v).map(|j| format!("f{j}")).collect();
    header.push(LABEL_COLUMN.into());
    w.write_record(&header)?;
    let values = data.values();
    for (i, &label) in data.labels().iter().enumerate() {
        let mut record: Vec<String> = (0..v).map(|j| format!("{:?}", values[(i, j)])).collect();
        record.push(label.to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_binary_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&BINARY_MAGIC)?;
    w.write_all(&BINARY_VERSION.to_le_bytes())?;
    w.write_all(&DTYPE_F64.to_le_bytes())?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format("file shorter than the 32-byte header".into()))?;
    if header[..8] != BINARY_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().expect("4 bytes"));
    let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().expect("8 bytes"));
    let version = u32_at(8);
    if version != BINARY_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: BINARY_VERSION,
        });
    }
    if u32_at(12) != DTYPE_F64 {
        return Err(Error::Format(format!("unsupported dtype {}", u32_at(12))));
    }
    let (rows, cols) = (u64_at(16) as usize, u64_at(24) as usize);
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("dimensions overflow".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != len * 8 {
        return Err(Error::Format(format!(
            "payload has {} bytes, header implies {}",
            bytes.len(),
            len * 8
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

fn is_binary(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("bin" | "permmat")
    )
}

/// Loads a dataset from CSV or (by `.bin`/`.permmat` extension) the binary
/// format. Binary data needs a label file.
pub fn ingest(data: &Path, labels: Option<&Path>) -> Result<LabeledDataset> {
    if !is_binary(data) {
        return read_csv_dataset(data, labels);
    }
    let matrix = read_binary_matrix(data)?;
    let labels = labels.ok_or_else(|| {
        Error::InvalidParameter("binary data needs a label file".into())
    })?;
    LabeledDataset::new(matrix, read_labels(labels)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn save_bundle(path: &Path, bundle: &TrainingBundle) -> Result<()> {
    write_json(path, bundle)
}

pub fn load_bundle(path: &Path) -> Result<TrainingBundle> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let found = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Format("bundle has no schema_version".into()))?;
    if found != u64::from(SCHEMA_VERSION) {
        return Err(Error::UnsupportedVersion {
            found: found as u32,
            expected: SCHEMA_VERSION,
        });
    }
    Ok(serde_json::from_value(value)?)
}

pub fn write_report(path: &Path, report: &RunReport) -> Result<()> {
    write_json(path, report)
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    RunReport::from_json(&std::fs::read_to_string(path)?)
}

/// `bin_left,bin_right,count` for every bin of the null.
pub fn write_null_histogram(path: &Path, null: &MaxNullDistribution) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin_left", "bin_right", "count"])?;
    for b in null.bins() {
        w.write_record([format!("{:?}", b.left), format!("{:?}", b.right), b.count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct NullJson<'a> {
    schema_version: u32,
    bin_width: f64,
    samples: &'a [f64],
    thresholds: Vec<AlphaThreshold>,
}

#[derive(Debug, Serialize)]
struct AlphaThreshold {
    alpha: f64,
    threshold: Option<f64>,
}

/// Raw maxima plus thresholds at `alphas`.
pub fn write_null_json(path: &Path, null: &MaxNullDistribution, alphas: &[f64], tail: Tail) -> Result<()> {
    write_json(
        path,
        &NullJson {
            schema_version: SCHEMA_VERSION,
            bin_width: null.bin_width(),
            samples: null.samples(),
            thresholds: alphas
                .iter()
                .map(|&alpha| AlphaThreshold {
                    alpha,
                    threshold: threshold(null, alpha, tail).ok(),
                })
                .collect(),
        },
    )
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:?}"))
}

/// `alpha,threshold` rows from a report; unresolvable levels are blank.
pub fn write_thresholds_csv(path: &Path, report: &RunReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["alpha", "threshold"])?;
    for row in &report.thresholds {
        w.write_record([format!("{:?}", row.alpha), opt(row.threshold)])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per rate; threshold errors get one column per level.
pub fn write_sweep_csv(path: &Path, sweep: &SweepReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let alphas: Vec<f64> = sweep
        .rows
        .first()
        .map(|r| r.threshold_errors.iter().map(|e| e.alpha).collect())
        .unwrap_or_default();
    let mut header: Vec<String> = [
        "rate",
        "mask_size",
        "kl_recovered",
        "bd_recovered",
        "kl_naive",
        "bd_naive",
        "count_speedup",
        "wall_clock_speedup",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for a in &alphas {
        header.push(format!("threshold_error_{a}"));
        header.push(format!("naive_threshold_error_{a}"));
    }
    w.write_record(&header)?;
    for r in &sweep.rows {
        let mut rec = vec![
            format!("{:?}", r.rate),
            r.mask_size.to_string(),
            format!("{:?}", r.kl_recovered),
            format!("{:?}", r.bd_recovered),
            format!("{:?}", r.kl_naive),
            format!("{:?}", r.bd_naive),
            format!("{:?}", r.count_speedup),
            format!("{:?}", r.wall_clock_speedup),
        ];
        for e in &r.threshold_errors {
            rec.push(opt(e.recovered_abs_error));
            rec.push(opt(e.naive_abs_error));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_json(path: &Path, sweep: &SweepReport) -> Result<()> {
    write_json(path, sweep)
}

pub fn write_spectral_csv(path: &Path, rows: &[ScenarioSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_spectral_json(path: &Path, rows: &[ScenarioSummary]) -> Result<()> {
    write_json(path, &rows)
}
