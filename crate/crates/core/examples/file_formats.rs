//! CSV and binary data, label files, and the output tables of a run.
//!
//! cargo run --release --example file_formats [dir]

use std::path::PathBuf;

use fastperm::io;
use fastperm::pipeline::{run_fast, RunConfig};
use fastperm::synth::{generate, SyntheticConfig};

fn main() -> fastperm::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("fastperm-formats"), PathBuf::from);
    std::fs::create_dir_all(&dir)?;
    let data = generate(&SyntheticConfig::new(12, 3_000, 6))?;

    let csv = dir.join("data.csv");
    let bin = dir.join("data.bin");
    let labels = dir.join("data.labels");
    io::write_csv_dataset(&csv, &data)?;
    io::write_binary_matrix(&bin, data.values())?;
    io::write_labels(&labels, data.labels())?;
    let a = io::ingest(&csv, None)?;
    let b = io::ingest(&bin, Some(&labels))?;
    println!("csv and binary agree: {}", a.values() == b.values() && a.labels() == b.labels());
    println!("sizes: csv {} bytes, binary {} bytes", std::fs::metadata(&csv)?.len(), std::fs::metadata(&bin)?.len());

    let out = run_fast(&b, &RunConfig::new(300, 0.05), None)?;
    let null = out.report.null()?;
    io::write_report(&dir.join("report.json"), &out.report)?;
    io::write_thresholds_csv(&dir.join("thresholds.csv"), &out.report)?;
    io::write_null_histogram(&dir.join("null.csv"), &null)?;
    io::write_null_json(&dir.join("null.json"), &null, &out.report.config.alpha_levels, out.report.config.tail)?;
    io::save_bundle(&dir.join("bundle.json"), &out.bundle)?;
    println!("wrote report.json, thresholds.csv, null.csv, null.json, bundle.json to {}", dir.display());
    Ok(())
}
