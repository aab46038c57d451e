use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use plantnet_core::data::{load_sample, Dataset, LabelMap, SampleStore};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// `--labels "A,B,C"`, or the 15 PlantVillage classes when absent.
pub fn label_map(labels: Option<&str>) -> CliResult<LabelMap> {
    match labels {
        None => Ok(LabelMap::plant_village()),
        Some(list) => Ok(LabelMap::new(list.split(',').map(|s| s.trim().to_string()).collect())?),
    }
}

pub fn report_scan(ds: &Dataset) {
    for d in &ds.unknown_dirs {
        eprintln!("warning: ignoring unknown class directory '{d}'");
    }
    if !ds.skipped.is_empty() {
        eprintln!("warning: skipped {} unreadable image file(s)", ds.skipped.len());
    }
}

/// Decode every record in parallel (or defer decoding with `stream`).
/// Results do not depend on the worker count.
pub fn sample_store(ds: &Dataset, hw: usize, stream: bool) -> CliResult<SampleStore> {
    if stream {
        return Ok(SampleStore::on_disk(ds, hw));
    }
    let pixels = ds
        .records()
        .par_iter()
        .map(|r| {
            load_sample(&r.path, hw).map_err(|e| CliError::Data(format!("{}: {e}", r.path.display())))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let labels = ds.records().iter().map(|r| r.class).collect();
    Ok(SampleStore::from_pixels(hw, ds.labels().len(), labels, pixels)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Plain-text `key=value` run metadata, in the order given, followed by
/// `sha256.<file>` lines for every artifact that exists.
pub fn write_run_metadata(out_dir: &Path, entries: &[(String, String)], artifacts: &[&str]) -> CliResult<()> {
    let mut text = String::new();
    for (k, v) in entries {
        let _ = writeln!(text, "{k}={v}");
    }
    for name in artifacts {
        let path = out_dir.join(name);
        if path.exists() {
            let _ = writeln!(text, "sha256.{name}={}", sha256_hex(&fs::read(&path)?));
        }
    }
    fs::write(out_dir.join("run.txt"), text)?;
    Ok(())
}
