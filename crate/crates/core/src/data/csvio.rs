use std::path::Path;

use super::{Dataset, Split};
use crate::error::{Error, Result};

/// One line of the preprocessing manifest. Paths are relative to the
/// output and input roots, with `/` separators.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRow {
    pub output_path: String,
    pub class_label: String,
    pub source_path: String,
    /// `;`-joined augmentation ops, or `none` for an original.
    pub augment_ops_applied: String,
    pub seed: u64,
}

const MANIFEST_HEADER: [&str; 5] = ["output_path", "class_label", "source_path", "augment_ops_applied", "seed"];

pub fn write_manifest(path: impl AsRef<Path>, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(MANIFEST_HEADER)?;
    for r in rows {
        w.write_record([
            r.output_path.as_str(),
            &r.class_label,
            &r.source_path,
            &r.augment_ops_applied,
            &r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().ne(MANIFEST_HEADER) {
        return Err(Error::Format("manifest header does not match".into()));
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            let seed = rec[4]
                .parse()
                .map_err(|_| Error::Format(format!("manifest row {}: bad seed '{}'", i + 2, &rec[4])))?;
            Ok(ManifestRow {
                output_path: rec[0].to_string(),
                class_label: rec[1].to_string(),
                source_path: rec[2].to_string(),
                augment_ops_applied: rec[3].to_string(),
                seed,
            })
        })
        .collect()
}

/// `path,class_label,split` for every record, in record order.
pub fn write_split_csv(path: impl AsRef<Path>, ds: &Dataset, split: &Split) -> Result<()> {
    let mut side = vec![""; ds.len()];
    for &i in &split.train {
        side[i] = "train";
    }
    for &i in &split.val {
        side[i] = "val";
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["path", "class_label", "split"])?;
    for (r, s) in ds.records().iter().zip(side) {
        if s.is_empty() {
            continue;
        }
        w.write_record([&r.path.to_string_lossy(), ds.labels().label(r.class), s])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            ManifestRow {
                output_path: "Tomato_Healthy/00000.png".into(),
                class_label: "Tomato Healthy".into(),
                source_path: "Tomato_Healthy/a, b.jpg".into(),
                augment_ops_applied: "none".into(),
                seed: 1,
            },
            ManifestRow {
                output_path: "Tomato_Healthy/00001.png".into(),
                class_label: "Tomato Healthy".into(),
                source_path: "Tomato_Healthy/c.jpg".into(),
                augment_ops_applied: "hflip;rotate(-3.25)".into(),
                seed: u64::MAX,
            },
        ];
        let p = dir.path().join("manifest.csv");
        write_manifest(&p, &rows).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), rows);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("output_path,class_label,source_path,augment_ops_applied,seed\n"));
    }
}
