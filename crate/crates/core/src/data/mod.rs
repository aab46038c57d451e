//! Dataset layout, stratified splitting, batching and one-hot labels.
//!
//! A dataset root holds one directory per class, named after the label with
//! spaces replaced by underscores, containing PNG or JPEG files.

mod batch;
mod csvio;
mod split;
pub mod synthetic;

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{invalid, Error, Result};

pub use batch::{batch_plan, batches, load_sample, sequential_batches, Batch, Batches, SampleStore};
pub use csvio::{read_manifest, write_manifest, write_split_csv, ManifestRow};
pub use split::{kfold, split, Split, DEFAULT_VAL_FRACTION};

/// The 15 PlantVillage classes and their image counts, in canonical order.
pub const PLANT_VILLAGE: [(&str, usize); 15] = [
    ("Tomato Late Blight", 1909),
    ("Pepper Bell Healthy", 1478),
    ("Tomato Septoria Leaf Spot", 1771),
    ("Potato Late Blight", 1000),
    ("Potato Early Blight", 1000),
    ("Potato Healthy", 1520),
    ("Tomato Healthy", 1591),
    ("Tomato Leaf Mold", 952),
    ("Tomato Yellow Leaf Curl Virus", 3209),
    ("Tomato Bacterial Spot", 2127),
    ("Tomato Mosaic Virus", 1730),
    ("Tomato Target Spot", 1404),
    ("Tomato Early Blight", 1000),
    ("Pepper Bell Bacterial Spot", 997),
    ("Tomato Spider Mites", 1676),
];

/// Ordered class labels; the position of a label is its class index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    labels: Vec<String>,
}

impl LabelMap {
    pub fn plant_village() -> Self {
        Self {
            labels: PLANT_VILLAGE.iter().map(|(l, _)| l.to_string()).collect(),
        }
    }

    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(invalid("a label map needs at least two classes"));
        }
        let mut seen = BTreeSet::new();
        for l in &labels {
            if l.trim().is_empty() || l.contains([',', '\n', '\r', '/', '\\', ';']) {
                return Err(invalid(format!("label '{l}' is empty or contains a reserved character")));
            }
            if !seen.insert(dir_name(l)) {
                return Err(invalid(format!("duplicate label '{l}'")));
            }
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn dir_name(&self, index: usize) -> String {
        dir_name(&self.labels[index])
    }

    /// Labels joined with `|`, the form stored in run metadata.
    pub fn encode(&self) -> String {
        self.labels.join("|")
    }

    pub fn decode(s: &str) -> Result<Self> {
        Self::new(s.split('|').map(str::to_string).collect())
    }
}

pub fn dir_name(label: &str) -> String {
    label.replace(' ', "_")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub path: PathBuf,
    pub class: usize,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    labels: LabelMap,
    records: Vec<Record>,
    /// Subdirectories of the root that match no label.
    pub unknown_dirs: Vec<String>,
    /// Image files whose header could not be read.
    pub skipped: Vec<PathBuf>,
}

impl Dataset {
    pub fn from_records(labels: LabelMap, records: Vec<Record>) -> Result<Self> {
        if let Some(r) = records.iter().find(|r| r.class >= labels.len()) {
            return Err(invalid(format!(
                "record {} has class {} outside 0..{}",
                r.path.display(),
                r.class,
                labels.len()
            )));
        }
        Ok(Self {
            labels,
            records,
            unknown_dirs: Vec::new(),
            skipped: Vec::new(),
        })
    }

    pub fn labels(&self) -> &LabelMap {
        &self.labels
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.labels.len()];
        for r in &self.records {
            counts[r.class] += 1;
        }
        counts
    }

    /// Record indices grouped by class, each group in record order.
    pub fn by_class(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.labels.len()];
        for (i, r) in self.records.iter().enumerate() {
            groups[r.class].push(i);
        }
        groups
    }
}

fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        .unwrap_or(false)
}

/// Image files directly inside `dir`, sorted by file name.
pub fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image_file(p))
        .collect();
    files.sort();
    Ok(files)
}

/// Register every image under `root/<label dir>/` for each label in `labels`.
///
/// Records are ordered by class index, then by file name.
pub fn scan(root: impl AsRef<Path>, labels: &LabelMap) -> Result<Dataset> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::Data(format!("{} is not a directory", root.display())));
    }
    let wanted: HashMap<String, usize> = (0..labels.len()).map(|i| (labels.dir_name(i), i)).collect();
    let mut present = vec![false; labels.len()];
    let mut unknown_dirs = Vec::new();
    let mut entries: Vec<_> = fs::read_dir(root)?.filter_map(|e| e.ok()).collect();
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        if !e.path().is_dir() {
            continue;
        }
        let name = e.file_name().to_string_lossy().into_owned();
        match wanted.get(&name) {
            Some(&i) => present[i] = true,
            None => unknown_dirs.push(name),
        }
    }
    let missing: Vec<&str> = (0..labels.len())
        .filter(|&i| !present[i])
        .map(|i| labels.label(i))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "{} is missing class directories for: {}",
            root.display(),
            missing.join(", ")
        )));
    }
    for d in &unknown_dirs {
        log::warn!("ignoring unknown class directory '{d}'");
    }

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for class in 0..labels.len() {
        for path in image_files(&root.join(labels.dir_name(class)))? {
            if image::image_dimensions(&path).is_ok() {
                records.push(Record { path, class });
            } else {
                log::warn!("skipping unreadable image {}", path.display());
                skipped.push(path);
            }
        }
    }
    Ok(Dataset {
        labels: labels.clone(),
        records,
        unknown_dirs,
        skipped,
    })
}
