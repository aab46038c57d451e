//! `plantnet preprocess`: resize, blur, balance and optionally segment.

use std::fs;
use std::path::{Path, PathBuf};

use plantnet_core::data::{scan, write_manifest, ManifestRow};
use plantnet_core::imgproc::{
    gaussian_blur, gaussian_kernel, morphology, plan_balance, resize, rgb_to_gray, threshold, BalanceEntry,
    ChannelRange, ColorSpace, Image,
};
use plantnet_core::Rng;
use rayon::prelude::*;

use crate::common::{label_map, report_scan};
use crate::error::{CliError, CliResult};
use crate::PreprocessArgs;

pub const MANIFEST: &str = "manifest.csv";

struct Job {
    class: usize,
    index: usize,
    source: PathBuf,
    entry: BalanceEntry,
}

struct Segmenter {
    space: ColorSpace,
    ranges: Vec<ChannelRange>,
    morph: Option<plantnet_core::imgproc::MorphOp>,
    root: PathBuf,
}

impl Segmenter {
    fn mask(&self, img: &Image) -> CliResult<Image> {
        let mask = match self.space {
            ColorSpace::Gray => threshold(&rgb_to_gray(img), self.space, &self.ranges)?,
            _ => threshold(img, self.space, &self.ranges)?,
        };
        Ok(match self.morph {
            Some(op) => morphology(&mask, op)?,
            None => mask,
        })
    }
}

/// `<output>_masks` next to the output directory.
fn default_mask_dir(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_else(|| "output".into());
    name.push("_masks");
    output.with_file_name(name)
}

fn ensure_empty(dir: &Path) -> CliResult<()> {
    if dir.exists() && fs::read_dir(dir)?.next().is_some() {
        return Err(CliError::Data(format!("{} exists and is not empty", dir.display())));
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn slash_path(path: &Path) -> String {
    path.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn segmenter(args: &PreprocessArgs) -> CliResult<Option<Segmenter>> {
    if !args.emit_masks {
        return Ok(None);
    }
    let (space, ranges) = match &args.ranges {
        Some(r) => (args.space, r.clone()),
        None if args.space == args.preset.space() => (args.space, args.preset.ranges().to_vec()),
        None => {
            return Err(CliError::Usage(format!(
                "--space {} needs explicit --ranges (presets are defined in {})",
                args.space,
                args.preset.space()
            )))
        }
    };
    if ranges.len() != space.channels() {
        return Err(CliError::Usage(format!(
            "--space {space} takes {} ranges, got {}",
            space.channels(),
            ranges.len()
        )));
    }
    let root = args.mask_dir.clone().unwrap_or_else(|| default_mask_dir(&args.output_dir));
    Ok(Some(Segmenter {
        space,
        ranges,
        morph: args.morph.0,
        root,
    }))
}

pub fn run(args: &PreprocessArgs) -> CliResult<()> {
    if args.size == 0 {
        return Err(CliError::Usage("--size must be positive".into()));
    }
    if args.target_count == 0 {
        return Err(CliError::Usage("--target-count must be positive".into()));
    }
    gaussian_kernel(args.blur_sigma, args.blur_kernel)?;
    let seg = segmenter(args)?;
    let labels = label_map(args.labels.as_deref())?;
    let ds = scan(&args.input_dir, &labels)?;
    report_scan(&ds);

    let mut jobs = Vec::new();
    for (class, members) in ds.by_class().into_iter().enumerate() {
        if members.is_empty() {
            return Err(CliError::Data(format!("class '{}' has no images", labels.label(class))));
        }
        let class_seed = Rng::derive(args.seed, &[0xBA1, class as u64]).next_u64();
        for (index, entry) in plan_balance(members.len(), args.target_count, class_seed)?
            .into_iter()
            .enumerate()
        {
            let source = match &entry {
                BalanceEntry::Original(i) | BalanceEntry::Augmented { source: i, .. } => members[*i],
            };
            jobs.push((Job {
                class,
                index,
                source: ds.records()[source].path.clone(),
                entry,
            }, class_seed));
        }
    }

    ensure_empty(&args.output_dir)?;
    if let Some(s) = &seg {
        ensure_empty(&s.root)?;
    }
    for class in 0..labels.len() {
        fs::create_dir_all(args.output_dir.join(labels.dir_name(class)))?;
        if let Some(s) = &seg {
            fs::create_dir_all(s.root.join(labels.dir_name(class)))?;
        }
    }

    let rows = jobs
        .par_iter()
        .map(|(job, class_seed)| -> CliResult<ManifestRow> {
            let fail = |e: CliError| CliError::Data(format!("{}: {e}", job.source.display()));
            let img = Image::load(&job.source).map_err(|e| fail(e.into()))?;
            let img = resize(&img, args.size, args.size)?;
            let mut img = gaussian_blur(&img, args.blur_sigma, args.blur_kernel)?;
            let (ops, seed) = match &job.entry {
                BalanceEntry::Original(_) => ("none".to_string(), *class_seed),
                BalanceEntry::Augmented { ops, seed, .. } => {
                    img = ops.iter().fold(img, |acc, op| op.apply(&acc));
                    let text: Vec<String> = ops.iter().map(|op| op.to_string()).collect();
                    (text.join(";"), *seed)
                }
            };
            let rel = Path::new(&labels.dir_name(job.class)).join(format!("{:05}.png", job.index));
            img.save_png(args.output_dir.join(&rel))?;
            if let Some(s) = &seg {
                s.mask(&img)?.save_png(s.root.join(&rel))?;
            }
            let source = job.source.strip_prefix(&args.input_dir).unwrap_or(&job.source);
            Ok(ManifestRow {
                output_path: slash_path(&rel),
                class_label: labels.label(job.class).to_string(),
                source_path: slash_path(source),
                augment_ops_applied: ops,
                seed,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    write_manifest(args.output_dir.join(MANIFEST), &rows)?;
    let augmented = rows.iter().filter(|r| r.augment_ops_applied != "none").count();
    println!(
        "wrote {} images in {} classes ({augmented} augmented) to {}",
        rows.len(),
        labels.len(),
        args.output_dir.display()
    );
    Ok(())
}
