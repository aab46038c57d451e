//! `plantnet gridsearch`: k-fold cross-validation over a hyperparameter grid.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use plantnet_core::data::{kfold, scan, SampleStore};
use plantnet_core::network::build_plantnet;
use plantnet_core::optim::{Algorithm, OptConfig, Optimizer};
use plantnet_core::{Element, Precision};
use rayon::prelude::*;

use crate::common::{label_map, report_scan, sample_store, write_run_metadata};
use crate::error::{CliError, CliResult};
use crate::train::{fit, FitPlan};
use crate::{GridArgs, ModelArgs};

pub const AXES: [&str; 10] = [
    "optimizer",
    "lr",
    "beta",
    "beta1",
    "beta2",
    "eps",
    "batch_size",
    "epochs",
    "dropout_conv",
    "dropout_dense",
];

#[derive(Clone, Debug, PartialEq)]
pub enum AxisValue {
    Algorithm(Algorithm),
    Number(f64),
    Count(usize),
}

impl std::fmt::Display for AxisValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Algorithm(a) => write!(f, "{a}"),
            Self::Number(v) => write!(f, "{v}"),
            Self::Count(n) => write!(f, "{n}"),
        }
    }
}

/// Axis names and their candidate values, axes in name order.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub axes: Vec<(String, Vec<AxisValue>)>,
}

fn axis_value(axis: &str, v: &toml::Value) -> Result<AxisValue, String> {
    match axis {
        "optimizer" => v
            .as_str()
            .ok_or("expected a string")?
            .parse()
            .map(AxisValue::Algorithm)
            .map_err(|e: plantnet_core::Error| e.to_string()),
        "batch_size" | "epochs" => match v.as_integer() {
            Some(n) if n > 0 => Ok(AxisValue::Count(n as usize)),
            _ => Err("expected a positive integer".into()),
        },
        _ => v
            .as_float()
            .or_else(|| v.as_integer().map(|n| n as f64))
            .map(AxisValue::Number)
            .ok_or_else(|| "expected a number".into()),
    }
}

impl Grid {
    pub fn parse(text: &str) -> CliResult<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("grid file: {e}")))?;
        let mut axes = Vec::new();
        for (name, raw) in table {
            if !AXES.contains(&name.as_str()) {
                return Err(CliError::Usage(format!(
                    "unknown grid axis '{name}'; expected one of {}",
                    AXES.join(", ")
                )));
            }
            let items = match raw {
                toml::Value::Array(items) => items,
                single => vec![single],
            };
            if items.is_empty() {
                return Err(CliError::Usage(format!("grid axis '{name}' has no values")));
            }
            let values = items
                .iter()
                .map(|v| axis_value(&name, v).map_err(|e| CliError::Usage(format!("grid axis '{name}': {e}"))))
                .collect::<CliResult<Vec<_>>>()?;
            axes.push((name, values));
        }
        if axes.is_empty() {
            return Err(CliError::Usage("grid file defines no axes".into()));
        }
        Ok(Self { axes })
    }

    /// Every combination, the last axis varying fastest.
    pub fn combinations(&self) -> Vec<Vec<AxisValue>> {
        self.axes.iter().fold(vec![Vec::new()], |acc, (_, values)| {
            acc.iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut c = prefix.clone();
                        c.push(v.clone());
                        c
                    })
                })
                .collect()
        })
    }
}

/// Settings of one grid point.
#[derive(Clone, Debug)]
struct Trial {
    opt: OptConfig,
    model: ModelArgs,
    batch_size: usize,
    epochs: usize,
}

fn trial(args: &GridArgs, base: OptConfig, names: &[String], combo: &[AxisValue]) -> CliResult<Trial> {
    let mut t = Trial {
        opt: base,
        model: args.model.clone(),
        batch_size: args.batch_size,
        epochs: args.epochs,
    };
    for (name, value) in names.iter().zip(combo) {
        match (name.as_str(), value) {
            ("optimizer", AxisValue::Algorithm(a)) => t.opt.algorithm = *a,
            ("batch_size", AxisValue::Count(n)) => t.batch_size = *n,
            ("epochs", AxisValue::Count(n)) => t.epochs = *n,
            ("lr", AxisValue::Number(v)) => t.opt.lr = *v,
            ("beta", AxisValue::Number(v)) => t.opt.beta = *v,
            ("beta1", AxisValue::Number(v)) => t.opt.beta1 = *v,
            ("beta2", AxisValue::Number(v)) => t.opt.beta2 = *v,
            ("eps", AxisValue::Number(v)) => t.opt.eps = *v,
            ("dropout_conv", AxisValue::Number(v)) => t.model.dropout_conv = *v,
            ("dropout_dense", AxisValue::Number(v)) => t.model.dropout_dense = *v,
            _ => unreachable!("axis values are typed by name"),
        }
    }
    t.opt.validate()?;
    Ok(t)
}

/// Cross-validated score of one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct Ranked {
    pub combination: Vec<AxisValue>,
    /// Final-epoch validation accuracy per fold; a diverged fold scores 0.
    pub folds: Vec<f64>,
    pub diverged: usize,
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn score_fold<T: Element>(
    t: &Trial,
    store: &SampleStore,
    train: &[usize],
    val: &[usize],
    classes: usize,
    seed: u64,
) -> CliResult<Option<f64>> {
    let mut net = build_plantnet::<T>(&t.model.network(classes), seed)?;
    let mut opt = Optimizer::new(t.opt)?;
    let plan = FitPlan {
        store,
        train,
        val,
        epochs: t.epochs,
        batch_size: t.batch_size,
        seed,
    };
    match fit(&mut net, &mut opt, &plan, |_| Ok(())) {
        Ok(rows) => Ok(Some(rows.last().map_or(0.0, |r| r.val_acc))),
        Err(CliError::Divergence(msg)) => {
            log::warn!("fold diverged: {msg}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

pub fn run(args: &GridArgs) -> CliResult<Vec<Ranked>> {
    match args.model.precision {
        Precision::Single => run_typed::<f32>(args),
        Precision::Double => run_typed::<f64>(args),
    }
}

fn run_typed<T: Element>(args: &GridArgs) -> CliResult<Vec<Ranked>> {
    if args.folds < 2 {
        return Err(CliError::Usage("--folds must be at least 2".into()));
    }
    if args.batch_size == 0 {
        return Err(CliError::Usage("--batch-size must be at least 1".into()));
    }
    let text = fs::read_to_string(&args.grid)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.grid.display())))?;
    let grid = Grid::parse(&text)?;
    let base = args.optim.config()?;
    let names: Vec<String> = grid.axes.iter().map(|(n, _)| n.clone()).collect();
    let combos = grid.combinations();
    let trials = combos
        .iter()
        .map(|c| trial(args, base, &names, c))
        .collect::<CliResult<Vec<_>>>()?;

    let labels = label_map(args.labels.as_deref())?;
    let ds = scan(&args.data_dir, &labels)?;
    report_scan(&ds);
    let folds = kfold(&ds, args.folds, args.seed)?;
    let store = sample_store(&ds, args.model.input_size, false)?;

    let jobs: Vec<(usize, usize)> = (0..trials.len())
        .flat_map(|c| (0..folds.len()).map(move |f| (c, f)))
        .collect();
    let scores = jobs
        .par_iter()
        .map(|&(c, f)| {
            score_fold::<T>(&trials[c], &store, &folds[f].train, &folds[f].val, labels.len(), args.seed)
        })
        .collect::<CliResult<Vec<_>>>()?;

    let mut ranked: Vec<Ranked> = combos
        .into_iter()
        .zip(scores.chunks(folds.len()))
        .map(|(combination, fold_scores)| {
            let folds: Vec<f64> = fold_scores.iter().map(|s| s.unwrap_or(0.0)).collect();
            let (mean, std) = mean_std(&folds);
            Ranked {
                combination,
                diverged: fold_scores.iter().filter(|s| s.is_none()).count(),
                folds,
                mean,
                std,
            }
        })
        .collect();
    ranked.sort_by(|a, b| b.mean.total_cmp(&a.mean));

    fs::create_dir_all(&args.out_dir)?;
    write_ranking(&args.out_dir.join("ranking.csv"), &names, args.folds, &ranked)?;
    let entries = vec![
        ("command".to_string(), "gridsearch".to_string()),
        ("data_dir".into(), args.data_dir.display().to_string()),
        ("grid".into(), args.grid.display().to_string()),
        ("folds".into(), args.folds.to_string()),
        ("seed".into(), args.seed.to_string()),
        ("combinations".into(), ranked.len().to_string()),
    ];
    write_run_metadata(&args.out_dir, &entries, &["ranking.csv"])?;

    let best = &ranked[0];
    let desc: Vec<String> = names.iter().zip(&best.combination).map(|(n, v)| format!("{n}={v}")).collect();
    println!("best: {} (mean accuracy {:.6} ± {:.6})", desc.join(" "), best.mean, best.std);
    Ok(ranked)
}

fn write_ranking(path: &Path, names: &[String], k: usize, ranked: &[Ranked]) -> CliResult<()> {
    let mut text = String::from("rank");
    for n in names {
        let _ = write!(text, ",{n}");
    }
    text.push_str(",mean_acc,std_acc");
    for f in 1..=k {
        let _ = write!(text, ",fold_{f}");
    }
    text.push_str(",diverged_folds\n");
    for (i, r) in ranked.iter().enumerate() {
        let _ = write!(text, "{}", i + 1);
        for v in &r.combination {
            let _ = write!(text, ",{v}");
        }
        let _ = write!(text, ",{:.6},{:.6}", r.mean, r.std);
        for s in &r.folds {
            let _ = write!(text, ",{s:.6}");
        }
        let _ = writeln!(text, ",{}", r.diverged);
    }
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_axes_and_product() {
        let g = Grid::parse("lr = [0.1, 0.01]\noptimizer = [\"adam\", \"rmsprop\", \"amsgrad\"]\nbatch_size = 8\n")
            .unwrap();
        let names: Vec<&str> = g.axes.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["batch_size", "lr", "optimizer"]);
        let combos = g.combinations();
        assert_eq!(combos.len(), 6);
        assert_eq!(
            combos[1],
            [AxisValue::Count(8), AxisValue::Number(0.1), AxisValue::Algorithm(Algorithm::RmsProp)]
        );
    }

    #[test]
    fn bad_grids_are_usage_errors() {
        for text in ["momentum = [0.9]", "lr = []", "lr = [\"fast\"]", "batch_size = [0]", "", "lr = ["] {
            assert!(matches!(Grid::parse(text), Err(CliError::Usage(_))), "{text:?}");
        }
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[1.0, 0.0, 1.0, 0.0]);
        assert_eq!((m, s), (0.5, 0.5));
    }
}
