//! `plantnet train` and the epoch loop shared with grid search.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;

use plantnet_core::checkpoint;
use plantnet_core::data::{batches, scan, sequential_batches, split, write_split_csv, SampleStore};
use plantnet_core::metrics::{accuracy, EpochRow, METRICS_HEADER};
use plantnet_core::network::{build_plantnet, cross_entropy, Mode, Network, PlantNetConfig};
use plantnet_core::optim::{OptConfig, Optimizer};
use plantnet_core::{Element, Precision, Tensor};

use crate::common::{label_map, report_scan, sample_store, write_run_metadata};
use crate::error::{CliError, CliResult};
use crate::{ModelArgs, OptimizerArgs, TrainArgs};

/// Batch size used for every validation and evaluation pass, so `evaluate`
/// reproduces the accuracy logged during training exactly.
pub const EVAL_BATCH: usize = 64;

/// Abort when the epoch loss exceeds this multiple of the first epoch's loss...
const BLOWUP_FACTOR: f64 = 10.0;
/// ...for this many consecutive epochs.
const BLOWUP_EPOCHS: usize = 3;

impl OptimizerArgs {
    pub fn config(&self) -> CliResult<OptConfig> {
        let mut c = OptConfig::new(self.optimizer);
        let overrides = [
            (&mut c.lr, self.lr),
            (&mut c.beta, self.beta),
            (&mut c.beta1, self.beta1),
            (&mut c.beta2, self.beta2),
            (&mut c.eps, self.eps),
        ];
        for (slot, value) in overrides {
            if let Some(v) = value {
                *slot = v;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

impl ModelArgs {
    pub fn network(&self, classes: usize) -> PlantNetConfig {
        PlantNetConfig {
            input_hw: self.input_size,
            channels: 3,
            classes,
            width_scale: self.width_scale,
            dropout_conv: self.dropout_conv,
            dropout_dense: self.dropout_dense,
            ..PlantNetConfig::default()
        }
    }
}

/// Which samples to fit on and validate against.
pub struct FitPlan<'a> {
    pub store: &'a SampleStore,
    pub train: &'a [usize],
    pub val: &'a [usize],
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

/// Class probabilities for `members` (eval mode), with mean loss and accuracy.
pub struct Evaluation<T: Element> {
    pub probs: Tensor<T>,
    pub labels: Vec<usize>,
    pub loss: f64,
    pub accuracy: f64,
}

pub fn evaluate_members<T: Element>(
    net: &Network<T>,
    store: &SampleStore,
    members: &[usize],
) -> CliResult<Evaluation<T>> {
    if members.is_empty() {
        return Err(CliError::Data("nothing to evaluate".into()));
    }
    let mut probs = Vec::with_capacity(members.len() * net.classes());
    let mut labels = Vec::with_capacity(members.len());
    let mut loss_sum = 0.0;
    for batch in sequential_batches::<T>(store, members, EVAL_BATCH)? {
        let batch = batch?;
        let p = net.predict(&batch.x)?;
        loss_sum += cross_entropy(&p, &batch.y)?.loss * batch.labels.len() as f64;
        probs.extend_from_slice(p.data());
        labels.extend(batch.labels);
    }
    let probs = Tensor::new(vec![members.len(), net.classes()], probs)?;
    let accuracy = accuracy(&probs, &labels)?;
    Ok(Evaluation {
        probs,
        labels,
        loss: loss_sum / members.len() as f64,
        accuracy,
    })
}

fn all_finite<T: Element>(net: &Network<T>) -> bool {
    net.params().iter().all(|p| p.value.is_finite())
}

/// Train for `plan.epochs` epochs, calling `on_epoch` after each one.
///
/// A trailing batch of one sample is skipped, since batch statistics are
/// undefined for it. Divergence (non-finite loss or parameters, or a loss
/// blow-up) stops training with [`CliError::Divergence`].
pub fn fit<T: Element>(
    net: &mut Network<T>,
    opt: &mut Optimizer<T>,
    plan: &FitPlan<'_>,
    mut on_epoch: impl FnMut(&EpochRow) -> CliResult<()>,
) -> CliResult<Vec<EpochRow>> {
    if plan.train.len() < 2 {
        return Err(CliError::Data("training needs at least two samples".into()));
    }
    let mut rows = Vec::with_capacity(plan.epochs);
    let mut first_loss = None;
    let mut streak = 0;
    for epoch in 1..=plan.epochs {
        let (mut loss_sum, mut hits, mut seen) = (0.0, 0.0, 0usize);
        let epoch_batches = batches::<T>(plan.store, plan.train, plan.batch_size, epoch as u64 - 1, plan.seed)?;
        for (b, batch) in epoch_batches.enumerate() {
            let batch = batch?;
            let n = batch.labels.len();
            if n < 2 {
                continue;
            }
            let where_ = || format!("epoch {epoch}, batch {}", b + 1);
            let probs = net.forward(&batch.x, Mode::Train)?;
            let loss = cross_entropy(&probs, &batch.y)?;
            if !loss.loss.is_finite() {
                return Err(CliError::Divergence(format!("training loss is {} at {}", loss.loss, where_())));
            }
            net.backward(&loss)?;
            opt.step(net).map_err(|e| CliError::Divergence(format!("{e} at {}", where_())))?;
            if !all_finite(net) {
                return Err(CliError::Divergence(format!("parameters became non-finite at {}", where_())));
            }
            loss_sum += loss.loss * n as f64;
            hits += accuracy(&probs, &batch.labels)? * n as f64;
            seen += n;
        }
        let val = evaluate_members(net, plan.store, plan.val)?;
        let row = EpochRow {
            epoch,
            train_loss: loss_sum / seen as f64,
            train_acc: hits / seen as f64,
            val_loss: val.loss,
            val_acc: val.accuracy,
        };
        on_epoch(&row)?;
        rows.push(row);
        let first = *first_loss.get_or_insert(row.train_loss);
        streak = if row.train_loss > BLOWUP_FACTOR * first { streak + 1 } else { 0 };
        if streak >= BLOWUP_EPOCHS {
            return Err(CliError::Divergence(format!(
                "training loss stayed above {BLOWUP_FACTOR}× the first epoch's {first:.6} for \
                 {BLOWUP_EPOCHS} epochs, ending at epoch {epoch} ({:.6})",
                row.train_loss
            )));
        }
    }
    Ok(rows)
}

fn fmt_row(row: &EpochRow) -> String {
    format!(
        "{},{:.6},{:.6},{:.6},{:.6}\n",
        row.epoch, row.train_loss, row.train_acc, row.val_loss, row.val_acc
    )
}

/// Summary of a finished `train` run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub epochs: Vec<EpochRow>,
    pub train_size: usize,
    pub val_size: usize,
}

pub fn run(args: &TrainArgs) -> CliResult<TrainOutcome> {
    match args.model.precision {
        Precision::Single => run_typed::<f32>(args),
        Precision::Double => run_typed::<f64>(args),
    }
}

fn resolved_config(args: &TrainArgs, opt: &OptConfig, labels: &str) -> Vec<(String, String)> {
    let entries: [(&str, String); 21] = [
        ("command", "train".into()),
        ("data_dir", args.data_dir.display().to_string()),
        ("out_dir", args.out_dir.display().to_string()),
        ("optimizer", opt.algorithm.as_str().into()),
        ("lr", opt.lr.to_string()),
        ("beta", opt.beta.to_string()),
        ("beta1", opt.beta1.to_string()),
        ("beta2", opt.beta2.to_string()),
        ("eps", opt.eps.to_string()),
        ("epochs", args.epochs.to_string()),
        ("batch_size", args.batch_size.to_string()),
        ("val_split", args.val_split.to_string()),
        ("split_method", "stratified".into()),
        ("seed", args.seed.to_string()),
        ("input_size", args.model.input_size.to_string()),
        ("width_scale", args.model.width_scale.to_string()),
        ("dropout_conv", args.model.dropout_conv.to_string()),
        ("dropout_dense", args.model.dropout_dense.to_string()),
        ("precision", args.model.precision.to_string()),
        ("labels", labels.into()),
        ("stream", args.stream.to_string()),
    ];
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn run_typed<T: Element>(args: &TrainArgs) -> CliResult<TrainOutcome> {
    if args.batch_size == 0 {
        return Err(CliError::Usage("--batch-size must be at least 1".into()));
    }
    let opt_cfg = args.optim.config()?;
    let labels = label_map(args.labels.as_deref())?;
    let ds = scan(&args.data_dir, &labels)?;
    report_scan(&ds);
    let parts = split(&ds, args.val_split, args.seed)?;
    let net_cfg = args.model.network(labels.len());
    let mut net = build_plantnet::<T>(&net_cfg, args.seed)?;
    let mut opt = Optimizer::new(opt_cfg)?;
    let store = sample_store(&ds, args.model.input_size, args.stream)?;

    fs::create_dir_all(&args.out_dir)?;
    write_split_csv(args.out_dir.join("split.csv"), &ds, &parts)?;
    let mut metrics = File::create(args.out_dir.join("metrics.csv"))?;
    metrics.write_all(format!("{}\n", METRICS_HEADER.join(",")).as_bytes())?;
    metrics.flush()?;

    let config = resolved_config(args, &opt_cfg, &labels.encode());
    let plan = FitPlan {
        store: &store,
        train: &parts.train,
        val: &parts.val,
        epochs: args.epochs,
        batch_size: args.batch_size,
        seed: args.seed,
    };
    let fitted = fit(&mut net, &mut opt, &plan, |row| {
        metrics.write_all(fmt_row(row).as_bytes())?;
        metrics.flush()?;
        log::info!("epoch {} val_acc {:.4}", row.epoch, row.val_acc);
        Ok(())
    });
    let epochs = match fitted {
        Ok(rows) => rows,
        Err(e) => {
            let mut entries = config;
            entries.push(("status".into(), format!("failed: {e}")));
            write_run_metadata(&args.out_dir, &entries, &["metrics.csv", "split.csv"])?;
            return Err(e);
        }
    };

    let mut meta = BTreeMap::new();
    for key in ["optimizer", "epochs", "batch_size", "val_split", "seed", "input_size", "width_scale", "labels"] {
        let value = config.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone()).unwrap_or_default();
        meta.insert(key.to_string(), value);
    }
    meta.insert("epochs_completed".into(), epochs.len().to_string());
    checkpoint::save(args.out_dir.join("model.bin"), &net, Some(&opt), &meta)?;

    let mut entries = config;
    entries.push(("train_samples".into(), parts.train.len().to_string()));
    entries.push(("val_samples".into(), parts.val.len().to_string()));
    entries.push(("status".into(), "ok".into()));
    write_run_metadata(&args.out_dir, &entries, &["model.bin", "metrics.csv", "split.csv"])?;
    if let Some(last) = epochs.last() {
        println!("epoch {} val_acc {:.6} val_loss {:.6}", last.epoch, last.val_acc, last.val_loss);
    } else {
        println!("no epochs run; saved initial weights");
    }
    Ok(TrainOutcome {
        epochs,
        train_size: parts.train.len(),
        val_size: parts.val.len(),
    })
}
