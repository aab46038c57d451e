//! `plantnet evaluate`: confusion matrix, ROC curves and AUC for a checkpoint.

use std::collections::BTreeMap;
use std::fs;

use plantnet_core::checkpoint::{decode, peek_meta, peek_precision};
use plantnet_core::data::{scan, split, LabelMap};
use plantnet_core::metrics::{read_metrics_csv, write_reports, MetricsReport};
use plantnet_core::{Element, Precision};

use crate::common::{report_scan, sample_store};
use crate::error::{CliError, CliResult};
use crate::train::evaluate_members;
use crate::{EvaluateArgs, SplitChoice};

/// Headline numbers of an evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub samples: usize,
    pub accuracy: f64,
    pub loss: f64,
    pub macro_auc: Option<f64>,
}

fn meta_value<'a>(meta: &'a BTreeMap<String, String>, key: &str) -> CliResult<&'a str> {
    meta.get(key)
        .map(String::as_str)
        .ok_or_else(|| CliError::Data(format!("checkpoint metadata lacks '{key}'")))
}

fn meta_parse<T: std::str::FromStr>(meta: &BTreeMap<String, String>, key: &str) -> CliResult<T> {
    let raw = meta_value(meta, key)?;
    raw.parse()
        .map_err(|_| CliError::Data(format!("checkpoint metadata '{key}' has bad value '{raw}'")))
}

pub fn run(args: &EvaluateArgs) -> CliResult<EvalSummary> {
    let bytes = fs::read(&args.model)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.model.display())))?;
    match peek_precision(&bytes)? {
        Precision::Single => run_typed::<f32>(args, &bytes),
        Precision::Double => run_typed::<f64>(args, &bytes),
    }
}

fn run_typed<T: Element>(args: &EvaluateArgs, bytes: &[u8]) -> CliResult<EvalSummary> {
    let meta = peek_meta(bytes)?;
    let labels = LabelMap::decode(meta_value(&meta, "labels")?)?;
    let net = decode::<T>(bytes)?.network;
    if net.classes() != labels.len() {
        return Err(CliError::Data(format!(
            "model has {} outputs but its metadata lists {} labels",
            net.classes(),
            labels.len()
        )));
    }
    let hw = net.input_shape()[0];
    let ds = scan(&args.data_dir, &labels)?;
    report_scan(&ds);
    let members: Vec<usize> = match args.split {
        SplitChoice::All => (0..ds.len()).collect(),
        SplitChoice::Val => {
            let fraction: f64 = meta_parse(&meta, "val_split")?;
            let seed: u64 = meta_parse(&meta, "seed")?;
            split(&ds, fraction, seed)?.val
        }
    };
    let store = sample_store(&ds, hw, args.stream)?;
    let eval = evaluate_members(&net, &store, &members)?;

    let history = args.model.with_file_name("metrics.csv");
    let epochs = if history.is_file() { read_metrics_csv(&history)? } else { Vec::new() };
    let report = MetricsReport::from_predictions(labels.labels().to_vec(), epochs, &eval.probs, &eval.labels)?;
    fs::create_dir_all(&args.out_dir)?;
    write_reports(&report, &args.out_dir)?;

    let summary = EvalSummary {
        samples: members.len(),
        accuracy: eval.accuracy,
        loss: eval.loss,
        macro_auc: report.macro_auc(),
    };
    let auc = summary.macro_auc.map_or_else(|| "nan".to_string(), |a| format!("{a:.6}"));
    println!(
        "{} samples: accuracy {:.6}, loss {:.6}, macro AUC {auc}",
        summary.samples, summary.accuracy, summary.loss
    );
    Ok(summary)
}
