//! Accuracy, confusion matrices, one-vs-rest ROC curves and AUC, plus the
//! CSV reports built from them.
//!
//! Predicted classes are the row argmax with ties going to the lowest index.

mod report;
mod roc;

use crate::error::{invalid, shape_err, Result};
use crate::tensor::{Element, Tensor};

pub use report::{
    read_auc_csv, read_metrics_csv, read_roc_csv, write_metrics_csv, write_reports, EpochRow, MetricsReport,
    METRICS_HEADER,
};
pub use roc::{auc, macro_auc, roc_curve, RocPoint};

fn check_rows<T: Element>(probs: &Tensor<T>, labels: &[usize]) -> Result<(usize, usize)> {
    let (n, k) = probs.dims2()?;
    if n != labels.len() {
        return Err(shape_err("metrics", format!("{n} prediction rows but {} labels", labels.len())));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= k) {
        return Err(invalid(format!("label {l} outside 0..{k}")));
    }
    Ok((n, k))
}

/// Row-wise argmax, lowest index on ties.
pub fn argmax_rows<T: Element>(probs: &Tensor<T>) -> Result<Vec<usize>> {
    let (_, k) = probs.dims2()?;
    Ok(probs
        .data()
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

pub fn accuracy<T: Element>(probs: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    let (n, _) = check_rows(probs, labels)?;
    let hits = argmax_rows(probs)?
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / n as f64)
}

/// `counts[i][j]`: samples of true class `i` predicted as `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<u64> {
        (0..self.classes())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }
}

pub fn confusion<T: Element>(probs: &Tensor<T>, labels: &[usize]) -> Result<ConfusionMatrix> {
    let (_, k) = check_rows(probs, labels)?;
    let mut c = ConfusionMatrix::zeros(k);
    for (p, &l) in argmax_rows(probs)?.into_iter().zip(labels) {
        c.add(l, p);
    }
    Ok(c)
}
