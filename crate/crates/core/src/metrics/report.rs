use std::fs;
use std::path::Path;

use super::{auc, confusion, macro_auc, roc_curve, ConfusionMatrix, RocPoint};
use crate::error::{invalid, Error, Result};
use crate::tensor::{Element, Tensor};

pub const METRICS_HEADER: [&str; 5] = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"];
const ROC_HEADER: [&str; 3] = ["fpr", "tpr", "threshold"];
const AUC_HEADER: [&str; 2] = ["label", "auc"];
const MACRO_LABEL: &str = "macro_average";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

impl EpochRow {
    fn fields(&self) -> [String; 5] {
        [
            self.epoch.to_string(),
            num(self.train_loss),
            num(self.train_acc),
            num(self.val_loss),
            num(self.val_acc),
        ]
    }
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub labels: Vec<String>,
    pub epochs: Vec<EpochRow>,
    pub confusion: ConfusionMatrix,
    /// One-vs-rest curve per class; `None` when the class has no positives or no negatives.
    pub roc: Vec<Option<Vec<RocPoint>>>,
}

impl MetricsReport {
    pub fn new(labels: Vec<String>, epochs: Vec<EpochRow>) -> Self {
        let k = labels.len();
        Self {
            labels,
            epochs,
            confusion: ConfusionMatrix::zeros(k),
            roc: vec![None; k],
        }
    }

    /// Confusion matrix and per-class ROC curves from softmax outputs.
    pub fn from_predictions<T: Element>(
        labels: Vec<String>,
        epochs: Vec<EpochRow>,
        probs: &Tensor<T>,
        truth: &[usize],
    ) -> Result<Self> {
        let (_, k) = probs.dims2()?;
        if k != labels.len() {
            return Err(invalid(format!("{k} probability columns for {} labels", labels.len())));
        }
        let confusion = confusion(probs, truth)?;
        let roc = (0..k)
            .map(|c| {
                let scores: Vec<f64> = probs.data().chunks(k).map(|r| r[c].as_f64()).collect();
                let positive: Vec<bool> = truth.iter().map(|&t| t == c).collect();
                roc_curve(&scores, &positive).ok()
            })
            .collect();
        Ok(Self {
            labels,
            epochs,
            confusion,
            roc,
        })
    }

    pub fn auc(&self) -> Vec<Option<f64>> {
        self.roc.iter().map(|r| r.as_deref().map(auc)).collect()
    }

    pub fn macro_auc(&self) -> Option<f64> {
        macro_auc(&self.auc())
    }
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?)
}

pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[EpochRow]) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Write `metrics.csv`, `confusion.csv`, `roc_<k>.csv` for every defined
/// curve and `auc.csv` into `out_dir`.
pub fn write_reports(report: &MetricsReport, out_dir: impl AsRef<Path>) -> Result<()> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;
    write_metrics_csv(dir.join("metrics.csv"), &report.epochs)?;

    let mut w = writer(&dir.join("confusion.csv"))?;
    w.write_record(std::iter::once("label").chain(report.labels.iter().map(String::as_str)))?;
    for (label, row) in report.labels.iter().zip(&report.confusion.counts) {
        w.write_record(std::iter::once(label.clone()).chain(row.iter().map(u64::to_string)))?;
    }
    w.flush()?;

    for (k, curve) in report.roc.iter().enumerate() {
        let Some(points) = curve else { continue };
        let mut w = writer(&dir.join(format!("roc_{k}.csv")))?;
        w.write_record(ROC_HEADER)?;
        for p in points {
            w.write_record([num(p.fpr), num(p.tpr), num(p.threshold)])?;
        }
        w.flush()?;
    }

    let mut w = writer(&dir.join("auc.csv"))?;
    w.write_record(AUC_HEADER)?;
    let fmt = |v: Option<f64>| v.map(num).unwrap_or_else(|| "nan".into());
    for (label, a) in report.labels.iter().zip(report.auc()) {
        w.write_record([label.clone(), fmt(a)])?;
    }
    w.write_record([MACRO_LABEL.to_string(), fmt(report.macro_auc())])?;
    w.flush()?;
    Ok(())
}

/// Data rows with their 1-based line numbers, after checking the header.
fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
    let name = path.display();
    let mut r = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let got = r.headers()?.clone();
    if got.iter().ne(header.iter().copied()) {
        return Err(Error::Format(format!(
            "{name} row 1: expected header '{}', found '{}'",
            header.join(","),
            got.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Format(format!("{name} row {line}: {e}")))?;
        if rec.len() != header.len() {
            return Err(Error::Format(format!(
                "{name} row {line}: expected {} fields, found {}",
                header.len(),
                rec.len()
            )));
        }
        rows.push((line, rec));
    }
    Ok(rows)
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, rec: &csv::StringRecord, i: usize) -> Result<T> {
    rec[i].trim().parse().map_err(|_| {
        Error::Format(format!("{} row {line}: cannot parse '{}'", path.display(), &rec[i]))
    })
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<EpochRow>> {
    let path = path.as_ref();
    read_rows(path, &METRICS_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            Ok(EpochRow {
                epoch: field(path, line, &r, 0)?,
                train_loss: field(path, line, &r, 1)?,
                train_acc: field(path, line, &r, 2)?,
                val_loss: field(path, line, &r, 3)?,
                val_acc: field(path, line, &r, 4)?,
            })
        })
        .collect()
}

pub fn read_roc_csv(path: impl AsRef<Path>) -> Result<Vec<RocPoint>> {
    let path = path.as_ref();
    read_rows(path, &ROC_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            Ok(RocPoint {
                fpr: field(path, line, &r, 0)?,
                tpr: field(path, line, &r, 1)?,
                threshold: field(path, line, &r, 2)?,
            })
        })
        .collect()
}

/// `(label, auc)` rows; undefined values read back as `None`.
pub fn read_auc_csv(path: impl AsRef<Path>) -> Result<Vec<(String, Option<f64>)>> {
    let path = path.as_ref();
    read_rows(path, &AUC_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            let v: f64 = field(path, line, &r, 1)?;
            Ok((r[0].to_string(), (!v.is_nan()).then_some(v)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> MetricsReport {
        let probs = Tensor::<f64>::from_f64(
            vec![4, 3],
            &[0.7, 0.2, 0.1, 0.2, 0.5, 0.3, 0.1, 0.3, 0.6, 0.4, 0.4, 0.2],
        )
        .unwrap();
        let epochs = vec![EpochRow {
            epoch: 1,
            train_loss: 1.0,
            train_acc: 0.5,
            val_loss: 0.9,
            val_acc: 0.75,
        }];
        MetricsReport::from_predictions(vec!["a".into(), "b".into(), "c".into()], epochs, &probs, &[0, 1, 2, 1])
            .unwrap()
    }

    #[test]
    fn roundtrip_files() {
        let dir = tempfile::tempdir().unwrap();
        let r = fixture();
        write_reports(&r, dir.path()).unwrap();
        assert_eq!(read_metrics_csv(dir.path().join("metrics.csv")).unwrap(), r.epochs);
        let roc = read_roc_csv(dir.path().join("roc_1.csv")).unwrap();
        assert_eq!(roc[0].threshold, f64::INFINITY);
        assert_eq!(roc.len(), r.roc[1].as_ref().unwrap().len());
        let aucs = read_auc_csv(dir.path().join("auc.csv")).unwrap();
        assert_eq!(aucs.len(), 4);
        assert_eq!(aucs[3].0, MACRO_LABEL);
        let conf = fs::read_to_string(dir.path().join("confusion.csv")).unwrap();
        assert_eq!(conf, "label,a,b,c\na,1,0,0\nb,1,1,0\nc,0,0,1\n");
    }

    #[test]
    fn empty_epochs_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        write_reports(&MetricsReport::new(vec!["a".into(), "b".into()], vec![]), dir.path()).unwrap();
        assert_eq!(
            fs::read_to_string(dir.path().join("metrics.csv")).unwrap(),
            "epoch,train_loss,train_acc,val_loss,val_acc\n"
        );
        let aucs = read_auc_csv(dir.path().join("auc.csv")).unwrap();
        assert!(aucs.iter().all(|(_, v)| v.is_none()));
    }

    #[test]
    fn malformed_rows_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("metrics.csv");
        fs::write(&p, "epoch,train_loss,train_acc,val_loss,val_acc\n1,0.5,0.5,0.5,0.5\n2,x,0.5,0.5,0.5\n").unwrap();
        assert!(read_metrics_csv(&p).unwrap_err().to_string().contains("row 3"));
        fs::write(&p, "epoch,train_loss,train_acc,val_loss,val_acc\n1,0.5\n").unwrap();
        assert!(read_metrics_csv(&p).unwrap_err().to_string().contains("row 2"));
        fs::write(&p, "epoch,loss\n").unwrap();
        assert!(read_metrics_csv(&p).unwrap_err().to_string().contains("row 1"));
    }
}
