//! `plantnet plot`: a self-contained four-panel SVG of a training run.

use std::fmt::Write as _;
use std::fs;

use plantnet_core::metrics::{read_auc_csv, read_metrics_csv, read_roc_csv, EpochRow, RocPoint};

use crate::error::{CliError, CliResult};
use crate::PlotArgs;

const PANEL_W: f64 = 480.0;
const PANEL_H: f64 = 360.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 52.0;
const TRAIN_COLOR: &str = "#1f77b4";
const VAL_COLOR: &str = "#ff7f0e";
const PALETTE: [&str; 15] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22",
    "#17becf", "#393b79", "#637939", "#8c6d31", "#843c39", "#7b4173",
];

/// Everything drawn by [`render`].
#[derive(Clone, Debug, Default)]
pub struct ChartData {
    pub epochs: Vec<EpochRow>,
    /// `(label, auc)` per class, in class order.
    pub auc: Vec<(String, Option<f64>)>,
    pub macro_auc: Option<f64>,
    /// `(class index, curve)` for every class with a defined curve.
    pub roc: Vec<(usize, Vec<RocPoint>)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn color(class: usize) -> &'static str {
    PALETTE[class % PALETTE.len()]
}

/// Linear map from data coordinates into one panel's plot area.
struct Frame {
    x0: f64,
    y0: f64,
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Frame {
    fn new(col: usize, row: usize, (xmin, xmax): (f64, f64), (ymin, ymax): (f64, f64)) -> Self {
        Self {
            x0: col as f64 * PANEL_W,
            y0: row as f64 * PANEL_H,
            xmin,
            xmax,
            ymin,
            ymax,
        }
    }

    fn px(&self, x: f64) -> f64 {
        self.x0 + LEFT + (x - self.xmin) / (self.xmax - self.xmin) * (PANEL_W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + PANEL_H - BOTTOM - (y - self.ymin) / (self.ymax - self.ymin) * (PANEL_H - TOP - BOTTOM)
    }

    fn axes(&self, svg: &mut String, title: &str, xlabel: &str, ylabel: &str, xticks: &[f64], yticks: &[f64]) {
        let (l, r) = (self.px(self.xmin), self.px(self.xmax));
        let (b, t) = (self.py(self.ymin), self.py(self.ymax));
        let _ = writeln!(
            svg,
            r##"<rect x="{l:.2}" y="{t:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#000"/>"##,
            r - l,
            b - t
        );
        for &x in xticks {
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                self.px(x),
                b + 16.0,
                tick_label(x)
            );
        }
        for &y in yticks {
            let _ = writeln!(
                svg,
                r##"<line x1="{l:.2}" y1="{0:.2}" x2="{r:.2}" y2="{0:.2}" stroke="#ddd"/>"##,
                self.py(y)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                l - 6.0,
                self.py(y) + 4.0,
                tick_label(y)
            );
        }
        let cx = (l + r) / 2.0;
        let cy = (t + b) / 2.0;
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-weight="bold">{}</text>"#,
            self.y0 + 24.0,
            escape(title)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            b + 36.0,
            escape(xlabel)
        );
        let lx = self.x0 + 16.0;
        let _ = writeln!(
            svg,
            r#"<text x="{lx:.2}" y="{cy:.2}" text-anchor="middle" transform="rotate(-90 {lx:.2} {cy:.2})">{}</text>"#,
            escape(ylabel)
        );
    }

    fn polyline(&self, svg: &mut String, points: impl Iterator<Item = (f64, f64)>, stroke: &str) {
        let coords: Vec<String> = points.map(|(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="1.5"/>"#,
            coords.join(" ")
        );
    }

    fn legend(&self, svg: &mut String, entries: &[(&str, &str)]) {
        for (i, (name, stroke)) in entries.iter().enumerate() {
            let x = self.px(self.xmax) - 90.0;
            let y = self.py(self.ymax) + 16.0 + 16.0 * i as f64;
            let _ = writeln!(
                svg,
                r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{stroke}" stroke-width="2"/>"#,
                x + 20.0
            );
            let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 26.0, y + 4.0, escape(name));
        }
    }
}

fn tick_label(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e9 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

/// Integer epoch ticks, at most about six of them.
fn epoch_ticks(last: usize) -> Vec<f64> {
    let step = last.div_ceil(5).max(1);
    let mut t: Vec<f64> = (1..=last).step_by(step).map(|e| e as f64).collect();
    if t.last() != Some(&(last as f64)) {
        t.push(last as f64);
    }
    t
}

fn series_panel(
    svg: &mut String,
    col: usize,
    title: &str,
    ylabel: &str,
    epochs: &[EpochRow],
    yrange: (f64, f64),
    pick: impl Fn(&EpochRow) -> (f64, f64),
) {
    let last = epochs.iter().map(|r| r.epoch).max().unwrap_or(1).max(2);
    let f = Frame::new(col, 0, (1.0, last as f64), yrange);
    f.axes(svg, title, "epoch", ylabel, &epoch_ticks(last), &ticks(yrange.0, yrange.1, 5));
    if epochs.is_empty() {
        return;
    }
    f.polyline(svg, epochs.iter().map(|r| (r.epoch as f64, pick(r).0)), TRAIN_COLOR);
    f.polyline(svg, epochs.iter().map(|r| (r.epoch as f64, pick(r).1)), VAL_COLOR);
    f.legend(svg, &[("train", TRAIN_COLOR), ("validation", VAL_COLOR)]);
}

/// The four panels: accuracy and loss per epoch on top, ROC curves and AUC
/// bars below. Identical input yields identical bytes.
pub fn render(data: &ChartData) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
        w = 2.0 * PANEL_W,
        h = 2.0 * PANEL_H
    );
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="#fff"/>"##);

    series_panel(&mut svg, 0, "Accuracy", "accuracy", &data.epochs, (0.0, 1.0), |r| (r.train_acc, r.val_acc));
    let top_loss = data
        .epochs
        .iter()
        .flat_map(|r| [r.train_loss, r.val_loss])
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    let top_loss = if top_loss > 0.0 { top_loss * 1.05 } else { 1.0 };
    series_panel(&mut svg, 1, "Loss", "cross-entropy", &data.epochs, (0.0, top_loss), |r| (r.train_loss, r.val_loss));

    let roc = Frame::new(0, 1, (0.0, 1.0), (0.0, 1.0));
    let unit = ticks(0.0, 1.0, 5);
    roc.axes(&mut svg, "ROC (one-vs-rest)", "false positive rate", "true positive rate", &unit, &unit);
    let _ = writeln!(
        svg,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#999" stroke-dasharray="4 4"/>"##,
        roc.px(0.0),
        roc.py(0.0),
        roc.px(1.0),
        roc.py(1.0)
    );
    for (class, points) in &data.roc {
        roc.polyline(&mut svg, points.iter().map(|p| (p.fpr, p.tpr)), color(*class));
    }

    auc_panel(&mut svg, data);
    svg.push_str("</svg>\n");
    svg
}

fn auc_panel(svg: &mut String, data: &ChartData) {
    let f = Frame::new(1, 1, (0.0, 1.0), (0.0, 1.0));
    let title = match data.macro_auc {
        Some(m) => format!("AUC per class (macro {m:.4})"),
        None => "AUC per class".to_string(),
    };
    f.axes(svg, &title, "AUC", "", &ticks(0.0, 1.0, 5), &[]);
    let n = data.auc.len().max(1) as f64;
    let (top, bottom) = (f.py(1.0), f.py(0.0));
    let slot = (bottom - top) / n;
    let bar = (slot * 0.7).min(18.0);
    for (i, (label, auc)) in data.auc.iter().enumerate() {
        let y = top + slot * (i as f64 + 0.5);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="start" font-size="{:.1}">{}</text>"#,
            f.px(0.0) + 4.0,
            y + bar / 2.0 - 2.0,
            (bar * 0.75).clamp(6.0, 11.0),
            escape(label)
        );
        match auc {
            Some(a) => {
                let _ = writeln!(
                    svg,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{bar:.2}" fill="{}" fill-opacity="0.45"/>"#,
                    f.px(0.0),
                    y - bar / 2.0,
                    f.px(*a) - f.px(0.0),
                    color(i)
                );
                let _ = writeln!(
                    svg,
                    r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="10">{a:.4}</text>"#,
                    f.px(1.0) - 4.0,
                    y + 4.0
                );
            }
            None => {
                let _ = writeln!(
                    svg,
                    r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="10">undefined</text>"#,
                    f.px(1.0) - 4.0,
                    y + 4.0
                );
            }
        }
    }
}

/// Read `metrics.csv`, `auc.csv` and every `roc_<k>.csv` that exists.
pub fn load(args: &PlotArgs) -> CliResult<ChartData> {
    let at = |path: &std::path::Path, e: plantnet_core::Error| CliError::Data(format!("{}: {e}", path.display()));
    let epochs = read_metrics_csv(&args.metrics).map_err(|e| at(&args.metrics, e))?;
    let auc_path = args.roc_dir.join("auc.csv");
    let mut auc = read_auc_csv(&auc_path).map_err(|e| at(&auc_path, e))?;
    let macro_auc = match auc.last() {
        Some((label, value)) if label == "macro_average" => {
            let m = *value;
            auc.pop();
            m
        }
        _ => None,
    };
    let mut roc = Vec::new();
    for k in 0..auc.len() {
        let path = args.roc_dir.join(format!("roc_{k}.csv"));
        if path.is_file() {
            roc.push((k, read_roc_csv(&path).map_err(|e| at(&path, e))?));
        }
    }
    Ok(ChartData {
        epochs,
        auc,
        macro_auc,
        roc,
    })
}

pub fn run(args: &PlotArgs) -> CliResult<()> {
    let data = load(args)?;
    fs::write(&args.out, render(&data))?;
    println!("wrote {}", args.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_markup() {
        assert_eq!(escape("a<b & \"c\">"), "a&lt;b &amp; &quot;c&quot;&gt;");
    }

    #[test]
    fn epoch_ticks_end_on_last_epoch() {
        assert_eq!(epoch_ticks(2), [1.0, 2.0]);
        assert_eq!(epoch_ticks(12), [1.0, 4.0, 7.0, 10.0, 12.0]);
    }

    #[test]
    fn one_point_per_epoch_in_each_series() {
        let row = |epoch| EpochRow {
            epoch,
            train_loss: 1.0,
            train_acc: 0.5,
            val_loss: 0.9,
            val_acc: 0.6,
        };
        let svg = render(&ChartData {
            epochs: vec![row(1), row(2)],
            ..ChartData::default()
        });
        let series: Vec<&str> = svg.lines().filter(|l| l.starts_with("<polyline")).collect();
        assert_eq!(series.len(), 4);
        for s in series {
            let points = s.split('"').nth(1).unwrap();
            assert_eq!(points.split(' ').count(), 2);
        }
        assert!(svg.ends_with("</svg>\n"));
    }
}
