//! Confusion matrices, per-class IoU, mIoU and per-weather reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::cloud::Weather;
use crate::error::{Error, Result};
use crate::labels::{class_name, TrainId, CLASS_ABBREVIATIONS};

/// `C × C` counts, rows ground truth, columns prediction. Only points whose
/// ground truth is one of the `C` scored classes are counted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.num_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accumulate(&mut self, predictions: &[TrainId], labels: &[TrainId]) -> Result<()> {
        if predictions.len() != labels.len() {
            return Err(Error::Argument(format!(
                "{} predictions for {} labels",
                predictions.len(),
                labels.len()
            )));
        }
        let c = self.num_classes;
        if let Some(&p) = predictions.iter().find(|&&p| p as usize >= c) {
            return Err(Error::Argument(format!("prediction {p} is not a scored class")));
        }
        for (&p, &l) in predictions.iter().zip(labels) {
            if (l as usize) < c {
                self.counts[l as usize * c + p as usize] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::Argument("cannot merge confusion matrices of different sizes".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// `TP / (TP + FP + FN)`, undefined when the class never occurs in either
    /// ground truth or predictions.
    pub fn iou(&self, class: usize) -> Option<f64> {
        let c = self.num_classes;
        let tp = self.get(class, class);
        let fn_: u64 = (0..c).map(|p| self.get(class, p)).sum::<u64>() - tp;
        let fp: u64 = (0..c).map(|t| self.get(t, class)).sum::<u64>() - tp;
        let denom = tp + fp + fn_;
        (denom > 0).then(|| tp as f64 / denom as f64)
    }

    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        (0..self.num_classes).map(|c| self.iou(c)).collect()
    }

    /// Mean over classes with a defined IoU.
    pub fn miou(&self) -> Option<f64> {
        let defined: Vec<f64> = self.per_class_iou().into_iter().flatten().collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

/// Overall confusion plus a breakdown by weather tag.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub overall: ConfusionMatrix,
    pub per_weather: BTreeMap<Weather, ConfusionMatrix>,
}

/// Combines per-weather confusion matrices into one report.
pub fn report(by_weather: BTreeMap<Weather, ConfusionMatrix>) -> Result<EvalReport> {
    let mut it = by_weather.values();
    let first = it
        .next()
        .ok_or_else(|| Error::Argument("report needs at least one weather".into()))?;
    let mut overall = first.clone();
    for m in it {
        overall.merge(m)?;
    }
    Ok(EvalReport {
        overall,
        per_weather: by_weather,
    })
}

fn fmt_fraction(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"))
}

fn fmt_percent(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{:.1}", 100.0 * v))
}

fn class_header(c: usize) -> &'static str {
    CLASS_ABBREVIATIONS.get(c).copied().unwrap_or_else(|| class_name(c as TrainId))
}

impl EvalReport {
    pub fn miou(&self) -> Option<f64> {
        self.overall.miou()
    }

    pub fn weather_miou(&self, weather: Weather) -> Option<f64> {
        self.per_weather.get(&weather).and_then(ConfusionMatrix::miou)
    }

    /// `class,iou` section, then `weather,miou`, then the `overall` row.
    /// Undefined values are written as `-`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,iou\n");
        for (c, iou) in self.overall.per_class_iou().into_iter().enumerate() {
            writeln!(out, "{},{}", class_name(c as TrainId), fmt_fraction(iou)).unwrap();
        }
        out.push_str("weather,miou\n");
        for (w, m) in &self.per_weather {
            writeln!(out, "{w},{}", fmt_fraction(m.miou())).unwrap();
        }
        writeln!(out, "overall,{}", fmt_fraction(self.miou())).unwrap();
        out
    }

    /// Aligned text table, one row per named report, values in percent:
    /// per-class IoU columns, per-weather mIoU columns, then overall mIoU.
    pub fn render_table(rows: &[(&str, &EvalReport)]) -> String {
        let Some((_, first)) = rows.first() else {
            return String::new();
        };
        let c = first.overall.num_classes();
        let weathers: Vec<Weather> = {
            let mut all: Vec<Weather> = rows.iter().flat_map(|(_, r)| r.per_weather.keys().copied()).collect();
            all.sort();
            all.dedup();
            all
        };
        let mut header = vec!["Method".to_string()];
        header.extend((0..c).map(|k| class_header(k).to_string()));
        header.extend(weathers.iter().map(|w| w.abbreviation().to_string()));
        header.push("mIoU".into());

        let mut table = vec![header];
        for (name, r) in rows {
            let mut line = vec![name.to_string()];
            line.extend(r.overall.per_class_iou().into_iter().map(fmt_percent));
            line.extend(weathers.iter().map(|w| fmt_percent(r.weather_miou(*w))));
            line.push(fmt_percent(r.miou()));
            table.push(line);
        }
        let widths: Vec<usize> = (0..table[0].len())
            .map(|k| table.iter().map(|l| l.get(k).map_or(0, String::len)).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for line in &table {
            let cells: Vec<String> = line
                .iter()
                .enumerate()
                .map(|(k, s)| if k == 0 { format!("{s:<w$}", w = widths[k]) } else { format!("{s:>w$}", w = widths[k]) })
                .collect();
            out.push_str(cells.join(" ").trim_end());
            out.push('\n');
        }
        out
    }
}
