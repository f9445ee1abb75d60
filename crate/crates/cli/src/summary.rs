//! Best / worst / median statistics across trials.

use std::fmt::Write as _;

use tenproj_nn::metrics::{format_g6, MetricsRow};

pub const SUMMARY_HEADER: &str = "epoch,metric,best,worst,median";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    ValAcc,
    ValLoss,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::ValAcc, Metric::ValLoss];

    pub fn name(self) -> &'static str {
        match self {
            Metric::ValAcc => "val_acc",
            Metric::ValLoss => "val_loss",
        }
    }

    fn value(self, row: &MetricsRow) -> f64 {
        match self {
            Metric::ValAcc => row.val_acc,
            Metric::ValLoss => row.val_loss,
        }
    }

    fn higher_is_better(self) -> bool {
        matches!(self, Metric::ValAcc)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub epoch: usize,
    pub metric: Metric,
    pub best: f64,
    pub worst: f64,
    pub median: f64,
}

/// Median of the values; the mean of the two central ones for an even count.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of no values");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Epochs that get a summary row: the requested ones that were run, plus
/// the final epoch, ascending.
pub fn summary_epochs(requested: &[usize], epochs: usize) -> Vec<usize> {
    let mut out: Vec<usize> = requested.iter().copied().filter(|&e| e >= 1 && e <= epochs).collect();
    out.push(epochs);
    out.sort_unstable();
    out.dedup();
    out
}

/// Statistics over the rounded values exactly as they appear in the
/// metrics CSVs, so that recomputing from those files reproduces them.
/// Every trial must contain each requested epoch.
pub fn summarize(trials: &[Vec<MetricsRow>], epochs: &[usize]) -> Vec<SummaryRow> {
    let rounded = |x: f64| format_g6(x).parse::<f64>().expect("format_g6 output parses");
    let mut out = Vec::new();
    for &epoch in epochs {
        for metric in Metric::ALL {
            let values: Vec<f64> = trials
                .iter()
                .map(|rows| {
                    let row = rows
                        .iter()
                        .find(|r| r.epoch == epoch)
                        .unwrap_or_else(|| panic!("trial lacks epoch {epoch}"));
                    rounded(metric.value(row))
                })
                .collect();
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let (best, worst) = if metric.higher_is_better() { (max, min) } else { (min, max) };
            out.push(SummaryRow {
                epoch,
                metric,
                best,
                worst,
                median: median(&values),
            });
        }
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.epoch,
            r.metric.name(),
            format_g6(r.best),
            format_g6(r.worst),
            format_g6(r.median)
        );
    }
    s
}
