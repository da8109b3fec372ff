//! Confusion matrices, per-class sensitivity and PPV, accuracy, and the two
//! COVID-19 design-requirement gates.

mod render;

pub use render::{render_key_values, render_tables};

use crate::data::ClassLabel;
use crate::error::{Error, Result};
use crate::math;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

/// 3x3 confusion counts; rows are true classes, columns predicted classes,
/// in [`ClassLabel`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; 3]; 3]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn counts(&self) -> &[[u64; 3]; 3] {
        &self.counts
    }

    pub fn count(&self, truth: ClassLabel, predicted: ClassLabel) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.counts[truth].iter().sum()
    }

    pub fn col_sum(&self, predicted: usize) -> u64 {
        self.counts.iter().map(|row| row[predicted]).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Tallies predictions against ground truth.
pub fn confusion(predictions: &[ClassLabel], labels: &[ClassLabel]) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::InvalidData(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::InvalidData("cannot tally zero samples".into()));
    }
    let mut counts = [[0u64; 3]; 3];
    for (p, l) in predictions.iter().zip(labels) {
        counts[l.index()][p.index()] += 1;
    }
    Ok(ConfusionMatrix::from_counts(counts))
}

/// A ratio metric that may be undefined (empty row or column). Undefined is
/// an explicit marker, never a silent zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Defined(f64),
    Undefined,
}

impl Metric {
    pub fn value(self) -> Option<f64> {
        match self {
            Metric::Defined(v) => Some(v),
            Metric::Undefined => None,
        }
    }

    fn ratio(num: u64, den: u64) -> Metric {
        if den == 0 {
            Metric::Undefined
        } else {
            Metric::Defined(num as f64 / den as f64)
        }
    }
}

/// Outcome of one design-requirement gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GateResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Both gates must hold at 80%, inclusive.
pub const GATE_THRESHOLD: f64 = 0.80;

/// Accuracy plus per-class sensitivity and PPV, with the gate verdicts.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub sensitivity: [Metric; 3],
    pub ppv: [Metric; 3],
    pub gates: Vec<GateResult>,
    pub samples: u64,
}

/// Derives all metrics from a confusion matrix:
/// `sensitivity_i = cm[i][i] / row_i`, `ppv_i = cm[i][i] / col_i`,
/// `accuracy = trace / total`.
pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidData("confusion matrix has no samples".into()));
    }
    let mut sensitivity = [Metric::Undefined; 3];
    let mut ppv = [Metric::Undefined; 3];
    for i in 0..3 {
        sensitivity[i] = Metric::ratio(cm.counts[i][i], cm.row_sum(i));
        ppv[i] = Metric::ratio(cm.counts[i][i], cm.col_sum(i));
    }
    let mut report = MetricsReport {
        accuracy: cm.trace() as f64 / total as f64,
        sensitivity,
        ppv,
        gates: Vec::new(),
        samples: total,
    };
    report.gates = check_design_requirements(&report);
    Ok(report)
}

/// Evaluates the two COVID-19 gates: sensitivity >= 80% and PPV >= 80%,
/// inclusive. An undefined metric fails its gate with the reason recorded.
pub fn check_design_requirements(report: &MetricsReport) -> Vec<GateResult> {
    let covid = ClassLabel::Covid19.index();
    let gate = |name: &'static str, metric: Metric| -> GateResult {
        match metric {
            Metric::Defined(v) => GateResult {
                name,
                passed: v >= GATE_THRESHOLD,
                detail: format!("{:.1}% (threshold {:.1}%)", v * 100.0, GATE_THRESHOLD * 100.0),
            },
            Metric::Undefined => GateResult {
                name,
                passed: false,
                detail: "undefined (no supporting samples)".into(),
            },
        }
    };
    alloc::vec![
        gate("covid19_sensitivity", report.sensitivity[covid]),
        gate("covid19_ppv", report.ppv[covid]),
    ]
}

/// Converts a fraction to a percentage rounded to one decimal, half away
/// from zero — the table formatting rule.
pub fn percent_1dp(fraction: f64) -> f64 {
    let scaled = fraction * 1000.0;
    let rounded = if scaled >= 0.0 {
        math::floor(scaled + 0.5)
    } else {
        math::ceil(scaled - 0.5)
    };
    rounded / 10.0
}
