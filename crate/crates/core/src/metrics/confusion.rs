use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::flowdata::ServiceLabel;
use crate::NUM_CLASSES;

/// Counts with rows = true class, columns = predicted class.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; NUM_CLASSES]; NUM_CLASSES]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn from_predictions(truth: &[u8], predicted: &[u8]) -> Self {
        assert_eq!(truth.len(), predicted.len());
        let mut cm = ConfusionMatrix::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.counts[t as usize][p as usize] += 1;
        }
        cm
    }

    pub fn add(&mut self, truth: u8, predicted: u8) {
        self.counts[truth as usize][predicted as usize] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(other.counts.iter()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn counts(&self) -> &[[u64; NUM_CLASSES]; NUM_CLASSES] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassMetrics {
    pub label: ServiceLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// False for a class absent from both truth and predictions; such classes
    /// are excluded from the macro average.
    pub active: bool,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn per_class_report(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    (0..NUM_CLASSES)
        .map(|c| {
            let tp = cm.counts[c][c];
            let support = cm.support(c);
            let predicted = cm.predicted(c);
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                label: ServiceLabel::ALL[c],
                precision,
                recall,
                f1,
                support,
                active: support > 0 || predicted > 0,
            }
        })
        .collect()
}

/// Unweighted mean F1 over classes seen in the truth or the predictions.
pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64> {
    if cm.total() == 0 {
        return Err(Error::Empty("confusion matrix"));
    }
    let active: Vec<f64> = per_class_report(cm)
        .into_iter()
        .filter(|m| m.active)
        .map(|m| m.f1)
        .collect();
    Ok(active.iter().sum::<f64>() / active.len() as f64)
}

/// CSV `class,precision,recall,f1,support`; inactive classes get empty metric cells.
pub fn write_class_report(path: &Path, report: &[ClassMetrics]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(w, "class,precision,recall,f1,support").map_err(io)?;
    for m in report {
        if m.active {
            writeln!(w, "{},{},{},{},{}", m.label, m.precision, m.recall, m.f1, m.support).map_err(io)?;
        } else {
            writeln!(w, "{},,,,{}", m.label, m.support).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}
