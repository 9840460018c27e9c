use std::ops::AddAssign;

use super::LabelMask;
use crate::error::{invalid, Error, Result};

/// Pixel counts indexed `[ground truth][prediction]` over labels `0..=K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    size: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    /// An empty matrix for `classes` foreground classes plus background.
    pub fn new(classes: usize) -> Self {
        let size = classes + 1;
        Self { size, counts: vec![0; size * size] }
    }

    pub fn from_counts(rows: &[&[u64]]) -> Result<Self> {
        let size = rows.len();
        if size == 0 || rows.iter().any(|r| r.len() != size) {
            return Err(invalid("confusion matrix must be square and nonempty"));
        }
        Ok(Self { size, counts: rows.iter().flat_map(|r| r.iter().copied()).collect() })
    }

    /// Number of foreground classes.
    pub fn classes(&self) -> usize {
        self.size - 1
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.size + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c * self.size..(c + 1) * self.size].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        (0..self.size).map(|r| self.get(r, c)).sum()
    }

    /// Adds one image's pixels.
    pub fn add_masks(&mut self, pred: &LabelMask, gt: &LabelMask) -> Result<()> {
        if pred.shape() != gt.shape() {
            return Err(invalid(format!(
                "prediction shape {:?} differs from ground truth {:?}",
                pred.shape(),
                gt.shape()
            )));
        }
        let k = self.classes();
        for (name, mask) in [("prediction", pred), ("ground truth", gt)] {
            let max = mask.max_label() as usize;
            if max > k {
                return Err(invalid(format!("{name} label {max} exceeds class count {k}")));
            }
        }
        for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
            self.counts[g as usize * self.size + p as usize] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.size != other.size {
            return Err(invalid("cannot merge confusion matrices of different sizes"));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }
}

impl AddAssign<&ConfusionMatrix> for ConfusionMatrix {
    fn add_assign(&mut self, rhs: &ConfusionMatrix) {
        self.merge(rhs).expect("matching confusion matrix sizes");
    }
}

/// Confusion matrix of a single prediction against its ground truth.
pub fn accumulate_confusion(pred: &LabelMask, gt: &LabelMask, classes: usize) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(classes);
    cm.add_masks(pred, gt)?;
    Ok(cm)
}

/// Mean IoU over every label (background included) that occurs in either
/// the ground truth or the prediction.
pub fn compute_miou(cm: &ConfusionMatrix) -> Result<f64> {
    let ious: Vec<f64> = (0..cm.size())
        .filter_map(|c| {
            let tp = cm.get(c, c);
            let union = cm.row_sum(c) + cm.col_sum(c) - tp;
            (union > 0).then(|| tp as f64 / union as f64)
        })
        .collect();
    if ious.is_empty() {
        return Err(Error::UndefinedMetric("mIoU of an empty confusion matrix".into()));
    }
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    /// Macro average over foreground classes that were predicted.
    pub precision: f64,
    /// Macro average over foreground classes present in the ground truth.
    pub recall: f64,
    /// F1 of the pooled foreground true/false positives and negatives.
    pub micro_f1: f64,
}

/// Foreground precision, recall and micro-F1. Background is excluded.
pub fn compute_prf(cm: &ConfusionMatrix) -> Result<Prf> {
    let (mut precisions, mut recalls) = (Vec::new(), Vec::new());
    let (mut tp_sum, mut fp_sum, mut fn_sum) = (0u64, 0u64, 0u64);
    for c in 1..cm.size() {
        let tp = cm.get(c, c);
        let predicted = cm.col_sum(c);
        let actual = cm.row_sum(c);
        if predicted > 0 {
            precisions.push(tp as f64 / predicted as f64);
        }
        if actual > 0 {
            recalls.push(tp as f64 / actual as f64);
        }
        tp_sum += tp;
        fp_sum += predicted - tp;
        fn_sum += actual - tp;
    }
    if precisions.is_empty() && recalls.is_empty() {
        return Err(Error::UndefinedMetric("no foreground class in ground truth or prediction".into()));
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    Ok(Prf {
        precision: mean(&precisions),
        recall: mean(&recalls),
        micro_f1: 2.0 * tp_sum as f64 / (2 * tp_sum + fp_sum + fn_sum) as f64,
    })
}
