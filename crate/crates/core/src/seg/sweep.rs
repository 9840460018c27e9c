//! Dataset-level evaluation: saliency per capture, Otsu assembly per image,
//! one confusion matrix per run.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;

use super::{assemble_segmentation, compute_miou, compute_prf, ConfusionMatrix, LabelMask};
use crate::cam::{compute_saliency, gradient_survival, Method, SaliencyRequest};
use crate::capture::CaptureFile;
use crate::error::{invalid, Result};

pub const CSV_HEADER: &str = "method,layers,delta,miou,precision,recall,micro_f1,sparsity";

/// One image: a capture per candidate class and the ground-truth mask.
///
/// A capture for classifier class `c` contributes mask label `c + 1`.
#[derive(Debug, Clone)]
pub struct EvalImage {
    pub image_id: String,
    pub captures: Vec<CaptureFile>,
    pub gt: LabelMask,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub delta: f64,
    pub miou: f64,
    pub precision: f64,
    pub recall: f64,
    pub micro_f1: f64,
    /// Mean fraction of gradient entries surviving truncation.
    pub sparsity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub method: Method,
    pub layers: Vec<String>,
    pub rows: Vec<MetricsRow>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        let layers = self.layers.join("+");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                self.method, layers, r.delta, r.miou, r.precision, r.recall, r.micro_f1, r.sparsity
            )
            .unwrap();
        }
        out
    }
}

/// Segments one image; also returns the mean gradient survival over its
/// captures.
pub fn segment_image(image: &EvalImage, method: Method, layers: &[String], delta: f64) -> Result<(LabelMask, f64)> {
    if image.captures.is_empty() {
        return Err(invalid(format!("image {} has no captures", image.image_id)));
    }
    let mut maps = BTreeMap::new();
    let mut survival = 0.0;
    for cf in &image.captures {
        let label = u8::try_from(cf.class_index + 1)
            .map_err(|_| invalid(format!("class index {} too large for a mask", cf.class_index)))?;
        let req = SaliencyRequest { method, layer_names: layers.to_vec(), delta, output_size: image.gt.shape() };
        maps.insert(label, compute_saliency(cf, &req)?);
        survival += gradient_survival(cf, &req)?;
    }
    let labels: BTreeSet<u8> = maps.keys().copied().collect();
    let mask = assemble_segmentation(&maps, &labels)?;
    Ok((mask, survival / image.captures.len() as f64))
}

/// Runs the full pipeline at one `delta` over a dataset.
pub fn evaluate(
    dataset: &[EvalImage],
    method: Method,
    layers: &[String],
    delta: f64,
    classes: usize,
) -> Result<MetricsRow> {
    if dataset.is_empty() {
        return Err(invalid("empty dataset"));
    }
    let per_image: Vec<(ConfusionMatrix, f64)> = dataset
        .par_iter()
        .map(|img| {
            let (pred, survival) = segment_image(img, method, layers, delta)?;
            let mut cm = ConfusionMatrix::new(classes);
            cm.add_masks(&pred, &img.gt)?;
            Ok((cm, survival))
        })
        .collect::<Result<_>>()?;

    let mut cm = ConfusionMatrix::new(classes);
    let mut survival = 0.0;
    for (c, s) in &per_image {
        cm += c;
        survival += s;
    }
    let prf = compute_prf(&cm)?;
    Ok(MetricsRow {
        delta,
        miou: compute_miou(&cm)?,
        precision: prf.precision,
        recall: prf.recall,
        micro_f1: prf.micro_f1,
        sparsity: survival / dataset.len() as f64,
    })
}

/// Evaluates the dataset once per `delta`.
pub fn delta_sweep(
    dataset: &[EvalImage],
    method: Method,
    layers: &[String],
    deltas: &[f64],
    classes: usize,
) -> Result<SweepResult> {
    if deltas.is_empty() {
        return Err(invalid("no deltas to sweep"));
    }
    if let Some(d) = deltas.iter().find(|d| !(0.0..100.0).contains(*d)) {
        return Err(invalid(format!("sweep delta {d} outside [0, 100)")));
    }
    if deltas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("sweep deltas must be strictly increasing"));
    }
    let rows = deltas.iter().map(|&d| evaluate(dataset, method, layers, d, classes)).collect::<Result<_>>()?;
    Ok(SweepResult { method, layers: layers.to_vec(), rows })
}

/// Parses `start:stop:step` (stop inclusive) or a comma-separated list.
pub fn parse_delta_range(spec: &str) -> Result<Vec<f64>> {
    let num = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| invalid(format!("bad number {s:?} in delta list")))
    };
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if step <= 0.0 || stop < start {
                return Err(invalid(format!("bad delta range {spec:?}")));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| start + i as f64 * step).collect())
        }
        [_] => spec.split(',').map(num).collect(),
        _ => Err(invalid(format!("bad delta range {spec:?}"))),
    }
}
