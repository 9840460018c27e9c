use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use super::LabelMask;
use crate::error::{invalid, Result};
use crate::tensor::Map2;

pub const OTSU_BINS: usize = 256;

/// Histogram bin of a value in `[0, 1]`; 1.0 falls into the top bin.
#[inline]
pub fn quantize(v: f32) -> usize {
    ((v * OTSU_BINS as f32) as usize).min(OTSU_BINS - 1)
}

fn check_unit(m: &Map2) -> Result<()> {
    if m.is_empty() {
        return Err(invalid("empty map"));
    }
    if let Some(v) = m.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(invalid(format!("map value {v} outside [0, 1]")));
    }
    Ok(())
}

/// Between-class variance of a split, as the exact fraction
/// `(n1*s0 - n0*s1)^2 / (n0*n1)` (the variance scaled by `N^2`).
#[derive(Clone, Copy)]
struct SplitScore {
    num: u128,
    den: u128,
}

impl SplitScore {
    fn new(n0: u64, s0: u64, n1: u64, s1: u64) -> Self {
        let diff = n1 as i128 * s0 as i128 - n0 as i128 * s1 as i128;
        let d = diff.unsigned_abs();
        Self { num: d * d, den: n0 as u128 * n1 as u128 }
    }

    fn cmp(&self, other: &Self) -> Ordering {
        match (self.num.checked_mul(other.den), other.num.checked_mul(self.den)) {
            (Some(a), Some(b)) => a.cmp(&b),
            _ => {
                let a = self.num as f64 / self.den as f64;
                let b = other.num as f64 / other.den as f64;
                a.total_cmp(&b)
            }
        }
    }
}

/// Otsu level over 256 bins: pixels in bins `>= level` are foreground.
///
/// Returns a level in `1..=255` maximizing between-class variance, the
/// lowest on ties, or 256 when no split separates anything (a constant map).
pub fn otsu_level(m: &Map2) -> Result<usize> {
    check_unit(m)?;
    let mut hist = [0u64; OTSU_BINS];
    for &v in m.data() {
        hist[quantize(v)] += 1;
    }
    let total: u64 = hist.iter().sum();
    let total_sum: u64 = hist.iter().enumerate().map(|(b, &n)| b as u64 * n).sum();

    let mut best: Option<(usize, SplitScore)> = None;
    let (mut n0, mut s0) = (0u64, 0u64);
    for level in 1..OTSU_BINS {
        n0 += hist[level - 1];
        s0 += (level as u64 - 1) * hist[level - 1];
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let score = SplitScore::new(n0, s0, n1, total_sum - s0);
        if score.num == 0 {
            continue;
        }
        if best.is_none_or(|(_, b)| score.cmp(&b) == Ordering::Greater) {
            best = Some((level, score));
        }
    }
    Ok(best.map_or(OTSU_BINS, |(level, _)| level))
}

/// Otsu threshold as a value in `[0, 1]`: `level / 256`, so 1.0 means
/// nothing is foreground.
pub fn otsu_threshold(m: &Map2) -> Result<f32> {
    Ok(otsu_level(m)? as f32 / OTSU_BINS as f32)
}

/// Builds a label mask from per-class saliency maps keyed by mask label
/// (`1..=K`).
///
/// Each class map is thresholded with its own Otsu level. A pixel takes the
/// label of the highest-scoring class that passes its threshold, preferring
/// the smaller label on ties, and stays background if none passes.
pub fn assemble_segmentation(class_maps: &BTreeMap<u8, Map2>, image_labels: &BTreeSet<u8>) -> Result<LabelMask> {
    if image_labels.is_empty() {
        return Err(invalid("image has no labels"));
    }
    if image_labels.contains(&0) {
        return Err(invalid("label 0 is reserved for background"));
    }
    let mut selected = Vec::with_capacity(image_labels.len());
    for &label in image_labels {
        let map = class_maps.get(&label).ok_or_else(|| invalid(format!("no map for label {label}")))?;
        selected.push((label, map, otsu_level(map)?));
    }
    let shape = selected[0].1.shape();
    if let Some((label, map, _)) = selected.iter().find(|(_, m, _)| m.shape() != shape) {
        return Err(invalid(format!("map for label {label} has shape {:?}, expected {shape:?}", map.shape())));
    }

    let labels = (0..shape.0 * shape.1)
        .map(|p| {
            let mut winner: Option<(u8, f32)> = None;
            for &(label, map, level) in &selected {
                let v = map.data()[p];
                if quantize(v) >= level && winner.is_none_or(|(_, best)| v > best) {
                    winner = Some((label, v));
                }
            }
            winner.map_or(0, |(label, _)| label)
        })
        .collect();
    LabelMask::new(shape.0, shape.1, labels)
}
