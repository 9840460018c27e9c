//! Saliency maps to segmentation masks, and masks to scores.

mod metrics;
mod otsu;
mod sweep;

pub use metrics::{accumulate_confusion, compute_miou, compute_prf, ConfusionMatrix, Prf};
pub use otsu::{assemble_segmentation, otsu_level, otsu_threshold, quantize, OTSU_BINS};
pub use sweep::{
    delta_sweep, evaluate, parse_delta_range, segment_image, EvalImage, MetricsRow, SweepResult, CSV_HEADER,
};

use crate::error::{invalid, Result};

/// Per-pixel class labels; 0 is background, `1..=K` are foreground classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl LabelMask {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(invalid(format!("mask shape {height}x{width} must be positive")));
        }
        if labels.len() != height * width {
            return Err(invalid(format!(
                "mask of shape {height}x{width} needs {} labels, got {}",
                height * width,
                labels.len()
            )));
        }
        Ok(Self { height, width, labels })
    }

    pub fn background(height: usize, width: usize) -> Self {
        Self { height, width, labels: vec![0; height * width] }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.labels[i * self.width + j]
    }

    pub fn max_label(&self) -> u8 {
        self.labels.iter().copied().max().unwrap_or(0)
    }
}
