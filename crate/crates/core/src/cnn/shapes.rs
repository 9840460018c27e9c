//! Synthetic single-object images: a square, disk or cross on faint noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::seg::LabelMask;
use crate::tensor::Tensor3;

use super::INPUT_SIZE;

pub const SHAPE_CLASSES: usize = 3;
pub const CLASS_NAMES: [&str; SHAPE_CLASSES] = ["square", "disk", "cross"];

const NOISE_AMPLITUDE: f32 = 0.1;
const MIN_SHAPE_PIXELS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct ShapesSample {
    /// `(1, 32, 32)` intensities in `[0, 1]`.
    pub image: Tensor3,
    /// 0 = square, 1 = disk, 2 = cross.
    pub label: usize,
    /// Foreground pixels carry `label + 1`, background 0.
    pub gt_mask: LabelMask,
}

/// Generates `n` samples; the same seed always yields the same samples.
pub fn generate_shapes(n: usize, seed: u64) -> Vec<ShapesSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| sample(&mut rng)).collect()
}

fn sample(rng: &mut ChaCha8Rng) -> ShapesSample {
    let size = INPUT_SIZE;
    let label = rng.gen_range(0..SHAPE_CLASSES);
    let inside = loop {
        let inside = shape_pixels(rng, label);
        if inside.iter().filter(|&&b| b).count() >= MIN_SHAPE_PIXELS {
            break inside;
        }
    };

    let mut pixels = Vec::with_capacity(size * size);
    let mut labels = Vec::with_capacity(size * size);
    for &fg in &inside {
        // Draw both so the noise stream does not depend on the shape.
        let noise = rng.gen_range(0.0..NOISE_AMPLITUDE);
        let ink = rng.gen_range(0.8..=1.0f32);
        if fg {
            pixels.push(ink);
            labels.push(label as u8 + 1);
        } else {
            pixels.push(noise);
            labels.push(0);
        }
    }
    ShapesSample {
        image: Tensor3::new(1, size, size, pixels).expect("finite pixels"),
        label,
        gt_mask: LabelMask::new(size, size, labels).expect("valid mask"),
    }
}

fn shape_pixels(rng: &mut ChaCha8Rng, label: usize) -> Vec<bool> {
    let size = INPUT_SIZE as i32;
    let mut inside = vec![false; (size * size) as usize];
    let mut set = |pred: &dyn Fn(i32, i32) -> bool| {
        for y in 0..size {
            for x in 0..size {
                inside[(y * size + x) as usize] = pred(y, x);
            }
        }
    };
    match label {
        0 => {
            let side = rng.gen_range(6..=14);
            let top = rng.gen_range(1..=size - side - 1);
            let left = rng.gen_range(1..=size - side - 1);
            set(&|y, x| (top..top + side).contains(&y) && (left..left + side).contains(&x));
        }
        1 => {
            let r: f32 = rng.gen_range(3.0..=7.0);
            let cy = rng.gen_range(r + 1.0..=size as f32 - r - 1.0);
            let cx = rng.gen_range(r + 1.0..=size as f32 - r - 1.0);
            set(&|y, x| {
                let dy = y as f32 + 0.5 - cy;
                let dx = x as f32 + 0.5 - cx;
                dy * dy + dx * dx <= r * r
            });
        }
        _ => {
            let arm = rng.gen_range(4..=8);
            let half = rng.gen_range(1..=2);
            let cy = rng.gen_range(arm + 1..=size - arm - 2);
            let cx = rng.gen_range(arm + 1..=size - arm - 2);
            set(&|y, x| {
                let (dy, dx) = ((y - cy).abs(), (x - cx).abs());
                (dy <= half && dx <= arm) || (dx <= half && dy <= arm)
            });
        }
    }
    inside
}
