#![allow(dead_code)]

pub mod fd;
pub mod golden;
pub mod oracle;
pub mod reference_net;

use camforge::capture::{CaptureFile, LayerRecord};
use camforge::tensor::Tensor3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize, lo: f32, hi: f32) -> Tensor3 {
    let data = (0..c * h * w).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor3::new(c, h, w, data).unwrap()
}

/// A capture with up to three layers of at most 4 channels and 6x6 planes,
/// carrying everything FullGrad needs.
pub fn random_capture(seed: u64) -> CaptureFile {
    let mut rng = rng(seed);
    let layers = rng.gen_range(1..=3);
    let ih = rng.gen_range(2..=6);
    let iw = rng.gen_range(2..=6);
    let ic = rng.gen_range(1..=3);
    let records = (0..layers)
        .map(|n| {
            let c = rng.gen_range(1..=4);
            let h = rng.gen_range(1..=6);
            let w = rng.gen_range(1..=6);
            LayerRecord {
                name: format!("s{}", n + 1),
                depth_index: n as u32 + 1,
                activation: random_tensor(&mut rng, c, h, w, 0.0, 2.0),
                gradient: random_tensor(&mut rng, c, h, w, -1.0, 1.0),
                bias: Some((0..c).map(|_| rng.gen_range(-1.0..1.0)).collect()),
                bias_gradient: Some(random_tensor(&mut rng, c, h, w, -1.0, 1.0)),
            }
        })
        .collect();
    CaptureFile {
        image_id: format!("rand{seed}"),
        class_index: rng.gen_range(0..5),
        score: rng.gen_range(-5.0..5.0),
        input: random_tensor(&mut rng, ic, ih, iw, 0.0, 1.0),
        input_gradient: Some(random_tensor(&mut rng, ic, ih, iw, -1.0, 1.0)),
        layers: records,
    }
}

/// Same capture with every gradient multiplied by `factor`.
pub fn scale_gradients(cf: &CaptureFile, factor: f32) -> CaptureFile {
    let mut out = cf.clone();
    out.input_gradient = out.input_gradient.map(|g| g.scaled(factor));
    for l in &mut out.layers {
        l.gradient = l.gradient.scaled(factor);
        l.bias_gradient = l.bias_gradient.take().map(|g| g.scaled(factor));
    }
    out
}

pub fn layer_names(cf: &CaptureFile) -> Vec<String> {
    cf.layers.iter().map(|l| l.name.clone()).collect()
}
