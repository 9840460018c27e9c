//! Naive f64 forward pass of the fixed CNN, with a hook to nudge a single
//! input, pre-activation or activation value.

use camforge::cnn::ModelParams;

#[derive(Clone)]
pub struct Net64 {
    pub kernels: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub channels: Vec<(usize, usize)>,
    pub fc_w: Vec<f64>,
    pub fc_b: Vec<f64>,
    pub classes: usize,
}

impl From<&ModelParams> for Net64 {
    fn from(p: &ModelParams) -> Self {
        let up = |v: &[f32]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
        Net64 {
            kernels: p.stages.iter().map(|s| up(&s.kernels)).collect(),
            biases: p.stages.iter().map(|s| up(&s.bias)).collect(),
            channels: p.stages.iter().map(|s| (s.c_in, s.c_out)).collect(),
            fc_w: up(&p.classifier_weights),
            fc_b: up(&p.classifier_bias),
            classes: p.classes,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Probe {
    None,
    Input(usize),
    Pre(usize, usize),
    Act(usize, usize),
}

/// Returns the logits.
pub fn run(net: &Net64, input: &[f64], probe: Probe, h: f64) -> Vec<f64> {
    let mut size = 32usize;
    let mut cur = input.to_vec();
    if let Probe::Input(i) = probe {
        cur[i] += h;
    }
    for n in 0..3 {
        let (c_in, c_out) = net.channels[n];
        let mut z = vec![0.0f64; c_out * size * size];
        for o in 0..c_out {
            let out = &mut z[o * size * size..(o + 1) * size * size];
            out.iter_mut().for_each(|v| *v = net.biases[n][o]);
            for i in 0..c_in {
                let plane = &cur[i * size * size..(i + 1) * size * size];
                for ky in 0..3 {
                    for kx in 0..3 {
                        let wgt = net.kernels[n][((o * c_in + i) * 3 + ky) * 3 + kx];
                        for y in 0..size {
                            let sy = y as isize + ky as isize - 1;
                            if sy < 0 || sy >= size as isize {
                                continue;
                            }
                            let src = &plane[sy as usize * size..(sy as usize + 1) * size];
                            let dst = &mut out[y * size..(y + 1) * size];
                            for x in 0..size {
                                let sx = x as isize + kx as isize - 1;
                                if sx >= 0 && sx < size as isize {
                                    dst[x] += wgt * src[sx as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        if let Probe::Pre(stage, idx) = probe {
            if stage == n {
                z[idx] += h;
            }
        }
        let mut a: Vec<f64> = z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        if let Probe::Act(stage, idx) = probe {
            if stage == n {
                a[idx] += h;
            }
        }
        if n < 2 {
            let half = size / 2;
            let mut pooled = vec![0.0; c_out * half * half];
            for k in 0..c_out {
                for y in 0..half {
                    for x in 0..half {
                        let cands = [
                            (2 * y) * size + 2 * x,
                            (2 * y) * size + 2 * x + 1,
                            (2 * y + 1) * size + 2 * x,
                            (2 * y + 1) * size + 2 * x + 1,
                        ];
                        let mut best = cands[0];
                        for &c in &cands[1..] {
                            if a[k * size * size + c] > a[k * size * size + best] {
                                best = c;
                            }
                        }
                        pooled[(k * half + y) * half + x] = a[k * size * size + best];
                    }
                }
            }
            cur = pooled;
            size = half;
        } else {
            cur = a;
        }
    }
    let plane = (size * size) as f64;
    let feats: Vec<f64> = cur.chunks(size * size).map(|c| c.iter().sum::<f64>() / plane).collect();
    (0..net.classes)
        .map(|c| net.fc_b[c] + (0..feats.len()).map(|k| net.fc_w[c * feats.len() + k] * feats[k]).sum::<f64>())
        .collect()
}
