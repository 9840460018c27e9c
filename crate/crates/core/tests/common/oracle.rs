//! Scalar-loop reference implementations written straight from the formulas,
//! in f64 with nested-Vec storage. They share no code with the library.

use camforge::cam::Method;
use camforge::capture::CaptureFile;
use camforge::tensor::{Map2, Tensor3};

pub type Grid = Vec<Vec<f64>>;
pub type Cube = Vec<Grid>;

pub fn cube(t: &Tensor3) -> Cube {
    let (c, h, w) = t.shape();
    (0..c).map(|k| (0..h).map(|i| (0..w).map(|j| t.get(k, i, j) as f64).collect()).collect()).collect()
}

pub fn grid(m: &Map2) -> Grid {
    let (h, w) = m.shape();
    (0..h).map(|i| (0..w).map(|j| m.get(i, j) as f64).collect()).collect()
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn resize(src: &Grid, out_h: usize, out_w: usize) -> Grid {
    let in_h = src.len();
    let in_w = src[0].len();
    let mut out = vec![vec![0.0; out_w]; out_h];
    for y in 0..out_h {
        for x in 0..out_w {
            let mut sy = (y as f64 + 0.5) * (in_h as f64 / out_h as f64) - 0.5;
            let mut sx = (x as f64 + 0.5) * (in_w as f64 / out_w as f64) - 0.5;
            sy = sy.max(0.0).min((in_h - 1) as f64);
            sx = sx.max(0.0).min((in_w - 1) as f64);
            let y0 = sy.floor() as usize;
            let x0 = sx.floor() as usize;
            let y1 = if y0 + 1 < in_h { y0 + 1 } else { y0 };
            let x1 = if x0 + 1 < in_w { x0 + 1 } else { x0 };
            let fy = sy - y0 as f64;
            let fx = sx - x0 as f64;
            out[y][x] = src[y0][x0] * (1.0 - fy) * (1.0 - fx)
                + src[y0][x1] * (1.0 - fy) * fx
                + src[y1][x0] * fy * (1.0 - fx)
                + src[y1][x1] * fy * fx;
        }
    }
    out
}

pub fn normalize(m: &Grid) -> Grid {
    let lo = m.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
    let hi = m.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    m.iter().map(|row| row.iter().map(|&v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 }).collect()).collect()
}

/// Percentile of the positive values by sorting and interpolating ranks.
pub fn percentile(values: &[f64], delta: f64) -> Option<f64> {
    let mut p: Vec<f64> = values.iter().cloned().filter(|&v| v > 0.0).collect();
    if p.is_empty() {
        return None;
    }
    p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let r = delta / 100.0 * (p.len() - 1) as f64;
    let i = r.floor() as usize;
    if i + 1 >= p.len() {
        return Some(p[i]);
    }
    Some(p[i] + (r - i as f64) * (p[i + 1] - p[i]))
}

/// Gradient with entries below the channel's threshold zeroed.
pub fn truncate(g: &Cube, delta: f64) -> Cube {
    g.iter()
        .map(|ch| {
            let flat: Vec<f64> = ch.iter().flatten().cloned().collect();
            match percentile(&flat, delta) {
                None => vec![vec![0.0; ch[0].len()]; ch.len()],
                Some(t) => ch.iter().map(|row| row.iter().map(|&v| if v >= t { v } else { 0.0 }).collect()).collect(),
            }
        })
        .collect()
}

pub fn grad_cam_layer(a: &Cube, g: &Cube) -> Grid {
    let (h, w) = (a[0].len(), a[0][0].len());
    let mut out = vec![vec![0.0; w]; h];
    for k in 0..a.len() {
        let mut weight = 0.0;
        for i in 0..h {
            for j in 0..w {
                weight += g[k][i][j];
            }
        }
        weight /= (h * w) as f64;
        for i in 0..h {
            for j in 0..w {
                out[i][j] += weight * a[k][i][j];
            }
        }
    }
    out.iter().map(|r| r.iter().map(|&v| relu(v)).collect()).collect()
}

pub fn layer_cam_layer(a: &Cube, g: &Cube) -> Grid {
    let (h, w) = (a[0].len(), a[0][0].len());
    let mut out = vec![vec![0.0; w]; h];
    for k in 0..a.len() {
        for i in 0..h {
            for j in 0..w {
                out[i][j] += relu(g[k][i][j]) * a[k][i][j];
            }
        }
    }
    out.iter().map(|r| r.iter().map(|&v| relu(v)).collect()).collect()
}

fn add_into(acc: &mut Grid, m: &Grid) {
    for (ra, rm) in acc.iter_mut().zip(m) {
        for (a, b) in ra.iter_mut().zip(rm) {
            *a += b;
        }
    }
}

fn psi(z: &Grid, h: usize, w: usize) -> Grid {
    let abs: Grid = z.iter().map(|r| r.iter().map(|v| v.abs()).collect()).collect();
    resize(&normalize(&abs), h, w)
}

/// The method's map before the final presentation normalization.
pub fn raw_cam(cf: &CaptureFile, method: Method, layers: &[String], delta: f64, h: usize, w: usize) -> Grid {
    let mut acc = vec![vec![0.0; w]; h];
    match method {
        Method::FullGrad | Method::LtFullGrad => {
            let x = cube(&cf.input);
            let mut gx = cube(cf.input_gradient.as_ref().unwrap());
            if method == Method::LtFullGrad {
                gx = truncate(&gx, delta);
            }
            let (ih, iw) = (x[0].len(), x[0][0].len());
            let mut input_term = vec![vec![0.0; iw]; ih];
            for k in 0..x.len() {
                for i in 0..ih {
                    for j in 0..iw {
                        input_term[i][j] += gx[k][i][j] * x[k][i][j];
                    }
                }
            }
            add_into(&mut acc, &psi(&input_term, h, w));
            for name in layers {
                let l = cf.layer(name).unwrap();
                let mut bg = cube(l.bias_gradient.as_ref().unwrap());
                if method == Method::LtFullGrad {
                    bg = truncate(&bg, delta);
                }
                for (k, &b) in l.bias.as_ref().unwrap().iter().enumerate() {
                    let term: Grid = bg[k].iter().map(|r| r.iter().map(|&v| v * b as f64).collect()).collect();
                    add_into(&mut acc, &psi(&term, h, w));
                }
            }
        }
        _ => {
            for name in layers {
                let l = cf.layer(name).unwrap();
                let a = cube(&l.activation);
                let mut g = cube(&l.gradient);
                if method.truncates() {
                    g = truncate(&g, delta);
                }
                let m = match method {
                    Method::GradCam | Method::LtGradCam => grad_cam_layer(&a, &g),
                    _ => layer_cam_layer(&a, &g),
                };
                add_into(&mut acc, &resize(&m, h, w));
            }
        }
    }
    acc
}

pub fn saliency(cf: &CaptureFile, method: Method, layers: &[String], delta: f64, h: usize, w: usize) -> Grid {
    normalize(&raw_cam(cf, method, layers, delta, h, w))
}

/// Otsu by trying every candidate level on the raw pixels.
pub fn otsu_level_exhaustive(values: &[f32]) -> usize {
    let bins: Vec<f64> = values.iter().map(|&v| ((v * 256.0).floor() as f64).min(255.0)).collect();
    let n = bins.len() as f64;
    let mut best_level = 256;
    let mut best_var = 0.0f64;
    for level in 0..256usize {
        let lo: Vec<f64> = bins.iter().cloned().filter(|&b| b < level as f64).collect();
        let hi: Vec<f64> = bins.iter().cloned().filter(|&b| b >= level as f64).collect();
        if lo.is_empty() || hi.is_empty() {
            continue;
        }
        let m0 = lo.iter().sum::<f64>() / lo.len() as f64;
        let m1 = hi.iter().sum::<f64>() / hi.len() as f64;
        let var = (lo.len() as f64 / n) * (hi.len() as f64 / n) * (m0 - m1) * (m0 - m1);
        if var > best_var {
            best_var = var;
            best_level = level;
        }
    }
    best_level
}
