//! Class activation maps computed from captured activations and gradients.
//!
//! Single-layer kernels (`grad_cam_layer`, `layer_cam_layer`) produce a map at
//! the layer's native resolution. Multi-layer methods upsample each layer map
//! bilinearly and add them (`fuse_layers`). The `Lt*` methods additionally
//! truncate every gradient channel below the `delta`-th percentile of its
//! positive values before computing weights.

use std::fmt;
use std::str::FromStr;

use crate::capture::{CaptureFile, LayerRecord};
use crate::error::{invalid, Error, Result};
use crate::tensor::{
    bilinear_resize, channel_sum, check_delta, minmax_normalize, percentile_positive, relu, Map2, Tensor3,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    GradCam,
    LayerCam,
    FullGrad,
    LtGradCam,
    LtLayerCam,
    LtFullGrad,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::GradCam,
        Method::LayerCam,
        Method::FullGrad,
        Method::LtGradCam,
        Method::LtLayerCam,
        Method::LtFullGrad,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::GradCam => "grad_cam",
            Method::LayerCam => "layer_cam",
            Method::FullGrad => "fullgrad",
            Method::LtGradCam => "lt_grad_cam",
            Method::LtLayerCam => "lt_layer_cam",
            Method::LtFullGrad => "lt_fullgrad",
        }
    }

    /// Whether the method applies gradient truncation.
    pub fn truncates(self) -> bool {
        matches!(self, Method::LtGradCam | Method::LtLayerCam | Method::LtFullGrad)
    }

    pub fn uses_biases(self) -> bool {
        matches!(self, Method::FullGrad | Method::LtFullGrad)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| invalid(format!("unknown method {s:?}")))
    }
}

/// What to compute for one capture.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyRequest {
    pub method: Method,
    pub layer_names: Vec<String>,
    /// Truncation percentile; ignored by methods that do not truncate.
    pub delta: f64,
    /// `(height, width)` of the returned map.
    pub output_size: (usize, usize),
}

impl SaliencyRequest {
    pub fn new(method: Method, layer_names: &[&str], delta: f64, output_size: (usize, usize)) -> Self {
        Self { method, layer_names: layer_names.iter().map(|s| s.to_string()).collect(), delta, output_size }
    }
}

fn check_pair(a: &Tensor3, g: &Tensor3) -> Result<()> {
    if a.shape() != g.shape() {
        return Err(invalid(format!("activation shape {:?} differs from gradient shape {:?}", a.shape(), g.shape())));
    }
    Ok(())
}

/// Grad-CAM for one layer: channels weighted by their spatially averaged
/// gradient, summed, then rectified.
pub fn grad_cam_layer(a: &Tensor3, g: &Tensor3) -> Result<Map2> {
    check_pair(a, g)?;
    let z = a.plane_len() as f64;
    let weights: Vec<f64> =
        (0..g.channels()).map(|k| g.channel(k).iter().map(|&v| v as f64).sum::<f64>() / z).collect();
    let mut acc = vec![0.0f64; a.plane_len()];
    for (k, &w) in weights.iter().enumerate() {
        for (s, &v) in acc.iter_mut().zip(a.channel(k)) {
            *s += w * v as f64;
        }
    }
    to_map(a.height(), a.width(), acc.into_iter().map(relu))
}

/// Layer-CAM for one layer: each activation weighted by its own rectified
/// gradient, summed over channels, then rectified.
pub fn layer_cam_layer(a: &Tensor3, g: &Tensor3) -> Result<Map2> {
    check_pair(a, g)?;
    let mut acc = vec![0.0f64; a.plane_len()];
    for k in 0..a.channels() {
        for ((s, &av), &gv) in acc.iter_mut().zip(a.channel(k)).zip(g.channel(k)) {
            *s += relu(gv as f64) * av as f64;
        }
    }
    to_map(a.height(), a.width(), acc.into_iter().map(relu))
}

fn to_map(h: usize, w: usize, values: impl Iterator<Item = f64>) -> Result<Map2> {
    Map2::new(h, w, values.map(|v| v as f32).collect())
}

/// Per-channel binary mask keeping gradients at or above the channel's
/// `delta`-th percentile of positive values. Channels without positive
/// values are masked out entirely.
pub fn truncation_mask(g: &Tensor3, delta: f64) -> Result<Tensor3> {
    check_delta(delta)?;
    let mut data = Vec::with_capacity(g.len());
    for k in 0..g.channels() {
        let plane = g.channel(k);
        match percentile_positive(plane, delta)? {
            Some(t) => data.extend(plane.iter().map(|&v| if v as f64 >= t { 1.0 } else { 0.0 })),
            None => data.extend(std::iter::repeat_n(0.0, plane.len())),
        }
    }
    let (c, h, w) = g.shape();
    Tensor3::new(c, h, w, data)
}

/// `g` with every entry outside its truncation mask set to zero.
pub fn truncate_gradient(g: &Tensor3, delta: f64) -> Result<Tensor3> {
    let mask = truncation_mask(g, delta)?;
    let (c, h, w) = g.shape();
    // Select rather than multiply so dropped entries are +0.0, never -0.0.
    let data = g.data().iter().zip(mask.data()).map(|(&v, &m)| if m != 0.0 { v } else { 0.0 }).collect();
    Tensor3::new(c, h, w, data)
}

/// Number of entries kept by the truncation mask, and the total count.
pub fn mask_survival(g: &Tensor3, delta: f64) -> Result<(usize, usize)> {
    let mask = truncation_mask(g, delta)?;
    Ok((mask.data().iter().filter(|&&m| m != 0.0).count(), mask.len()))
}

/// Upsamples each map to `output_size` and sums them.
pub fn fuse_layers(maps: &[Map2], output_size: (usize, usize)) -> Result<Map2> {
    if maps.is_empty() {
        return Err(invalid("no maps to fuse"));
    }
    let (h, w) = output_size;
    let mut acc = vec![0.0f64; h * w];
    for m in maps {
        let resized = bilinear_resize(m, h, w)?;
        for (s, &v) in acc.iter_mut().zip(resized.data()) {
            *s += v as f64;
        }
    }
    to_map(h, w, acc.into_iter())
}

/// Absolute value, min-max normalization, then bilinear resize.
pub fn post_process(z: &Map2, output_size: (usize, usize)) -> Result<Map2> {
    bilinear_resize(&minmax_normalize(&z.abs()), output_size.0, output_size.1)
}

fn select_layers<'a>(capture: &'a CaptureFile, names: &[String]) -> Result<Vec<&'a LayerRecord>> {
    if names.is_empty() {
        return Err(invalid("no layers selected"));
    }
    names
        .iter()
        .map(|n| {
            capture
                .layer(n)
                .ok_or_else(|| invalid(format!("unknown layer {n:?}; capture has {:?}", capture.layer_names())))
        })
        .collect()
}

fn fused_per_layer(
    capture: &CaptureFile,
    layer_names: &[String],
    delta: Option<f64>,
    output_size: (usize, usize),
    kernel: fn(&Tensor3, &Tensor3) -> Result<Map2>,
) -> Result<Map2> {
    if let Some(d) = delta {
        check_delta(d)?;
    }
    let maps = select_layers(capture, layer_names)?
        .into_iter()
        .map(|l| match delta {
            Some(d) => kernel(&l.activation, &truncate_gradient(&l.gradient, d)?),
            None => kernel(&l.activation, &l.gradient),
        })
        .collect::<Result<Vec<_>>>()?;
    fuse_layers(&maps, output_size)
}

/// Grad-CAM over the selected layers, fused without truncation.
pub fn grad_cam(capture: &CaptureFile, layer_names: &[String], output_size: (usize, usize)) -> Result<Map2> {
    fused_per_layer(capture, layer_names, None, output_size, grad_cam_layer)
}

/// Layer-CAM over the selected layers, fused without truncation.
pub fn layer_cam(capture: &CaptureFile, layer_names: &[String], output_size: (usize, usize)) -> Result<Map2> {
    fused_per_layer(capture, layer_names, None, output_size, layer_cam_layer)
}

/// Grad-CAM on truncated gradients. The averaging denominator stays the
/// full spatial size of each layer.
pub fn lt_grad_cam(
    capture: &CaptureFile,
    layer_names: &[String],
    delta: f64,
    output_size: (usize, usize),
) -> Result<Map2> {
    fused_per_layer(capture, layer_names, Some(delta), output_size, grad_cam_layer)
}

pub fn lt_layer_cam(
    capture: &CaptureFile,
    layer_names: &[String],
    delta: f64,
    output_size: (usize, usize),
) -> Result<Map2> {
    fused_per_layer(capture, layer_names, Some(delta), output_size, layer_cam_layer)
}

/// FullGrad: the post-processed input-gradient term plus one post-processed
/// bias term per channel of every selected layer.
pub fn fullgrad(capture: &CaptureFile, layer_names: &[String], output_size: (usize, usize)) -> Result<Map2> {
    fullgrad_impl(capture, layer_names, None, output_size)
}

/// FullGrad with the input gradient and every bias-gradient map truncated.
pub fn lt_fullgrad(
    capture: &CaptureFile,
    layer_names: &[String],
    delta: f64,
    output_size: (usize, usize),
) -> Result<Map2> {
    check_delta(delta)?;
    fullgrad_impl(capture, layer_names, Some(delta), output_size)
}

fn fullgrad_impl(
    capture: &CaptureFile,
    layer_names: &[String],
    delta: Option<f64>,
    output_size: (usize, usize),
) -> Result<Map2> {
    let (h, w) = output_size;
    if h == 0 || w == 0 {
        return Err(invalid(format!("invalid output size {h}x{w}")));
    }
    let layers = select_layers(capture, layer_names)?;
    let input_gradient = capture
        .input_gradient
        .as_ref()
        .ok_or_else(|| Error::UnsupportedMethod("fullgrad needs the input gradient, which the capture lacks".into()))?;
    let mut terms = Vec::new();
    for l in &layers {
        match (&l.bias, &l.bias_gradient) {
            (Some(b), Some(bg)) => terms.push((b, bg)),
            _ => {
                return Err(Error::UnsupportedMethod(format!(
                    "fullgrad needs bias and bias gradient for layer {}",
                    l.name
                )))
            }
        }
    }

    let mut acc = vec![0.0f64; h * w];
    let mut add = |m: Map2| {
        for (s, &v) in acc.iter_mut().zip(m.data()) {
            *s += v as f64;
        }
    };

    let input_gradient = match delta {
        Some(d) => truncate_gradient(input_gradient, d)?,
        None => input_gradient.clone(),
    };
    add(post_process(&channel_sum(&input_gradient.hadamard(&capture.input)?), output_size)?);

    for (bias, bias_gradient) in terms {
        let bias_gradient = match delta {
            Some(d) => truncate_gradient(bias_gradient, d)?,
            None => bias_gradient.clone(),
        };
        for (k, &b) in bias.iter().enumerate() {
            let term = bias_gradient.channel_map(k).scaled(b);
            add(post_process(&term, output_size)?);
        }
    }
    to_map(h, w, acc.into_iter())
}

/// Computes the requested method and min-max normalizes the result to
/// `[0, 1]`.
pub fn compute_saliency(capture: &CaptureFile, req: &SaliencyRequest) -> Result<Map2> {
    let raw = raw_saliency(capture, req)?;
    Ok(minmax_normalize(&raw))
}

/// The method's output before the final normalization.
pub fn raw_saliency(capture: &CaptureFile, req: &SaliencyRequest) -> Result<Map2> {
    check_delta(req.delta)?;
    let (h, w) = req.output_size;
    if h == 0 || w == 0 {
        return Err(invalid(format!("invalid output size {h}x{w}")));
    }
    let names = &req.layer_names;
    match req.method {
        Method::GradCam => grad_cam(capture, names, req.output_size),
        Method::LayerCam => layer_cam(capture, names, req.output_size),
        Method::FullGrad => fullgrad(capture, names, req.output_size),
        Method::LtGradCam => lt_grad_cam(capture, names, req.delta, req.output_size),
        Method::LtLayerCam => lt_layer_cam(capture, names, req.delta, req.output_size),
        Method::LtFullGrad => lt_fullgrad(capture, names, req.delta, req.output_size),
    }
}

/// Fraction of gradient entries that survive truncation across the
/// gradients a method consumes: layer gradients for the CAM methods, input
/// and bias-gradient maps for FullGrad. Methods without truncation keep
/// everything.
pub fn gradient_survival(capture: &CaptureFile, req: &SaliencyRequest) -> Result<f64> {
    let layers = select_layers(capture, &req.layer_names)?;
    if !req.method.truncates() {
        return Ok(1.0);
    }
    let mut kept = 0usize;
    let mut total = 0usize;
    let mut count = |g: &Tensor3| -> Result<()> {
        let (k, t) = mask_survival(g, req.delta)?;
        kept += k;
        total += t;
        Ok(())
    };
    if req.method.uses_biases() {
        if let Some(g) = &capture.input_gradient {
            count(g)?;
        }
        for l in &layers {
            if let Some(g) = &l.bias_gradient {
                count(g)?;
            }
        }
    } else {
        for l in &layers {
            count(&l.gradient)?;
        }
    }
    Ok(if total == 0 { 0.0 } else { kept as f64 / total as f64 })
}
