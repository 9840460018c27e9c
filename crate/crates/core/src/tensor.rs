//! Dense channel-major tensors and 2-D maps, plus the small set of numeric
//! kernels every CAM method is built from.
//!
//! Storage is `f32`; reductions accumulate in `f64` in a fixed index order so
//! results do not depend on how the loops are scheduled.

use crate::error::{invalid, Result};

/// A `(channels, height, width)` tensor stored channel-major, then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Tensor3 {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        let expected = channels
            .checked_mul(height)
            .and_then(|n| n.checked_mul(width))
            .ok_or_else(|| invalid("tensor shape overflows"))?;
        if data.len() != expected {
            return Err(invalid(format!(
                "tensor of shape ({channels}, {height}, {width}) needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite tensor value at index {pos}")));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Self { channels, height, width, data: vec![value; channels * height * width] }
    }

    /// Builds a tensor from per-channel maps, which must share one shape.
    pub fn from_channels(maps: &[Map2]) -> Result<Self> {
        let first = maps.first().ok_or_else(|| invalid("no channels given"))?;
        let (h, w) = first.shape();
        let mut data = Vec::with_capacity(maps.len() * h * w);
        for m in maps {
            if m.shape() != (h, w) {
                return Err(invalid("channel maps differ in shape"));
            }
            data.extend_from_slice(m.data());
        }
        Ok(Self { channels: maps.len(), height: h, width: w, data })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, k: usize) -> &[f32] {
        let n = self.plane_len();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f32 {
        self.data[(k * self.height + i) * self.width + j]
    }

    pub fn channel_map(&self, k: usize) -> Map2 {
        Map2 { height: self.height, width: self.width, data: self.channel(k).to_vec() }
    }

    /// Elementwise product of two tensors of equal shape.
    pub fn hadamard(&self, other: &Tensor3) -> Result<Tensor3> {
        if self.shape() != other.shape() {
            return Err(invalid(format!("hadamard shape mismatch: {:?} vs {:?}", self.shape(), other.shape())));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect();
        Ok(Tensor3 { data, ..*self })
    }

    /// Multiplies every element by `factor`.
    pub fn scaled(&self, factor: f32) -> Tensor3 {
        Tensor3 { data: self.data.iter().map(|v| v * factor).collect(), ..*self }
    }
}

/// A row-major 2-D map: a saliency map, heatmap or per-channel plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Map2 {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Map2 {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        let expected = height.checked_mul(width).ok_or_else(|| invalid("map shape overflows"))?;
        if data.len() != expected {
            return Err(invalid(format!(
                "map of shape ({height}, {width}) needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite map value at index {pos}")));
        }
        Ok(Self { height, width, data })
    }

    /// Convenience constructor from nested rows; panics on ragged input.
    pub fn from_rows(rows: &[&[f32]]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == width), "ragged rows");
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(height, width, data).expect("finite rows")
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![0.0; height * width] }
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self { height, width, data: vec![value; height * width] }
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

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.width + j]
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn min(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    /// Elementwise product of two maps of equal shape.
    pub fn hadamard(&self, other: &Map2) -> Result<Map2> {
        if self.shape() != other.shape() {
            return Err(invalid(format!("hadamard shape mismatch: {:?} vs {:?}", self.shape(), other.shape())));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect();
        Ok(Map2 { data, ..*self })
    }

    /// Elementwise sum of two maps of equal shape.
    pub fn add(&self, other: &Map2) -> Result<Map2> {
        if self.shape() != other.shape() {
            return Err(invalid(format!("cannot add maps of shape {:?} and {:?}", self.shape(), other.shape())));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Map2 { data, ..*self })
    }

    pub fn abs(&self) -> Map2 {
        Map2 { data: self.data.iter().map(|v| v.abs()).collect(), ..*self }
    }

    pub fn scaled(&self, factor: f32) -> Map2 {
        Map2 { data: self.data.iter().map(|v| v * factor).collect(), ..*self }
    }
}

#[inline]
pub(crate) fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Source sampling position for output index `dst` under the half-pixel
/// convention, clamped to the valid source range.
fn source_coord(dst: usize, in_len: usize, out_len: usize) -> (usize, usize, f64) {
    let scale = in_len as f64 / out_len as f64;
    let s = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
    let lo = s.floor() as usize;
    let hi = (lo + 1).min(in_len - 1);
    (lo, hi, s - lo as f64)
}

/// Resizes a map with bilinear interpolation using half-pixel centres and
/// edge clamping.
pub fn bilinear_resize(m: &Map2, out_h: usize, out_w: usize) -> Result<Map2> {
    let (in_h, in_w) = m.shape();
    if in_h == 0 || in_w == 0 {
        return Err(invalid("cannot resize an empty map"));
    }
    if out_h == 0 || out_w == 0 {
        return Err(invalid(format!("invalid output size {out_h}x{out_w}")));
    }
    if (in_h, in_w) == (out_h, out_w) {
        return Ok(m.clone());
    }

    let cols: Vec<_> = (0..out_w).map(|x| source_coord(x, in_w, out_w)).collect();
    let mut data = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (y0, y1, fy) = source_coord(y, in_h, out_h);
        for &(x0, x1, fx) in &cols {
            let p00 = m.get(y0, x0) as f64;
            let p01 = m.get(y0, x1) as f64;
            let p10 = m.get(y1, x0) as f64;
            let p11 = m.get(y1, x1) as f64;
            let top = p00 + fx * (p01 - p00);
            let bottom = p10 + fx * (p11 - p10);
            data.push((top + fy * (bottom - top)) as f32);
        }
    }
    Ok(Map2 { height: out_h, width: out_w, data })
}

/// Rescales a map affinely onto `[0, 1]`. A constant map becomes all zeros.
pub fn minmax_normalize(m: &Map2) -> Map2 {
    let lo = m.min() as f64;
    let hi = m.max() as f64;
    if m.is_empty() || hi <= lo {
        return Map2::zeros(m.height, m.width);
    }
    let range = hi - lo;
    let data = m.data.iter().map(|&v| ((v as f64 - lo) / range).clamp(0.0, 1.0) as f32).collect();
    Map2 { data, ..*m }
}

/// Linear-interpolated `delta`-th percentile of the strictly positive values.
///
/// Returns `None` when no value is positive. `delta = 0` yields the smallest
/// positive value and `delta = 100` the largest.
pub fn percentile_positive(values: &[f32], delta: f64) -> Result<Option<f64>> {
    check_delta(delta)?;
    let mut positives: Vec<f32> = values.iter().copied().filter(|&v| v > 0.0).collect();
    if positives.is_empty() {
        return Ok(None);
    }
    positives.sort_by(f32::total_cmp);
    let n = positives.len();
    let rank = delta / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    let base = positives[lo] as f64;
    if frac == 0.0 || lo + 1 >= n {
        return Ok(Some(base));
    }
    Ok(Some(base + frac * (positives[lo + 1] as f64 - base)))
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..=100.0).contains(&delta) {
        return Err(invalid(format!("delta {delta} outside [0, 100]")));
    }
    Ok(())
}

/// Sums a tensor over its channel axis.
pub fn channel_sum(t: &Tensor3) -> Map2 {
    let n = t.plane_len();
    let mut acc = vec![0.0f64; n];
    for k in 0..t.channels {
        for (a, &v) in acc.iter_mut().zip(t.channel(k)) {
            *a += v as f64;
        }
    }
    Map2 { height: t.height, width: t.width, data: acc.into_iter().map(|v| v as f32).collect() }
}
