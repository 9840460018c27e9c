//! The CAMCAP v1 capture format: one file per (image, target class) holding
//! the input, its gradient, and per-layer activations, gradients, biases and
//! bias-gradient maps.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{BlobRef, Container, PayloadBuilder};
use crate::error::{Error, Result};
use crate::tensor::Tensor3;

pub const CAPTURE_MAGIC: &[u8; 8] = b"CAMCAP01";
pub const CAPTURE_VERSION: u32 = 1;

/// Everything captured at one layer for one target class.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    pub name: String,
    /// Ordinal position counted from the input.
    pub depth_index: u32,
    pub activation: Tensor3,
    /// Gradient of the class score with respect to `activation`.
    pub gradient: Tensor3,
    /// One bias per channel.
    pub bias: Option<Vec<f32>>,
    /// Gradient of the class score with respect to the pre-activation at
    /// every location, i.e. the spatial bias-gradient map.
    pub bias_gradient: Option<Tensor3>,
}

impl LayerRecord {
    pub fn shape(&self) -> (usize, usize, usize) {
        self.activation.shape()
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let shape = self.activation.shape();
        if self.gradient.shape() != shape {
            return Err(format!(
                "layer {}: gradient shape {:?} differs from activation shape {:?}",
                self.name,
                self.gradient.shape(),
                shape
            ));
        }
        match (&self.bias, &self.bias_gradient) {
            (None, None) => {}
            (Some(bias), Some(bias_gradient)) => {
                if bias.len() != shape.0 {
                    return Err(format!("layer {}: {} biases for {} channels", self.name, bias.len(), shape.0));
                }
                if let Some(pos) = bias.iter().position(|b| !b.is_finite()) {
                    return Err(format!("layer {}: non-finite bias at {pos}", self.name));
                }
                if bias_gradient.shape() != shape {
                    return Err(format!(
                        "layer {}: bias-gradient shape {:?} differs from activation shape {:?}",
                        self.name,
                        bias_gradient.shape(),
                        shape
                    ));
                }
            }
            _ => return Err(format!("layer {}: bias and bias gradient must be present together", self.name)),
        }
        Ok(())
    }
}

/// A single captured forward/backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureFile {
    pub image_id: String,
    pub class_index: usize,
    /// Pre-softmax score of `class_index`.
    pub score: f32,
    pub input: Tensor3,
    pub input_gradient: Option<Tensor3>,
    pub layers: Vec<LayerRecord>,
}

impl CaptureFile {
    pub fn layer(&self, name: &str) -> Option<&LayerRecord> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn layer_names(&self) -> Vec<&str> {
        self.layers.iter().map(|l| l.name.as_str()).collect()
    }

    /// Checks every structural invariant, reporting the first violation.
    pub fn validate(&self) -> Result<()> {
        self.check().map_err(Error::Validation)
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.layers.is_empty() {
            return Err("capture has no layer records".into());
        }
        if !self.score.is_finite() {
            return Err(format!("non-finite score {}", self.score));
        }
        if let Some(g) = &self.input_gradient {
            if g.shape() != self.input.shape() {
                return Err(format!(
                    "input gradient shape {:?} differs from input shape {:?}",
                    g.shape(),
                    self.input.shape()
                ));
            }
        }
        for pair in self.layers.windows(2) {
            if pair[1].depth_index <= pair[0].depth_index {
                return Err(format!(
                    "depth index not strictly increasing: {} ({}) then {} ({})",
                    pair[0].name, pair[0].depth_index, pair[1].name, pair[1].depth_index
                ));
            }
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if self.layers[..i].iter().any(|l| l.name == layer.name) {
                return Err(format!("duplicate layer name {}", layer.name));
            }
            layer.validate()?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        write_capture(self, &mut out)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        read_capture(&mut &bytes[..])
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut sink = BufWriter::new(File::create(path)?);
        write_capture(self, &mut sink)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_capture(&mut BufReader::new(File::open(path)?))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorDesc {
    shape: [usize; 3],
    offset: u64,
    len: u64,
}

impl TensorDesc {
    fn new(t: &Tensor3, blob: BlobRef) -> Self {
        let (c, h, w) = t.shape();
        Self { shape: [c, h, w], offset: blob.offset, len: blob.len }
    }

    fn blob(&self) -> BlobRef {
        BlobRef { offset: self.offset, len: self.len }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerDesc {
    name: String,
    depth_index: u32,
    shape: [usize; 3],
    activation: BlobRef,
    gradient: BlobRef,
    bias: Option<BlobRef>,
    bias_gradient: Option<BlobRef>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CaptureHeader {
    version: u32,
    image_id: String,
    class_index: i64,
    score: f32,
    input: TensorDesc,
    input_gradient: Option<TensorDesc>,
    layers: Vec<LayerDesc>,
}

/// Serializes a capture; returns the number of bytes written.
pub fn write_capture<W: Write>(cf: &CaptureFile, sink: &mut W) -> Result<u64> {
    cf.check().map_err(Error::InvalidArgument)?;

    let mut payload = PayloadBuilder::default();
    let input = TensorDesc::new(&cf.input, payload.push(cf.input.data()));
    let input_gradient = cf.input_gradient.as_ref().map(|g| TensorDesc::new(g, payload.push(g.data())));
    let layers = cf
        .layers
        .iter()
        .map(|l| {
            let (c, h, w) = l.shape();
            LayerDesc {
                name: l.name.clone(),
                depth_index: l.depth_index,
                shape: [c, h, w],
                activation: payload.push(l.activation.data()),
                gradient: payload.push(l.gradient.data()),
                bias: l.bias.as_ref().map(|b| payload.push(b)),
                bias_gradient: l.bias_gradient.as_ref().map(|g| payload.push(g.data())),
            }
        })
        .collect();

    let header = CaptureHeader {
        version: CAPTURE_VERSION,
        image_id: cf.image_id.clone(),
        class_index: cf.class_index as i64,
        score: cf.score,
        input,
        input_gradient,
        layers,
    };
    payload.finish(CAPTURE_MAGIC, &header, sink)
}

/// Parses and validates a capture.
pub fn read_capture<R: Read>(source: &mut R) -> Result<CaptureFile> {
    let container: Container<CaptureHeader> = Container::read(source, CAPTURE_MAGIC)?;
    let header = &container.header;
    if header.version != CAPTURE_VERSION {
        return Err(Error::Format(format!("unsupported capture version {}", header.version)));
    }

    // Bounds first, so nothing is decoded from a file that lies about its size.
    container.check(&header.input.blob(), "input")?;
    if let Some(g) = &header.input_gradient {
        container.check(&g.blob(), "input_gradient")?;
    }
    for l in &header.layers {
        container.check(&l.activation, &format!("{}.activation", l.name))?;
        container.check(&l.gradient, &format!("{}.gradient", l.name))?;
        if let Some(b) = &l.bias {
            container.check(b, &format!("{}.bias", l.name))?;
        }
        if let Some(b) = &l.bias_gradient {
            container.check(b, &format!("{}.bias_gradient", l.name))?;
        }
    }

    if header.class_index < 0 {
        return Err(Error::Validation(format!("negative class index {}", header.class_index)));
    }

    let decode = |shape: [usize; 3], blob: &BlobRef, what: &str| -> Result<Tensor3> {
        let [c, h, w] = shape;
        let expected = c.checked_mul(h).and_then(|n| n.checked_mul(w));
        if expected != Some(blob.len as usize) {
            return Err(Error::Validation(format!(
                "{what}: shape {shape:?} does not match {} stored values",
                blob.len
            )));
        }
        let data = container.blob(blob, what)?;
        Tensor3::new(c, h, w, data).map_err(|e| Error::Validation(format!("{what}: {e}")))
    };

    let input = decode(header.input.shape, &header.input.blob(), "input")?;
    let input_gradient =
        header.input_gradient.as_ref().map(|g| decode(g.shape, &g.blob(), "input_gradient")).transpose()?;

    let mut layers = Vec::with_capacity(header.layers.len());
    for l in &header.layers {
        let bias = match &l.bias {
            Some(b) => {
                if b.len as usize != l.shape[0] {
                    return Err(Error::Validation(format!(
                        "{}.bias: {} values for {} channels",
                        l.name, b.len, l.shape[0]
                    )));
                }
                Some(container.blob(b, &format!("{}.bias", l.name))?)
            }
            None => None,
        };
        layers.push(LayerRecord {
            name: l.name.clone(),
            depth_index: l.depth_index,
            activation: decode(l.shape, &l.activation, &format!("{}.activation", l.name))?,
            gradient: decode(l.shape, &l.gradient, &format!("{}.gradient", l.name))?,
            bias,
            bias_gradient: l
                .bias_gradient
                .as_ref()
                .map(|b| decode(l.shape, b, &format!("{}.bias_gradient", l.name)))
                .transpose()?,
        });
    }

    let cf = CaptureFile {
        image_id: header.image_id.clone(),
        class_index: header.class_index as usize,
        score: header.score,
        input,
        input_gradient,
        layers,
    };
    cf.validate()?;
    Ok(cf)
}
