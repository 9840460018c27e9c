//! CAMNET01 model checkpoints, using the same container layout as captures.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ConvStage, ModelParams, FEATURES, STAGE_CHANNELS};
use crate::container::{BlobRef, Container, PayloadBuilder};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CAMNET01";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamDesc {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    len: u64,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    version: u32,
    classes: usize,
    rng_seed: u64,
    params: Vec<ParamDesc>,
}

pub fn write_params<W: Write>(p: &ModelParams, sink: &mut W) -> Result<u64> {
    p.validate().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut payload = PayloadBuilder::default();
    let mut params = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, values: &[f32]| {
        let BlobRef { offset, len } = payload.push(values);
        params.push(ParamDesc { name, shape, offset, len });
    };
    for (n, s) in p.stages.iter().enumerate() {
        push(format!("conv{}.weight", n + 1), vec![s.c_out, s.c_in, 3, 3], &s.kernels);
        push(format!("conv{}.bias", n + 1), vec![s.c_out], &s.bias);
    }
    push("fc.weight".into(), vec![p.classes, FEATURES], &p.classifier_weights);
    push("fc.bias".into(), vec![p.classes], &p.classifier_bias);

    let header = CheckpointHeader { version: CHECKPOINT_VERSION, classes: p.classes, rng_seed: p.rng_seed, params };
    payload.finish(CHECKPOINT_MAGIC, &header, sink)
}

pub fn read_params<R: Read>(source: &mut R) -> Result<ModelParams> {
    let container: Container<CheckpointHeader> = Container::read(source, CHECKPOINT_MAGIC)?;
    let header = &container.header;
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {}", header.version)));
    }
    for d in &header.params {
        container.check(&BlobRef { offset: d.offset, len: d.len }, &d.name)?;
    }
    let fetch = |name: &str, shape: &[usize]| -> Result<Vec<f32>> {
        let d = header
            .params
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::Validation(format!("checkpoint lacks {name}")))?;
        if d.shape != shape || d.len as usize != shape.iter().product::<usize>() {
            return Err(Error::Validation(format!(
                "{name}: shape {:?} with {} values, expected {shape:?}",
                d.shape, d.len
            )));
        }
        container.blob(&BlobRef { offset: d.offset, len: d.len }, name)
    };

    let mut stages = Vec::with_capacity(3);
    let mut c_in = 1;
    for (n, &c_out) in STAGE_CHANNELS.iter().enumerate() {
        stages.push(ConvStage {
            c_in,
            c_out,
            kernels: fetch(&format!("conv{}.weight", n + 1), &[c_out, c_in, 3, 3])?,
            bias: fetch(&format!("conv{}.bias", n + 1), &[c_out])?,
        });
        c_in = c_out;
    }
    let p = ModelParams {
        stages,
        classifier_weights: fetch("fc.weight", &[header.classes, FEATURES])?,
        classifier_bias: fetch("fc.bias", &[header.classes])?,
        classes: header.classes,
        rng_seed: header.rng_seed,
    };
    p.validate()?;
    Ok(p)
}

pub fn save_params(p: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let mut sink = BufWriter::new(File::create(path)?);
    write_params(p, &mut sink)?;
    Ok(())
}

pub fn load_params(path: impl AsRef<Path>) -> Result<ModelParams> {
    read_params(&mut BufReader::new(File::open(path)?))
}
