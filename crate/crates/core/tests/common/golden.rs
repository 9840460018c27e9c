//! A hand-assembled CAMCAP file and a helper to tamper with its header.

use camforge::capture::{CaptureFile, LayerRecord};
use camforge::tensor::Tensor3;

fn le(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// A (2,2,2) layer with bias, known floats, no input gradient.
pub fn golden_capture() -> CaptureFile {
    let act: Vec<f32> = (1..=8).map(|v| v as f32).collect();
    let grad: Vec<f32> = (1..=8).map(|v| -(v as f32) / 4.0).collect();
    CaptureFile {
        image_id: "g".into(),
        class_index: 2,
        score: 0.5,
        input: Tensor3::new(1, 1, 2, vec![0.25, 0.75]).unwrap(),
        input_gradient: None,
        layers: vec![LayerRecord {
            name: "s1".into(),
            depth_index: 1,
            activation: Tensor3::new(2, 2, 2, act).unwrap(),
            gradient: Tensor3::new(2, 2, 2, grad).unwrap(),
            bias: Some(vec![1.5, -2.0]),
            bias_gradient: Some(Tensor3::filled(2, 2, 2, 3.0)),
        }],
    }
}

pub fn golden_bytes() -> Vec<u8> {
    let header = concat!(
        r#"{"version":1,"image_id":"g","class_index":2,"score":0.5,"#,
        r#""input":{"shape":[1,1,2],"offset":0,"len":2},"input_gradient":null,"#,
        r#""layers":[{"name":"s1","depth_index":1,"shape":[2,2,2],"#,
        r#""activation":{"offset":8,"len":8},"gradient":{"offset":40,"len":8},"#,
        r#""bias":{"offset":72,"len":2},"bias_gradient":{"offset":80,"len":8}}]}"#
    );
    let mut bytes = b"CAMCAP01".to_vec();
    bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
    bytes.extend_from_slice(header.as_bytes());
    bytes.extend(le(&[0.25, 0.75]));
    bytes.extend(le(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]));
    bytes.extend(le(&[-0.25, -0.5, -0.75, -1.0, -1.25, -1.5, -1.75, -2.0]));
    bytes.extend(le(&[1.5, -2.0]));
    bytes.extend(le(&[3.0; 8]));
    bytes
}

pub fn header_edit(edit: impl FnOnce(&mut serde_json::Value)) -> Vec<u8> {
    let bytes = golden_bytes();
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let mut header: serde_json::Value = serde_json::from_slice(&bytes[12..12 + header_len]).unwrap();
    edit(&mut header);
    let json = serde_json::to_vec(&header).unwrap();
    let mut out = b"CAMCAP01".to_vec();
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend(json);
    out.extend_from_slice(&bytes[12 + header_len..]);
    out
}
