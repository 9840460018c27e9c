//! Shared container layout for capture files and model checkpoints:
//! 8-byte magic, `u32` little-endian header length, UTF-8 JSON header, then
//! little-endian `f32` blobs addressed by offsets relative to the end of the
//! header.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Location of one blob inside the payload section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobRef {
    /// Byte offset from the end of the header.
    pub offset: u64,
    /// Number of `f32` elements.
    pub len: u64,
}

/// Accumulates blobs in write order and hands out their references.
#[derive(Default)]
pub struct PayloadBuilder {
    bytes: Vec<u8>,
}

impl PayloadBuilder {
    pub fn push(&mut self, values: &[f32]) -> BlobRef {
        let offset = self.bytes.len() as u64;
        self.bytes.reserve(values.len() * 4);
        for v in values {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
        BlobRef { offset, len: values.len() as u64 }
    }

    pub fn finish<H: Serialize, W: Write>(self, magic: &[u8; 8], header: &H, sink: &mut W) -> Result<u64> {
        let json =
            serde_json::to_vec(header).map_err(|e| Error::InvalidArgument(format!("header serialization: {e}")))?;
        let header_len =
            u32::try_from(json.len()).map_err(|_| Error::InvalidArgument("header exceeds 4 GiB".into()))?;
        sink.write_all(magic)?;
        sink.write_all(&header_len.to_le_bytes())?;
        sink.write_all(&json)?;
        sink.write_all(&self.bytes)?;
        sink.flush()?;
        Ok(12 + json.len() as u64 + self.bytes.len() as u64)
    }
}

/// A parsed container whose blobs have not been decoded yet.
pub struct Container<H> {
    pub header: H,
    payload: Vec<u8>,
}

impl<H: DeserializeOwned> Container<H> {
    pub fn read<R: Read>(source: &mut R, magic: &[u8; 8]) -> Result<Self> {
        let mut bytes = Vec::new();
        source.read_to_end(&mut bytes)?;
        Self::from_bytes(bytes, magic)
    }

    pub fn from_bytes(mut bytes: Vec<u8>, magic: &[u8; 8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..8] != magic {
            let found = String::from_utf8_lossy(&bytes[..bytes.len().min(8)]).into_owned();
            return Err(Error::Format(format!("bad magic {found:?}, expected {:?}", String::from_utf8_lossy(magic))));
        }
        if bytes.len() < 12 {
            return Err(Error::Corruption("file ends inside the header length".into()));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header_end = 12usize.checked_add(header_len).filter(|&end| end <= bytes.len()).ok_or_else(|| {
            Error::Corruption(format!("header length {header_len} exceeds file size {}", bytes.len()))
        })?;
        let header = serde_json::from_slice(&bytes[12..header_end])
            .map_err(|e| Error::Format(format!("malformed header: {e}")))?;
        let payload = bytes.split_off(header_end);
        Ok(Self { header, payload })
    }
}

impl<H> Container<H> {
    /// Checks a blob reference against the payload bounds without decoding it.
    pub fn check(&self, blob: &BlobRef, what: &str) -> Result<()> {
        self.byte_range(blob, what).map(|_| ())
    }

    fn byte_range(&self, blob: &BlobRef, what: &str) -> Result<std::ops::Range<usize>> {
        if !blob.offset.is_multiple_of(4) {
            return Err(Error::Corruption(format!("{what}: offset {} is not 4-byte aligned", blob.offset)));
        }
        let end = blob
            .len
            .checked_mul(4)
            .and_then(|n| n.checked_add(blob.offset))
            .filter(|&end| end <= self.payload.len() as u64)
            .ok_or_else(|| {
                Error::Corruption(format!(
                    "{what}: blob at offset {} with {} values runs past end of payload ({} bytes)",
                    blob.offset,
                    blob.len,
                    self.payload.len()
                ))
            })?;
        Ok(blob.offset as usize..end as usize)
    }

    /// Decodes a blob. Callers must have validated every reference first.
    pub fn blob(&self, blob: &BlobRef, what: &str) -> Result<Vec<f32>> {
        let range = self.byte_range(blob, what)?;
        Ok(self.payload[range].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}
