//! Class activation maps (Grad-CAM, Layer-CAM, FullGrad and their layer-fused,
//! gradient-truncated variants) over captured activations and gradients,
//! with Otsu-based segmentation and evaluation.
//!
//! Modules:
//! - [`tensor`]: tensors, maps, resampling and normalization kernels
//! - [`capture`]: the CAMCAP binary capture format
//! - [`cam`]: CAM methods
//! - [`cnn`]: a small self-contained CNN that produces captures
//! - [`seg`]: Otsu segmentation, confusion matrices, metrics and delta sweeps
//! - [`pgm`]: PGM image I/O

pub mod cam;
pub mod capture;
pub mod cnn;
mod container;
pub mod error;
pub mod pgm;
pub mod seg;
pub mod tensor;

pub use cam::{compute_saliency, Method, SaliencyRequest};
pub use capture::{read_capture, write_capture, CaptureFile, LayerRecord};
pub use error::{Error, Result};
pub use seg::{ConfusionMatrix, LabelMask};
pub use tensor::{Map2, Tensor3};
