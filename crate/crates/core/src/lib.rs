//! Agent-environment temporal action proposal pipeline.
//!
//! - [`timeline`]: snippet grids and temporal IoU
//! - [`tensor_io`]: binary tensor files and JSON manifests
//! - [`fusion`]: environment/agent feature extraction and fusion
//! - [`supervision`]: boundary and duration labels, losses and gradients
//! - [`inference`]: peak pairing, proposal scoring and Soft-NMS
//! - [`metrics`]: AR@AN and AUC

pub mod error;
pub mod fusion;
pub mod inference;
pub mod metrics;
mod rng;
pub mod supervision;
pub mod tensor_io;
pub mod timeline;

pub use error::{Error, FormatError, Result};
pub use rng::KeyedStream;
