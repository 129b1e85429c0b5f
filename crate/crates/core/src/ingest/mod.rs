//! Checkpoint ingestion: safetensors container, BERT layout mapping and
//! synthetic checkpoint generation.

mod layout;
mod safetensors;
mod synth;

use thiserror::Error;

pub use layout::{discover_depth, map_bert_layout, BertNaming};
pub use safetensors::{parse_safetensors, write_safetensors, Dtype, ParseError, TensorInfo, TensorTable};
pub use synth::{synth_checkpoint, SpectrumLaw, SynthSpec};

/// Failure to map a tensor table onto the BERT encoder layout.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LayoutError {
    #[error("no encoder layers found under prefix `{prefix}`")]
    NoLayers { prefix: String },
    #[error("missing tensor `{name}`")]
    MissingTensor { name: String },
    #[error("tensor `{name}` has shape {actual:?}, expected {expected:?}")]
    InconsistentShape { name: String, expected: Vec<usize>, actual: Vec<usize> },
    #[error("hidden size {hidden} is not divisible by head dim {head_dim}")]
    HeadDim { hidden: usize, head_dim: usize },
}
