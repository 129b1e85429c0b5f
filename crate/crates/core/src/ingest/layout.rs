//! Maps standard BERT encoder tensor names onto a [`BertCheckpoint`].
//!
//! Stored linear weights have shape (out, in) and act as x W^T; each is
//! transposed once so every matrix acts on row vectors as X W.

use std::collections::BTreeSet;

use super::{LayoutError, TensorTable};
use crate::bertproxy::{split_heads, BertCheckpoint, BertLayer};
use crate::error::Result;
use crate::spectral::Matrix;

const FALLBACK_PREFIX: &str = "bert.";

/// Tensor naming scheme; `prefix` is prepended to every `encoder.layer.*` name.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BertNaming {
    pub prefix: String,
}

impl BertNaming {
    pub fn new(prefix: impl Into<String>) -> Self {
        BertNaming { prefix: prefix.into() }
    }

    fn layer(&self, l: usize, suffix: &str) -> String {
        format!("{}encoder.layer.{l}.{suffix}", self.prefix)
    }
    pub fn query(&self, l: usize) -> String {
        self.layer(l, "attention.self.query.weight")
    }
    pub fn key(&self, l: usize) -> String {
        self.layer(l, "attention.self.key.weight")
    }
    pub fn value(&self, l: usize) -> String {
        self.layer(l, "attention.self.value.weight")
    }
    pub fn attention_output(&self, l: usize) -> String {
        self.layer(l, "attention.output.dense.weight")
    }
    pub fn intermediate(&self, l: usize) -> String {
        self.layer(l, "intermediate.dense.weight")
    }
    pub fn output(&self, l: usize) -> String {
        self.layer(l, "output.dense.weight")
    }
}

/// Number of encoder layers: one past the largest layer index present.
pub fn discover_depth(table: &TensorTable, naming: &BertNaming) -> Option<usize> {
    let head = format!("{}encoder.layer.", naming.prefix);
    let idx: BTreeSet<usize> =
        table.names().filter_map(|n| n.strip_prefix(&head)).filter_map(|rest| rest.split('.').next()?.parse().ok()).collect();
    idx.last().map(|l| l + 1)
}

fn load(table: &TensorTable, name: &str, expected: [usize; 2]) -> Result<Matrix> {
    let info = table.info(name).ok_or_else(|| LayoutError::MissingTensor { name: name.to_string() })?;
    if info.shape != expected {
        return Err(
            LayoutError::InconsistentShape { name: name.to_string(), expected: expected.to_vec(), actual: info.shape.clone() }.into()
        );
    }
    let m = table.tensor_matrix(name).expect("tensor present")?;
    Ok(m.transpose())
}

/// Builds the oriented, head-split checkpoint. Falls back to the `bert.`
/// prefix when the configured prefix matches no layer.
pub fn map_bert_layout(table: &TensorTable, naming: &BertNaming, head_dim: usize) -> Result<BertCheckpoint> {
    let fallback = BertNaming::new(format!("{}{FALLBACK_PREFIX}", naming.prefix));
    let (naming, depth) = match discover_depth(table, naming) {
        Some(d) => (naming.clone(), d),
        None => match discover_depth(table, &fallback) {
            Some(d) => (fallback, d),
            None => return Err(LayoutError::NoLayers { prefix: naming.prefix.clone() }.into()),
        },
    };
    let q0 = naming.query(0);
    let info = table.info(&q0).ok_or_else(|| LayoutError::MissingTensor { name: q0.clone() })?;
    let hidden = match info.shape.as_slice() {
        [a, b] if a == b => *a,
        _ => {
            let n = info.shape.first().copied().unwrap_or(0);
            return Err(LayoutError::InconsistentShape { name: q0, expected: vec![n, n], actual: info.shape.clone() }.into());
        }
    };
    if head_dim == 0 || hidden % head_dim != 0 {
        return Err(LayoutError::HeadDim { hidden, head_dim }.into());
    }
    let i0 = naming.intermediate(0);
    let inter = table.info(&i0).ok_or_else(|| LayoutError::MissingTensor { name: i0.clone() })?.shape.first().copied().unwrap_or(0);
    let layers = (0..depth)
        .map(|l| {
            let q = load(table, &naming.query(l), [hidden, hidden])?;
            let k = load(table, &naming.key(l), [hidden, hidden])?;
            let v = load(table, &naming.value(l), [hidden, hidden])?;
            let o = load(table, &naming.attention_output(l), [hidden, hidden])?;
            let ffn_in = load(table, &naming.intermediate(l), [inter, hidden])?;
            let ffn_out = load(table, &naming.output(l), [hidden, inter])?;
            Ok(BertLayer { heads: split_heads(&q, &k, &v, &o, head_dim)?, ffn_in, ffn_out })
        })
        .collect::<Result<Vec<_>>>()?;
    BertCheckpoint::new(layers)
}
