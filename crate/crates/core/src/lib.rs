//! Spectral complexity toolkit for transformer generalization bounds.
//!
//! Modules, bottom-up:
//! - [`spectral`]: singular values, Schatten powers, mixed and 2->inf norms.
//! - [`model`]: simplified transformer forward pass used by the Lipschitz checks.
//! - [`bounds`]: propagation factors, metric entropy, radius allocation and
//!   generalization gap bounds for fixed Schatten indices.
//! - [`posthoc`]: data-dependent Schatten index selection on a finite grid.
//! - [`baselines`]: mixed-norm baseline bounds and the symbolic regime table.
//! - [`bertproxy`]: headwise BERT composition and the B_ours / B_Edelman proxies.
//! - [`ingest`]: safetensors parsing/writing, BERT layout mapping, synthetic checkpoints.
//! - [`cli`]: report assembly and emission shared by the command-line tool.
//!
//! Runnable examples live in `examples/`; run one with
//! `cargo run --release --example <name>`.

// Negated comparisons deliberately reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bertproxy;
pub mod bounds;
pub mod cli;
pub mod error;
pub mod ingest;
pub mod model;
pub mod posthoc;
pub mod spectral;

pub use error::{Error, Result};
