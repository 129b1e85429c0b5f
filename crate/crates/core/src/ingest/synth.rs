//! Deterministic synthetic BERT checkpoints with prescribed spectra.
//!
//! Every factor is U diag(sigma) V^T with orthonormal U, V from the QR of a
//! seeded Gaussian. Attention heads share a d_h-dimensional inner basis so
//! the composed products have exactly the prescribed singular values.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BertNaming, Dtype, TensorTable};
use crate::error::{domain, Result};

/// Singular value law of one matrix family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumLaw {
    /// r singular values equal to sigma, the rest zero.
    ExactRank { r: usize, sigma: f64 },
    /// sigma_i = sigma1 * i^(-beta) over the full rank.
    PowerLaw { sigma1: f64, beta: f64 },
    /// iid N(0, scale^2) entries.
    Gaussian { scale: f64 },
}

impl SpectrumLaw {
    fn validate(&self, what: &str, max_rank: usize) -> Result<()> {
        let ok = match *self {
            SpectrumLaw::ExactRank { r, sigma } => r <= max_rank && sigma.is_finite() && sigma >= 0.0,
            SpectrumLaw::PowerLaw { sigma1, beta } => sigma1.is_finite() && sigma1 >= 0.0 && beta.is_finite(),
            SpectrumLaw::Gaussian { scale } => scale.is_finite() && scale >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(domain(format!("invalid {what} law {self:?} (max rank {max_rank})")))
        }
    }

    fn values(&self, max_rank: usize) -> Vec<f64> {
        match *self {
            SpectrumLaw::ExactRank { r, sigma } => vec![sigma; r],
            SpectrumLaw::PowerLaw { sigma1, beta } => (1..=max_rank).map(|i| sigma1 * (i as f64).powf(-beta)).collect(),
            SpectrumLaw::Gaussian { .. } => Vec::new(),
        }
    }
}

fn default_dtype() -> Dtype {
    Dtype::F32
}

/// Synthetic checkpoint specification. `qk` and `vo` prescribe the spectra of
/// the composed per-head products; `ffn_in`/`ffn_out` those of the FFN weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    #[serde(rename = "L")]
    pub depth: usize,
    #[serde(rename = "N")]
    pub hidden: usize,
    #[serde(rename = "d_h")]
    pub head_dim: usize,
    #[serde(rename = "I")]
    pub intermediate: usize,
    pub qk: SpectrumLaw,
    pub vo: SpectrumLaw,
    pub ffn_in: SpectrumLaw,
    pub ffn_out: SpectrumLaw,
    pub seed: u64,
    #[serde(default = "default_dtype")]
    pub dtype: Dtype,
    #[serde(default)]
    pub prefix: String,
}

impl SynthSpec {
    /// Miniatures-like preset: d_h = 64, I = 4N, composed attention matrices of
    /// rank 64 and spectral norm 1, FFN power law with exponent 0.7, F32 payload.
    pub fn miniatures(depth: usize, hidden: usize, seed: u64) -> Self {
        let att = SpectrumLaw::ExactRank { r: 64, sigma: 1.0 };
        let ffn = SpectrumLaw::PowerLaw { sigma1: 16.0, beta: 0.7 };
        SynthSpec {
            depth,
            hidden,
            head_dim: 64,
            intermediate: 4 * hidden,
            qk: att,
            vo: att,
            ffn_in: ffn,
            ffn_out: ffn,
            seed,
            dtype: Dtype::F32,
            prefix: String::new(),
        }
    }

    pub fn heads(&self) -> usize {
        self.hidden / self.head_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.hidden == 0 || self.head_dim == 0 || self.intermediate == 0 {
            return Err(domain("synthetic dimensions must be positive"));
        }
        if !self.hidden.is_multiple_of(self.head_dim) {
            return Err(domain(format!("head dim {} does not divide hidden size {}", self.head_dim, self.hidden)));
        }
        self.qk.validate("qk", self.head_dim)?;
        self.vo.validate("vo", self.head_dim)?;
        let r = self.hidden.min(self.intermediate);
        self.ffn_in.validate("ffn_in", r)?;
        self.ffn_out.validate("ffn_out", r)
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
}

/// rows x k matrix with orthonormal columns.
fn orthonormal(rng: &mut ChaCha8Rng, rows: usize, k: usize) -> DMatrix<f64> {
    if k == 0 {
        return DMatrix::zeros(rows, 0);
    }
    gaussian(rng, rows, k, 1.0).qr().q().columns(0, k).into_owned()
}

/// Pair (A, B) with A (rows x inner), B (inner x cols) and A B = U diag(sigma) V^T.
fn factor_pair(rng: &mut ChaCha8Rng, law: &SpectrumLaw, rows: usize, inner: usize, cols: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    if let SpectrumLaw::Gaussian { scale } = *law {
        return (gaussian(rng, rows, inner, scale), gaussian(rng, inner, cols, scale));
    }
    let s = law.values(inner);
    let r = s.len();
    let root = DVector::from_iterator(r, s.iter().map(|v| v.sqrt()));
    let u = orthonormal(rng, rows, r);
    let w = orthonormal(rng, inner, r);
    let v = orthonormal(rng, cols, r);
    let d = DMatrix::from_diagonal(&root);
    (&u * &d * w.transpose(), &w * &d * v.transpose())
}

/// Single matrix U diag(sigma) V^T of shape rows x cols.
fn factor_single(rng: &mut ChaCha8Rng, law: &SpectrumLaw, rows: usize, cols: usize) -> DMatrix<f64> {
    if let SpectrumLaw::Gaussian { scale } = *law {
        return gaussian(rng, rows, cols, scale);
    }
    let s = law.values(rows.min(cols));
    let u = orthonormal(rng, rows, s.len());
    let v = orthonormal(rng, cols, s.len());
    &u * DMatrix::from_diagonal(&DVector::from_vec(s)) * v.transpose()
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

struct LayerTensors {
    query: DMatrix<f64>,
    key: DMatrix<f64>,
    value: DMatrix<f64>,
    output: DMatrix<f64>,
    intermediate: DMatrix<f64>,
    ffn_output: DMatrix<f64>,
}

/// Stored (out, in) tensors of one layer, using an independent RNG stream.
fn synth_layer(spec: &SynthSpec, layer: usize) -> LayerTensors {
    let (n, dh, i) = (spec.hidden, spec.head_dim, spec.intermediate);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(layer as u64);
    let mut query = DMatrix::zeros(n, n);
    let mut key = DMatrix::zeros(n, n);
    let mut value = DMatrix::zeros(n, n);
    let mut output = DMatrix::zeros(n, n);
    for h in 0..spec.heads() {
        let c = h * dh;
        // Composed W_qk = q_h^T k_h: q_h^T is N x d_h and k_h is d_h x N.
        let (qt, k) = factor_pair(&mut rng, &spec.qk, n, dh, n);
        query.rows_mut(c, dh).copy_from(&qt.transpose());
        key.rows_mut(c, dh).copy_from(&k);
        // Composed W_vtilde = v_h o_h: v_h is N x d_h and o_h is d_h x N.
        let (v, o) = factor_pair(&mut rng, &spec.vo, n, dh, n);
        value.rows_mut(c, dh).copy_from(&v.transpose());
        output.columns_mut(c, dh).copy_from(&o.transpose());
    }
    let w_in = factor_single(&mut rng, &spec.ffn_in, n, i);
    let w_out = factor_single(&mut rng, &spec.ffn_out, i, n);
    LayerTensors { query, key, value, output, intermediate: w_in.transpose(), ffn_output: w_out.transpose() }
}

/// Generates the checkpoint in stored BERT layout; deterministic in the spec.
pub fn synth_checkpoint(spec: &SynthSpec) -> Result<TensorTable> {
    spec.validate()?;
    let layers: Vec<LayerTensors> = (0..spec.depth).into_par_iter().map(|l| synth_layer(spec, l)).collect();
    let naming = BertNaming::new(spec.prefix.clone());
    let mut table = TensorTable::new();
    for (l, t) in layers.iter().enumerate() {
        for (name, m) in [
            (naming.query(l), &t.query),
            (naming.key(l), &t.key),
            (naming.value(l), &t.value),
            (naming.attention_output(l), &t.output),
            (naming.intermediate(l), &t.intermediate),
            (naming.output(l), &t.ffn_output),
        ] {
            table.insert(&name, spec.dtype, &[m.nrows(), m.ncols()], &row_major(m))?;
        }
    }
    let mut meta = BTreeMap::new();
    meta.insert("format".to_string(), "pt".to_string());
    meta.insert("synth_spec".to_string(), serde_json::to_string(spec).expect("spec serializes"));
    table.set_metadata(Some(meta));
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::map_bert_layout;
    use crate::spectral::spectrum;

    fn small(dtype: Dtype) -> SynthSpec {
        SynthSpec {
            depth: 2,
            hidden: 32,
            head_dim: 8,
            intermediate: 64,
            qk: SpectrumLaw::ExactRank { r: 8, sigma: 1.0 },
            vo: SpectrumLaw::PowerLaw { sigma1: 2.0, beta: 0.5 },
            ffn_in: SpectrumLaw::ExactRank { r: 8, sigma: 1.0 },
            ffn_out: SpectrumLaw::PowerLaw { sigma1: 1.0, beta: 0.7 },
            seed: 7,
            dtype,
            prefix: String::new(),
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let a = synth_checkpoint(&small(Dtype::F32)).unwrap();
        let b = synth_checkpoint(&small(Dtype::F32)).unwrap();
        assert_eq!(a, b);
        let mut s = small(Dtype::F32);
        s.seed = 8;
        assert_ne!(a.payload(), synth_checkpoint(&s).unwrap().payload());
    }

    #[test]
    fn ffn_exact_rank_is_recovered() {
        let t = synth_checkpoint(&small(Dtype::F64)).unwrap();
        let ck = map_bert_layout(&t, &BertNaming::default(), 8).unwrap();
        let sp = spectrum(&ck.layers()[0].ffn_in);
        assert_eq!(sp.rank(), 8);
        assert!((sp.spectral_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn composed_spectra_are_recovered() {
        let spec = small(Dtype::F64);
        let t = synth_checkpoint(&spec).unwrap();
        let ck = map_bert_layout(&t, &BertNaming::default(), 8).unwrap();
        let want_vo = spec.vo.values(8);
        for layer in ck.layers() {
            for h in &layer.heads {
                let qk = spectrum(&h.qk()).values().to_vec();
                assert!(qk[..8].iter().all(|s| (s - 1.0).abs() < 1e-9));
                assert!(qk[8..].iter().all(|s| s.abs() < 1e-9));
                let vo = spectrum(&h.vo()).values().to_vec();
                for (a, b) in vo.iter().zip(&want_vo) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
            let out = spectrum(&layer.ffn_out).values().to_vec();
            for (i, s) in out.iter().enumerate() {
                assert!((s / out[0] - ((i + 1) as f64).powf(-0.7)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = small(Dtype::F32);
        s.head_dim = 5;
        assert!(synth_checkpoint(&s).is_err());
        let mut s = small(Dtype::F32);
        s.qk = SpectrumLaw::ExactRank { r: 9, sigma: 1.0 };
        assert!(synth_checkpoint(&s).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let s = SynthSpec::miniatures(2, 128, 1);
        let j = serde_json::to_string(&s).unwrap();
        assert!(j.contains("\"law\":\"exact_rank\""));
        assert_eq!(serde_json::from_str::<SynthSpec>(&j).unwrap(), s);
    }
}
