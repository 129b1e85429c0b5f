//! Simplified single-head Transformer used as a numerical oracle for the
//! Lipschitz and propagation inequalities.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{input, shape, Result};
use crate::spectral::{spectrum, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Relu,
    Gelu,
}

/// Elementwise activation with its Lipschitz constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Activation {
    pub kind: ActivationKind,
    pub lipschitz: f64,
}

impl Activation {
    pub fn relu() -> Self {
        Activation { kind: ActivationKind::Relu, lipschitz: 1.0 }
    }

    /// Exact Gaussian-CDF GELU with the fixed constant 1.13.
    pub fn gelu() -> Self {
        Activation { kind: ActivationKind::Gelu, lipschitz: 1.13 }
    }

    pub fn from_kind(kind: ActivationKind) -> Self {
        match kind {
            ActivationKind::Relu => Self::relu(),
            ActivationKind::Gelu => Self::gelu(),
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::Gelu => 0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2)),
        }
    }
}

/// One layer's (W_qk, W_v, W_m), each N x N.
#[derive(Clone, Debug)]
pub struct LayerWeights {
    pub qk: Matrix,
    pub v: Matrix,
    pub m: Matrix,
}

/// Per-layer spectral radii (C_2^QK, C_2^V, C_2^M).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralRadii {
    pub qk: f64,
    pub v: f64,
    pub m: f64,
}

/// Weights of the L-layer scalar-output model with recorded spectral radii.
#[derive(Clone, Debug)]
pub struct TheoryWeights {
    layers: Vec<LayerWeights>,
    radii: Vec<SpectralRadii>,
    readout: DVector<f64>,
    cls_index: usize,
}

impl TheoryWeights {
    /// Records the measured spectral norms as the radii.
    pub fn new(layers: Vec<LayerWeights>, readout: Vec<f64>, cls_index: usize) -> Result<Self> {
        let radii = layers
            .iter()
            .map(|l| SpectralRadii {
                qk: spectrum(&l.qk).spectral_norm(),
                v: spectrum(&l.v).spectral_norm(),
                m: spectrum(&l.m).spectral_norm(),
            })
            .collect();
        Self::with_radii(layers, radii, readout, cls_index)
    }

    /// Uses prescribed radii, which must dominate the measured spectral norms.
    pub fn with_radii(layers: Vec<LayerWeights>, radii: Vec<SpectralRadii>, readout: Vec<f64>, cls_index: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(input("at least one layer is required"));
        }
        if radii.len() != layers.len() {
            return Err(shape(format!("{} radii for {} layers", radii.len(), layers.len())));
        }
        let n = layers[0].qk.rows();
        for (i, l) in layers.iter().enumerate() {
            for (name, w) in [("qk", &l.qk), ("v", &l.v), ("m", &l.m)] {
                if w.shape() != (n, n) {
                    return Err(shape(format!("layer {} {name}: expected {n}x{n}, got {}x{}", i + 1, w.rows(), w.cols())));
                }
            }
        }
        if readout.len() != n {
            return Err(shape(format!("readout has length {}, expected {n}", readout.len())));
        }
        if readout.iter().any(|x| !x.is_finite()) {
            return Err(input("readout has non-finite entries"));
        }
        for (i, (l, r)) in layers.iter().zip(&radii).enumerate() {
            for (name, w, c) in [("qk", &l.qk, r.qk), ("v", &l.v, r.v), ("m", &l.m, r.m)] {
                let s = spectrum(w).spectral_norm();
                if !(c.is_finite() && s <= c * (1.0 + 1e-12)) {
                    return Err(input(format!("layer {} {name}: spectral norm {s} exceeds radius {c}", i + 1)));
                }
            }
        }
        Ok(TheoryWeights { layers, radii, readout: DVector::from_vec(readout), cls_index })
    }

    pub fn layers(&self) -> &[LayerWeights] {
        &self.layers
    }

    pub fn radii(&self) -> &[SpectralRadii] {
        &self.radii
    }

    pub fn readout(&self) -> &[f64] {
        self.readout.as_slice()
    }

    /// C_2^out taken as the readout's Euclidean norm.
    pub fn readout_norm(&self) -> f64 {
        self.readout.norm()
    }

    pub fn cls_index(&self) -> usize {
        self.cls_index
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].qk.rows()
    }
}

/// Row-wise softmax with row-max stabilization.
pub fn softmax_rows(z: &Matrix) -> Matrix {
    let mut out = z.as_dmatrix().clone();
    for mut row in out.row_iter_mut() {
        let mx = row.max();
        row.apply(|x| *x = (*x - mx).exp());
        let s: f64 = row.sum();
        row /= s;
    }
    Matrix::wrap(out)
}

/// Softmax of a vector.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let mx = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Replaces each row r by r / max(1, ||r||_2).
pub fn project_rows(z: &Matrix) -> Matrix {
    let mut out = z.as_dmatrix().clone();
    for mut row in out.row_iter_mut() {
        let n = row.norm();
        if n > 1.0 {
            row /= n;
        }
    }
    Matrix::wrap(out)
}

fn check_square(name: &str, w: &Matrix, n: usize) -> Result<()> {
    if w.shape() != (n, n) {
        return Err(shape(format!("{name}: expected {n}x{n}, got {}x{}", w.rows(), w.cols())));
    }
    Ok(())
}

fn finite(m: DMatrix<f64>) -> Result<Matrix> {
    Matrix::from_dmatrix(m).map_err(|_| input("forward pass overflowed to a non-finite value"))
}

/// softmax_rows(X W_qk X^T) X W_v.
pub fn head_forward(x: &Matrix, w_qk: &Matrix, w_v: &Matrix) -> Result<Matrix> {
    let n = x.cols();
    check_square("W_qk", w_qk, n)?;
    check_square("W_v", w_v, n)?;
    let xd = x.as_dmatrix();
    let scores = finite(xd * w_qk.as_dmatrix() * xd.transpose())?;
    let attn = softmax_rows(&scores);
    finite(attn.as_dmatrix() * xd * w_v.as_dmatrix())
}

/// Pi(phi(Pi(head(X))) W_m).
pub fn block_forward(x: &Matrix, w_qk: &Matrix, w_v: &Matrix, w_m: &Matrix, act: Activation) -> Result<Matrix> {
    check_square("W_m", w_m, x.cols())?;
    let h = project_rows(&head_forward(x, w_qk, w_v)?);
    let a = h.as_dmatrix().map(|v| act.apply(v));
    Ok(project_rows(&finite(a * w_m.as_dmatrix())?))
}

/// Composition of all blocks.
pub fn transformer_forward(x: &Matrix, weights: &TheoryWeights, act: Activation) -> Result<Matrix> {
    if x.cols() != weights.hidden() {
        return Err(shape(format!("input has {} columns, model width is {}", x.cols(), weights.hidden())));
    }
    let mut z = x.clone();
    for l in weights.layers() {
        z = block_forward(&z, &l.qk, &l.v, &l.m, act)?;
    }
    Ok(z)
}

/// w^T (row cls_index of the final layer output).
pub fn scalar_output(x: &Matrix, weights: &TheoryWeights, act: Activation) -> Result<f64> {
    if weights.cls_index() >= x.rows() {
        return Err(input(format!("cls_index {} out of range for {} tokens", weights.cls_index(), x.rows())));
    }
    let z = transformer_forward(x, weights, act)?;
    let row = z.as_dmatrix().row(weights.cls_index());
    Ok(row.iter().zip(weights.readout()).map(|(a, b)| a * b).sum())
}
