//! BERT-adapted proxies: headwise composition, propagation and local factors,
//! B_ours, B_Edelman, normalized scaling curves and p-sweep diagnostics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, input, shape, Result};
use crate::posthoc::{argmin_choice, matrix_term, penalty_omega, GridChoice, IndexGrid};
use crate::spectral::{default_rank_tol, frobenius_norm, mixed_norm, schatten_power, singular_values, Matrix, Spectrum};

/// Matrix family of a BERT encoder layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BertKind {
    #[serde(rename = "QK")]
    Qk,
    #[serde(rename = "VO")]
    Vo,
    #[serde(rename = "FFN_in")]
    FfnIn,
    #[serde(rename = "FFN_out")]
    FfnOut,
}

impl BertKind {
    pub fn label(self) -> &'static str {
        match self {
            BertKind::Qk => "QK",
            BertKind::Vo => "VO",
            BertKind::FfnIn => "FFN_in",
            BertKind::FfnOut => "FFN_out",
        }
    }
}

/// Per-head factors in row-vector orientation: q, k, o are d_h x N, v is N x d_h.
#[derive(Clone, Debug)]
pub struct BertHead {
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
    pub o: Matrix,
}

impl BertHead {
    pub fn new(q: Matrix, k: Matrix, v: Matrix, o: Matrix) -> Result<Self> {
        let (dh, n) = q.shape();
        for (name, m, want) in [("key", &k, (dh, n)), ("value", &v, (n, dh)), ("output", &o, (dh, n))] {
            if m.shape() != want {
                return Err(shape(format!("{name} slice is {:?}, expected {want:?}", m.shape())));
            }
        }
        Ok(BertHead { q, k, v, o })
    }

    /// (W^Q)^T W^K, N x N.
    pub fn qk(&self) -> Matrix {
        Matrix::wrap(self.q.as_dmatrix().transpose() * self.k.as_dmatrix())
    }

    /// W^V W^O, N x N.
    pub fn vo(&self) -> Matrix {
        Matrix::wrap(self.v.as_dmatrix() * self.o.as_dmatrix())
    }
}

/// Composes one head: W_qk = q^T k and W_vtilde = v o.
pub fn compose_head(q: &Matrix, k: &Matrix, v: &Matrix, o: &Matrix) -> Result<(Matrix, Matrix)> {
    let h = BertHead::new(q.clone(), k.clone(), v.clone(), o.clone())?;
    Ok((h.qk(), h.vo()))
}

/// Splits oriented N x N projections (acting as X W) into heads of width d_h.
pub fn split_heads(query: &Matrix, key: &Matrix, value: &Matrix, output: &Matrix, head_dim: usize) -> Result<Vec<BertHead>> {
    let n = query.rows();
    for (name, m) in [("query", query), ("key", key), ("value", value), ("output", output)] {
        if m.shape() != (n, n) {
            return Err(shape(format!("{name} projection is {:?}, expected ({n}, {n})", m.shape())));
        }
    }
    if head_dim == 0 || !n.is_multiple_of(head_dim) {
        return Err(shape(format!("hidden size {n} is not divisible by head dim {head_dim}")));
    }
    let (q, k, v, o) = (query.as_dmatrix(), key.as_dmatrix(), value.as_dmatrix(), output.as_dmatrix());
    (0..n / head_dim)
        .map(|h| {
            let c = h * head_dim;
            BertHead::new(
                Matrix::wrap(q.columns(c, head_dim).transpose()),
                Matrix::wrap(k.columns(c, head_dim).transpose()),
                Matrix::wrap(v.columns(c, head_dim).into_owned()),
                Matrix::wrap(o.rows(c, head_dim).into_owned()),
            )
        })
        .collect()
}

/// Per-head composed (W_qk, W_vtilde) from oriented layer projections.
pub fn compose_heads(query: &Matrix, key: &Matrix, value: &Matrix, output: &Matrix, head_dim: usize) -> Result<Vec<(Matrix, Matrix)>> {
    Ok(split_heads(query, key, value, output, head_dim)?.iter().map(|h| (h.qk(), h.vo())).collect())
}

/// One encoder layer: heads plus FFN in (N x I) and out (I x N).
#[derive(Clone, Debug)]
pub struct BertLayer {
    pub heads: Vec<BertHead>,
    pub ffn_in: Matrix,
    pub ffn_out: Matrix,
}

/// Encoder weights in row-vector orientation; composed matrices are built on demand.
#[derive(Clone, Debug)]
pub struct BertCheckpoint {
    depth: usize,
    hidden: usize,
    heads: usize,
    head_dim: usize,
    intermediate: usize,
    layers: Vec<BertLayer>,
}

impl BertCheckpoint {
    pub fn new(layers: Vec<BertLayer>) -> Result<Self> {
        let first = layers.first().ok_or_else(|| input("checkpoint has no layers"))?;
        let heads = first.heads.len();
        if heads == 0 {
            return Err(input("layer has no attention heads"));
        }
        let (head_dim, hidden) = first.heads[0].q.shape();
        let intermediate = first.ffn_in.cols();
        for (i, l) in layers.iter().enumerate() {
            if l.heads.len() != heads {
                return Err(shape(format!("layer {i} has {} heads, expected {heads}", l.heads.len())));
            }
            if l.heads.iter().any(|h| h.q.shape() != (head_dim, hidden)) {
                return Err(shape(format!("layer {i} has inconsistent head shapes")));
            }
            if l.ffn_in.shape() != (hidden, intermediate) || l.ffn_out.shape() != (intermediate, hidden) {
                return Err(shape(format!("layer {i} has inconsistent FFN shapes")));
            }
        }
        if heads * head_dim != hidden {
            return Err(shape(format!("{heads} heads of width {head_dim} do not cover hidden size {hidden}")));
        }
        Ok(BertCheckpoint { depth: layers.len(), hidden, heads, head_dim, intermediate, layers })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }
    pub fn hidden(&self) -> usize {
        self.hidden
    }
    pub fn heads(&self) -> usize {
        self.heads
    }
    pub fn head_dim(&self) -> usize {
        self.head_dim
    }
    pub fn intermediate(&self) -> usize {
        self.intermediate
    }
    pub fn layers(&self) -> &[BertLayer] {
        &self.layers
    }
}

/// Spectrum and norms of one analysed matrix; `layer` is 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub layer: usize,
    pub kind: BertKind,
    pub head: Option<usize>,
    pub rows: usize,
    pub cols: usize,
    pub spectrum: Spectrum,
    pub spectral_norm: f64,
    pub frobenius: f64,
    /// (2,1)-norm; measured on the transpose for QK.
    pub mixed21: f64,
    pub mixed11: f64,
}

impl MatrixRecord {
    pub fn name(&self) -> String {
        match self.head {
            Some(h) => format!("layer{}.{}.head{}", self.layer, self.kind.label(), h),
            None => format!("layer{}.{}", self.layer, self.kind.label()),
        }
    }
}

/// Measured spectra and norms for every matrix, ordered (layer, kind, head).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointAnalysis {
    pub depth: usize,
    pub hidden: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub intermediate: usize,
    /// Overriding relative rank tolerance; None means the per-shape default.
    pub rank_tol: Option<f64>,
    pub records: Vec<MatrixRecord>,
}

#[derive(Clone, Copy)]
enum Job {
    Qk(usize, usize),
    Vo(usize, usize),
    FfnIn(usize),
    FfnOut(usize),
}

fn measure(layer: usize, kind: BertKind, head: Option<usize>, m: &Matrix, rank_tol: Option<f64>) -> Result<MatrixRecord> {
    let tol = rank_tol.unwrap_or_else(|| default_rank_tol(m.rows(), m.cols()));
    let spectrum = singular_values(m, tol)?;
    let mixed21 = if kind == BertKind::Qk { mixed_norm(&m.transpose(), 2.0, 1.0)? } else { mixed_norm(m, 2.0, 1.0)? };
    Ok(MatrixRecord {
        layer,
        kind,
        head,
        rows: m.rows(),
        cols: m.cols(),
        spectral_norm: spectrum.spectral_norm(),
        spectrum,
        frobenius: frobenius_norm(m),
        mixed21,
        mixed11: mixed_norm(m, 1.0, 1.0)?,
    })
}

/// Runs all SVDs and norm computations in parallel.
pub fn analyze_checkpoint(ckpt: &BertCheckpoint, rank_tol: Option<f64>) -> Result<CheckpointAnalysis> {
    if let Some(t) = rank_tol {
        if !(t > 0.0 && t < 1.0) {
            return Err(domain(format!("rank_tol must lie in (0, 1), got {t}")));
        }
    }
    let mut jobs = Vec::new();
    for l in 0..ckpt.depth {
        jobs.extend((0..ckpt.heads).map(|h| Job::Qk(l, h)));
        jobs.extend((0..ckpt.heads).map(|h| Job::Vo(l, h)));
        jobs.push(Job::FfnIn(l));
        jobs.push(Job::FfnOut(l));
    }
    let records = jobs
        .par_iter()
        .map(|&job| match job {
            Job::Qk(l, h) => measure(l + 1, BertKind::Qk, Some(h), &ckpt.layers[l].heads[h].qk(), rank_tol),
            Job::Vo(l, h) => measure(l + 1, BertKind::Vo, Some(h), &ckpt.layers[l].heads[h].vo(), rank_tol),
            Job::FfnIn(l) => measure(l + 1, BertKind::FfnIn, None, &ckpt.layers[l].ffn_in, rank_tol),
            Job::FfnOut(l) => measure(l + 1, BertKind::FfnOut, None, &ckpt.layers[l].ffn_out, rank_tol),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CheckpointAnalysis {
        depth: ckpt.depth,
        hidden: ckpt.hidden,
        heads: ckpt.heads,
        head_dim: ckpt.head_dim,
        intermediate: ckpt.intermediate,
        rank_tol,
        records,
    })
}

/// Spectral norms of one layer's matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpectralNorms {
    pub qk: Vec<f64>,
    pub vo: Vec<f64>,
    pub ffn_in: f64,
    pub ffn_out: f64,
}

impl CheckpointAnalysis {
    pub fn layer_norms(&self) -> Vec<LayerSpectralNorms> {
        let mut out: Vec<LayerSpectralNorms> = (0..self.depth)
            .map(|_| LayerSpectralNorms { qk: vec![0.0; self.heads], vo: vec![0.0; self.heads], ffn_in: 0.0, ffn_out: 0.0 })
            .collect();
        for r in &self.records {
            let l = &mut out[r.layer - 1];
            match r.kind {
                BertKind::Qk => l.qk[r.head.expect("head")] = r.spectral_norm,
                BertKind::Vo => l.vo[r.head.expect("head")] = r.spectral_norm,
                BertKind::FfnIn => l.ffn_in = r.spectral_norm,
                BertKind::FfnOut => l.ffn_out = r.spectral_norm,
            }
        }
        out
    }

    /// Same spectra under a different rank tolerance.
    pub fn with_rank_tol(&self, rank_tol: f64) -> Result<CheckpointAnalysis> {
        let mut out = self.clone();
        for r in &mut out.records {
            r.spectrum = r.spectrum.with_rank_tol(rank_tol)?;
        }
        out.rank_tol = Some(rank_tol);
        Ok(out)
    }
}

/// L_phi C_in C_out sum_h C_vo (1 + 4 C_qk) for one layer.
pub fn bert_layer_factor(n: &LayerSpectralNorms, l_phi: f64) -> f64 {
    let heads: f64 = n.vo.iter().zip(&n.qk).map(|(v, q)| v * (1.0 + 4.0 * q)).sum();
    l_phi * n.ffn_in * n.ffn_out * heads
}

/// alpha~^(ell) for 1-based ell; the empty product is 1.
pub fn bert_alpha(ell: usize, norms: &[LayerSpectralNorms], l_phi: f64) -> Result<f64> {
    if ell == 0 || ell > norms.len() {
        return Err(domain(format!("layer index {ell} outside 1..={}", norms.len())));
    }
    let mut acc = 1.0;
    for k in (ell + 1..=norms.len()).rev() {
        acc *= bert_layer_factor(&norms[k - 1], l_phi);
    }
    Ok(acc)
}

pub fn bert_alphas(norms: &[LayerSpectralNorms], l_phi: f64) -> Vec<f64> {
    (1..=norms.len()).map(|l| bert_alpha(l, norms, l_phi).expect("in range")).collect()
}

/// gamma~ for a matrix of the layer; `head` is required for QK and VO.
pub fn bert_gamma(kind: BertKind, head: Option<usize>, n: &LayerSpectralNorms) -> Result<f64> {
    let need_head = || head.ok_or_else(|| input(format!("{} needs a head index", kind.label())));
    Ok(match kind {
        BertKind::Qk => {
            let h = need_head()?;
            2.0 * n.vo.get(h).ok_or_else(|| input("head out of range"))? * n.ffn_out * n.ffn_in
        }
        BertKind::Vo => {
            need_head()?;
            n.ffn_out * n.ffn_in
        }
        BertKind::FfnIn => n.ffn_out,
        BertKind::FfnOut => 1.0,
    })
}

/// (S)^{1/(p+2)} (gamma alpha L)^{p/(p+2)} N^{(p+1)/(p+2)}.
pub fn bert_matrix_term(schatten_power: f64, p: f64, alpha: f64, gamma: f64, hidden: usize, depth: usize) -> f64 {
    matrix_term(schatten_power, p, gamma * alpha * depth as f64, hidden as f64)
}

/// Architectural factor gamma~ alpha~ L of every record, in record order.
pub fn arch_factors(a: &CheckpointAnalysis, l_phi: f64) -> Vec<f64> {
    let norms = a.layer_norms();
    let alphas = bert_alphas(&norms, l_phi);
    a.records
        .iter()
        .map(|r| {
            let g = bert_gamma(r.kind, r.head, &norms[r.layer - 1]).expect("records carry heads");
            g * alphas[r.layer - 1] * a.depth as f64
        })
        .collect()
}

/// Selected index and term of one matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BertChoice {
    pub layer: usize,
    pub kind: BertKind,
    pub head: Option<usize>,
    pub p: f64,
    pub schatten_power: f64,
    pub arch_factor: f64,
    pub term: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BOurs {
    /// inf over the grid of the complexity, plus sqrt(L).
    pub value: f64,
    /// Grid infimum of the complexity (sum of the per-matrix terms).
    pub complexity: f64,
    pub m: u32,
    pub choices: Vec<BertChoice>,
}

/// B_ours with per-matrix grid minimisation; m defaults to ceil(L + log N).
pub fn b_ours(a: &CheckpointAnalysis, m: Option<u32>, l_phi: f64) -> Result<BOurs> {
    let grid = match m {
        Some(m) => IndexGrid::new(m)?,
        None => IndexGrid::default_for(a.depth as u64, a.hidden as u64),
    };
    let arch = arch_factors(a, l_phi);
    let hidden = a.hidden as f64;
    let values = grid.values();
    let choices: Vec<BertChoice> = a
        .records
        .par_iter()
        .zip(arch.par_iter())
        .map(|(r, &h)| {
            let all: Vec<GridChoice> = values
                .iter()
                .map(|&p| {
                    let sp = schatten_power(&r.spectrum, p).expect("grid in range");
                    GridChoice { p, schatten_power: sp, term: matrix_term(sp, p, h, hidden) }
                })
                .collect();
            let c = argmin_choice(&all);
            BertChoice {
                layer: r.layer,
                kind: r.kind,
                head: r.head,
                p: c.p,
                schatten_power: c.schatten_power,
                arch_factor: h,
                term: c.term,
            }
        })
        .collect();
    let complexity: f64 = choices.iter().map(|c| c.term).sum();
    Ok(BOurs { value: complexity + (a.depth as f64).sqrt(), complexity, m: grid.m(), choices })
}

/// Penalty over every BERT matrix at the selected indices.
pub fn bert_omega(b: &BOurs) -> Result<f64> {
    let powers: Vec<f64> = b.choices.iter().map(|c| c.schatten_power).collect();
    penalty_omega(&powers, b.m)
}

/// max over nonzero matrices of |log ||W||_2| + |log(gamma~ alpha~)|.
pub fn bert_chi(a: &CheckpointAnalysis, l_phi: f64) -> f64 {
    let arch = arch_factors(a, l_phi);
    a.records
        .iter()
        .zip(arch)
        .filter(|(r, _)| r.spectral_norm > 0.0)
        .map(|(r, h)| {
            let ga = h / a.depth as f64;
            r.spectral_norm.ln().abs() + if ga > 0.0 { ga.ln().abs() } else { 0.0 }
        })
        .fold(0.0, f64::max)
}

/// (1 + sum_ell alpha~^{2/3} xi~^(ell))^{3/2}.
pub fn b_edelman(a: &CheckpointAnalysis, l_phi: f64) -> f64 {
    let parts = a.records.iter().map(|r| (r.layer, r.kind, r.head, r.mixed21));
    b_edelman_from_parts(&a.layer_norms(), parts, l_phi)
}

/// B_Edelman from per-layer spectral norms and per-matrix (layer, kind, head, ||W||_{2,1}).
pub fn b_edelman_from_parts(
    norms: &[LayerSpectralNorms],
    parts: impl IntoIterator<Item = (usize, BertKind, Option<usize>, f64)>,
    l_phi: f64,
) -> f64 {
    let alphas = bert_alphas(norms, l_phi);
    let t = 2.0 / 3.0;
    let mut xi = vec![0.0; norms.len()];
    for (layer, kind, head, mixed21) in parts {
        let n = &norms[layer - 1];
        let (cin, cout) = (n.ffn_in, n.ffn_out);
        xi[layer - 1] += match kind {
            BertKind::Qk => (cout * cin * n.vo[head.expect("head")] * mixed21).powf(t),
            BertKind::Vo => (cout * cin * mixed21).powf(t),
            BertKind::FfnIn => (cout * mixed21).powf(t),
            BertKind::FfnOut => mixed21.powf(t),
        };
    }
    let s: f64 = alphas.iter().zip(&xi).map(|(al, x)| al.powf(t) * x).sum();
    (1.0 + s).powf(1.5)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub depth: usize,
    pub hidden: usize,
    pub raw: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingCurve {
    pub points: Vec<CurvePoint>,
    pub normalized: Vec<f64>,
    pub base_index: usize,
}

/// Divides every value by the value at the smallest (L, N) point.
pub fn normalize_curves(points: &[CurvePoint]) -> Result<ScalingCurve> {
    let min_l = points.iter().map(|p| p.depth).min().ok_or_else(|| input("no curve points"))?;
    let min_n = points.iter().map(|p| p.hidden).min().expect("nonempty");
    let base_index = points
        .iter()
        .position(|p| p.depth == min_l && p.hidden == min_n)
        .ok_or_else(|| input(format!("missing base point (L = {min_l}, N = {min_n})")))?;
    let base = points[base_index].raw;
    if !(base.is_finite() && base != 0.0) {
        return Err(domain("base value must be finite and nonzero"));
    }
    let normalized = points.iter().map(|p| if p.raw == base { 1.0 } else { p.raw / base }).collect();
    Ok(ScalingCurve { points: points.to_vec(), normalized, base_index })
}

/// term(p)/term(0) over a grid for one matrix; None for zero matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub layer: usize,
    pub kind: BertKind,
    pub head: Option<usize>,
    pub p: Vec<f64>,
    pub ratio: Option<Vec<f64>>,
}

pub fn p_sweep_diagnostic(a: &CheckpointAnalysis, p_grid: &[f64], l_phi: f64) -> Result<Vec<SweepCurve>> {
    if let Some(p) = p_grid.iter().find(|p| !(0.0..=2.0).contains(*p)) {
        return Err(domain(format!("p must lie in [0, 2], got {p}")));
    }
    let arch = arch_factors(a, l_phi);
    let hidden = a.hidden as f64;
    Ok(a.records
        .iter()
        .zip(arch)
        .map(|(r, h)| {
            let t0 = matrix_term(schatten_power(&r.spectrum, 0.0).expect("p = 0"), 0.0, h, hidden);
            let ratio = (t0 > 0.0).then(|| {
                p_grid
                    .iter()
                    .map(
                        |&p| {
                            if p == 0.0 {
                                1.0
                            } else {
                                matrix_term(schatten_power(&r.spectrum, p).expect("in range"), p, h, hidden) / t0
                            }
                        },
                    )
                    .collect()
            });
            SweepCurve { layer: r.layer, kind: r.kind, head: r.head, p: p_grid.to_vec(), ratio }
        })
        .collect())
}

/// Spectra of every analysed matrix in report order.
pub fn spectra_dump(a: &CheckpointAnalysis) -> Vec<(&MatrixRecord, &Spectrum)> {
    a.records.iter().map(|r| (r, &r.spectrum)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::spectrum;

    fn norms(heads: usize, v: f64) -> LayerSpectralNorms {
        LayerSpectralNorms { qk: vec![v; heads], vo: vec![v; heads], ffn_in: v, ffn_out: v }
    }

    #[test]
    fn compose_identity_blocks() {
        let (dh, n) = (2, 5);
        let sel = Matrix::from_fn(dh, n, |i, j| if i == j { 1.0 } else { 0.0 }).unwrap();
        let v = Matrix::zeros(n, dh);
        let (qk, vo) = compose_head(&sel, &sel, &v, &sel).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(qk.get(i, j), if i == j && i < dh { 1.0 } else { 0.0 });
            }
        }
        assert!(vo.is_zero());
        assert!(compose_head(&sel, &Matrix::zeros(dh, n + 1), &v, &sel).is_err());
    }

    #[test]
    fn alpha_examples() {
        let ns = vec![norms(2, 1.0), norms(2, 1.0)];
        assert_eq!(bert_alpha(2, &ns, 1.13).unwrap(), 1.0);
        assert!((bert_alpha(1, &ns, 1.13).unwrap() - 10.0 * 1.13).abs() < 1e-12);
        assert!(bert_alpha(3, &ns, 1.0).is_err());
    }

    #[test]
    fn gamma_and_term_examples() {
        let n = norms(1, 1.0);
        assert_eq!(bert_gamma(BertKind::FfnOut, None, &n).unwrap(), 1.0);
        assert_eq!(bert_gamma(BertKind::Qk, Some(0), &n).unwrap(), 2.0);
        assert!(bert_gamma(BertKind::Qk, None, &n).is_err());
        let t = bert_matrix_term(64.0, 0.0, 123.0, 7.0, 128, 4);
        assert!((t - (64.0f64 * 128.0).sqrt()).abs() < 1e-12 && (t - 90.51).abs() < 1e-2);
    }

    fn ckpt_from(layers: Vec<(Vec<BertHead>, Matrix, Matrix)>) -> BertCheckpoint {
        BertCheckpoint::new(layers.into_iter().map(|(heads, ffn_in, ffn_out)| BertLayer { heads, ffn_in, ffn_out }).collect()).unwrap()
    }

    #[test]
    fn zero_checkpoint() {
        let (dh, n, i) = (2, 2, 8);
        let head = BertHead::new(Matrix::zeros(dh, n), Matrix::zeros(dh, n), Matrix::zeros(n, dh), Matrix::zeros(dh, n)).unwrap();
        let c = ckpt_from(vec![(vec![head], Matrix::zeros(n, i), Matrix::zeros(i, n))]);
        let a = analyze_checkpoint(&c, None).unwrap();
        let b = b_ours(&a, None, 1.13).unwrap();
        assert_eq!(b.complexity, 0.0);
        assert_eq!(b.value, 1.0);
        assert_eq!(b_edelman(&a, 1.13), 1.0);
        let sweep = p_sweep_diagnostic(&a, &[0.0, 1.0], 1.13).unwrap();
        assert!(sweep.iter().all(|s| s.ratio.is_none()));
    }

    #[test]
    fn edelman_unit_norms() {
        // One head: composed QK and VO are 1x1 identities; FFN 1x1 identities.
        let one = || Matrix::identity(1);
        let head = BertHead::new(one(), one(), one(), one()).unwrap();
        let c = ckpt_from(vec![(vec![head], one(), one())]);
        let a = analyze_checkpoint(&c, None).unwrap();
        assert!((b_edelman(&a, 1.0) - 5f64.powf(1.5)).abs() < 1e-12);
    }

    #[test]
    fn normalization() {
        let pts = [CurvePoint { depth: 2, hidden: 128, raw: 2.0 }, CurvePoint { depth: 4, hidden: 128, raw: 6.0 }];
        let c = normalize_curves(&pts).unwrap();
        assert_eq!(c.normalized, vec![1.0, 3.0]);
        let single = normalize_curves(&pts[1..]).unwrap();
        assert_eq!(single.normalized, vec![1.0]);
        let bad = [CurvePoint { depth: 2, hidden: 256, raw: 2.0 }, CurvePoint { depth: 4, hidden: 128, raw: 6.0 }];
        assert!(normalize_curves(&bad).is_err());
    }

    #[test]
    fn flat_spectrum_sweep_constant() {
        let n = 4;
        let eye = Matrix::identity(n);
        let head = BertHead::new(eye.clone(), eye.clone(), eye.clone(), eye.clone()).unwrap();
        let c = ckpt_from(vec![(vec![head], eye.clone(), eye.clone())]);
        let a = analyze_checkpoint(&c, None).unwrap();
        let sweep = p_sweep_diagnostic(&a, &[0.0, 0.5, 1.0, 2.0], 1.0).unwrap();
        let ffn_out = sweep.iter().find(|s| s.kind == BertKind::FfnOut).unwrap();
        for r in ffn_out.ratio.as_ref().unwrap() {
            assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn split_heads_matches_manual_slices() {
        let n = 4;
        let q = Matrix::from_fn(n, n, |i, j| (i * n + j) as f64 * 0.1).unwrap();
        let k = Matrix::from_fn(n, n, |i, j| (i as f64 - j as f64) * 0.2).unwrap();
        let heads = split_heads(&q, &k, &q, &k, 2).unwrap();
        assert_eq!(heads.len(), 2);
        let qc = q.as_dmatrix().columns(2, 2).into_owned();
        let kc = k.as_dmatrix().columns(2, 2).into_owned();
        let want = &qc * kc.transpose();
        assert!((heads[1].qk().as_dmatrix() - want).norm() < 1e-14);
        assert!(split_heads(&q, &k, &q, &k, 3).is_err());
        assert_eq!(spectrum(&heads[0].qk()).values().len(), n);
    }
}
