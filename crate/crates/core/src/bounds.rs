//! Fixed-index formulas: propagation and local factors, covering-entropy
//! evaluators, radius allocation, the Dudley-type composition and the
//! general-p / common-p generalization-gap values.

use serde::{Deserialize, Serialize};

use crate::error::{domain, shape, Result};

/// Matrix type within a layer of the simplified model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MatrixKind {
    #[serde(rename = "QK")]
    Qk,
    #[serde(rename = "V")]
    V,
    #[serde(rename = "M")]
    M,
}

impl MatrixKind {
    pub const ALL: [MatrixKind; 3] = [MatrixKind::Qk, MatrixKind::V, MatrixKind::M];

    pub fn index(self) -> usize {
        match self {
            MatrixKind::Qk => 0,
            MatrixKind::V => 1,
            MatrixKind::M => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MatrixKind::Qk => "QK",
            MatrixKind::V => "V",
            MatrixKind::M => "M",
        }
    }
}

/// Every scalar the bounds depend on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundConfig {
    /// Sample size.
    pub n: u64,
    /// Token length.
    #[serde(rename = "T")]
    pub tokens: u64,
    /// Hidden dimension.
    #[serde(rename = "N")]
    pub hidden: u64,
    /// Depth.
    #[serde(rename = "L")]
    pub depth: u64,
    pub delta: f64,
    pub loss_lipschitz: f64,
    pub loss_bound: f64,
    pub readout_radius: f64,
    pub act_lipschitz: f64,
    pub input_row_bound: f64,
    pub univ_const: f64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig {
            n: 10_000,
            tokens: 128,
            hidden: 128,
            depth: 1,
            delta: 0.01,
            loss_lipschitz: 1.0,
            loss_bound: 1.0,
            readout_radius: 1.0,
            act_lipschitz: 1.13,
            input_row_bound: 1.0,
            univ_const: 1.0,
        }
    }
}

impl BoundConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(domain(format!("sample size n must be >= 3, got {}", self.n)));
        }
        if self.tokens == 0 || self.hidden == 0 || self.depth == 0 {
            return Err(domain("T, N and L must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(domain(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        for (name, v) in [
            ("loss_lipschitz", self.loss_lipschitz),
            ("loss_bound", self.loss_bound),
            ("readout_radius", self.readout_radius),
            ("act_lipschitz", self.act_lipschitz),
            ("input_row_bound", self.input_row_bound),
            ("univ_const", self.univ_const),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(domain(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    fn n_f(&self) -> f64 {
        self.n as f64
    }

    /// sqrt(log(nT)/n).
    pub fn complexity_scale(&self) -> f64 {
        ((self.n_f() * self.tokens as f64).ln() / self.n_f()).sqrt()
    }

    /// L_loss C_out (log n)^{3/2} / sqrt(n).
    pub fn readout_term(&self) -> f64 {
        self.loss_lipschitz * self.readout_radius * self.n_f().ln().powf(1.5) / self.n_f().sqrt()
    }

    /// B_loss sqrt(log(1/delta)/n).
    pub fn confidence_term(&self) -> f64 {
        self.loss_bound * ((1.0 / self.delta).ln() / self.n_f()).sqrt()
    }
}

/// Spectral radius, Schatten radius and Schatten index of one matrix class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRadius {
    pub spectral: f64,
    pub schatten: f64,
    pub p: f64,
}

impl MatrixRadius {
    pub fn new(spectral: f64, schatten: f64, p: f64) -> Self {
        MatrixRadius { spectral, schatten, p }
    }
}

/// Radii for all 3L matrices, indexed by 1-based layer and kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRadii {
    layers: Vec<[MatrixRadius; 3]>,
}

impl LayerRadii {
    pub fn new(layers: Vec<[MatrixRadius; 3]>) -> Result<Self> {
        if layers.is_empty() {
            return Err(shape("at least one layer is required"));
        }
        for (i, layer) in layers.iter().enumerate() {
            for (k, r) in MatrixKind::ALL.iter().zip(layer) {
                if !(r.spectral.is_finite() && r.spectral > 0.0) {
                    return Err(domain(format!("layer {} {}: spectral radius must be > 0", i + 1, k.label())));
                }
                if !(r.schatten.is_finite() && r.schatten >= 0.0) {
                    return Err(domain(format!("layer {} {}: Schatten radius must be >= 0", i + 1, k.label())));
                }
                if !(0.0..=2.0).contains(&r.p) {
                    return Err(domain(format!("layer {} {}: p must lie in [0, 2]", i + 1, k.label())));
                }
            }
        }
        Ok(LayerRadii { layers })
    }

    /// Same radius for every matrix.
    pub fn uniform(depth: usize, r: MatrixRadius) -> Result<Self> {
        Self::new(vec![[r; 3]; depth])
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[[MatrixRadius; 3]] {
        &self.layers
    }

    /// Radius at 1-based layer `ell`.
    pub fn get(&self, ell: usize, kind: MatrixKind) -> &MatrixRadius {
        &self.layers[ell - 1][kind.index()]
    }

    pub fn get_mut(&mut self, ell: usize, kind: MatrixKind) -> &mut MatrixRadius {
        &mut self.layers[ell - 1][kind.index()]
    }

    fn check_layer(&self, ell: usize) -> Result<()> {
        if ell == 0 || ell > self.depth() {
            return Err(domain(format!("layer index {ell} outside 1..={}", self.depth())));
        }
        Ok(())
    }

    /// L_phi C_M C_V (1 + 4 C_QK) at 1-based layer `k`.
    fn layer_lipschitz(&self, k: usize, l_phi: f64) -> f64 {
        let c = |kind| self.get(k, kind).spectral;
        l_phi * c(MatrixKind::M) * c(MatrixKind::V) * (1.0 + 4.0 * c(MatrixKind::Qk))
    }
}

/// alpha^(ell) = prod_{k>ell} L_phi C_M^(k) C_V^(k) (1 + 4 C_QK^(k)).
pub fn propagation_alpha(ell: usize, radii: &LayerRadii, l_phi: f64) -> Result<f64> {
    radii.check_layer(ell)?;
    let mut acc = 1.0;
    for k in (ell + 1..=radii.depth()).rev() {
        acc *= radii.layer_lipschitz(k, l_phi);
    }
    Ok(acc)
}

/// All alphas, index 0 holding layer 1.
pub fn propagation_alphas(radii: &LayerRadii, l_phi: f64) -> Vec<f64> {
    (1..=radii.depth()).map(|l| propagation_alpha(l, radii, l_phi).expect("in range")).collect()
}

/// Local factor gamma^{star,(ell)}; the input row bound enters only at layer 1.
pub fn gamma_factor(kind: MatrixKind, ell: usize, radii: &LayerRadii, cfg: &BoundConfig) -> Result<f64> {
    radii.check_layer(ell)?;
    let b = cfg.input_row_bound;
    let first = ell == 1;
    let cv = radii.get(ell, MatrixKind::V).spectral;
    let cm = radii.get(ell, MatrixKind::M).spectral;
    Ok(match kind {
        MatrixKind::Qk => 2.0 * cv * cm * if first { b.powi(3) } else { 1.0 },
        MatrixKind::V => cm * if first { b } else { 1.0 },
        MatrixKind::M => 1.0,
    })
}

/// Dimensions of the linear map X -> XW with W of shape (in_dim, out_dim).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpDims {
    pub in_dim: usize,
    pub out_dim: usize,
}

/// Two-term interpolation entropy bound at threshold `tau`.
#[allow(clippy::too_many_arguments)]
pub fn interp_entropy_at_tau(dims: InterpDims, p: f64, c_s: f64, c_2: f64, b: f64, eps: f64, n: u64, d: u64, tau: f64) -> f64 {
    let (l, m) = (dims.in_dim as f64, dims.out_dim as f64);
    let mn = l.min(m);
    let (cs_scaled, tau_half) = if p == 0.0 { (c_s, 1.0) } else { (c_s / tau.powf(p), tau.powf(p / 2.0)) };
    let low = (l + m) * cs_scaled * (32.0 * c_s.sqrt() * c_2 * b / (tau_half * eps) + 1.0).ln();
    let a = tau * mn.sqrt();
    let eps_p = eps / 4.0;
    let tail = 144.0 * a * a * b * b * m / (eps_p * eps_p) * (20.0 * (8.0 * a * b / eps_p + 2.0).ceil() * n as f64 * d as f64).ln();
    low + tail
}

/// Closed-form threshold tau = (C_s (l+m) eps^2 / (B^2 min(l,m) m))^{1/(p+2)}.
pub fn interp_tau(dims: InterpDims, p: f64, c_s: f64, b: f64, eps: f64) -> f64 {
    let (l, m) = (dims.in_dim as f64, dims.out_dim as f64);
    (c_s * (l + m) * eps * eps / (b * b * l.min(m) * m)).powf(1.0 / (p + 2.0))
}

/// Entropy bound of {X -> XW : ||W||_{s,p}^p <= C_s, ||W||_2 <= C_2} at scale eps,
/// returning (bound, tau).
#[allow(clippy::too_many_arguments)]
pub fn interp_entropy(dims: InterpDims, p: f64, c_s: f64, c_2: f64, b: f64, eps: f64, n: u64, d: u64) -> Result<(f64, f64)> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(domain(format!("eps must be positive, got {eps}")));
    }
    if !(0.0..=2.0).contains(&p) {
        return Err(domain(format!("p must lie in [0, 2], got {p}")));
    }
    if dims.in_dim == 0 || dims.out_dim == 0 || n == 0 || d == 0 {
        return Err(domain("dimensions and counts must be positive"));
    }
    if !(c_s >= 0.0 && c_2 > 0.0 && b > 0.0) || !c_s.is_finite() || !c_2.is_finite() || !b.is_finite() {
        return Err(domain("radii must be finite with C_s >= 0, C_2 > 0, B > 0"));
    }
    if c_s == 0.0 {
        return Ok((0.0, 0.0));
    }
    let tau = interp_tau(dims, p, c_s, b, eps);
    Ok((interp_entropy_at_tau(dims, p, c_s, c_2, b, eps, n, d, tau), tau))
}

/// ((C_s)^2 s^{2p} N^p / eps^{2p})^{1/(p+2)}.
pub fn upsilon(c_s: f64, p: f64, scale: f64, hidden: f64, eps: f64) -> f64 {
    if c_s == 0.0 {
        return 0.0;
    }
    c_s.powf(2.0 / (p + 2.0)) * (scale * scale * hidden / (eps * eps)).powf(p / (p + 2.0))
}

fn log_nt(cfg: &BoundConfig) -> f64 {
    (cfg.n as f64 * cfg.tokens as f64).ln()
}

/// Head-class entropy at scale eps with eps^QK = eps/(4 C_V B^2), eps^V = eps/2.
pub fn head_entropy(qk: &MatrixRadius, v: &MatrixRadius, cfg: &BoundConfig, eps: f64) -> Result<f64> {
    cfg.validate()?;
    if !(eps > 0.0) {
        return Err(domain("eps must be positive"));
    }
    let b = cfg.input_row_bound;
    let nh = cfg.hidden as f64;
    let eps_qk = eps / (4.0 * v.spectral * b * b);
    let eps_v = eps / 2.0;
    let u = upsilon(qk.schatten, qk.p, b, nh, eps_qk) + upsilon(v.schatten, v.p, b, nh, eps_v);
    Ok(cfg.univ_const * u * nh * log_nt(cfg))
}

/// Block-class entropy: returns (covering radius, entropy).
pub fn block_entropy(layer: &[MatrixRadius; 3], cfg: &BoundConfig, eps: [f64; 3]) -> Result<(f64, f64)> {
    cfg.validate()?;
    if eps.iter().any(|e| !(*e > 0.0)) {
        return Err(domain("per-matrix radii must be positive"));
    }
    let b = cfg.input_row_bound;
    let lp = cfg.act_lipschitz;
    let nh = cfg.hidden as f64;
    let [qk, v, m] = layer;
    let radius = 2.0 * lp * v.spectral * m.spectral * b * b * eps[0] + lp * m.spectral * eps[1] + eps[2];
    let u = upsilon(qk.schatten, qk.p, b, nh, eps[0]) + upsilon(v.schatten, v.p, b, nh, eps[1]) + upsilon(m.schatten, m.p, lp, nh, eps[2]);
    Ok((radius, cfg.univ_const * u * nh * log_nt(cfg)))
}

/// Multi-layer entropy: returns (eta^(L), entropy) for per-layer radii eps[ell-1].
pub fn multilayer_entropy(radii: &LayerRadii, cfg: &BoundConfig, eps: &[[f64; 3]]) -> Result<(f64, f64)> {
    cfg.validate()?;
    let depth = radii.depth();
    if eps.len() != depth {
        return Err(shape(format!("{} radius triples for {depth} layers", eps.len())));
    }
    if eps.iter().flatten().any(|e| !(*e > 0.0)) {
        return Err(domain("per-matrix radii must be positive"));
    }
    let b = cfg.input_row_bound;
    let lp = cfg.act_lipschitz;
    let nh = cfg.hidden as f64;
    let layer_eps = |ell: usize| -> f64 {
        let e = eps[ell - 1];
        let cv = radii.get(ell, MatrixKind::V).spectral;
        let cm = radii.get(ell, MatrixKind::M).spectral;
        let bb = if ell == 1 { b * b } else { 1.0 };
        2.0 * lp * cv * cm * bb * e[0] + lp * cm * e[1] + e[2]
    };
    let mut eta = layer_eps(depth);
    for j in 1..depth {
        let mut prod = 1.0;
        for k in j + 1..=depth {
            let c = |kind| radii.get(k, kind).spectral;
            prod *= c(MatrixKind::M) * c(MatrixKind::V) * (1.0 + 4.0 * c(MatrixKind::Qk));
        }
        eta += lp.powi((depth - j) as i32) * layer_eps(j) * prod;
    }
    let mut u = 0.0;
    for ell in 1..=depth {
        let e = eps[ell - 1];
        let s = if ell == 1 { b } else { 1.0 };
        let r = |kind| radii.get(ell, kind);
        u += upsilon(r(MatrixKind::Qk).schatten, r(MatrixKind::Qk).p, s, nh, e[0])
            + upsilon(r(MatrixKind::V).schatten, r(MatrixKind::V).p, s, nh, e[1])
            + upsilon(r(MatrixKind::M).schatten, r(MatrixKind::M).p, lp, nh, e[2]);
    }
    Ok((eta, cfg.univ_const * u * nh * log_nt(cfg)))
}

/// Scalar-output class entropy at scale eps.
pub fn scalar_entropy(radii: &LayerRadii, cfg: &BoundConfig, eps: f64) -> Result<f64> {
    cfg.validate()?;
    check_depth(radii, cfg)?;
    if !(eps > 0.0) {
        return Err(domain("eps must be positive"));
    }
    let nh = cfg.hidden as f64;
    let depth = radii.depth() as f64;
    let alphas = propagation_alphas(radii, cfg.act_lipschitz);
    let mut sum = 0.0;
    for ell in 1..=radii.depth() {
        for kind in MatrixKind::ALL {
            let r = radii.get(ell, kind);
            if r.schatten == 0.0 {
                continue;
            }
            let g = gamma_factor(kind, ell, radii, cfg)?;
            let p = r.p;
            let h = cfg.act_lipschitz * cfg.readout_radius * g * alphas[ell - 1] * depth / eps;
            sum += r.schatten.powf(2.0 / (p + 2.0)) * h.powf(2.0 * p / (p + 2.0)) * nh.powf(1.0 + p / (p + 2.0));
        }
    }
    let out = (cfg.readout_radius / eps).powi(2) * (cfg.n as f64).ln();
    Ok(cfg.univ_const * (sum * log_nt(cfg) + out))
}

/// Closed-form solution of min sum a_i z_i^{-nu} subject to sum b_i z_i = c.
pub fn allocate_radii(a: &[f64], b: &[f64], c: f64, nu: f64) -> Result<(Vec<f64>, f64)> {
    if a.len() != b.len() || a.is_empty() {
        return Err(shape(format!("a and b must be nonempty with equal lengths ({} vs {})", a.len(), b.len())));
    }
    let pos = |x: f64| x.is_finite() && x > 0.0;
    if !a.iter().chain(b).all(|&x| pos(x)) || !pos(c) || !pos(nu) {
        return Err(domain("allocation inputs must be positive and finite"));
    }
    let e1 = 1.0 / (nu + 1.0);
    let e2 = nu / (nu + 1.0);
    let s: f64 = a.iter().zip(b).map(|(ai, bi)| ai.powf(e1) * bi.powf(e2)).sum();
    let z = a.iter().zip(b).map(|(ai, bi)| c * ai.powf(e1) * bi.powf(-e1) / s).collect();
    Ok((z, c.powf(-nu) * s.powf(nu + 1.0)))
}

/// Dudley-type Rademacher complexity for entropy sum_i C_i eps^{-nu_i} + C_last eps^{-2}.
pub fn dudley_complexity(terms: &[(f64, f64)], c_last: f64, a: f64, n: u64, univ_const: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) || n == 0 {
        return Err(domain("A must be positive and n >= 1"));
    }
    if !(c_last >= 0.0 && c_last.is_finite()) {
        return Err(domain("C_last must be nonnegative"));
    }
    let sn = (n as f64).sqrt();
    let mut acc = 0.0;
    for &(c, nu) in terms {
        if !(c >= 0.0 && c.is_finite()) || !(0.0..2.0).contains(&nu) {
            return Err(domain(format!("invalid power-law term (C = {c}, nu = {nu})")));
        }
        let k = 1.0 - nu / 2.0;
        acc += a.powf(k) / k * c.sqrt();
    }
    if c_last > 0.0 {
        let r = c_last.sqrt();
        acc += (1.0 + (1.0 + a * sn / r).ln()) * r;
    }
    Ok(univ_const * acc / sn)
}

/// Contribution of one matrix to a bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub layer: usize,
    pub kind: MatrixKind,
    pub value: f64,
}

/// Total bound value and its named components (each already multiplied by univ_const).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundBreakdown {
    pub total: f64,
    pub main: f64,
    pub readout: f64,
    pub confidence: f64,
    pub terms: Vec<TermRecord>,
}

impl BoundBreakdown {
    fn assemble(cfg: &BoundConfig, main: f64, terms: Vec<TermRecord>) -> Self {
        let u = cfg.univ_const;
        let (main, readout, confidence) = (u * main, u * cfg.readout_term(), u * cfg.confidence_term());
        BoundBreakdown { total: main + readout + confidence, main, readout, confidence, terms }
    }
}

fn check_depth(radii: &LayerRadii, cfg: &BoundConfig) -> Result<()> {
    if radii.depth() as u64 != cfg.depth {
        return Err(shape(format!("radii cover {} layers but config has L = {}", radii.depth(), cfg.depth)));
    }
    Ok(())
}

/// Per-matrix Psi^{star,(ell)} L^{p/(p+2)} N^{(p+1)/(p+2)}.
fn general_term(c_s: f64, p: f64, h: f64, depth: f64, hidden: f64) -> f64 {
    if c_s == 0.0 {
        return 0.0;
    }
    let psi = c_s.powf(1.0 / (p + 2.0)) * h.powf(p / (p + 2.0));
    psi * depth.powf(p / (p + 2.0)) * hidden.powf((p + 1.0) / (p + 2.0))
}

/// Generalization-gap value with per-matrix Schatten indices.
pub fn gap_bound_general_p(radii: &LayerRadii, cfg: &BoundConfig) -> Result<BoundBreakdown> {
    cfg.validate()?;
    check_depth(radii, cfg)?;
    let alphas = propagation_alphas(radii, cfg.act_lipschitz);
    let (depth, hidden) = (cfg.depth as f64, cfg.hidden as f64);
    let mut terms = Vec::with_capacity(3 * radii.depth());
    for ell in 1..=radii.depth() {
        for kind in MatrixKind::ALL {
            let r = radii.get(ell, kind);
            let h = cfg.act_lipschitz * gamma_factor(kind, ell, radii, cfg)? * alphas[ell - 1];
            terms.push(TermRecord { layer: ell, kind, value: general_term(r.schatten, r.p, h, depth, hidden) });
        }
    }
    let sum: f64 = terms.iter().map(|t| t.value).sum();
    let main = cfg.loss_lipschitz * cfg.readout_radius * cfg.complexity_scale() * sum;
    Ok(BoundBreakdown::assemble(cfg, main, terms))
}

/// Common-p bound with its Xi and per-layer Gamma.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommonPBreakdown {
    pub p: f64,
    pub xi: f64,
    pub gamma: Vec<f64>,
    pub bound: BoundBreakdown,
}

/// Generalization-gap value with one shared Schatten index.
pub fn gap_bound_common_p(radii: &LayerRadii, cfg: &BoundConfig) -> Result<CommonPBreakdown> {
    cfg.validate()?;
    check_depth(radii, cfg)?;
    let p = radii.get(1, MatrixKind::Qk).p;
    if radii.layers().iter().flatten().any(|r| r.p != p) {
        return Err(domain("common-p bound requires the same p for every matrix"));
    }
    let alphas = propagation_alphas(radii, cfg.act_lipschitz);
    let e_g = 2.0 * p / (3.0 * p + 2.0);
    let e_c = 2.0 / (3.0 * p + 2.0);
    let mut gamma = Vec::with_capacity(radii.depth());
    let mut inner = 0.0;
    for ell in 1..=radii.depth() {
        let mut g = 0.0;
        for kind in MatrixKind::ALL {
            let c_s = radii.get(ell, kind).schatten;
            if c_s > 0.0 {
                g += gamma_factor(kind, ell, radii, cfg)?.powf(e_g) * c_s.powf(e_c);
            }
        }
        inner += alphas[ell - 1].powf(e_g) * g;
        gamma.push(g);
    }
    let hidden = cfg.hidden as f64;
    let xi = inner.powf((3.0 * p + 2.0) / (2.0 * (p + 2.0))) * hidden.powf((p + 1.0) / (p + 2.0));
    let scale = cfg.loss_lipschitz * cfg.readout_radius / (cfg.n as f64).sqrt();
    let main = scale * cfg.act_lipschitz.powf(p / (p + 2.0)) * xi * log_nt(cfg).sqrt();
    Ok(CommonPBreakdown { p, xi, gamma, bound: BoundBreakdown::assemble(cfg, main, Vec::new()) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(depth: usize) -> LayerRadii {
        LayerRadii::uniform(depth, MatrixRadius::new(1.0, 1.0, 1.0)).unwrap()
    }

    fn cfg(depth: u64, hidden: u64) -> BoundConfig {
        BoundConfig { depth, hidden, act_lipschitz: 1.0, ..BoundConfig::default() }
    }

    #[test]
    fn alpha_examples() {
        let r = unit(3);
        assert_eq!(propagation_alpha(3, &r, 1.0).unwrap(), 1.0);
        assert_eq!(propagation_alpha(2, &r, 1.0).unwrap(), 5.0);
        assert_eq!(propagation_alpha(1, &r, 1.0).unwrap(), 25.0);
        assert!(propagation_alpha(0, &r, 1.0).is_err());
        assert!(propagation_alpha(4, &r, 1.0).is_err());
    }

    #[test]
    fn gamma_examples() {
        let r = unit(2);
        let mut c = cfg(2, 4);
        c.input_row_bound = 7.0;
        assert_eq!(gamma_factor(MatrixKind::M, 1, &r, &c).unwrap(), 1.0);
        assert_eq!(gamma_factor(MatrixKind::Qk, 2, &r, &c).unwrap(), 2.0);
        c.input_row_bound = 2.0;
        assert_eq!(gamma_factor(MatrixKind::Qk, 1, &r, &c).unwrap(), 16.0);
        assert_eq!(gamma_factor(MatrixKind::V, 1, &r, &c).unwrap(), 2.0);
    }

    #[test]
    fn interp_zero_radius() {
        let d = InterpDims { in_dim: 8, out_dim: 8 };
        assert_eq!(interp_entropy(d, 1.0, 0.0, 1.0, 1.0, 0.1, 100, 8).unwrap(), (0.0, 0.0));
        assert!(interp_entropy(d, 1.0, 1.0, 1.0, 1.0, 0.0, 100, 8).is_err());
    }

    #[test]
    fn interp_p0_tau_and_low_rank_term() {
        let d = InterpDims { in_dim: 8, out_dim: 6 };
        let (c_s, b, eps) = (3.0, 1.5, 0.2);
        let (_, tau) = interp_entropy(d, 0.0, c_s, 1.0, b, eps, 50, 4).unwrap();
        let want = (c_s * 14.0 * eps * eps / (b * b * 6.0 * 6.0)).sqrt();
        assert!((tau - want).abs() < 1e-15);
        // At p = 0 the low-rank prefactor is (l+m) C_s regardless of tau.
        let low =
            |t: f64| interp_entropy_at_tau(d, 0.0, c_s, 1.0, b, eps, 50, 4, t) - interp_entropy_at_tau(d, 0.0, 0.0, 1.0, b, eps, 50, 4, t);
        let l1 = low(0.01);
        let l2 = low(0.3);
        let expect = 14.0 * c_s * (32.0 * c_s.sqrt() * b / eps + 1.0).ln();
        assert!((l1 - expect).abs() < 1e-9 * expect && (l2 - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn interp_tau_balances_constant_free_terms() {
        let d = InterpDims { in_dim: 8, out_dim: 8 };
        let (p, c_s, b, eps) = (1.0, 4.0, 1.0, 0.1);
        let tau = interp_tau(d, p, c_s, b, eps);
        let left = 16.0 * c_s / tau.powf(p);
        let right = tau * tau * 8.0 * 8.0 * b * b / (eps * eps);
        assert!((left - right).abs() <= 1e-12 * left);
    }

    #[test]
    fn allocation_examples() {
        let (z, v) = allocate_radii(&[2.0], &[3.0], 6.0, 1.0).unwrap();
        assert!((z[0] - 2.0).abs() < 1e-15 && (v - 1.0).abs() < 1e-15);
        let (z, v) = allocate_radii(&[1.0, 1.0], &[1.0, 1.0], 2.0, 1.0).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-15 && (z[1] - 1.0).abs() < 1e-15 && (v - 2.0).abs() < 1e-15);
        assert!(allocate_radii(&[1.0], &[0.0], 1.0, 1.0).is_err());
        assert!(allocate_radii(&[1.0, 2.0], &[1.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn dudley_examples() {
        let (a, n) = (2.0, 100u64);
        let v = dudley_complexity(&[], a * a * n as f64, a, n, 1.0).unwrap();
        assert!((v - (1.0 + 2f64.ln()) * a).abs() < 1e-12);
        let c_last = 3.0;
        let v = dudley_complexity(&[(1.0, 0.0)], c_last, a, n, 1.0).unwrap();
        let sn = 10.0;
        let want = (a + (1.0 + (1.0 + a * sn / c_last.sqrt()).ln()) * c_last.sqrt()) / sn;
        assert!((v - want).abs() < 1e-14);
        assert!(dudley_complexity(&[(1.0, 2.0)], 1.0, 1.0, 10, 1.0).is_err());
    }

    #[test]
    fn general_p_zero_radius_and_rank_regime() {
        let c = cfg(2, 64);
        let r = LayerRadii::uniform(2, MatrixRadius::new(1.0, 0.0, 1.0)).unwrap();
        let b = gap_bound_general_p(&r, &c).unwrap();
        assert_eq!(b.main, 0.0);
        assert!((b.total - c.readout_term() - c.confidence_term()).abs() < 1e-15);
        let r = LayerRadii::uniform(2, MatrixRadius::new(3.0, 5.0, 0.0)).unwrap();
        let b = gap_bound_general_p(&r, &c).unwrap();
        for t in &b.terms {
            assert!((t.value - (5.0f64 * 64.0).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn general_p_frobenius_single_layer() {
        let c = BoundConfig { depth: 1, hidden: 32, act_lipschitz: 1.13, ..BoundConfig::default() };
        let cf: f64 = 2.5;
        let r = LayerRadii::uniform(1, MatrixRadius::new(1.0, cf * cf, 2.0)).unwrap();
        let b = gap_bound_general_p(&r, &c).unwrap();
        for t in &b.terms {
            let g = gamma_factor(t.kind, 1, &r, &c).unwrap();
            let want = cf.sqrt() * (1.13 * g).sqrt() * 32f64.powf(0.75);
            assert!((t.value - want).abs() < 1e-12 * want);
        }
    }

    #[test]
    fn common_p_specialisations() {
        let c = cfg(3, 50);
        let r = LayerRadii::uniform(3, MatrixRadius::new(2.0, 50.0, 0.0)).unwrap();
        let b = gap_bound_common_p(&r, &c).unwrap();
        let want = (9.0f64 * 50.0).sqrt() * 50f64.sqrt();
        assert!((b.xi - want).abs() < 1e-9 * want);
        let mixed =
            LayerRadii::new(vec![[MatrixRadius::new(1.0, 1.0, 0.0), MatrixRadius::new(1.0, 1.0, 1.0), MatrixRadius::new(1.0, 1.0, 0.0)]])
                .unwrap();
        assert!(gap_bound_common_p(&mixed, &cfg(1, 4)).is_err());
    }

    #[test]
    fn common_p_not_above_general_p_at_p2() {
        let c = BoundConfig { depth: 4, hidden: 64, ..BoundConfig::default() };
        let r = LayerRadii::uniform(4, MatrixRadius::new(1.2, 9.0, 2.0)).unwrap();
        let g = gap_bound_general_p(&r, &c).unwrap();
        let cp = gap_bound_common_p(&r, &c).unwrap();
        assert!(cp.bound.total <= g.total);
        // Exact relation in the uniform p = 2 case: main terms differ by sqrt(L).
        assert!((cp.bound.main * 2.0 - g.main).abs() < 1e-9 * g.main);
    }

    #[test]
    fn general_p_continuous_at_zero() {
        let c = cfg(2, 32);
        let r0 = LayerRadii::uniform(2, MatrixRadius::new(1.5, 4.0, 0.0)).unwrap();
        let r1 = LayerRadii::uniform(2, MatrixRadius::new(1.5, 4.0, 1e-8)).unwrap();
        let a = gap_bound_general_p(&r0, &c).unwrap().total;
        let b = gap_bound_general_p(&r1, &c).unwrap().total;
        assert!((a - b).abs() <= 1e-6);
    }

    #[test]
    fn config_validation() {
        assert!(BoundConfig { n: 2, ..BoundConfig::default() }.validate().is_err());
        assert!(BoundConfig { delta: 1.0, ..BoundConfig::default() }.validate().is_err());
        assert!(BoundConfig::default().validate().is_ok());
        let json = serde_json::to_string(&BoundConfig::default()).unwrap();
        assert!(json.contains("\"T\":128"));
        let back: BoundConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, BoundConfig::default());
    }

    #[test]
    fn entropy_compositions() {
        let c = cfg(2, 16);
        let r = LayerRadii::uniform(2, MatrixRadius::new(1.0, 4.0, 0.0)).unwrap();
        // At p = 0 Upsilon = C_s, independent of eps.
        let h1 = head_entropy(r.get(1, MatrixKind::Qk), r.get(1, MatrixKind::V), &c, 0.1).unwrap();
        let h2 = head_entropy(r.get(1, MatrixKind::Qk), r.get(1, MatrixKind::V), &c, 0.01).unwrap();
        assert!((h1 - h2).abs() < 1e-9 * h1);
        let (rad, e) = block_entropy(&r.layers()[0], &c, [0.1, 0.1, 0.1]).unwrap();
        assert!((rad - (0.2 + 0.1 + 0.1)).abs() < 1e-15);
        assert!((e - 12.0 * 16.0 * (10_000f64 * 128.0).ln()).abs() < 1e-9 * e);
        let (eta, _) = multilayer_entropy(&r, &c, &[[0.1; 3], [0.1; 3]]).unwrap();
        assert!((eta - (0.4 * 5.0 + 0.4)).abs() < 1e-12);
        assert!(scalar_entropy(&r, &c, 0.5).unwrap() > 0.0);
    }

    proptest! {
        #[test]
        fn alpha_recursion_exact(cs in proptest::collection::vec((0.1f64..3.0, 0.1f64..3.0, 0.1f64..3.0), 1..6), lp in 0.5f64..2.0) {
            let layers = cs.iter().map(|&(a, b, c)| [
                MatrixRadius::new(a, 1.0, 1.0), MatrixRadius::new(b, 1.0, 1.0), MatrixRadius::new(c, 1.0, 1.0),
            ]).collect();
            let r = LayerRadii::new(layers).unwrap();
            for ell in 1..r.depth() {
                let k = ell + 1;
                let f = lp * r.get(k, MatrixKind::M).spectral * r.get(k, MatrixKind::V).spectral
                    * (1.0 + 4.0 * r.get(k, MatrixKind::Qk).spectral);
                prop_assert_eq!(propagation_alpha(ell, &r, lp).unwrap(), propagation_alpha(k, &r, lp).unwrap() * f);
            }
        }

        #[test]
        fn allocation_feasible(
            ab in proptest::collection::vec((0.1f64..10.0, 0.1f64..10.0), 1..5),
            c in 0.1f64..10.0,
            nu in 0.1f64..3.0,
        ) {
            let a: Vec<f64> = ab.iter().map(|x| x.0).collect();
            let b: Vec<f64> = ab.iter().map(|x| x.1).collect();
            let (z, v) = allocate_radii(&a, &b, c, nu).unwrap();
            let lhs: f64 = b.iter().zip(&z).map(|(bi, zi)| bi * zi).sum();
            prop_assert!((lhs - c).abs() <= 1e-12 * c);
            let obj: f64 = a.iter().zip(&z).map(|(ai, zi)| ai * zi.powf(-nu)).sum();
            prop_assert!((obj - v).abs() <= 1e-12 * v);
        }

        #[test]
        fn general_p_monotone(
            c_s in 0.0f64..10.0, bump in 0.0f64..5.0, p in 0.0f64..=2.0,
            ll in 0.5f64..2.0, cout in 0.5f64..2.0,
        ) {
            let c0 = BoundConfig { depth: 2, hidden: 16, loss_lipschitz: ll, readout_radius: cout, ..BoundConfig::default() };
            let r0 = LayerRadii::uniform(2, MatrixRadius::new(1.1, c_s, p)).unwrap();
            let base = gap_bound_general_p(&r0, &c0).unwrap().total;
            let mut r1 = r0.clone();
            r1.get_mut(2, MatrixKind::V).schatten += bump;
            prop_assert!(gap_bound_general_p(&r1, &c0).unwrap().total >= base);
            let c1 = BoundConfig { loss_lipschitz: ll + bump, ..c0.clone() };
            prop_assert!(gap_bound_general_p(&r0, &c1).unwrap().total >= base);
            let c2 = BoundConfig { readout_radius: cout + bump, ..c0.clone() };
            prop_assert!(gap_bound_general_p(&r0, &c2).unwrap().total >= base);
        }
    }
}
