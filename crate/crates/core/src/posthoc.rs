//! Post hoc selection of Schatten indices: grids, dyadic shells, weights,
//! penalties, the weight-dependent complexity and the full post hoc bound.

use serde::{Deserialize, Serialize};

use crate::bounds::{gamma_factor, propagation_alphas, BoundConfig, LayerRadii, MatrixKind};
use crate::error::{domain, shape, Result};
use crate::model::TheoryWeights;
use crate::spectral::{schatten_power, spectrum, Spectrum};

/// Dyadic shell of a Schatten power: bottom for 0, else ceil(log2 value).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShellIndex {
    Bottom,
    Shell(i64),
}

pub fn shell_index(value: f64) -> Result<ShellIndex> {
    if !(value >= 0.0 && value.is_finite()) {
        return Err(domain(format!("shell index needs a finite nonnegative value, got {value}")));
    }
    if value == 0.0 {
        return Ok(ShellIndex::Bottom);
    }
    let mut j = value.log2().ceil() as i64;
    // Guard against log2 round-off at exact powers of two.
    while 2f64.powi(j as i32) < value {
        j += 1;
    }
    while j > i64::from(i32::MIN) && 2f64.powi(j as i32 - 1) >= value {
        j -= 1;
    }
    Ok(ShellIndex::Shell(j))
}

/// omega_bottom = 3/pi^2, omega_j = (3/pi^2)/(1+|j|)^2.
pub fn shell_weight(s: ShellIndex) -> f64 {
    let z_inv = 3.0 / (std::f64::consts::PI * std::f64::consts::PI);
    match s {
        ShellIndex::Bottom => z_inv,
        ShellIndex::Shell(j) => {
            let d = 1.0 + j.unsigned_abs() as f64;
            z_inv / (d * d)
        }
    }
}

/// Grid {0, 1/m, ..., 2} of Schatten indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexGrid {
    m: u32,
}

impl IndexGrid {
    pub fn new(m: u32) -> Result<Self> {
        if m == 0 {
            return Err(domain("grid resolution m must be >= 1"));
        }
        Ok(IndexGrid { m })
    }

    /// m = ceil(L + log N).
    pub fn default_for(depth: u64, hidden: u64) -> Self {
        let m = (depth as f64 + (hidden as f64).ln()).ceil().max(1.0) as u32;
        IndexGrid { m }
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn len(&self) -> usize {
        2 * self.m as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, k: u32) -> f64 {
        k as f64 / self.m as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..=2 * self.m).map(|k| self.value(k)).collect()
    }

    /// Upward projection ceil(m p)/m, robust to round-off at grid points.
    pub fn project(&self, p: f64) -> Result<f64> {
        if !(0.0..=2.0).contains(&p) {
            return Err(domain(format!("p must lie in [0, 2], got {p}")));
        }
        let k = (self.m as f64 * p - 1e-9).ceil().clamp(0.0, 2.0 * self.m as f64);
        Ok(self.value(k as u32))
    }
}

/// Omega = count * log(2m+1) + sum log(1/omega_kappa) over the given Schatten powers.
pub fn penalty_omega(schatten_powers: &[f64], m: u32) -> Result<f64> {
    if m == 0 {
        return Err(domain("grid resolution m must be >= 1"));
    }
    let mut acc = schatten_powers.len() as f64 * (2.0 * m as f64 + 1.0).ln();
    for &s in schatten_powers {
        acc += -shell_weight(shell_index(s)?).ln();
    }
    Ok(acc)
}

/// Theory-side penalty: exactly 3L Schatten powers.
pub fn penalty_omega_layers(schatten_powers: &[f64], depth: usize, m: u32) -> Result<f64> {
    if schatten_powers.len() != 3 * depth {
        return Err(shape(format!("expected {} Schatten powers, got {}", 3 * depth, schatten_powers.len())));
    }
    penalty_omega(schatten_powers, m)
}

/// (S)^{1/(p+2)} H^{p/(p+2)} N^{(p+1)/(p+2)} with H the architectural factor.
pub fn matrix_term(schatten_power: f64, p: f64, arch: f64, hidden: f64) -> f64 {
    if schatten_power == 0.0 {
        return 0.0;
    }
    if p == 0.0 {
        return (schatten_power * hidden).sqrt();
    }
    schatten_power.powf(1.0 / (p + 2.0)) * arch.powf(p / (p + 2.0)) * hidden.powf((p + 1.0) / (p + 2.0))
}

/// Grid point minimising one matrix's term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridChoice {
    pub p: f64,
    pub schatten_power: f64,
    pub term: f64,
}

/// Relative margin by which a later grid point must improve to replace the incumbent.
pub const TIE_RTOL: f64 = 1e-12;

/// Evaluates the term at every grid point; ties resolve to the smallest p.
pub fn grid_terms(s: &Spectrum, arch: f64, hidden: f64, grid: &IndexGrid) -> Vec<GridChoice> {
    grid.values()
        .into_iter()
        .map(|p| {
            let sp = schatten_power(s, p).expect("grid points lie in [0, 2]");
            GridChoice { p, schatten_power: sp, term: matrix_term(sp, p, arch, hidden) }
        })
        .collect()
}

pub fn argmin_choice(choices: &[GridChoice]) -> GridChoice {
    let mut best = choices[0];
    for c in &choices[1..] {
        if c.term < best.term - TIE_RTOL * best.term.abs() {
            best = *c;
        }
    }
    best
}

pub fn select_on_grid(s: &Spectrum, arch: f64, hidden: f64, grid: &IndexGrid) -> GridChoice {
    argmin_choice(&grid_terms(s, arch, hidden, grid))
}

/// One theory-side matrix, given by its spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSpectrum {
    pub layer: usize,
    pub kind: MatrixKind,
    pub spectrum: Spectrum,
}

/// Spectra of all 3L matrices, ordered by (layer, kind).
pub fn weight_spectra(w: &TheoryWeights) -> Vec<WeightSpectrum> {
    let mut out = Vec::with_capacity(3 * w.depth());
    for (i, l) in w.layers().iter().enumerate() {
        for (kind, m) in MatrixKind::ALL.into_iter().zip([&l.qk, &l.v, &l.m]) {
            out.push(WeightSpectrum { layer: i + 1, kind, spectrum: spectrum(m) });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosthocEntry {
    pub layer: usize,
    pub kind: MatrixKind,
    pub p: f64,
    pub schatten_power: f64,
    pub spectral_norm: f64,
    pub arch_factor: f64,
    pub term: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosthocReport {
    pub entries: Vec<PosthocEntry>,
    /// Sum of the per-matrix terms.
    pub total: f64,
    pub chi: f64,
    /// Penalty at the reported indices, when a grid is involved.
    pub omega: Option<f64>,
    pub m: Option<u32>,
}

fn check_weights(weights: &[WeightSpectrum], radii: &LayerRadii, cfg: &BoundConfig) -> Result<()> {
    let depth = radii.depth();
    if cfg.depth as usize != depth {
        return Err(shape(format!("radii cover {depth} layers but config has L = {}", cfg.depth)));
    }
    if weights.len() != 3 * depth {
        return Err(shape(format!("expected {} matrices, got {}", 3 * depth, weights.len())));
    }
    for (i, w) in weights.iter().enumerate() {
        let (layer, kind) = (i / 3 + 1, MatrixKind::ALL[i % 3]);
        if w.layer != layer || w.kind != kind {
            return Err(shape(format!("matrix {i} must be layer {layer} {}", kind.label())));
        }
    }
    Ok(())
}

/// L_phi gamma alpha (without the depth factor) for every matrix.
fn lipschitz_factors(radii: &LayerRadii, cfg: &BoundConfig) -> Result<Vec<f64>> {
    let alphas = propagation_alphas(radii, cfg.act_lipschitz);
    let mut out = Vec::with_capacity(3 * radii.depth());
    for ell in 1..=radii.depth() {
        for kind in MatrixKind::ALL {
            out.push(cfg.act_lipschitz * gamma_factor(kind, ell, radii, cfg)? * alphas[ell - 1]);
        }
    }
    Ok(out)
}

/// chi = max over nonzero W of |log ||W||_2| + |log(L_phi gamma alpha)|; 0 if all are zero.
pub fn chi(weights: &[WeightSpectrum], radii: &LayerRadii, cfg: &BoundConfig) -> Result<f64> {
    check_weights(weights, radii, cfg)?;
    let lf = lipschitz_factors(radii, cfg)?;
    Ok(weights
        .iter()
        .zip(&lf)
        .filter(|(w, _)| !w.spectrum.is_zero())
        .map(|(w, h)| w.spectrum.spectral_norm().ln().abs() + h.ln().abs())
        .fold(0.0, f64::max))
}

/// Weight-dependent complexity at the given indices.
pub fn complexity_b(weights: &[WeightSpectrum], p_vec: &[f64], radii: &LayerRadii, cfg: &BoundConfig) -> Result<PosthocReport> {
    cfg.validate()?;
    check_weights(weights, radii, cfg)?;
    if p_vec.len() != weights.len() {
        return Err(shape(format!("{} indices for {} matrices", p_vec.len(), weights.len())));
    }
    if let Some(p) = p_vec.iter().find(|p| !(0.0..=2.0).contains(*p)) {
        return Err(domain(format!("p must lie in [0, 2], got {p}")));
    }
    let lf = lipschitz_factors(radii, cfg)?;
    let (depth, hidden) = (cfg.depth as f64, cfg.hidden as f64);
    let mut entries = Vec::with_capacity(weights.len());
    for ((w, &p), h) in weights.iter().zip(p_vec).zip(&lf) {
        let sp = schatten_power(&w.spectrum, p)?;
        let arch = h * depth;
        entries.push(PosthocEntry {
            layer: w.layer,
            kind: w.kind,
            p,
            schatten_power: sp,
            spectral_norm: w.spectrum.spectral_norm(),
            arch_factor: arch,
            term: matrix_term(sp, p, arch, hidden),
        });
    }
    let total = entries.iter().map(|e| e.term).sum();
    Ok(PosthocReport { entries, total, chi: chi(weights, radii, cfg)?, omega: None, m: None })
}

/// Per-matrix grid minimisation of the complexity terms.
pub fn select_indices(weights: &[WeightSpectrum], radii: &LayerRadii, cfg: &BoundConfig, m: u32) -> Result<PosthocReport> {
    cfg.validate()?;
    check_weights(weights, radii, cfg)?;
    let grid = IndexGrid::new(m)?;
    let lf = lipschitz_factors(radii, cfg)?;
    let hidden = cfg.hidden as f64;
    let p_vec: Vec<f64> =
        weights.iter().zip(&lf).map(|(w, h)| select_on_grid(&w.spectrum, h * cfg.depth as f64, hidden, &grid).p).collect();
    let mut report = complexity_b(weights, &p_vec, radii, cfg)?;
    let powers: Vec<f64> = report.entries.iter().map(|e| e.schatten_power).collect();
    report.omega = Some(penalty_omega(&powers, m)?);
    report.m = Some(m);
    Ok(report)
}

/// Full post hoc bound at indices p_vec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosthocBound {
    pub m: u32,
    pub p: Vec<f64>,
    pub projected_p: Vec<f64>,
    pub chi: f64,
    pub rounding_factor: f64,
    /// Complexity at the unprojected indices.
    pub complexity: f64,
    /// Penalty at the projected indices.
    pub omega: f64,
    pub main: f64,
    pub penalty: f64,
    pub readout: f64,
    pub total: f64,
    /// Smallest c0 with ||W||_2 >= exp(-c0 (L + log N)) for every nonzero W.
    pub floor_c0_required: f64,
}

pub fn posthoc_bound(weights: &[WeightSpectrum], radii: &LayerRadii, cfg: &BoundConfig, m: u32, p_vec: &[f64]) -> Result<PosthocBound> {
    let grid = IndexGrid::new(m)?;
    let report = complexity_b(weights, p_vec, radii, cfg)?;
    let projected: Vec<f64> = p_vec.iter().map(|&p| grid.project(p)).collect::<Result<_>>()?;
    let powers: Vec<f64> = weights.iter().zip(&projected).map(|(w, &p)| schatten_power(&w.spectrum, p)).collect::<Result<_>>()?;
    let omega = penalty_omega(&powers, m)?;
    let (depth, hidden, mf) = (cfg.depth as f64, cfg.hidden as f64, m as f64);
    let rounding = (report.chi / mf).exp() * depth.powf(1.0 / (2.0 * mf)) * hidden.powf(1.0 / (4.0 * mf));
    let u = cfg.univ_const;
    let main = u * cfg.loss_lipschitz * cfg.readout_radius * cfg.complexity_scale() * rounding * report.total;
    let penalty = u * cfg.loss_bound * (((1.0 / cfg.delta).ln() + omega) / cfg.n as f64).sqrt();
    let readout = u * cfg.readout_term();
    let scale = depth + hidden.ln();
    let floor = weights.iter().filter(|w| !w.spectrum.is_zero()).map(|w| -w.spectrum.spectral_norm().ln() / scale).fold(0.0, f64::max);
    Ok(PosthocBound {
        m,
        p: p_vec.to_vec(),
        projected_p: projected,
        chi: report.chi,
        rounding_factor: rounding,
        complexity: report.total,
        omega,
        main,
        penalty,
        readout,
        total: main + penalty + readout,
        floor_c0_required: floor,
    })
}
