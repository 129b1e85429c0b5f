//! JSON analysis report and multi-checkpoint comparison rows.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::AnalysisConfig;
use crate::bertproxy::{
    analyze_checkpoint, b_edelman, b_edelman_from_parts, b_ours, bert_chi, bert_omega, normalize_curves, BertKind, CheckpointAnalysis,
    CurvePoint, LayerSpectralNorms,
};
use crate::error::{input, Error, Result};
use crate::ingest::{map_bert_layout, parse_safetensors, BertNaming};
use crate::posthoc::penalty_omega;
use crate::spectral::schatten_power;

pub const SCHEMA_VERSION: u32 = 1;
pub const RANK_TOL_RULE: &str = "max(rows, cols) * 1.2e-7";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
    pub tool: String,
    pub version: String,
    /// Override in effect, or None for the per-shape default rule.
    pub rank_tol: Option<f64>,
    pub rank_tol_default_rule: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    #[serde(rename = "L")]
    pub depth: usize,
    #[serde(rename = "N")]
    pub hidden: usize,
    #[serde(rename = "A_h")]
    pub heads: usize,
    pub d_h: usize,
    #[serde(rename = "I")]
    pub intermediate: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaSummary {
    pub max: f64,
    /// Smallest singular value counted in the rank; 0 for a zero matrix.
    pub min_retained: f64,
    pub rank: usize,
    pub count: usize,
    pub rank_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub spectral: f64,
    pub frobenius: f64,
    pub nuclear: f64,
    pub mixed21: f64,
    pub mixed11: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixEntry {
    pub name: String,
    pub layer: usize,
    pub kind: BertKind,
    pub head: Option<usize>,
    pub shape: [usize; 2],
    pub sigma: SigmaSummary,
    pub norms: Norms,
    pub p: f64,
    pub schatten_power: f64,
    pub arch_factor: f64,
    pub term: f64,
}

/// Proxy analogue of the post hoc bound, with every component named.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyBreakdown {
    pub complexity_scale: f64,
    pub rounding_factor: f64,
    pub main: f64,
    pub penalty: f64,
    pub readout: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub b_ours: f64,
    /// Sum of the per-matrix terms (B_ours without the sqrt(L) part).
    pub b_ours_complexity: f64,
    pub sqrt_depth: f64,
    pub b_edelman: f64,
    pub omega: f64,
    pub chi: f64,
    pub m: u32,
    pub bound_proxy: ProxyBreakdown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema: u32,
    pub config: AnalysisConfig,
    pub architecture: Architecture,
    pub matrices: Vec<MatrixEntry>,
    pub totals: Totals,
    pub provenance: Provenance,
    pub notes: Vec<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parses, maps and analyses a checkpoint held in memory.
pub fn load_analysis(bytes: &[u8], cfg: &AnalysisConfig) -> Result<CheckpointAnalysis> {
    let table = parse_safetensors(bytes)?;
    let ckpt = map_bert_layout(&table, &BertNaming::new(cfg.prefix.clone()), cfg.head_dim)?;
    drop(table);
    analyze_checkpoint(&ckpt, cfg.rank_tol)
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn analyze_file(path: &Path, cfg: &AnalysisConfig) -> Result<AnalysisReport> {
    analyze_bytes(&read_file(path)?, cfg, &path.display().to_string())
}

/// Full report for a checkpoint; `source` is echoed as the provenance path.
pub fn analyze_bytes(bytes: &[u8], cfg: &AnalysisConfig, source: &str) -> Result<AnalysisReport> {
    let a = load_analysis(bytes, cfg)?;
    build_report(&a, cfg, source, bytes)
}

/// Report from a finished analysis; `bytes` are hashed for provenance.
pub fn build_report(a: &CheckpointAnalysis, cfg: &AnalysisConfig, source: &str, bytes: &[u8]) -> Result<AnalysisReport> {
    let mut cfg = cfg.clone();
    cfg.bound.depth = a.depth as u64;
    cfg.bound.hidden = a.hidden as u64;
    cfg.bound.validate()?;
    let l_phi = cfg.l_phi();
    let ours = b_ours(a, cfg.m, l_phi)?;
    cfg.m = Some(ours.m);
    let omega = bert_omega(&ours)?;
    let chi = bert_chi(a, l_phi);
    let matrices = a
        .records
        .iter()
        .zip(&ours.choices)
        .map(|(r, c)| {
            let s = &r.spectrum;
            let rank = s.rank();
            MatrixEntry {
                name: r.name(),
                layer: r.layer,
                kind: r.kind,
                head: r.head,
                shape: [r.rows, r.cols],
                sigma: SigmaSummary {
                    max: s.spectral_norm(),
                    min_retained: if rank == 0 { 0.0 } else { s.values()[rank - 1] },
                    rank,
                    count: s.values().len(),
                    rank_tol: s.rank_tol(),
                },
                norms: Norms {
                    spectral: r.spectral_norm,
                    frobenius: r.frobenius,
                    nuclear: schatten_power(s, 1.0).expect("p = 1"),
                    mixed21: r.mixed21,
                    mixed11: r.mixed11,
                },
                p: c.p,
                schatten_power: c.schatten_power,
                arch_factor: c.arch_factor,
                term: c.term,
            }
        })
        .collect();
    let b = &cfg.bound;
    let (mf, depth, hidden) = (ours.m as f64, a.depth as f64, a.hidden as f64);
    let rounding = (chi / mf).exp() * depth.powf(1.0 / (2.0 * mf)) * hidden.powf(1.0 / (4.0 * mf));
    let u = b.univ_const;
    let main = u * b.loss_lipschitz * b.readout_radius * b.complexity_scale() * rounding * ours.complexity;
    let penalty = u * b.loss_bound * (((1.0 / b.delta).ln() + omega) / b.n as f64).sqrt();
    let readout = u * b.readout_term();
    let totals = Totals {
        b_ours: ours.value,
        b_ours_complexity: ours.complexity,
        sqrt_depth: depth.sqrt(),
        b_edelman: b_edelman(a, l_phi),
        omega,
        chi,
        m: ours.m,
        bound_proxy: ProxyBreakdown {
            complexity_scale: b.complexity_scale(),
            rounding_factor: rounding,
            main,
            penalty,
            readout,
            total: main + penalty + readout,
        },
    };
    let report = AnalysisReport {
        schema: SCHEMA_VERSION,
        config: cfg.clone(),
        architecture: Architecture { depth: a.depth, hidden: a.hidden, heads: a.heads, d_h: a.head_dim, intermediate: a.intermediate },
        matrices,
        totals,
        provenance: Provenance {
            path: source.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            rank_tol: a.rank_tol,
            rank_tol_default_rule: RANK_TOL_RULE.to_string(),
        },
        notes: vec![
            "B_ours and B_Edelman are leading-factor proxies computed from measured weights, not generalization bounds for BERT.".to_string(),
            "Schatten indices minimise each matrix term separately; the penalty Omega is reported at the selected indices and is not part of the selection.".to_string(),
            "bound_proxy applies the post hoc bound's constants to the proxy complexity for scale only.".to_string(),
        ],
    };
    report.check_consistency()?;
    Ok(report)
}

impl AnalysisReport {
    /// Recomputes every total from the per-matrix entries and demands exact equality.
    pub fn check_consistency(&self) -> Result<()> {
        let t = &self.totals;
        let mismatch = |what: &str, got: f64, want: f64| -> Result<()> {
            if got == want || (got.is_nan() && want.is_nan()) {
                Ok(())
            } else {
                Err(input(format!("report inconsistency: {what} is {got}, recomputed {want}")))
            }
        };
        let complexity: f64 = self.matrices.iter().map(|e| e.term).sum();
        mismatch("b_ours_complexity", t.b_ours_complexity, complexity)?;
        mismatch("b_ours", t.b_ours, complexity + t.sqrt_depth)?;
        let powers: Vec<f64> = self.matrices.iter().map(|e| e.schatten_power).collect();
        mismatch("omega", t.omega, penalty_omega(&powers, t.m)?)?;
        let a = &self.architecture;
        let mut norms: Vec<LayerSpectralNorms> = (0..a.depth)
            .map(|_| LayerSpectralNorms { qk: vec![0.0; a.heads], vo: vec![0.0; a.heads], ffn_in: 0.0, ffn_out: 0.0 })
            .collect();
        for e in &self.matrices {
            let l = &mut norms[e.layer - 1];
            match (e.kind, e.head) {
                (BertKind::Qk, Some(h)) => l.qk[h] = e.norms.spectral,
                (BertKind::Vo, Some(h)) => l.vo[h] = e.norms.spectral,
                (BertKind::FfnIn, _) => l.ffn_in = e.norms.spectral,
                (BertKind::FfnOut, _) => l.ffn_out = e.norms.spectral,
                _ => return Err(input(format!("attention entry {} has no head index", e.name))),
            }
        }
        let parts = self.matrices.iter().map(|e| (e.layer, e.kind, e.head, e.norms.mixed21));
        mismatch("b_edelman", t.b_edelman, b_edelman_from_parts(&norms, parts, self.config.l_phi()))?;
        let bp = &t.bound_proxy;
        mismatch("bound_proxy.total", bp.total, bp.main + bp.penalty + bp.readout)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Axis along which compared checkpoints vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "L")]
    Depth,
    #[serde(rename = "N")]
    Hidden,
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::Depth => "L",
            SweepAxis::Hidden => "N",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    #[serde(rename = "L")]
    pub depth: usize,
    #[serde(rename = "N")]
    pub hidden: usize,
    pub b_ours_raw: f64,
    pub b_edelman_raw: f64,
    pub b_ours_norm: f64,
    pub b_edelman_norm: f64,
}

/// Sorts (L, N, B_ours, B_Edelman) points along their shared sweep axis and
/// normalises both curves at the smallest checkpoint.
pub fn compare_points(points: &[(usize, usize, f64, f64)]) -> Result<(SweepAxis, Vec<CompareRow>)> {
    if points.len() < 2 {
        return Err(input("compare needs at least two checkpoints"));
    }
    let same_l = points.iter().all(|p| p.0 == points[0].0);
    let same_n = points.iter().all(|p| p.1 == points[0].1);
    let axis = match (same_l, same_n) {
        (true, false) => SweepAxis::Hidden,
        (false, true) => SweepAxis::Depth,
        (true, true) => return Err(input("all checkpoints share both L and N; there is no sweep axis")),
        (false, false) => return Err(input("inconsistent sweep axis: both L and N vary across checkpoints")),
    };
    let mut sorted = points.to_vec();
    sorted.sort_by_key(|a| (a.0, a.1));
    if sorted.windows(2).any(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
        return Err(input("duplicate checkpoint shape in sweep"));
    }
    let curve = |f: fn(&(usize, usize, f64, f64)) -> f64| {
        normalize_curves(&sorted.iter().map(|p| CurvePoint { depth: p.0, hidden: p.1, raw: f(p) }).collect::<Vec<_>>())
    };
    let ours = curve(|p| p.2)?;
    let edel = curve(|p| p.3)?;
    let rows = sorted
        .iter()
        .enumerate()
        .map(|(i, p)| CompareRow {
            depth: p.0,
            hidden: p.1,
            b_ours_raw: p.2,
            b_edelman_raw: p.3,
            b_ours_norm: ours.normalized[i],
            b_edelman_norm: edel.normalized[i],
        })
        .collect();
    Ok((axis, rows))
}
