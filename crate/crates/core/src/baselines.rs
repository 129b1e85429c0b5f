//! Mixed-norm baselines, norm conversions and the leading-factor regime table.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::bounds::{propagation_alphas, BoundConfig, LayerRadii, MatrixKind};
use crate::error::{domain, shape, Result};
use crate::spectral::{frobenius_norm, mixed_norm, spectrum, Matrix};

/// Observed or prescribed mixed-norm radii of one matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedRadius {
    pub c21: f64,
    pub c11: f64,
}

/// Mixed radii for all 3L matrices, ordered (QK, V, M) per layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedRadii {
    layers: Vec<[MixedRadius; 3]>,
}

impl MixedRadii {
    pub fn new(layers: Vec<[MixedRadius; 3]>) -> Result<Self> {
        if layers.iter().flatten().any(|r| !(r.c21 >= 0.0 && r.c11 >= 0.0) || !r.c21.is_finite() || !r.c11.is_finite()) {
            return Err(domain("mixed radii must be finite and nonnegative"));
        }
        Ok(MixedRadii { layers })
    }

    pub fn uniform(depth: usize, r: MixedRadius) -> Result<Self> {
        Self::new(vec![[r; 3]; depth])
    }

    /// Radii measured from weights; the QK (2,1)-norm is taken on the transpose.
    pub fn measured(layers: &[[&Matrix; 3]]) -> Result<Self> {
        let mut out = Vec::with_capacity(layers.len());
        for l in layers {
            let qk_t = l[0].transpose();
            let r = |m: &Matrix, c21_src: &Matrix| -> Result<MixedRadius> {
                Ok(MixedRadius { c21: mixed_norm(c21_src, 2.0, 1.0)?, c11: mixed_norm(m, 1.0, 1.0)? })
            };
            out.push([r(l[0], &qk_t)?, r(l[1], l[1])?, r(l[2], l[2])?]);
        }
        Self::new(out)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn get(&self, ell: usize, kind: MatrixKind) -> &MixedRadius {
        &self.layers[ell - 1][kind.index()]
    }
}

/// Dimensionless leading factor and the full proxy value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineProxy {
    pub factor: f64,
    pub full: f64,
}

fn check(mixed_depth: usize, radii: &LayerRadii, cfg: &BoundConfig) -> Result<()> {
    cfg.validate()?;
    if mixed_depth != radii.depth() || cfg.depth as usize != radii.depth() {
        return Err(shape(format!("depth mismatch: mixed radii {mixed_depth}, spectral radii {}, config {}", radii.depth(), cfg.depth)));
    }
    Ok(())
}

/// (1 + sum_ell alpha^{2/3} xi^(ell))^{3/2} with the mixed-norm xi.
pub fn edelman_factor(mixed: &MixedRadii, radii: &LayerRadii, cfg: &BoundConfig) -> Result<BaselineProxy> {
    check(mixed.depth(), radii, cfg)?;
    let lp = cfg.act_lipschitz;
    let alphas = propagation_alphas(radii, lp);
    let t = 2.0 / 3.0;
    let mut acc = 1.0;
    for ell in 1..=radii.depth() {
        let cm = radii.get(ell, MatrixKind::M).spectral;
        let cv = radii.get(ell, MatrixKind::V).spectral;
        let xi = mixed.get(ell, MatrixKind::M).c21.powf(t)
            + (2.0 * lp * cm * cv * mixed.get(ell, MatrixKind::Qk).c21).powf(t)
            + (lp * cm * mixed.get(ell, MatrixKind::V).c21).powf(t);
        acc += alphas[ell - 1].powf(t) * xi;
    }
    let factor = acc.powf(1.5);
    let n = cfg.n as f64;
    let log_term = ((cfg.hidden as f64 * n * cfg.tokens as f64).ln() / n).sqrt();
    let full = cfg.univ_const * (cfg.loss_lipschitz * cfg.readout_radius * factor * log_term + cfg.confidence_term());
    Ok(BaselineProxy { factor, full })
}

/// C_{1,1} (1 + (L_phi C_V)^{2/3} + sum_ell alpha^{2/3} upsilon^(ell))^{3/2}.
pub fn trauger_factor(c11: f64, radii: &LayerRadii, cfg: &BoundConfig) -> Result<BaselineProxy> {
    check(radii.depth(), radii, cfg)?;
    if !(c11 >= 0.0 && c11.is_finite()) {
        return Err(domain("C_{1,1} must be finite and nonnegative"));
    }
    let lp = cfg.act_lipschitz;
    let b = cfg.input_row_bound;
    let alphas = propagation_alphas(radii, lp);
    let t = 2.0 / 3.0;
    let cv1 = radii.get(1, MatrixKind::V).spectral;
    let mut acc = 1.0 + (lp * cv1).powf(t);
    for ell in 1..=radii.depth() {
        let cm = radii.get(ell, MatrixKind::M).spectral;
        let cv = radii.get(ell, MatrixKind::V).spectral;
        let ups = if ell == 1 { (2.0 * lp * cm * cv * b).powf(t) } else { 1.0 + (2.0 * lp * cm * cv).powf(t) + (lp * cv).powf(t) };
        acc += alphas[ell - 1].powf(t) * ups;
    }
    let factor = c11 * acc.powf(1.5);
    let n = cfg.n as f64;
    let hidden = cfg.hidden as f64;
    let log_term = ((2.0 * hidden * hidden + 1.0).ln() / n).sqrt();
    let full = cfg.univ_const * (cfg.loss_lipschitz * cfg.readout_radius * factor * log_term + cfg.confidence_term());
    Ok(BaselineProxy { factor, full })
}

/// Both sides of ||W||_{2,1} <= sqrt(N)||W||_F <= sqrt(N rank)||W||_2 and
/// ||W||_{1,1} <= N||W||_F <= N sqrt(rank)||W||_2. For a rows x cols matrix
/// the (2,1) chain uses N = cols and the (1,1) chain uses N = sqrt(rows cols).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConversionBounds {
    pub mixed21: f64,
    pub sqrt_n_frob: f64,
    pub sqrt_n_rank_spec: f64,
    pub mixed11: f64,
    pub n_frob: f64,
    pub n_sqrt_rank_spec: f64,
}

impl ConversionBounds {
    /// Largest relative violation of either chain (<= 0 when both hold).
    pub fn worst_violation(&self) -> f64 {
        let v = |a: f64, b: f64| (a - b) / b.max(1e-300);
        [
            v(self.mixed21, self.sqrt_n_frob),
            v(self.sqrt_n_frob, self.sqrt_n_rank_spec),
            v(self.mixed11, self.n_frob),
            v(self.n_frob, self.n_sqrt_rank_spec),
        ]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn conversion_bounds(m: &Matrix) -> Result<ConversionBounds> {
    let n21 = m.cols() as f64;
    let n11 = (m.rows() as f64 * m.cols() as f64).sqrt();
    let s = spectrum(m);
    let rank = s.rank() as f64;
    let f = frobenius_norm(m);
    let sp = s.spectral_norm();
    Ok(ConversionBounds {
        mixed21: mixed_norm(m, 2.0, 1.0)?,
        sqrt_n_frob: n21.sqrt() * f,
        sqrt_n_rank_spec: (n21 * rank).sqrt() * sp,
        mixed11: mixed_norm(m, 1.0, 1.0)?,
        n_frob: n11 * f,
        n_sqrt_rank_spec: n11 * rank.sqrt() * sp,
    })
}

pub type Q = Ratio<i64>;

/// Product C_F^a C^{bL} L^c N^d r^e with rational exponents (constants dropped).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Monomial {
    pub c_f: Q,
    pub c_per_layer: Q,
    pub depth: Q,
    pub hidden: Q,
    pub rank: Q,
}

impl Monomial {
    pub fn one() -> Self {
        let z = Q::from_integer(0);
        Monomial { c_f: z, c_per_layer: z, depth: z, hidden: z, rank: z }
    }

    pub fn times(self, o: Monomial) -> Monomial {
        Monomial {
            c_f: self.c_f + o.c_f,
            c_per_layer: self.c_per_layer + o.c_per_layer,
            depth: self.depth + o.depth,
            hidden: self.hidden + o.hidden,
            rank: self.rank + o.rank,
        }
    }

    pub fn pow(self, e: Q) -> Monomial {
        Monomial {
            c_f: self.c_f * e,
            c_per_layer: self.c_per_layer * e,
            depth: self.depth * e,
            hidden: self.hidden * e,
            rank: self.rank * e,
        }
    }

    fn q(x: Q) -> f64 {
        *x.numer() as f64 / *x.denom() as f64
    }

    pub fn eval(&self, c_f: f64, c: f64, depth: f64, hidden: f64, rank: f64) -> f64 {
        let f = |b: f64, e: Q| if *e.numer() == 0 { 1.0 } else { b.powf(Self::q(e)) };
        f(c_f, self.c_f)
            * f(c, self.c_per_layer * Q::from_integer(1)).powf(depth)
            * f(depth, self.depth)
            * f(hidden, self.hidden)
            * f(rank, self.rank)
    }

    /// Canonical rendering, e.g. "C_F^(1/2) C^(L/2) L N^(3/4)".
    pub fn render(&self) -> String {
        fn exp(e: Q) -> Option<String> {
            if *e.numer() == 0 {
                None
            } else if e == Q::from_integer(1) {
                Some(String::new())
            } else if e.is_integer() {
                Some(format!("^{}", e.numer()))
            } else {
                Some(format!("^({}/{})", e.numer(), e.denom()))
            }
        }
        let mut parts = Vec::new();
        if let Some(e) = exp(self.c_f) {
            parts.push(format!("C_F{e}"));
        }
        if *self.c_per_layer.numer() != 0 {
            let e = self.c_per_layer;
            parts.push(if e == Q::from_integer(1) {
                "C^L".to_string()
            } else if e.is_integer() {
                format!("C^({}L)", e.numer())
            } else if *e.numer() == 1 {
                format!("C^(L/{})", e.denom())
            } else {
                format!("C^({}L/{})", e.numer(), e.denom())
            });
        }
        for (name, e) in [("L", self.depth), ("N", self.hidden), ("r", self.rank)] {
            if let Some(s) = exp(e) {
                parts.push(format!("{name}{s}"));
            }
        }
        if parts.is_empty() {
            "1".to_string()
        } else {
            parts.join(" ")
        }
    }
}

/// Matched-constraint regime of the comparison table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime {
    Frobenius { c_f: f64 },
    Rank { r: f64 },
    SpectralOnly,
}

/// Symbolic leading factors of the three bounds in one regime.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RegimeRow {
    pub ours: Monomial,
    pub edelman: Monomial,
    pub trauger: Monomial,
}

fn q(n: i64, d: i64) -> Q {
    Q::new(n, d)
}

fn var(field: fn(&mut Monomial) -> &mut Q, e: Q) -> Monomial {
    let mut m = Monomial::one();
    *field(&mut m) = e;
    m
}

/// Derives the leading factors symbolically.
///
/// Ours: common-p value with uniform Schatten radius S per matrix, gamma = O(1),
/// alpha <= C^L, giving L^{(3p+2)/(2(p+2))} C^{Lp/(p+2)} S^{1/(p+2)} N^{(p+1)/(p+2)}.
/// Baselines: (sum_ell alpha^{2/3} xi)^{3/2} ~ C^L L^{3/2} times the mixed radius,
/// with C_{2,1} and C_{1,1} bounded through the norm-conversion chains.
pub fn regime_symbolic(regime: Regime) -> RegimeRow {
    let (p, s, c21, c11) = match regime {
        Regime::Frobenius { .. } => (
            q(2, 1),
            var(|m| &mut m.c_f, q(2, 1)),
            var(|m| &mut m.hidden, q(1, 2)).times(var(|m| &mut m.c_f, q(1, 1))),
            var(|m| &mut m.hidden, q(1, 1)).times(var(|m| &mut m.c_f, q(1, 1))),
        ),
        Regime::Rank { .. } => (
            q(0, 1),
            var(|m| &mut m.rank, q(1, 1)),
            var(|m| &mut m.hidden, q(1, 2)).times(var(|m| &mut m.rank, q(1, 2))),
            var(|m| &mut m.hidden, q(1, 1)).times(var(|m| &mut m.rank, q(1, 2))),
        ),
        Regime::SpectralOnly => {
            (q(0, 1), var(|m| &mut m.hidden, q(1, 1)), var(|m| &mut m.hidden, q(1, 1)), var(|m| &mut m.hidden, q(3, 2)))
        }
    };
    let two = q(2, 1);
    let pp2 = p + two;
    let ours = var(|m| &mut m.depth, (q(3, 1) * p + two) / (two * pp2))
        .times(var(|m| &mut m.c_per_layer, p / pp2))
        .times(s.pow(q(1, 1) / pp2))
        .times(var(|m| &mut m.hidden, (p + q(1, 1)) / pp2));
    // sum over L layers of (C^L)^{2/3}, raised to 3/2.
    let prop = var(|m| &mut m.depth, q(1, 1)).times(var(|m| &mut m.c_per_layer, q(2, 3))).pow(q(3, 2));
    RegimeRow { ours, edelman: prop.times(c21), trauger: prop.times(c11) }
}

/// Numeric leading factors of the three bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeValues {
    pub ours: f64,
    pub edelman: f64,
    pub trauger: f64,
}

pub fn regime_table(regime: Regime, hidden: f64, depth: f64, c: f64) -> Result<RegimeValues> {
    let (c_f, r) = match regime {
        Regime::Frobenius { c_f } => (c_f, 1.0),
        Regime::Rank { r } => (1.0, r),
        Regime::SpectralOnly => (1.0, 1.0),
    };
    if [hidden, depth, c, c_f, r].iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(domain("regime parameters must be positive"));
    }
    let row = regime_symbolic(regime);
    let ev = |m: Monomial| m.eval(c_f, c, depth, hidden, r);
    Ok(RegimeValues { ours: ev(row.ours), edelman: ev(row.edelman), trauger: ev(row.trauger) })
}
