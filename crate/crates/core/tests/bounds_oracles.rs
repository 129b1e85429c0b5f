//! Bound formulas against independent transcriptions and numeric oracles.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schatten_bounds::bounds::{
    allocate_radii, dudley_complexity, interp_entropy, interp_entropy_at_tau, interp_tau, BoundConfig, InterpDims, LayerRadii, MatrixKind,
    MatrixRadius,
};
use schatten_bounds::model::{LayerWeights, TheoryWeights};
use schatten_bounds::posthoc::{penalty_omega, posthoc_bound, select_indices, weight_spectra};
use schatten_bounds::spectral::spectrum;

use common::{direct_schatten_power, gaussian, rel_err};

/// Both entropy terms, written out from the interpolation statement.
#[allow(clippy::too_many_arguments)]
fn interp_oracle(l: f64, m: f64, p: f64, cs: f64, c2: f64, b: f64, eps: f64, n: f64, d: f64, tau: f64) -> f64 {
    let rank_bound = cs / tau.powf(p);
    let low = (l + m) * rank_bound * (32.0 * cs.sqrt() * c2 * b / (tau.powf(p / 2.0) * eps) + 1.0).ln();
    let a = tau * l.min(m).sqrt();
    let ep = eps / 4.0;
    let tail = 144.0 * a.powi(2) * b.powi(2) * m / ep.powi(2) * (20.0 * (8.0 * a * b / ep + 2.0).ceil() * n * d).ln();
    low + tail
}

#[test]
fn interpolation_entropy_matches_transcription_on_tau_grid() {
    let dims = InterpDims { in_dim: 8, out_dim: 8 };
    let (p, cs, c2, b, eps, n, d) = (1.0, 4.0, 1.0, 1.0, 0.1, 100u64, 8u64);
    let (value, tau) = interp_entropy(dims, p, cs, c2, b, eps, n, d).unwrap();
    assert!(rel_err(value, interp_oracle(8.0, 8.0, p, cs, c2, b, eps, n as f64, d as f64, tau)) < 1e-12);
    for k in 0..10 {
        let t = tau * 2f64.powf(-2.0 + 4.0 * k as f64 / 9.0);
        let lib = interp_entropy_at_tau(dims, p, cs, c2, b, eps, n, d, t);
        assert!(rel_err(lib, interp_oracle(8.0, 8.0, p, cs, c2, b, eps, n as f64, d as f64, t)) < 1e-12, "tau = {t}");
    }
}

#[test]
fn closed_form_tau_balances_and_tracks_the_constant_free_minimizer() {
    let (l, m) = (8.0, 8.0);
    for p in [0.5, 1.0, 2.0] {
        let (cs, b, eps) = (4.0, 1.0, 0.1);
        let tau = interp_tau(InterpDims { in_dim: 8, out_dim: 8 }, p, cs, b, eps);
        // At the closed-form threshold the two constant-free terms coincide.
        let head = |t: f64| (l + m) * cs / t.powf(p);
        let tail = |t: f64| t * t * l.min(m) * m * b * b / (eps * eps);
        assert!(rel_err(head(tau), tail(tau)) < 1e-12);
        // Their sum is minimised at tau (p/2)^{1/(p+2)}; locate it on a fine grid.
        let f = |t: f64| head(t) + tail(t);
        let grid_min = (0..200_000).map(|i| tau * (0.01 + 3.0 * i as f64 / 200_000.0)).min_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
        let predicted = tau * (p / 2.0).powf(1.0 / (p + 2.0));
        assert!(rel_err(grid_min, predicted) < 0.01, "p = {p}: grid {grid_min}, predicted {predicted}");
    }
}

/// inf over alpha of alpha + int_alpha^A sqrt(H(eps)/n), trapezoid on a log grid.
fn dudley_oracle(terms: &[(f64, f64)], c_last: f64, a: f64, n: f64) -> f64 {
    let h = |e: f64| terms.iter().map(|(c, nu)| c * e.powf(-nu)).sum::<f64>() + c_last * e.powi(-2);
    let g = |e: f64| (h(e) / n).sqrt();
    let k = 10_000;
    let lo = a * 1e-12;
    let xs: Vec<f64> = (0..=k).map(|i| lo * (a / lo).powf(i as f64 / k as f64)).collect();
    // tail[i] = integral from xs[i] to A.
    let mut tail = vec![0.0; k + 1];
    for i in (0..k).rev() {
        tail[i] = tail[i + 1] + 0.5 * (g(xs[i]) + g(xs[i + 1])) * (xs[i + 1] - xs[i]);
    }
    xs.iter().zip(&tail).map(|(x, t)| x + t).fold(f64::INFINITY, f64::min)
}

#[test]
fn dudley_closed_form_within_factor_three_of_entropy_integral() {
    type Case<'a> = (&'a [(f64, f64)], f64, f64, u64);
    let cases: [Case; 4] = [
        (&[(4.0, 1.0), (0.5, 0.5)], 2.0, 1.0, 1000),
        (&[(10.0, 1.5)], 50.0, 3.0, 10_000),
        (&[(1.0, 0.0), (2.0, 1.2), (0.3, 1.5)], 0.1, 0.5, 200),
        (&[], 1e4, 2.0, 100_000),
    ];
    for (terms, c_last, a, n) in cases {
        let closed = dudley_complexity(terms, c_last, a, n, 1.0).unwrap();
        let oracle = dudley_oracle(terms, c_last, a, n as f64);
        let r = closed / oracle;
        assert!((1.0 / 3.0..=3.0).contains(&r), "closed {closed}, oracle {oracle}, ratio {r}");
    }
    // The 1/(1 - nu/2) factor makes the closed form loose as nu approaches 2; it stays an upper bound.
    let (terms, c_last, a, n) = (&[(1.0, 0.0), (2.0, 1.2), (0.3, 1.8)][..], 0.1, 0.5, 200);
    let r = dudley_complexity(terms, c_last, a, n, 1.0).unwrap() / dudley_oracle(terms, c_last, a, n as f64);
    assert!((1.0..10.0).contains(&r), "ratio {r}");
}

#[test]
fn allocation_matches_simplex_grid_search() {
    let (a, b, nu, c) = ([1.0, 4.0], [1.0, 1.0], 2.0, 1.0);
    let (z, value) = allocate_radii(&a, &b, c, nu).unwrap();
    assert!(rel_err(z[0] + z[1], 1.0) < 1e-12);
    let k = 1_000_000;
    let best = (1..k)
        .map(|i| {
            let z0 = i as f64 / k as f64;
            a[0] * z0.powf(-nu) + a[1] * (1.0 - z0).powf(-nu)
        })
        .fold(f64::INFINITY, f64::min);
    assert!(rel_err(value, best) < 1e-4, "closed {value}, grid {best}");
}

fn shell(v: f64) -> Option<i32> {
    if v == 0.0 {
        return None;
    }
    // Smallest j with v <= 2^j.
    let mut j = -1100;
    while 2f64.powi(j) < v {
        j += 1;
    }
    Some(j)
}

fn omega_oracle(powers: &[f64], m: u32) -> f64 {
    let z = 3.0 / std::f64::consts::PI.powi(2);
    powers
        .iter()
        .map(|&s| {
            let w = match shell(s) {
                None => z,
                Some(j) => z / (1.0 + j.abs() as f64).powi(2),
            };
            (2.0 * m as f64 + 1.0).ln() - w.ln()
        })
        .sum()
}

#[test]
fn omega_matches_direct_sum_at_bert_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let powers: Vec<f64> = (0..12 * 26).map(|i| if i % 17 == 0 { 0.0 } else { 10f64.powf(rng.gen_range(-6.0..6.0)) }).collect();
    let mut with_exact = powers.clone();
    with_exact.extend([1.0, 2.0, 0.5, 1024.0]);
    for m in [1, 13, 20] {
        assert!(rel_err(penalty_omega(&with_exact, m).unwrap(), omega_oracle(&with_exact, m)) < 1e-12);
    }
}

#[test]
fn posthoc_bound_matches_term_by_term_transcription() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 12;
    let layers: Vec<LayerWeights> = (0..2)
        .map(|_| LayerWeights { qk: gaussian(&mut rng, n, n, 0.2), v: gaussian(&mut rng, n, n, 0.3), m: gaussian(&mut rng, n, n, 0.25) })
        .collect();
    let w = TheoryWeights::new(layers.clone(), vec![0.1; n], 0).unwrap();
    let cfg =
        BoundConfig { depth: 2, hidden: n as u64, n: 5000, tokens: 32, act_lipschitz: 1.1, input_row_bound: 1.3, ..BoundConfig::default() };
    let sn = |m: &schatten_bounds::spectral::Matrix| spectrum(m).spectral_norm();
    let c: Vec<[f64; 3]> = layers.iter().map(|l| [sn(&l.qk), sn(&l.v), sn(&l.m)]).collect();
    let radii = LayerRadii::new(c.iter().map(|r| r.map(|s| MatrixRadius::new(s, 1.0, 1.0))).collect()).unwrap();
    let spectra = weight_spectra(&w);
    let m = 3;
    let p_vec = [0.0, 0.4, 1.7, 2.0, 0.9, 1.0];

    let lp = cfg.act_lipschitz;
    let b = cfg.input_row_bound;
    let layer_lip = |k: usize| lp * c[k][2] * c[k][1] * (1.0 + 4.0 * c[k][0]);
    let alpha = [layer_lip(1), 1.0];
    let gamma = |ell: usize, kind: usize| match kind {
        0 => 2.0 * c[ell][1] * c[ell][2] * if ell == 0 { b.powi(3) } else { 1.0 },
        1 => c[ell][2] * if ell == 0 { b } else { 1.0 },
        _ => 1.0,
    };
    let (depth, hidden) = (2.0, n as f64);
    let mut complexity = 0.0;
    let mut chi: f64 = 0.0;
    let mut projected_powers = Vec::new();
    for (i, ws) in spectra.iter().enumerate() {
        let (ell, kind) = (i / 3, i % 3);
        assert_eq!((ws.layer, ws.kind), (ell + 1, MatrixKind::ALL[kind]));
        let p = p_vec[i];
        let sv = ws.spectrum.values();
        let sp = if p == 0.0 { ws.spectrum.rank() as f64 } else { direct_schatten_power(sv, p) };
        let h = lp * gamma(ell, kind) * alpha[ell];
        complexity += sp.powf(1.0 / (p + 2.0)) * (h * depth).powf(p / (p + 2.0)) * hidden.powf((p + 1.0) / (p + 2.0));
        chi = chi.max(sv[0].ln().abs() + h.ln().abs());
        let pp = (p * m as f64).ceil() / m as f64;
        projected_powers.push(if pp == 0.0 { ws.spectrum.rank() as f64 } else { direct_schatten_power(sv, pp) });
    }
    let mf = m as f64;
    let rounding = (chi / mf).exp() * depth.powf(1.0 / (2.0 * mf)) * hidden.powf(1.0 / (4.0 * mf));
    let nn = cfg.n as f64;
    let main = ((nn * cfg.tokens as f64).ln() / nn).sqrt() * rounding * complexity;
    let omega = omega_oracle(&projected_powers, m);
    let penalty = (((1.0 / cfg.delta).ln() + omega) / nn).sqrt();
    let readout = nn.ln().powf(1.5) / nn.sqrt();

    let got = posthoc_bound(&spectra, &radii, &cfg, m, &p_vec).unwrap();
    for (name, lib, want) in [
        ("complexity", got.complexity, complexity),
        ("chi", got.chi, chi),
        ("rounding", got.rounding_factor, rounding),
        ("omega", got.omega, omega),
        ("main", got.main, main),
        ("penalty", got.penalty, penalty),
        ("readout", got.readout, readout),
        ("total", got.total, main + penalty + readout),
    ] {
        assert!(rel_err(lib, want) < 1e-12, "{name}: {lib} vs {want}");
    }

    // Per-matrix selection never exceeds the complexity at any on-grid index vector.
    let sel = select_indices(&spectra, &radii, &cfg, m).unwrap();
    let on_grid: Vec<f64> = p_vec.iter().map(|p| (p * mf).ceil() / mf).collect();
    let at_grid = posthoc_bound(&spectra, &radii, &cfg, m, &on_grid).unwrap();
    assert!(sel.total <= at_grid.complexity * (1.0 + 1e-12));
}
