//! Data-dependent Schatten index selection and the post hoc bound.

use schatten_bounds::bounds::{BoundConfig, LayerRadii, MatrixRadius};
use schatten_bounds::model::{LayerWeights, TheoryWeights};
use schatten_bounds::posthoc::{posthoc_bound, select_indices, weight_spectra, IndexGrid};
use schatten_bounds::spectral::Matrix;

fn main() -> schatten_bounds::Result<()> {
    let n = 16;
    // Low-rank attention, flat value map, power-law MLP.
    let qk = Matrix::from_fn(n, n, |i, j| if i == j && i < 2 { 1.0 } else { 0.0 })?;
    let v = Matrix::identity(n).scaled(0.5)?;
    let m = Matrix::from_fn(n, n, |i, j| if i == j { ((i + 1) as f64).powf(-0.7) } else { 0.0 })?;
    let layers = vec![LayerWeights { qk: qk.clone(), v: v.clone(), m: m.clone() }, LayerWeights { qk, v, m }];
    let w = TheoryWeights::new(layers, vec![1.0 / (n as f64).sqrt(); n], 0)?;
    let spectra = weight_spectra(&w);
    let radii = LayerRadii::new(w.radii().iter().map(|r| [r.qk, r.v, r.m].map(|c| MatrixRadius::new(c, 1.0, 1.0))).collect())?;
    let cfg = BoundConfig { depth: 2, hidden: n as u64, ..BoundConfig::default() };
    let grid = IndexGrid::default_for(2, n as u64);
    let sel = select_indices(&spectra, &radii, &cfg, grid.m())?;
    println!("grid m = {} ({} points)", grid.m(), grid.len());
    for e in &sel.entries {
        println!("layer {} {:>2}: p = {:.3}, ||W||^p = {:.4}, term = {:.4}", e.layer, e.kind.label(), e.p, e.schatten_power, e.term);
    }
    println!("complexity {:.4}, chi {:.4}, Omega {:.4}", sel.total, sel.chi, sel.omega.unwrap());
    let p: Vec<f64> = sel.entries.iter().map(|e| e.p).collect();
    let b = posthoc_bound(&spectra, &radii, &cfg, grid.m(), &p)?;
    println!("post hoc bound: main {:.4}, penalty {:.4}, readout {:.4}, total {:.4}", b.main, b.penalty, b.readout, b.total);
    Ok(())
}
