//! Radius allocation, metric entropy and the fixed-index generalization bounds.

use schatten_bounds::bounds::{
    allocate_radii, dudley_complexity, gap_bound_common_p, gap_bound_general_p, interp_entropy, propagation_alphas, BoundConfig,
    InterpDims, LayerRadii, MatrixRadius,
};

fn main() -> schatten_bounds::Result<()> {
    let (z, value) = allocate_radii(&[1.0, 4.0, 9.0], &[1.0, 1.0, 1.0], 1.0, 1.0)?;
    println!("allocation z = {z:.4?}, optimum {value:.4}");

    let dims = InterpDims { in_dim: 8, out_dim: 8 };
    let (h, tau) = interp_entropy(dims, 1.0, 4.0, 1.0, 1.0, 0.1, 100, 8)?;
    println!("interpolation entropy bound {h:.4e} at tau = {tau:.4}");

    let dudley = dudley_complexity(&[(10.0, 1.0)], 0.0, 1.0, 10_000, 1.0)?;
    println!("Dudley complexity for 10 eps^-1 entropy: {dudley:.4e}");

    let depth = 4;
    let cfg = BoundConfig { depth: depth as u64, hidden: 768, ..BoundConfig::default() };
    for p in [0.0, 1.0, 2.0] {
        let radii = LayerRadii::uniform(depth, MatrixRadius::new(1.0, 64.0, p))?;
        let g = gap_bound_general_p(&radii, &cfg)?;
        let c = gap_bound_common_p(&radii, &cfg)?;
        println!("p = {p}: general-p total {:.4e} (main {:.4e}), common-p total {:.4e}, Xi = {:.4e}", g.total, g.main, c.bound.total, c.xi);
    }
    let radii = LayerRadii::uniform(depth, MatrixRadius::new(1.1, 64.0, 0.0))?;
    println!("propagation factors alpha: {:.4?}", propagation_alphas(&radii, cfg.act_lipschitz));
    Ok(())
}
