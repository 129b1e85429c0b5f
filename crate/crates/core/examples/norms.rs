//! Singular values, Schatten powers, the rho sandwich and norm conversion chains.

use schatten_bounds::baselines::conversion_bounds;
use schatten_bounds::spectral::{frobenius_norm, mixed_norm, spectrum, two_to_inf_norm, Matrix};

fn main() -> schatten_bounds::Result<()> {
    // Rank-2 6x6 matrix with singular values 3 and 1.
    let u = [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]];
    let w = Matrix::from_fn(6, 6, |i, j| 3.0 * u[i][0] * u[j][0] + u[i][1] * u[j][1])?;
    let s = spectrum(&w);
    println!("singular values: {:?}", s.values());
    println!("numerical rank (p = 0): {}", s.schatten_power(0.0)?);
    for p in [0.5, 1.0, 2.0] {
        println!("||W||_(s,{p})^{p} = {:.6}   rho_{p} = {:.6}", s.schatten_power(p)?, s.rho(p)?.unwrap());
    }
    println!("spectral {:.6}  frobenius {:.6}  2->inf {:.6}", s.spectral_norm(), frobenius_norm(&w), two_to_inf_norm(&w));
    println!("mixed (2,1) {:.6}  mixed (1,1) {:.6}", mixed_norm(&w, 2.0, 1.0)?, mixed_norm(&w, 1.0, 1.0)?);

    let c = conversion_bounds(&w)?;
    println!("||W||_21 = {:.4} <= sqrt(N)||W||_F = {:.4} <= sqrt(N rank)||W||_2 = {:.4}", c.mixed21, c.sqrt_n_frob, c.sqrt_n_rank_spec);
    println!("||W||_11 = {:.4} <= N||W||_F = {:.4} <= N sqrt(rank)||W||_2 = {:.4}", c.mixed11, c.n_frob, c.n_sqrt_rank_spec);
    println!("worst chain violation (<= 0 means both hold): {:.3e}", c.worst_violation());
    Ok(())
}
