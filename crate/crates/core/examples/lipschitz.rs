//! Forward pass of the simplified Transformer and an empirical check of the
//! block Lipschitz inequality.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schatten_bounds::model::{block_forward, scalar_output, Activation, LayerWeights, TheoryWeights};
use schatten_bounds::spectral::{spectrum, two_to_inf_norm, Matrix};

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Matrix {
    Matrix::from_fn(r, c, |_, _| scale * rng.gen_range(-1.0..1.0)).unwrap()
}

fn main() -> schatten_bounds::Result<()> {
    let (t, n) = (16, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let act = Activation::gelu();
    let (qk, v, m) = (random(&mut rng, n, n, 0.2), random(&mut rng, n, n, 0.3), random(&mut rng, n, n, 0.3));
    let (cqk, cv, cm) = (spectrum(&qk).spectral_norm(), spectrum(&v).spectral_norm(), spectrum(&m).spectral_norm());
    let b = 1.0;
    let lip = act.lipschitz * cm * cv * (1.0 + 4.0 * cqk * b * b);
    println!("C_QK = {cqk:.4}, C_V = {cv:.4}, C_M = {cm:.4}, Lipschitz bound = {lip:.4}");

    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let z = schatten_bounds::model::project_rows(&random(&mut rng, t, n, 0.5));
        let dz = random(&mut rng, t, n, 1e-3);
        let z2 = schatten_bounds::model::project_rows(&Matrix::from_dmatrix(z.as_dmatrix() + dz.as_dmatrix())?);
        let f1 = block_forward(&z, &qk, &v, &m, act)?;
        let f2 = block_forward(&z2, &qk, &v, &m, act)?;
        let num = two_to_inf_norm(&Matrix::from_dmatrix(f1.as_dmatrix() - f2.as_dmatrix())?);
        let den = two_to_inf_norm(&Matrix::from_dmatrix(z.as_dmatrix() - z2.as_dmatrix())?);
        worst = worst.max(num / (lip * den));
    }
    println!("max empirical / theoretical ratio over 200 pairs: {worst:.4} (must be <= 1)");

    let layers = vec![LayerWeights { qk, v, m }];
    let readout: Vec<f64> = (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
    let w = TheoryWeights::new(layers, readout, 0)?;
    let x = random(&mut rng, t, n, 0.2);
    println!("scalar output {:.6} (|f(X)| <= ||w||_2 = {})", scalar_output(&x, &w, act)?, w.readout_norm());
    Ok(())
}
