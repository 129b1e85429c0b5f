//! Leading complexity factors per norm regime: ours vs the mixed-norm baselines.

use schatten_bounds::baselines::{regime_symbolic, regime_table, Regime};

fn main() -> schatten_bounds::Result<()> {
    let (n, l, c) = (768.0, 12.0, 1.5);
    for (name, r) in
        [("Frobenius", Regime::Frobenius { c_f: 4.0 }), ("rank", Regime::Rank { r: 64.0 }), ("spectral-only", Regime::SpectralOnly)]
    {
        let s = regime_symbolic(r);
        let v = regime_table(r, n, l, c)?;
        println!("{name} regime");
        println!("  ours     {:<32} {:.4e}", s.ours.render(), v.ours);
        println!("  Edelman  {:<32} {:.4e}", s.edelman.render(), v.edelman);
        println!("  Trauger  {:<32} {:.4e}", s.trauger.render(), v.trauger);
    }
    Ok(())
}
