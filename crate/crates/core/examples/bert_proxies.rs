//! Synthetic BERT-layout checkpoint: headwise composition, per-matrix index
//! selection, B_ours and B_Edelman.

use schatten_bounds::bertproxy::{analyze_checkpoint, b_edelman, b_ours, p_sweep_diagnostic};
use schatten_bounds::ingest::{map_bert_layout, synth_checkpoint, BertNaming, SynthSpec};

fn main() -> schatten_bounds::Result<()> {
    let spec = SynthSpec::miniatures(2, 128, 42);
    let table = synth_checkpoint(&spec)?;
    let ckpt = map_bert_layout(&table, &BertNaming::default(), spec.head_dim)?;
    println!(
        "L = {}, N = {}, heads = {}, d_h = {}, I = {}",
        ckpt.depth(),
        ckpt.hidden(),
        ckpt.heads(),
        ckpt.head_dim(),
        ckpt.intermediate()
    );
    let a = analyze_checkpoint(&ckpt, None)?;
    let l_phi = 1.13;
    let ours = b_ours(&a, None, l_phi)?;
    for (r, c) in a.records.iter().zip(&ours.choices) {
        println!("{:<22} rank {:>3}  sigma_1 {:>8.4}  p* = {:.3}  term {:.3}", r.name(), r.spectrum.rank(), r.spectral_norm, c.p, c.term);
    }
    println!("B_ours = {:.4} (grid m = {})", ours.value, ours.m);
    println!("B_Edelman = {:.4e}", b_edelman(&a, l_phi));
    let curves = p_sweep_diagnostic(&a, &[0.0, 0.5, 1.0, 2.0], l_phi)?;
    let c = &curves[0];
    println!("term(p)/term(0) for {}: {:?}", a.records[0].name(), c.ratio.as_ref().unwrap());
    Ok(())
}
