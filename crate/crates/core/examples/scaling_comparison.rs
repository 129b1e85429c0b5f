//! Depth sweep of synthetic checkpoints: normalized B_ours vs B_Edelman, as
//! CSV and an SVG chart written to the temp directory.

use schatten_bounds::bertproxy::{analyze_checkpoint, b_edelman, b_ours};
use schatten_bounds::cli::{compare_csv, compare_points, line_chart, Series};
use schatten_bounds::ingest::{map_bert_layout, synth_checkpoint, BertNaming, SynthSpec};

fn main() -> schatten_bounds::Result<()> {
    let mut pts = Vec::new();
    for depth in [2, 4, 8] {
        let spec = SynthSpec::miniatures(depth, 128, 1);
        let ckpt = map_bert_layout(&synth_checkpoint(&spec)?, &BertNaming::default(), 64)?;
        let a = analyze_checkpoint(&ckpt, None)?;
        pts.push((depth, 128, b_ours(&a, None, 1.13)?.value, b_edelman(&a, 1.13)));
    }
    let (axis, rows) = compare_points(&pts)?;
    print!("{}", compare_csv(&rows));
    let series = [
        Series { label: "B_ours".into(), points: rows.iter().map(|r| (r.depth as f64, r.b_ours_norm)).collect() },
        Series { label: "B_Edelman".into(), points: rows.iter().map(|r| (r.depth as f64, r.b_edelman_norm)).collect() },
    ];
    let svg = line_chart("Scaling with depth (N = 128)", axis.label(), "normalized value", &series, true)?;
    let path = std::env::temp_dir().join("scaling_comparison.svg");
    std::fs::write(&path, svg)?;
    println!("chart written to {}", path.display());
    Ok(())
}
