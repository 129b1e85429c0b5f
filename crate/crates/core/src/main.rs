use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use schatten_bounds::baselines::{regime_symbolic, regime_table, Regime};
use schatten_bounds::bertproxy::{b_edelman, b_ours, p_sweep_diagnostic};
use schatten_bounds::cli::report::{build_report, load_analysis, read_file};
use schatten_bounds::cli::{
    compare_csv, compare_points, line_chart, norm_scaling_csv, run_suite, spectra_csv, sweep_csv, AnalysisConfig, Series, Suite, SweepAxis,
    EXIT_INPUT, EXIT_OK, EXIT_USAGE, EXIT_VIOLATION,
};
use schatten_bounds::ingest::{synth_checkpoint, write_safetensors, Dtype, SynthSpec};
use schatten_bounds::posthoc::IndexGrid;
use schatten_bounds::{Error, Result};

#[derive(Parser)]
#[command(name = "schatten-bounds", version, about = "Spectral complexity proxies for Transformer checkpoints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct AnalysisOpts {
    /// JSON configuration file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Relative rank tolerance for p = 0 terms.
    #[arg(long)]
    rank_tol: Option<f64>,
    /// Schatten index grid resolution m (grid {0, 1/m, ..., 2}).
    #[arg(long)]
    m: Option<u32>,
    /// Tensor name prefix before `encoder.layer.`.
    #[arg(long)]
    prefix: Option<String>,
    /// Attention head width.
    #[arg(long)]
    head_dim: Option<usize>,
}

impl AnalysisOpts {
    fn resolve(&self) -> Result<AnalysisConfig> {
        let mut cfg = match &self.config {
            Some(p) => AnalysisConfig::load(p)?,
            None => AnalysisConfig::default(),
        };
        if self.rank_tol.is_some() {
            cfg.rank_tol = self.rank_tol;
        }
        if self.m.is_some() {
            cfg.m = self.m;
        }
        if let Some(p) = &self.prefix {
            cfg.prefix = p.clone();
        }
        if let Some(d) = self.head_dim {
            cfg.head_dim = d;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Full JSON report for one safetensors checkpoint.
    Analyze {
        path: PathBuf,
        #[command(flatten)]
        opts: AnalysisOpts,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// B_ours vs B_Edelman across checkpoints sharing one sweep axis (CSV).
    Compare {
        #[arg(required = true, num_args = 2..)]
        paths: Vec<PathBuf>,
        #[command(flatten)]
        opts: AnalysisOpts,
        /// Plot normalized rather than raw values.
        #[arg(long)]
        normalize: bool,
        /// Write an SVG line chart here.
        #[arg(long)]
        plot: Option<PathBuf>,
        /// Log-scaled y axis for the chart.
        #[arg(long)]
        log_y: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-matrix term(p)/term(0) over the index grid (CSV).
    SweepP {
        path: PathBuf,
        #[command(flatten)]
        opts: AnalysisOpts,
        /// Grid resolution for the sweep; defaults to ceil(L + ln N).
        #[arg(long)]
        grid: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Singular values of every analysed matrix (CSV).
    Spectra {
        path: PathBuf,
        #[command(flatten)]
        opts: AnalysisOpts,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mixed (2,1)/(1,1), Frobenius and spectral norms across checkpoints (CSV).
    NormScaling {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[command(flatten)]
        opts: AnalysisOpts,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic BERT-layout safetensors checkpoint.
    Synth {
        /// JSON synthetic spec; otherwise the Miniatures-like preset is used.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 128)]
        hidden: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Payload dtype for the preset (F32 or F64).
        #[arg(long, default_value = "F32")]
        dtype: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Leading complexity factors per norm regime, symbolic and evaluated.
    Regime {
        #[arg(long, default_value_t = 768)]
        hidden: usize,
        #[arg(long, default_value_t = 12)]
        depth: usize,
        /// Per-layer spectral radius C.
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        /// Rank r for the rank regime.
        #[arg(long, default_value_t = 64.0)]
        rank: f64,
        /// Frobenius radius C_F for the Frobenius regime.
        #[arg(long, default_value_t = 1.0)]
        c_f: f64,
        /// Emit JSON instead of a text table.
        #[arg(long)]
        json: bool,
    },
    /// Randomised property suites; exit 1 on any violation.
    Verify {
        #[arg(long)]
        suite: Suite,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Emit the suite report as JSON.
        #[arg(long)]
        json: bool,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(Error::from),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes())?;
            so.flush()?;
            Ok(())
        }
    }
}

fn analyze_path(path: &Path, cfg: &AnalysisConfig) -> Result<(schatten_bounds::bertproxy::CheckpointAnalysis, Vec<u8>)> {
    let bytes = read_file(path)?;
    let a = load_analysis(&bytes, cfg)?;
    Ok((a, bytes))
}

fn run(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Analyze { path, opts, out } => {
            let cfg = opts.resolve()?;
            let (a, bytes) = analyze_path(&path, &cfg)?;
            let report = build_report(&a, &cfg, &path.display().to_string(), &bytes)?;
            emit(out.as_deref(), &report.to_json())?;
        }
        Command::Compare { paths, opts, normalize, plot, log_y, out } => {
            let cfg = opts.resolve()?;
            let mut pts = Vec::with_capacity(paths.len());
            for p in &paths {
                let (a, _) = analyze_path(p, &cfg)?;
                let ours = b_ours(&a, cfg.m, cfg.l_phi())?;
                pts.push((a.depth, a.hidden, ours.value, b_edelman(&a, cfg.l_phi())));
            }
            let (axis, rows) = compare_points(&pts)?;
            emit(out.as_deref(), &compare_csv(&rows))?;
            if let Some(svg_path) = plot {
                let x = |r: &schatten_bounds::cli::CompareRow| match axis {
                    SweepAxis::Depth => r.depth as f64,
                    SweepAxis::Hidden => r.hidden as f64,
                };
                let (y_ours, y_edel): (Vec<_>, Vec<_>) = rows
                    .iter()
                    .map(|r| {
                        if normalize {
                            ((x(r), r.b_ours_norm), (x(r), r.b_edelman_norm))
                        } else {
                            ((x(r), r.b_ours_raw), (x(r), r.b_edelman_raw))
                        }
                    })
                    .unzip();
                let series = [Series { label: "B_ours".into(), points: y_ours }, Series { label: "B_Edelman".into(), points: y_edel }];
                let y_label = if normalize { "value / value at smallest checkpoint" } else { "proxy value" };
                let title = format!("Scaling with {}", axis.label());
                std::fs::write(&svg_path, line_chart(&title, axis.label(), y_label, &series, log_y)?)?;
            }
        }
        Command::SweepP { path, opts, grid, out } => {
            let cfg = opts.resolve()?;
            let (a, _) = analyze_path(&path, &cfg)?;
            let g = match grid.or(cfg.m) {
                Some(m) => IndexGrid::new(m)?,
                None => IndexGrid::default_for(a.depth as u64, a.hidden as u64),
            };
            let curves = p_sweep_diagnostic(&a, &g.values(), cfg.l_phi())?;
            emit(out.as_deref(), &sweep_csv(&curves, &a.records))?;
        }
        Command::Spectra { path, opts, out } => {
            let cfg = opts.resolve()?;
            let (a, _) = analyze_path(&path, &cfg)?;
            emit(out.as_deref(), &spectra_csv(&a))?;
        }
        Command::NormScaling { paths, opts, out } => {
            let cfg = opts.resolve()?;
            let analyses = paths.iter().map(|p| analyze_path(p, &cfg).map(|x| x.0)).collect::<Result<Vec<_>>>()?;
            emit(out.as_deref(), &norm_scaling_csv(&analyses))?;
        }
        Command::Synth { spec, layers, hidden, seed, dtype, out } => {
            let spec = match spec {
                Some(p) => serde_json::from_str::<SynthSpec>(&std::fs::read_to_string(&p)?).map_err(|e| Error::Config(e.to_string()))?,
                None => {
                    let mut s = SynthSpec::miniatures(layers, hidden, seed);
                    s.dtype = Dtype::from_name(&dtype).ok_or_else(|| Error::Config(format!("unknown dtype `{dtype}`")))?;
                    s
                }
            };
            std::fs::write(&out, write_safetensors(&synth_checkpoint(&spec)?))?;
        }
        Command::Regime { hidden, depth, c, rank, c_f, json } => {
            let regimes =
                [("frobenius", Regime::Frobenius { c_f }), ("rank", Regime::Rank { r: rank }), ("spectral_only", Regime::SpectralOnly)];
            let mut rows = Vec::new();
            for (name, r) in regimes {
                let sym = regime_symbolic(r);
                let val = regime_table(r, hidden as f64, depth as f64, c)?;
                rows.push((name, sym, val));
            }
            let text = if json {
                let v: Vec<_> = rows
                    .iter()
                    .map(|(n, s, v)| {
                        json!({
                            "regime": n,
                            "symbolic": { "ours": s.ours.render(), "edelman": s.edelman.render(), "trauger": s.trauger.render() },
                            "value": v,
                        })
                    })
                    .collect();
                serde_json::to_string_pretty(&json!({ "schema": 1, "N": hidden, "L": depth, "C": c, "r": rank, "C_F": c_f, "rows": v }))
                    .expect("serializes")
                    + "\n"
            } else {
                let mut t = format!("N = {hidden}, L = {depth}, C = {c}, r = {rank}, C_F = {c_f}\n");
                for (n, s, v) in &rows {
                    t.push_str(&format!("[{n}]\n"));
                    t.push_str(&format!("  ours     {:<34} = {:.6e}\n", s.ours.render(), v.ours));
                    t.push_str(&format!("  Edelman  {:<34} = {:.6e}\n", s.edelman.render(), v.edelman));
                    t.push_str(&format!("  Trauger  {:<34} = {:.6e}\n", s.trauger.render(), v.trauger));
                }
                t
            };
            emit(None, &text)?;
        }
        Command::Verify { suite, trials, seed, json } => {
            let r = run_suite(suite, trials, seed)?;
            let text = if json { serde_json::to_string_pretty(&r).expect("serializes") + "\n" } else { r.render() };
            emit(None, &text)?;
            return Ok(if r.passed() { EXIT_OK } else { EXIT_VIOLATION });
        }
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { EXIT_OK as u8 });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{}", json!({ "error": { "kind": e.kind(), "message": e.to_string() } }));
            ExitCode::from(EXIT_INPUT as u8)
        }
    }
}
