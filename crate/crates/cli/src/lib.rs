//! Command-line front end: `embed`, `stability`, `plot` and `knn`.

pub mod config;
pub mod output;
pub mod plot;
pub mod report;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use umap_core::{exact_knn, load_matrix, nn_descent, subsample_stability, umap_embed, EmbeddingCoords, MatrixFormat, RngState};

use crate::config::{GraphFormat, RunArgs};
use crate::report::{EmbedSummary, RunReport, StabilitySummary};

#[derive(Debug, Parser)]
#[command(name = "umap", version, about = "Uniform manifold approximation and projection")]
pub struct Cli {
    /// Worker threads for parallel stages; 0 uses every core. `1` gives the
    /// reference single-threaded run
    #[arg(long, global = true, env = "UMAP_THREADS", default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Embed a data matrix and write its coordinates
    Embed(EmbedArgs),
    /// Measure how well subsample embeddings agree with the full embedding
    Stability(StabilityArgs),
    /// Draw a 2-D embedding as an SVG scatter plot
    Plot(PlotArgs),
    /// Dump the directed k-nearest-neighbor graph
    Knn(KnnArgs),
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub run: RunArgs,

    /// Also write the symmetric fuzzy graph here
    #[arg(long, value_name = "FILE")]
    pub graph: Option<PathBuf>,

    /// Graph encoding [default: text]
    #[arg(long, value_enum)]
    pub graph_format: Option<GraphFormat>,

    /// Also draw the embedding (2-D only) as SVG here
    #[arg(long, value_name = "FILE")]
    pub plot: Option<PathBuf>,

    /// One label per line, used to color the plot
    #[arg(long, value_name = "FILE")]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub run: RunArgs,

    /// Comma-separated subsample fractions in (0, 1], ascending
    #[arg(long, value_delimiter = ',', required = true)]
    pub fractions: Vec<f64>,

    /// Trials averaged per fraction
    #[arg(long, default_value_t = 5)]
    pub trials: usize,

    /// Seed for drawing subsamples [default: the run seed]
    #[arg(long)]
    pub subsample_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Embedding file with two columns
    #[arg(long, short = 'e', value_name = "FILE")]
    pub embedding: PathBuf,

    /// Embedding encoding: delimited, raw-binary-f64 or raw-binary-f32
    #[arg(long, default_value = "delimited")]
    pub format: MatrixFormat,

    /// One label per line
    #[arg(long, value_name = "FILE")]
    pub labels: Option<PathBuf>,

    /// SVG destination
    #[arg(long, short = 'o', value_name = "FILE")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct KnnArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

/// Parses arguments and runs the chosen command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::parse_from(args);
    if cli.threads > 0 {
        // only the first pool configuration in a process takes effect
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match cli.command {
        Command::Embed(a) => cmd_embed(a),
        Command::Stability(a) => cmd_stability(a),
        Command::Plot(a) => cmd_plot(a),
        Command::Knn(a) => cmd_knn(a),
    }
}

fn embedding_from_matrix(m: &umap_core::DataMatrix) -> Result<EmbeddingCoords> {
    let mut values = Vec::with_capacity(m.n_samples() * m.n_features());
    for i in 0..m.n_samples() {
        values.extend(m.dense_row(i));
    }
    Ok(EmbeddingCoords::new(m.n_samples(), m.n_features(), values)?)
}

fn warn_if_capped(cfg: &umap_core::UmapConfig, n: usize) {
    let k = cfg.effective_n_neighbors(n);
    if k < cfg.n_neighbors {
        eprintln!("warning: n_neighbors = {} but only {n} samples; using {k}", cfg.n_neighbors);
    }
}

pub fn cmd_embed(args: EmbedArgs) -> Result<()> {
    let mut cfg = args.run.resolve()?;
    if args.graph.is_some() {
        cfg.graph = args.graph.clone();
    }
    if let Some(f) = args.graph_format {
        cfg.graph_format = f;
    }
    if args.plot.is_some() {
        cfg.plot = args.plot.clone();
    }
    if args.labels.is_some() {
        cfg.labels = args.labels.clone();
    }
    let input = cfg.require_input()?.to_path_buf();
    let output = cfg.require_output()?.to_path_buf();

    let data = load_matrix(&input, cfg.input_format)?;
    // validate everything before the long computation and before any write
    cfg.umap.validate_for(data.n_samples())?;
    let labels = match &cfg.labels {
        Some(p) => Some(plot::read_labels(p)?),
        None => None,
    };
    if cfg.plot.is_some() {
        plot::check_plot_inputs(data.n_samples(), cfg.umap.n_components, labels.as_deref())?;
    }

    warn_if_capped(&cfg.umap, data.n_samples());
    let result = umap_embed(&data, &cfg.umap)?;
    output::write_embedding(&output, &result.coords, cfg.output_format)?;
    if let Some(p) = &cfg.graph {
        output::write_graph(p, &result.graph, cfg.graph_format)?;
    }
    if let Some(p) = &cfg.plot {
        output::write_text(p, &plot::render_svg(&result.coords, labels.as_deref())?)?;
    }
    if let Some(p) = &cfg.report {
        let mut report = RunReport::new("embed", &cfg, &data);
        report.embed = Some(EmbedSummary::of(&result));
        output::write_json(p, &report)?;
    }
    Ok(())
}

pub fn cmd_stability(args: StabilityArgs) -> Result<()> {
    let cfg = args.run.resolve()?;
    let input = cfg.require_input()?.to_path_buf();
    let output = cfg.require_output()?.to_path_buf();
    if let Some(bad) = args.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        bail!("fraction {bad} is outside the allowed range (0, 1]");
    }
    let data = load_matrix(&input, cfg.input_format)?;
    cfg.umap.validate_for(data.n_samples())?;
    let subsample_seed = args.subsample_seed.unwrap_or(cfg.umap.seed);

    let t = Instant::now();
    let rows = subsample_stability(&data, &args.fractions, &cfg.umap, args.trials, &RngState::new(subsample_seed))?;
    let elapsed = t.elapsed().as_secs_f64();

    let mut table = String::from("fraction,mean,stddev\n");
    for r in &rows {
        writeln!(table, "{:?},{:?},{:?}", r.fraction, r.mean, r.stddev)?;
    }
    output::write_text(&output, &table)?;
    if let Some(p) = &cfg.report {
        let mut report = RunReport::new("stability", &cfg, &data);
        report.stability = Some(StabilitySummary {
            fractions: args.fractions.clone(),
            trials: args.trials,
            subsample_seed,
            normalization: "each embedding centered and divided by its own mean point norm".into(),
            rows,
            total_seconds: elapsed,
        });
        output::write_json(p, &report)?;
    }
    Ok(())
}

pub fn cmd_plot(args: PlotArgs) -> Result<()> {
    let m = load_matrix(&args.embedding, args.format)?;
    let coords = embedding_from_matrix(&m).context("reading embedding")?;
    let labels = match &args.labels {
        Some(p) => Some(plot::read_labels(p)?),
        None => None,
    };
    let svg = plot::render_svg(&coords, labels.as_deref())?;
    output::write_text(&args.output, &svg)
}

pub fn cmd_knn(args: KnnArgs) -> Result<()> {
    let cfg = args.run.resolve()?;
    let input = cfg.require_input()?.to_path_buf();
    let output = cfg.require_output()?.to_path_buf();
    let data = load_matrix(&input, cfg.input_format)?;
    cfg.umap.validate_for(data.n_samples())?;
    warn_if_capped(&cfg.umap, data.n_samples());
    let (metric, k) = (cfg.umap.metric, cfg.umap.effective_n_neighbors(data.n_samples()));
    let opts = cfg.umap.knn_options();
    let knn = if data.n_samples() <= opts.exact_threshold {
        exact_knn(&data, metric, k)?
    } else {
        nn_descent(&data, metric, k, &RngState::new(cfg.umap.seed), opts.descent)?
    };
    output::write_neighbors(&output, &knn)
}
