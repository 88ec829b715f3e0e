//! `biasgraph` command-line front end.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use biasgraph::fixture::write_planted_fixture;
use biasgraph::pipeline::{self, RunConfig};
use biasgraph::probes::ProbeSettings;
use biasgraph::stats::{default_tau_grid, RankingMode};
use biasgraph::Execution;

#[derive(Parser)]
#[command(name = "biasgraph", version, about = "Compare dataset and model concept biases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    args: GlobalArgs,
}

#[derive(clap::Args)]
struct GlobalArgs {
    /// Input bundle directory
    #[arg(long, global = true)]
    bundle: Option<PathBuf>,
    /// Run directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Presence threshold for binarization and graph edges
    #[arg(long, global = true, default_value_t = 0.5)]
    tau: f64,
    /// Comma-separated threshold grid for the sweep
    #[arg(long, global = true, value_delimiter = ',')]
    tau_grid: Option<Vec<f64>>,
    /// Smallest threshold the sweep considers
    #[arg(long, global = true, default_value_t = 0.1)]
    tau_min: f64,
    /// Comma-separated regularization grid
    #[arg(long, global = true, value_delimiter = ',', default_value = "0.01,0.1,1,10")]
    c_grid: Vec<f64>,
    #[arg(long, global = true, default_value_t = 5)]
    folds: usize,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Size of the dataset reference ranking
    #[arg(long, global = true, default_value_t = 5)]
    top_k: usize,
    /// Size of candidate rankings scored against the reference
    #[arg(long, global = true, default_value_t = 10)]
    candidate_k: usize,
    /// Model ranking reported as the headline recall
    #[arg(long, global = true, value_enum, default_value_t = Mode::ModelF1)]
    mode: Mode,
    /// Keep gray edges in graph.json
    #[arg(long, global = true)]
    include_gray: bool,
    /// Graph layer mode: `aggregate` or a layer id
    #[arg(long, global = true, default_value = "aggregate")]
    layer: String,
    /// Fraction of images used to train probes
    #[arg(long, global = true, default_value_t = 1.0)]
    train_fraction: f64,
    /// Run every loop on the calling thread
    #[arg(long, global = true)]
    sequential: bool,
    #[arg(long, global = true, default_value_t = 8080)]
    port: u16,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    #[value(name = "model_f1")]
    ModelF1,
    #[value(name = "model_js")]
    ModelJs,
}

#[derive(Subcommand)]
enum Command {
    /// Check a bundle and print a summary
    Validate,
    /// Train one probe per (layer, concept)
    Probes,
    /// Bias matrices and alignment reports
    Analyze,
    /// Threshold sweep of the detection score
    Sweep,
    /// Dataset and model concept rankings
    Rank,
    /// Recall of candidate rankings against the dataset top-k
    Recall {
        /// External rankings: [{method, layer, ranking: [{concept, score}]}]
        #[arg(long)]
        rankings: Option<PathBuf>,
    },
    /// Knowledge graph and layer dynamics payloads
    Graph,
    /// Serve a run directory over HTTP
    Serve {
        /// Directory to serve (defaults to --out)
        dir: Option<PathBuf>,
    },
    /// Every stage from probes to graph
    All {
        #[arg(long)]
        rankings: Option<PathBuf>,
    },
    /// Write the planted-bias bundle to --out
    Fixture,
}

fn config(args: &GlobalArgs) -> Result<RunConfig> {
    let bundle = args.bundle.clone().context("--bundle is required")?;
    let out = args.out.clone().context("--out is required")?;
    let cfg = RunConfig {
        bundle,
        out,
        tau: args.tau,
        tau_grid: args.tau_grid.clone().unwrap_or_else(default_tau_grid),
        tau_min: args.tau_min,
        probe: ProbeSettings {
            c_grid: args.c_grid.clone(),
            folds: args.folds,
            seed: args.seed,
            train_fraction: args.train_fraction,
            ..ProbeSettings::default()
        },
        top_k: args.top_k,
        candidate_k: args.candidate_k,
        mode: match args.mode {
            Mode::ModelF1 => RankingMode::ModelF1,
            Mode::ModelJs => RankingMode::ModelJs,
        },
        include_gray: args.include_gray,
        graph_layer: args.layer.clone(),
        execution: if args.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var("BAGEL_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .with_context(|| format!("BAGEL_THREADS={value:?}"))?;
    if threads == 0 {
        bail!("BAGEL_THREADS must be positive");
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    Ok(())
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

async fn serve(dir: &Path, port: u16) -> Result<()> {
    if !dir.is_dir() {
        bail!("run directory {} does not exist", dir.display());
    }
    let app = axum::Router::new().fallback_service(tower_http::services::ServeDir::new(dir));
    let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], port))).await?;
    println!("serving {} at http://{}", dir.display(), listener.local_addr()?);
    axum::serve(listener, app).await?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    init_threads()?;
    let args = &cli.args;
    match &cli.command {
        Command::Validate => {
            let bundle = args.bundle.as_deref().context("--bundle is required")?;
            let exec = if args.sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            };
            print_json(&pipeline::validate_bundle(bundle, exec)?)?;
        }
        Command::Probes => {
            let n = pipeline::stage_probes(&config(args)?)?;
            println!("trained {n} probes");
        }
        Command::Analyze => print_json(&pipeline::stage_analyze(&config(args)?)?)?,
        Command::Sweep => {
            let cfg = config(args)?;
            pipeline::stage_sweep(&cfg)?;
            print!("{}", std::fs::read_to_string(cfg.out.join(pipeline::SWEEP_TEXT_FILE))?);
        }
        Command::Rank => {
            let r = pipeline::stage_rank(&config(args)?)?;
            print_json(&r.dataset.entries.iter().take(args.top_k).collect::<Vec<_>>())?;
        }
        Command::Recall { rankings } => print_json(&pipeline::stage_recall(&config(args)?, rankings.as_deref())?)?,
        Command::Graph => {
            let g = pipeline::stage_graph(&config(args)?)?;
            println!("{} nodes, {} edges", g.nodes.len(), g.edges.len());
        }
        Command::Serve { dir } => {
            let dir = dir
                .clone()
                .or_else(|| args.out.clone())
                .context("a directory or --out is required")?;
            tokio::runtime::Runtime::new()?.block_on(serve(&dir, args.port))?;
        }
        Command::All { rankings } => {
            let cfg = config(args)?;
            let manifest = pipeline::run_all(&cfg, rankings.as_deref())?;
            println!("wrote {} artifacts to {}", manifest.files.len() + 1, cfg.out.display());
        }
        Command::Fixture => {
            let out = args.out.as_deref().context("--out is required")?;
            let planted = write_planted_fixture(out, args.seed)?;
            println!(
                "wrote planted bundle to {} ({} encoded pairs)",
                out.display(),
                planted.encoded.len()
            );
        }
    }
    Ok(())
}
