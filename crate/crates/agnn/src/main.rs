use std::path::PathBuf;
use std::process::ExitCode;

use agnn::config::Settings;
use agnn::core::data::{DagSpec, SbmSpec};
use agnn::runner;
use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "agnn",
    version,
    about = "Asymmetric graph neural networks for directed graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file with the same keys as the long flags; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

impl Common {
    fn resolve(self) -> anyhow::Result<Settings> {
        let file = match &self.config {
            Some(path) => {
                Settings::from_file(path).with_context(|| format!("reading {}", path.display()))?
            }
            None => Settings::default(),
        };
        Ok(self.settings.over(file))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a node classifier over repeated random splits.
    Train(Common),
    /// Mean test accuracy for each regularization weight in --lambda.
    SweepLambda(Common),
    /// Mean test accuracy for each fusion in --fusion (default: all four).
    SweepFusion(Common),
    /// Graph-level regression on a graph-set manifest.
    Regress(Common),
    /// Score a saved model.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write a directed stochastic block model dataset.
    GenSbm(GenSbm),
    /// Write random DAGs with longest-path targets as a graph set.
    GenDag(GenDag),
}

#[derive(Args)]
struct GenSbm {
    /// Block sizes, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "150,150")]
    blocks: Vec<usize>,
    /// Row-major block probabilities: rows separated by `;`, entries by `,`.
    #[arg(long, default_value = "0.0402,0.06;0.02,0.0402")]
    probs: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "AGNN_OUT_DIR", default_value = "agnn-out")]
    out: PathBuf,
}

#[derive(Args)]
struct GenDag {
    #[arg(long, default_value_t = 500)]
    count: usize,
    #[arg(long, default_value_t = 4)]
    min_nodes: usize,
    #[arg(long, default_value_t = 12)]
    max_nodes: usize,
    /// Probability of each forward edge.
    #[arg(long, default_value_t = 0.3)]
    edge_prob: f64,
    #[arg(long, default_value_t = 0.9)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "AGNN_OUT_DIR", default_value = "agnn-out")]
    out: PathBuf,
}

fn parse_probs(text: &str) -> anyhow::Result<Vec<Vec<f64>>> {
    text.split(';')
        .map(|row| {
            row.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .with_context(|| format!("bad probability `{v}`"))
                })
                .collect()
        })
        .collect()
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(c) => {
            let r = runner::cmd_train(&c.resolve()?)?;
            println!(
                "accuracy {:.4} ± {:.4} over {} run(s)",
                r.mean_accuracy,
                r.std_accuracy,
                r.runs.len()
            );
        }
        Command::SweepLambda(c) => {
            let (_, path) = runner::cmd_sweep_lambda(&c.resolve()?)?;
            println!("{}", path.display());
        }
        Command::SweepFusion(c) => {
            let (_, path) = runner::cmd_sweep_fusion(&c.resolve()?)?;
            println!("{}", path.display());
        }
        Command::Regress(c) => {
            let r = runner::cmd_regress(&c.resolve()?)?;
            let mape = r.test.mape.map_or("n/a".to_string(), |m| format!("{m:.4}"));
            println!(
                "rmse {:.4} mae {:.4} mape {mape} (mean baseline rmse {:.4})",
                r.test.rmse, r.test.mae, r.mean_baseline.rmse
            );
        }
        Command::Eval { checkpoint, common } => {
            let r = runner::cmd_eval(&common.resolve()?, &checkpoint)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::GenSbm(g) => {
            let spec = SbmSpec {
                block_sizes: g.blocks,
                probs: parse_probs(&g.probs)?,
                seed: g.seed,
            };
            let b = runner::cmd_gen_sbm(&spec, &g.out)?;
            println!(
                "{} nodes, {} edges written to {}",
                b.graph.node_count(),
                b.graph.edge_count(),
                g.out.display()
            );
        }
        Command::GenDag(g) => {
            if g.min_nodes < 2 || g.min_nodes > g.max_nodes {
                bail!("need 2 <= --min-nodes <= --max-nodes");
            }
            let spec = DagSpec {
                count: g.count,
                min_nodes: g.min_nodes,
                max_nodes: g.max_nodes,
                edge_prob: g.edge_prob,
                train_fraction: g.train_fraction,
                seed: g.seed,
            };
            let (set, manifest) = runner::cmd_gen_dag(&spec, &g.out)?;
            println!(
                "{} graphs written to {}",
                set.graphs.len(),
                manifest.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
