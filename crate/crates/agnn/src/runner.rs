//! Command implementations shared by the binary and the tests.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use agnn_core::data::{
    generate_dag_regression, generate_directed_sbm, DagSpec, DatasetBundle, GraphSet, SbmSpec, Task,
};
use agnn_core::model::{AgnnModel, Head};
use agnn_core::train::{
    self, evaluate_regression, fit_regression, predict_graphs, run_once, summarize, NodeTask,
    RegressionConfig, Regularizer, RepeatedSummary, TrainConfig,
};

use crate::config::Settings;
use crate::report::{
    self, DatasetEcho, EvalReport, HistoryLine, MetricsEcho, RegressionEcho, RegressionReport,
    RunEntry, RunReport, TrainEcho, ENGINE_VERSION,
};
use crate::{checkpoint, io, Error, Result};

/// Loads the node-classification dataset named by `--edges/--labels`.
pub fn load_node_dataset(s: &Settings) -> Result<DatasetBundle> {
    if s.graph_set.is_some() {
        return Err(Error::Config(
            "this command needs a node dataset (--edges/--labels), not --graph-set".into(),
        ));
    }
    let (Some(edges), Some(labels)) = (&s.edges, &s.labels) else {
        return Err(Error::Config("--edges and --labels are required".into()));
    };
    io::load_edge_list_dataset(edges, s.features.as_deref(), labels)
}

/// Loads the graph set named by `--graph-set` (targets optionally from
/// `--labels`).
pub fn load_graph_dataset(s: &Settings) -> Result<GraphSet> {
    if s.edges.is_some() || s.features.is_some() {
        return Err(Error::Config(
            "graph regression needs a graph-set manifest; node datasets (--edges/--features) are not accepted".into(),
        ));
    }
    let manifest = s
        .graph_set
        .as_deref()
        .ok_or_else(|| Error::Config("--graph-set is required".into()))?;
    io::load_graph_set(
        manifest,
        s.labels.as_deref(),
        s.train_fraction()?,
        s.seed.unwrap_or(0),
    )
}

/// Runs repeats on up to `threads` workers; results are ordered by repeat.
pub fn run_repeated_parallel(
    bundle: &DatasetBundle,
    config: &TrainConfig,
    repeats: usize,
    threads: usize,
) -> Result<RepeatedSummary> {
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    config.validate()?;
    let task = NodeTask::new(bundle, config.symmetrize);
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(repeats));
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, repeats) {
            scope.spawn(|| loop {
                let r = next.fetch_add(1, Ordering::Relaxed);
                if r >= repeats {
                    break;
                }
                let outcome = run_once(bundle, &task, config, r);
                results.lock().expect("worker panicked").push((r, outcome));
            });
        }
    });
    let mut results = results.into_inner().expect("worker panicked");
    results.sort_by_key(|(r, _)| *r);
    let runs = results
        .into_iter()
        .map(|(_, o)| o)
        .collect::<agnn_core::Result<Vec<_>>>()?;
    Ok(summarize(runs)?)
}

fn dataset_echo(b: &DatasetBundle) -> DatasetEcho {
    DatasetEcho {
        name: b.name.clone(),
        nodes: b.graph.node_count(),
        edges: b.graph.edge_count(),
        classes: b.labels.classes(),
        labeled: b.labels.len(),
        feature_dim: b.feature_dim(),
    }
}

fn regularizer_name(r: Regularizer) -> String {
    match r {
        Regularizer::Dense => "dense".into(),
        Regularizer::Disabled => "none".into(),
        Regularizer::Sampled { negatives_per_edge } => format!("sampled:{negatives_per_edge}"),
    }
}

fn train_echo(c: &TrainConfig, repeats: usize) -> TrainEcho {
    TrainEcho {
        lr: c.lr,
        weight_decay: c.weight_decay,
        dropout: c.dropout,
        hidden: c.hidden,
        layers: c.layers,
        epochs: c.max_epochs,
        patience: c.patience,
        lambda: c.lambda,
        regularizer: regularizer_name(c.regularizer),
        fusion: c.fusion.name().into(),
        mode: c.mode.name().into(),
        symmetrize: c.symmetrize,
        per_class: c.split.per_class,
        val_size: c.split.val_size,
        repeats,
    }
}

/// Paths written by `train`.
#[derive(Debug, Clone)]
pub struct TrainOutputs {
    pub report: PathBuf,
    pub history: PathBuf,
    pub checkpoint: PathBuf,
}

pub fn train_outputs(out: &Path) -> TrainOutputs {
    TrainOutputs {
        report: out.join("report.json"),
        history: out.join("history.jsonl"),
        checkpoint: out.join("model.json"),
    }
}

/// `train`: repeated runs, report, per-epoch history and the first run's
/// checkpoint. The report is written last.
pub fn cmd_train(s: &Settings) -> Result<RunReport> {
    let start = Instant::now();
    let bundle = load_node_dataset(s)?;
    let config = s.train_config()?;
    let repeats = s.repeats()?;
    let summary = run_repeated_parallel(&bundle, &config, repeats, s.threads())?;
    for run in &summary.runs {
        for w in &run.split_warnings {
            eprintln!("warning (repeat {}): {w}", run.repeat);
        }
    }
    let out = train_outputs(&s.out_dir());
    let lines: Vec<HistoryLine> = summary
        .runs
        .iter()
        .flat_map(|r| r.history.iter().map(move |h| HistoryLine::new(r.repeat, h)))
        .collect();
    report::write_atomic(&out.history, report::history_jsonl(&lines)?.as_bytes())?;
    checkpoint::save(&out.checkpoint, &summary.runs[0].model)?;
    let report = RunReport {
        command: "train".into(),
        engine_version: ENGINE_VERSION.into(),
        seed: config.seed,
        dataset: dataset_echo(&bundle),
        config: train_echo(&config, repeats),
        runs: summary.runs.iter().map(RunEntry::from).collect(),
        mean_accuracy: summary.mean,
        std_accuracy: summary.std,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    report::write_json(&out.report, &report)?;
    Ok(report)
}

/// One sweep point: `(label, mean, std)`.
pub type SweepRow = (String, f64, f64);

fn write_sweep(s: &Settings, file: &str, key: &str, rows: &[SweepRow]) -> Result<PathBuf> {
    let path = s.out_dir().join(file);
    report::write_atomic(&path, report::sweep_csv(key, rows)?.as_bytes())?;
    Ok(path)
}

/// `sweep-lambda`: one row per distinct λ in ascending order.
pub fn cmd_sweep_lambda(s: &Settings) -> Result<(Vec<SweepRow>, PathBuf)> {
    let lambdas = s.lambdas()?;
    let base = Settings {
        lambda: None,
        ..s.clone()
    }
    .train_config()?;
    let bundle = load_node_dataset(s)?;
    let repeats = s.repeats()?;
    let mut rows = Vec::new();
    for lambda in lambdas {
        let config = TrainConfig {
            lambda,
            ..base.clone()
        };
        let summary = run_repeated_parallel(&bundle, &config, repeats, s.threads())?;
        eprintln!("lambda {lambda}: {:.4} ± {:.4}", summary.mean, summary.std);
        rows.push((lambda.to_string(), summary.mean, summary.std));
    }
    let path = write_sweep(s, "sweep_lambda.csv", "lambda", &rows)?;
    Ok((rows, path))
}

/// `sweep-fusion`: one row per distinct fusion in canonical order.
pub fn cmd_sweep_fusion(s: &Settings) -> Result<(Vec<SweepRow>, PathBuf)> {
    let fusions = s.fusions()?;
    let base = Settings {
        fusion: None,
        ..s.clone()
    }
    .train_config()?;
    let bundle = load_node_dataset(s)?;
    let repeats = s.repeats()?;
    let mut rows = Vec::new();
    for fusion in fusions {
        let config = TrainConfig {
            fusion,
            ..base.clone()
        };
        let summary = run_repeated_parallel(&bundle, &config, repeats, s.threads())?;
        eprintln!("fusion {fusion}: {:.4} ± {:.4}", summary.mean, summary.std);
        rows.push((fusion.name().into(), summary.mean, summary.std));
    }
    let path = write_sweep(s, "sweep_fusion.csv", "fusion", &rows)?;
    Ok((rows, path))
}

fn regression_echo(c: &RegressionConfig, train_fraction: f64) -> RegressionEcho {
    RegressionEcho {
        lr: c.lr,
        weight_decay: c.weight_decay,
        dropout: c.dropout,
        hidden: c.hidden,
        layers: c.layers,
        epochs: c.epochs,
        batch_size: c.batch_size,
        lambda: c.lambda,
        mode: c.mode.name().into(),
        train_fraction,
    }
}

/// `regress`: graph-level regression with RMSE, MAE and MAPE on the held-out
/// part, next to a constant-mean baseline.
pub fn cmd_regress(s: &Settings) -> Result<RegressionReport> {
    let start = Instant::now();
    let set = load_graph_dataset(s)?;
    let config = s.regression_config()?;
    let outcome = fit_regression(&set, &config)?;
    let out = s.out_dir();
    let loss: String = outcome
        .train_loss
        .iter()
        .enumerate()
        .map(|(epoch, mse)| format!("{{\"epoch\":{epoch},\"train_mse\":{mse:?}}}\n"))
        .collect();
    report::write_atomic(&out.join("history.jsonl"), loss.as_bytes())?;
    checkpoint::save(&out.join("model.json"), &outcome.model)?;
    let report = RegressionReport {
        command: "regress".into(),
        engine_version: ENGINE_VERSION.into(),
        seed: config.seed,
        dataset: set.name.clone(),
        graphs: set.graphs.len(),
        train_graphs: set.train.len(),
        test_graphs: set.test.len(),
        config: regression_echo(&config, s.train_fraction()?),
        test: outcome.test.into(),
        mean_baseline: outcome.baseline.into(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    report::write_json(&out.join("regression_report.json"), &report)?;
    Ok(report)
}

/// `gen-sbm`: writes `edges.tsv` and `labels.tsv`.
pub fn cmd_gen_sbm(spec: &SbmSpec, out: &Path) -> Result<DatasetBundle> {
    let bundle = generate_directed_sbm(spec)?;
    io::write_edges(&out.join("edges.tsv"), &bundle.graph)?;
    io::write_labels(&out.join("labels.tsv"), &bundle.labels)?;
    Ok(bundle)
}

/// `gen-dag`: writes a graph-set manifest and per-graph edge files.
pub fn cmd_gen_dag(spec: &DagSpec, out: &Path) -> Result<(GraphSet, PathBuf)> {
    let set = generate_dag_regression(spec)?;
    let manifest = io::write_graph_set(out, &set)?;
    Ok((set, manifest))
}

/// `eval`: scores a checkpoint on a node dataset (all labeled nodes) or on
/// every graph of a graph set.
pub fn cmd_eval(s: &Settings, checkpoint_path: &Path) -> Result<EvalReport> {
    let model: AgnnModel = checkpoint::load(checkpoint_path)?;
    let mut report = EvalReport {
        command: "eval".into(),
        engine_version: ENGINE_VERSION.into(),
        checkpoint: checkpoint_path.display().to_string(),
        dataset: String::new(),
        accuracy: None,
        evaluated_nodes: None,
        regression: None,
    };
    match model.config().head {
        Head::NodeClassifier { classes } => {
            let bundle = load_node_dataset(s)?;
            if bundle.task() != Task::NodeClassification || bundle.labels.classes() > classes {
                return Err(Error::Input(format!(
                    "dataset has {} classes; the checkpoint predicts {classes}",
                    bundle.labels.classes()
                )));
            }
            let task = NodeTask::new(&bundle, s.symmetrize.unwrap_or(false));
            let nodes = bundle.labels.indices().to_vec();
            report.accuracy = Some(train::evaluate_classification(&model, &task, &nodes)?);
            report.evaluated_nodes = Some(nodes.len());
            report.dataset = bundle.name;
        }
        Head::GraphRegressor => {
            let set = load_graph_dataset(s)?;
            let all: Vec<usize> = (0..set.graphs.len()).collect();
            let preds = predict_graphs(&model, &set, &all)?;
            let targets: Vec<f64> = set.graphs.iter().map(|g| g.target).collect();
            report.regression = Some(MetricsEcho::from(evaluate_regression(&preds, &targets)?));
            report.dataset = set.name;
        }
    }
    report::write_json(&s.out_dir().join("eval_report.json"), &report)?;
    Ok(report)
}
