//! Full-batch training with Adam, early stopping, seeded splits, repeated
//! runs and evaluation metrics.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::autodiff::{Tape, Var};
use crate::data::{DatasetBundle, GraphSet};
use crate::graph::{DirectedGraph, PropagationOperators};
use crate::linalg::{SparseMatrix, Tensor};
use crate::loss::{self, LabelSet, LossReport};
use crate::model::{AgnnModel, Features, Fusion, Head, Mode, ModelConfig};
use crate::seed;
use crate::{Error, Result};

const REPEAT_TAG: u64 = 1;
const SPLIT_TAG: u64 = 2;
const INIT_TAG: u64 = 3;
const DROPOUT_TAG: u64 = 4;
const REG_TAG: u64 = 5;
const BATCH_TAG: u64 = 6;

/// How the edge-likelihood term is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularizer {
    /// Exact sum over all `n²` pairs.
    Dense,
    /// Exact edge term plus `k · |E|` uniformly sampled pairs.
    Sampled { negatives_per_edge: usize },
    /// Not computed at all (ablation).
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitPolicy {
    pub per_class: usize,
    pub val_size: usize,
}

impl Default for SplitPolicy {
    fn default() -> Self {
        SplitPolicy {
            per_class: 20,
            val_size: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub hidden: usize,
    /// Number of propagation layers (≥ 1).
    pub layers: usize,
    pub max_epochs: usize,
    /// Epochs without a validation-accuracy increase before stopping;
    /// `0` disables early stopping.
    pub patience: usize,
    pub lambda: f64,
    pub regularizer: Regularizer,
    pub seed: u64,
    pub fusion: Fusion,
    pub mode: Mode,
    /// Train on `max(A, Aᵀ)` instead of `A`.
    pub symmetrize: bool,
    pub split: SplitPolicy,
}

impl Default for TrainConfig {
    /// Citation-network settings.
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            weight_decay: 5e-4,
            dropout: 0.5,
            hidden: 64,
            layers: 2,
            max_epochs: 1000,
            patience: 200,
            lambda: 0.1,
            regularizer: Regularizer::Dense,
            seed: 0,
            fusion: Fusion::Sum,
            mode: Mode::Directed,
            symmetrize: false,
            split: SplitPolicy::default(),
        }
    }
}

impl TrainConfig {
    /// Co-purchase settings: wider hidden layer, 500 epochs, no early stopping.
    pub fn co_purchase() -> Self {
        TrainConfig {
            hidden: 128,
            max_epochs: 500,
            patience: 0,
            ..Self::default()
        }
    }

    /// The undirected baseline: symmetrized adjacency with tied weights.
    pub fn symmetrized_baseline(mut self) -> Self {
        self.symmetrize = true;
        self.mode = Mode::UndirectedTied;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(alloc::format!(
                "learning rate must be positive, got {}",
                self.lr
            ));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(alloc::format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(alloc::format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            ));
        }
        if self.hidden == 0 || self.layers == 0 || self.max_epochs == 0 {
            return fail("hidden width, layer count and epochs must be positive".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(alloc::format!(
                "lambda must be non-negative, got {}",
                self.lambda
            ));
        }
        if self.split.per_class == 0 {
            return fail("per-class training count must be positive".into());
        }
        Ok(())
    }

    pub fn model_config(&self, input_dim: usize, classes: usize) -> ModelConfig {
        let mut widths = alloc::vec![input_dim];
        widths.extend(core::iter::repeat_n(self.hidden, self.layers - 1));
        widths.push(classes);
        ModelConfig {
            widths,
            fusion: self.fusion,
            head: Head::NodeClassifier { classes },
            mode: self.mode,
            dropout: self.dropout,
        }
    }
}

/// Disjoint train/validation/test node sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Draws `per_class` training nodes per class, then `val_size` validation
/// nodes from the remainder; the rest is the test set. A class smaller than
/// `per_class` contributes `ceil(size / 2)` training nodes instead, and a
/// remainder smaller than `val_size` is halved between validation and test.
pub fn make_split(labels: &LabelSet, policy: SplitPolicy, seed: u64) -> Result<Split> {
    if labels.is_empty() {
        return Err(Error::Contract("cannot split an empty label set".into()));
    }
    let mut rng = seed::rng(seed);
    let mut by_class: Vec<Vec<usize>> = alloc::vec![Vec::new(); labels.classes()];
    let mut sorted: Vec<(usize, usize)> = labels.pairs().collect();
    sorted.sort_unstable();
    for (node, class) in sorted {
        by_class[class].push(node);
    }
    let mut warnings = Vec::new();
    let mut train = Vec::new();
    let mut rest = Vec::new();
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let take = if members.len() >= policy.per_class {
            policy.per_class
        } else {
            let half = members.len().div_ceil(2);
            warnings.push(alloc::format!(
                "class {class} has {} labeled nodes; using {half} for training instead of {}",
                members.len(),
                policy.per_class
            ));
            half
        };
        train.extend_from_slice(&members[..take]);
        rest.extend_from_slice(&members[take..]);
    }
    rest.sort_unstable();
    rest.shuffle(&mut rng);
    let val_take = if rest.len() > policy.val_size {
        policy.val_size
    } else {
        let half = rest.len() / 2;
        warnings.push(alloc::format!(
            "only {} nodes remain after training selection; validation gets {half} instead of {}",
            rest.len(),
            policy.val_size
        ));
        half
    };
    let mut val = rest[..val_take].to_vec();
    let mut test = rest[val_take..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        train,
        val,
        test,
        warnings,
    })
}

/// Adam moments for every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        let zeros: Vec<Tensor> = params
            .iter()
            .map(|p| Tensor::zeros(p.rows(), p.cols()))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update with the decay folded into the gradient:
    /// `g ← g + wd · w`, then bias-corrected moments and
    /// `w ← w − lr · m̂ / (√v̂ + ε)`.
    pub fn step(
        &mut self,
        params: &mut [Tensor],
        grads: &[&Tensor],
        lr: f64,
        weight_decay: f64,
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::Contract(
                "parameter, gradient and moment counts differ".into(),
            ));
        }
        self.step += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.step as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.step as f64);
        for (k, w) in params.iter_mut().enumerate() {
            let g = grads[k];
            if g.shape() != w.shape() || self.m[k].shape() != w.shape() {
                return Err(Error::Dimension {
                    op: "adam_step",
                    left: w.shape(),
                    right: g.shape(),
                });
            }
            let (m, v) = (self.m[k].data_mut(), self.v[k].data_mut());
            for (i, wi) in w.data_mut().iter_mut().enumerate() {
                let gi = g.data()[i] + weight_decay * *wi;
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *wi -= lr * m_hat / (libm::sqrt(v_hat) + self.eps);
            }
            if w.data().iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { op: "adam_step" });
            }
        }
        Ok(())
    }
}

/// Graph, operators and inputs prepared once per dataset.
#[derive(Debug, Clone)]
pub struct NodeTask {
    pub graph: DirectedGraph,
    pub operators: PropagationOperators,
    pub features: Features,
    pub labels: LabelSet,
}

impl NodeTask {
    pub fn new(bundle: &DatasetBundle, symmetrize: bool) -> Self {
        let graph = if symmetrize {
            bundle.graph.symmetrize()
        } else {
            bundle.graph.clone()
        };
        let operators = graph.build_operators();
        NodeTask {
            graph,
            operators,
            features: bundle.model_features(),
            labels: bundle.labels.clone(),
        }
    }
}

/// Loss terms and settings shared by the node objective.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveSpec {
    pub lambda: f64,
    pub regularizer: Regularizer,
    /// `Some(seed)` enables dropout (training mode).
    pub dropout_seed: Option<u64>,
    pub reg_seed: u64,
}

/// Records `L_error + λ L_reg` for node classification on `tape`. Returns
/// the total, the bound parameter variables and the loss breakdown.
pub fn node_objective<'a>(
    model: &AgnnModel,
    tape: &mut Tape<'a>,
    task: &'a NodeTask,
    targets: &[(usize, usize)],
    spec: ObjectiveSpec,
) -> Result<(Var, Vec<Var>, LossReport)> {
    let bound = model.bind(tape);
    let emb = model.forward(
        tape,
        &bound,
        &task.operators,
        &task.features,
        spec.dropout_seed,
    )?;
    let logits = model.node_logits(tape, &bound, &emb)?;
    let error = loss::cross_entropy(tape, logits, targets)?;
    let adjacency = task.graph.adjacency();
    let reg = match spec.regularizer {
        Regularizer::Disabled => None,
        Regularizer::Dense => Some(loss::regularization_loss(tape, emb.s, emb.r, adjacency)?),
        Regularizer::Sampled { negatives_per_edge } => Some(loss::regularization_loss_sampled(
            tape,
            emb.s,
            emb.r,
            adjacency,
            negatives_per_edge,
            spec.reg_seed,
        )?),
    };
    let (total, report) = loss::total_loss(tape, error, reg, spec.lambda)?;
    Ok((total, bound, report))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub error: f64,
    pub reg: f64,
    pub total: f64,
    pub val_acc: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    /// Weights from the best validation epoch.
    pub model: AgnnModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub epochs_run: usize,
}

fn divergence(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { .. } => Error::Divergence {
            epoch,
            loss: f64::NAN,
        },
        other => other,
    }
}

/// Accuracy and summed cross-entropy of `probs` on `targets`.
fn score(probs: &Tensor, targets: &[(usize, usize)]) -> (f64, f64) {
    let correct = targets
        .iter()
        .filter(|&&(i, c)| probs.argmax_row(i) == c)
        .count();
    let loss = targets
        .iter()
        .map(|&(i, c)| -libm::log(probs.get(i, c).max(f64::MIN_POSITIVE)))
        .sum();
    (correct as f64 / targets.len() as f64, loss)
}

/// Full-batch training. Model selection uses validation accuracy with ties
/// broken by lower validation loss; the best epoch's weights are returned.
/// With an empty validation set the training nodes are used for selection.
pub fn fit(
    model: AgnnModel,
    task: &NodeTask,
    split: &Split,
    config: &TrainConfig,
) -> Result<FitOutcome> {
    config.validate()?;
    let train_targets = task.labels.select(&split.train);
    if train_targets.is_empty() {
        return Err(Error::Contract("no labeled training nodes".into()));
    }
    let mut val_targets = task.labels.select(&split.val);
    if val_targets.is_empty() {
        val_targets = train_targets.clone();
    }

    let mut model = model;
    let mut adam = AdamState::new(model.params());
    let mut history = Vec::new();
    let mut best: Option<(f64, f64, usize, AgnnModel)> = None;
    let mut best_acc_seen = f64::NEG_INFINITY;
    let mut since_increase = 0;

    for epoch in 0..config.max_epochs {
        let spec = ObjectiveSpec {
            lambda: config.lambda,
            regularizer: config.regularizer,
            dropout_seed: Some(seed::derive(config.seed, &[DROPOUT_TAG, epoch as u64])),
            reg_seed: seed::derive(config.seed, &[REG_TAG, epoch as u64]),
        };
        let mut tape = Tape::new();
        let (total, bound, report) = node_objective(&model, &mut tape, task, &train_targets, spec)
            .map_err(divergence(epoch))?;
        if !report.total.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: report.total,
            });
        }
        let grads = tape.backward(total).map_err(divergence(epoch))?;
        let grad_refs: Vec<&Tensor> = bound
            .iter()
            .map(|&v| {
                grads
                    .get(v)
                    .expect("trainable leaves always have gradients")
            })
            .collect();
        adam.step(
            model.params_mut(),
            &grad_refs,
            config.lr,
            config.weight_decay,
        )
        .map_err(divergence(epoch))?;
        drop(tape);

        let probs = model
            .predict_proba(&task.operators, &task.features)
            .map_err(divergence(epoch))?;
        let (val_acc, val_loss) = score(&probs, &val_targets);
        history.push(EpochRecord {
            epoch,
            error: report.error_term,
            reg: report.reg_term,
            total: report.total,
            val_acc,
            val_loss,
        });

        let better = match &best {
            None => true,
            Some((acc, vl, _, _)) => val_acc > *acc || (val_acc == *acc && val_loss < *vl),
        };
        if better {
            best = Some((val_acc, val_loss, epoch, model.clone()));
        }
        if val_acc > best_acc_seen {
            best_acc_seen = val_acc;
            since_increase = 0;
        } else {
            since_increase += 1;
        }
        if config.patience > 0 && since_increase >= config.patience {
            break;
        }
    }

    let epochs_run = history.len();
    let (best_val_acc, _, best_epoch, best_model) = best.expect("at least one epoch ran");
    Ok(FitOutcome {
        model: best_model,
        history,
        best_epoch,
        best_val_acc,
        epochs_run,
    })
}

/// Fraction of labeled `nodes` whose arg-max prediction is correct.
pub fn evaluate_classification(model: &AgnnModel, task: &NodeTask, nodes: &[usize]) -> Result<f64> {
    let targets = task.labels.select(nodes);
    if targets.is_empty() {
        return Err(Error::Contract("no labeled nodes to evaluate".into()));
    }
    let probs = model.predict_proba(&task.operators, &task.features)?;
    Ok(accuracy(&probs, &targets))
}

/// Arg-max accuracy of a prediction matrix (probabilities or logits).
pub fn accuracy(predictions: &Tensor, targets: &[(usize, usize)]) -> f64 {
    score_argmax(predictions, targets)
}

fn score_argmax(predictions: &Tensor, targets: &[(usize, usize)]) -> f64 {
    let correct = targets
        .iter()
        .filter(|&&(i, c)| predictions.argmax_row(i) == c)
        .count();
    correct as f64 / targets.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionMetrics {
    pub rmse: f64,
    pub mae: f64,
    /// Mean absolute percentage error over nonzero targets, as a fraction.
    /// `None` when every target is zero.
    pub mape: Option<f64>,
    /// Samples left out of MAPE because their target is zero.
    pub mape_excluded: usize,
}

pub fn evaluate_regression(preds: &[f64], targets: &[f64]) -> Result<RegressionMetrics> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(Error::Contract(alloc::format!(
            "need equal, non-empty prediction and target lists ({} vs {})",
            preds.len(),
            targets.len()
        )));
    }
    let n = preds.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut pct = 0.0;
    let mut counted = 0usize;
    for (&p, &t) in preds.iter().zip(targets) {
        let d = p - t;
        sq += d * d;
        abs += libm::fabs(d);
        if t != 0.0 {
            pct += libm::fabs(d / t);
            counted += 1;
        }
    }
    Ok(RegressionMetrics {
        rmse: libm::sqrt(sq / n),
        mae: abs / n,
        mape: (counted > 0).then(|| pct / counted as f64),
        mape_excluded: preds.len() - counted,
    })
}

/// Mean and sample standard deviation (`0` for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatOutcome {
    pub repeat: usize,
    pub seed: u64,
    pub test_accuracy: f64,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub epochs_run: usize,
    pub history: Vec<EpochRecord>,
    pub split_warnings: Vec<String>,
    pub model: AgnnModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatedSummary {
    pub runs: Vec<RepeatOutcome>,
    pub mean: f64,
    pub std: f64,
}

/// Seed of repeat `r` under master seed `seed`.
pub fn repeat_seed(seed: u64, repeat: usize) -> u64 {
    seed::derive(seed, &[REPEAT_TAG, repeat as u64])
}

/// One complete run: split, initialize, fit, and score the test set.
pub fn run_once(
    bundle: &DatasetBundle,
    task: &NodeTask,
    config: &TrainConfig,
    repeat: usize,
) -> Result<RepeatOutcome> {
    let run_seed = repeat_seed(config.seed, repeat);
    let split = make_split(
        &bundle.labels,
        config.split,
        seed::derive(run_seed, &[SPLIT_TAG]),
    )?;
    let model_cfg = config.model_config(task.features.cols(), bundle.labels.classes());
    let model = AgnnModel::init(model_cfg, seed::derive(run_seed, &[INIT_TAG]))?;
    let run_cfg = TrainConfig {
        seed: run_seed,
        ..config.clone()
    };
    let fitted = fit(model, task, &split, &run_cfg)?;
    let eval_nodes = if split.test.is_empty() {
        &split.val
    } else {
        &split.test
    };
    let test_accuracy = evaluate_classification(&fitted.model, task, eval_nodes)?;
    Ok(RepeatOutcome {
        repeat,
        seed: run_seed,
        test_accuracy,
        best_epoch: fitted.best_epoch,
        best_val_acc: fitted.best_val_acc,
        epochs_run: fitted.epochs_run,
        history: fitted.history,
        split_warnings: split.warnings,
        model: fitted.model,
    })
}

/// Runs `repeats` independent splits and initializations and reports mean
/// and sample standard deviation of test accuracy.
pub fn run_repeated(
    bundle: &DatasetBundle,
    config: &TrainConfig,
    repeats: usize,
) -> Result<RepeatedSummary> {
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    config.validate()?;
    let task = NodeTask::new(bundle, config.symmetrize);
    let runs = (0..repeats)
        .map(|r| run_once(bundle, &task, config, r))
        .collect::<Result<Vec<_>>>()?;
    summarize(runs)
}

/// Aggregates runs in repeat order.
pub fn summarize(mut runs: Vec<RepeatOutcome>) -> Result<RepeatedSummary> {
    if runs.is_empty() {
        return Err(Error::Contract("no runs to summarize".into()));
    }
    runs.sort_by_key(|r| r.repeat);
    let accs: Vec<f64> = runs.iter().map(|r| r.test_accuracy).collect();
    let (mean, std) = mean_std(&accs);
    Ok(RepeatedSummary { runs, mean, std })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub hidden: usize,
    pub layers: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub mode: Mode,
    pub seed: u64,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        RegressionConfig {
            lr: 1e-4,
            weight_decay: 0.0,
            dropout: 0.0,
            hidden: 64,
            layers: 3,
            epochs: 200,
            batch_size: 32,
            lambda: 0.1,
            mode: Mode::Directed,
            seed: 0,
        }
    }
}

impl RegressionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr.partial_cmp(&0.0) != Some(core::cmp::Ordering::Greater)
            || self.hidden == 0
            || self.layers == 0
            || self.epochs == 0
            || self.batch_size == 0
        {
            return Err(Error::Config("regression settings must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout)
            || self.lambda.is_nan()
            || self.lambda < 0.0
            || self.weight_decay.is_nan()
            || self.weight_decay < 0.0
        {
            return Err(Error::Config(
                "dropout, lambda or weight decay out of range".into(),
            ));
        }
        Ok(())
    }

    pub fn model_config(&self, input_dim: usize) -> ModelConfig {
        let mut widths = alloc::vec![input_dim];
        widths.extend(core::iter::repeat_n(self.hidden, self.layers));
        ModelConfig {
            widths,
            fusion: Fusion::Concat,
            head: Head::GraphRegressor,
            mode: self.mode,
            dropout: self.dropout,
        }
    }
}

/// Several graphs stacked block-diagonally for one forward pass.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub graph: DirectedGraph,
    pub operators: PropagationOperators,
    pub features: Features,
    /// `graphs × nodes` membership matrix for sum pooling.
    pub pool: SparseMatrix,
    pub targets: Tensor,
    /// Node offset of each member graph, plus the total node count.
    pub offsets: Vec<usize>,
    pub adjacencies: Vec<SparseMatrix>,
}

impl GraphBatch {
    pub fn new(set: &GraphSet, members: &[usize]) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Contract("empty graph batch".into()));
        }
        let width = set.feature_dim();
        let mut offsets = alloc::vec![0];
        let mut edges = Vec::new();
        let mut feats = Vec::new();
        let mut pool = Vec::new();
        let mut targets = Vec::new();
        let mut adjacencies = Vec::new();
        for (b, &g) in members.iter().enumerate() {
            let sample = &set.graphs[g];
            let base = *offsets.last().unwrap();
            let n = sample.graph.node_count();
            edges.extend(
                sample
                    .graph
                    .edges()
                    .iter()
                    .map(|&(s, t)| (s + base, t + base)),
            );
            feats.extend_from_slice(sample.features.data());
            pool.extend((0..n).map(|v| (b, base + v, 1.0)));
            targets.push(sample.target);
            adjacencies.push(sample.graph.adjacency().clone());
            offsets.push(base + n);
        }
        let total = *offsets.last().unwrap();
        let graph = DirectedGraph::from_edge_list(total, &edges)?;
        let operators = graph.build_operators();
        Ok(GraphBatch {
            operators,
            graph,
            features: Features::Dense(Tensor::new(total, width, feats)?),
            pool: SparseMatrix::from_triplets(members.len(), total, pool)?,
            targets: Tensor::new(members.len(), 1, targets)?,
            offsets,
            adjacencies,
        })
    }
}

/// Records the batch loss `MSE + λ · mean_g L_reg(g)`; returns total, bound
/// parameters, predictions and the loss breakdown.
pub fn graph_objective<'a>(
    model: &AgnnModel,
    tape: &mut Tape<'a>,
    batch: &'a GraphBatch,
    lambda: f64,
    dropout_seed: Option<u64>,
) -> Result<(Var, Vec<Var>, Var, LossReport)> {
    let bound = model.bind(tape);
    let emb = model.forward(
        tape,
        &bound,
        &batch.operators,
        &batch.features,
        dropout_seed,
    )?;
    let (_, pred) = model.graph_readout(tape, &bound, &emb, &batch.pool)?;
    let error = loss::regression_loss(tape, pred, &batch.targets)?;
    let reg = if lambda > 0.0 {
        let mut acc: Option<Var> = None;
        for (g, adj) in batch.adjacencies.iter().enumerate() {
            let (lo, hi) = (batch.offsets[g], batch.offsets[g + 1]);
            let s = tape.slice_rows(emb.s, lo, hi)?;
            let r = tape.slice_rows(emb.r, lo, hi)?;
            let term = loss::regularization_loss(tape, s, r, adj)?;
            acc = Some(match acc {
                None => term,
                Some(a) => tape.add(a, term)?,
            });
        }
        let sum = acc.expect("non-empty batch");
        Some(tape.scale(sum, 1.0 / batch.adjacencies.len() as f64)?)
    } else {
        None
    };
    let (total, report) = loss::total_loss(tape, error, reg, lambda)?;
    Ok((total, bound, pred, report))
}

/// Evaluation-mode predictions for the listed graphs.
pub fn predict_graphs(model: &AgnnModel, set: &GraphSet, members: &[usize]) -> Result<Vec<f64>> {
    if members.is_empty() {
        return Ok(Vec::new());
    }
    let batch = GraphBatch::new(set, members)?;
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let emb = model.forward(&mut tape, &bound, &batch.operators, &batch.features, None)?;
    let (_, pred) = model.graph_readout(&mut tape, &bound, &emb, &batch.pool)?;
    Ok(tape.value(pred).data().to_vec())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionOutcome {
    pub model: AgnnModel,
    /// Mean training MSE per epoch.
    pub train_loss: Vec<f64>,
    pub test: RegressionMetrics,
    /// Metrics of always predicting the mean training target.
    pub baseline: RegressionMetrics,
}

/// Mini-batch training on the graph set's training part; metrics are on its
/// held-out part.
pub fn fit_regression(set: &GraphSet, config: &RegressionConfig) -> Result<RegressionOutcome> {
    config.validate()?;
    if set.train.is_empty() || set.test.is_empty() {
        return Err(Error::Contract(
            "graph set needs non-empty train and test parts".into(),
        ));
    }
    let mut model = AgnnModel::init(
        config.model_config(set.feature_dim()),
        seed::derive(config.seed, &[INIT_TAG]),
    )?;
    let mut adam = AdamState::new(model.params());
    let mut train_loss = Vec::with_capacity(config.epochs);
    let mut order = set.train.clone();
    for epoch in 0..config.epochs {
        order.shuffle(&mut seed::rng(seed::derive(
            config.seed,
            &[BATCH_TAG, epoch as u64],
        )));
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = GraphBatch::new(set, chunk)?;
            let mut tape = Tape::new();
            let dropout = seed::derive(config.seed, &[DROPOUT_TAG, epoch as u64, b as u64]);
            let (total, bound, _, report) =
                graph_objective(&model, &mut tape, &batch, config.lambda, Some(dropout))
                    .map_err(divergence(epoch))?;
            let grads = tape.backward(total).map_err(divergence(epoch))?;
            let refs: Vec<&Tensor> = bound.iter().map(|&v| grads.get(v).unwrap()).collect();
            adam.step(model.params_mut(), &refs, config.lr, config.weight_decay)
                .map_err(divergence(epoch))?;
            epoch_loss += report.error_term * chunk.len() as f64;
        }
        train_loss.push(epoch_loss / order.len() as f64);
    }

    let targets = |idx: &[usize]| {
        idx.iter()
            .map(|&g| set.graphs[g].target)
            .collect::<Vec<_>>()
    };
    let test_targets = targets(&set.test);
    let preds = predict_graphs(&model, set, &set.test)?;
    let test = evaluate_regression(&preds, &test_targets)?;
    let train_targets = targets(&set.train);
    let mean = train_targets.iter().sum::<f64>() / train_targets.len() as f64;
    let baseline = evaluate_regression(&alloc::vec![mean; test_targets.len()], &test_targets)?;
    Ok(RegressionOutcome {
        model,
        train_loss,
        test,
        baseline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn labels(n_per: &[usize]) -> LabelSet {
        let mut idx = Vec::new();
        let mut lab = Vec::new();
        let mut node = 0;
        for (c, &k) in n_per.iter().enumerate() {
            for _ in 0..k {
                idx.push(node);
                lab.push(c);
                node += 1;
            }
        }
        LabelSet::new(idx, lab, n_per.len()).unwrap()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let l = labels(&[400, 300, 500, 450, 420, 430, 495]);
        let s = make_split(&l, SplitPolicy::default(), 5).unwrap();
        assert_eq!(s.train.len(), 140);
        assert_eq!(s.val.len(), 500);
        assert_eq!(s.test.len(), l.len() - 640);
        assert!(s.warnings.is_empty());
        assert_eq!(s, make_split(&l, SplitPolicy::default(), 5).unwrap());
        assert_ne!(s, make_split(&l, SplitPolicy::default(), 6).unwrap());
        for c in 0..7 {
            assert_eq!(
                s.train
                    .iter()
                    .filter(|&&i| l.label_of(i) == Some(c))
                    .count(),
                20
            );
        }
    }

    #[test]
    fn split_sets_are_disjoint() {
        for seed in 0..20 {
            let l = labels(&[30, 12, 50]);
            let s = make_split(
                &l,
                SplitPolicy {
                    per_class: 20,
                    val_size: 20,
                },
                seed,
            )
            .unwrap();
            let mut all: Vec<usize> = s
                .train
                .iter()
                .chain(&s.val)
                .chain(&s.test)
                .copied()
                .collect();
            let total = all.len();
            all.sort_unstable();
            all.dedup();
            assert_eq!(all.len(), total);
            assert_eq!(total, 92);
            // class 1 has 12 < 20 members: half are used for training
            assert_eq!(
                s.train
                    .iter()
                    .filter(|&&i| l.label_of(i) == Some(1))
                    .count(),
                6
            );
            assert_eq!(s.warnings.len(), 1);
        }
    }

    #[test]
    fn adam_first_step() {
        let mut w = vec![Tensor::scalar(1.0)];
        let g = Tensor::scalar(1.0);
        let mut adam = AdamState::new(&w);
        adam.step(&mut w, &[&g], 0.01, 0.0).unwrap();
        assert!((w[0].item().unwrap() - (1.0 - 0.01 / (1.0 + 1e-8))).abs() < 1e-15);
        assert!((w[0].item().unwrap() - 0.99).abs() < 1e-9);
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let start = vec![Tensor::from_rows(&[&[0.3, -2.0]]).unwrap()];
        let mut w = start.clone();
        let mut adam = AdamState::new(&w);
        let g = Tensor::zeros(1, 2);
        for _ in 0..5 {
            adam.step(&mut w, &[&g], 0.01, 0.0).unwrap();
        }
        assert_eq!(w, start);
        assert_eq!(adam.step_count(), 5);
    }

    #[test]
    fn adam_weight_decay_shrinks_weights() {
        let mut w = vec![Tensor::scalar(2.0)];
        let mut adam = AdamState::new(&w);
        adam.step(&mut w, &[&Tensor::scalar(0.0)], 0.1, 0.5)
            .unwrap();
        assert!(w[0].item().unwrap() < 2.0);
        assert!(adam
            .step(&mut w, &[&Tensor::zeros(2, 1)], 0.1, 0.0)
            .is_err());
    }

    #[test]
    fn regression_metrics_examples() {
        let m = evaluate_regression(&[0.5, 1.0], &[0.5, 1.0]).unwrap();
        assert_eq!((m.rmse, m.mae, m.mape), (0.0, 0.0, Some(0.0)));
        let m = evaluate_regression(&[2.0], &[1.0]).unwrap();
        assert_eq!((m.rmse, m.mae, m.mape), (1.0, 1.0, Some(1.0)));
        let m = evaluate_regression(&[1.0, 3.0, 0.5], &[0.0, 2.0, 1.0]).unwrap();
        assert_eq!(m.mape_excluded, 1);
        assert!((m.mape.unwrap() - 0.5).abs() < 1e-15);
        assert!(m.rmse >= m.mae);
        assert!(evaluate_regression(&[1.0], &[1.0, 2.0]).is_err());
        assert_eq!(evaluate_regression(&[1.0], &[0.0]).unwrap().mape, None);
    }

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
        assert_eq!(mean_std(&[0.5, 0.5, 0.5]).1, 0.0);
        let (m, s) = mean_std(&[0.8, 0.82]);
        assert!((m - 0.81).abs() < 1e-12);
        assert!((s - 0.0141421356).abs() < 1e-9);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig::co_purchase().validate().is_ok());
        let bad = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            lambda: -1.0,
            ..TrainConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let cfg = TrainConfig::default().model_config(10, 3);
        assert_eq!(cfg.widths, vec![10, 64, 3]);
    }
}
