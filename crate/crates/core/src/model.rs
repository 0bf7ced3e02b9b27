//! The asymmetric GNN: stacked dual-stream layers, fusion and task heads.
//!
//! Layer `l` computes
//!
//! ```text
//! S^l = σ(Ã · S^{l-1} · W1^l)      outgoing stream (aggregates successors)
//! R^l = σ(Â · R^{l-1} · W2^l)      incoming stream (aggregates predecessors)
//! ```
//!
//! with `S^0 = R^0 = X`, `σ = relu` on hidden layers and the identity on the
//! last one. In [`Mode::UndirectedTied`] both streams share one weight per
//! layer and the same dropout masks.

use alloc::borrow::Cow;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::graph::PropagationOperators;
use crate::linalg::{SparseMatrix, Tensor};
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Fusion {
    Sum,
    Max,
    Mean,
    Concat,
}

impl Fusion {
    pub const ALL: [Fusion; 4] = [Fusion::Sum, Fusion::Max, Fusion::Mean, Fusion::Concat];

    pub fn name(self) -> &'static str {
        match self {
            Fusion::Sum => "sum",
            Fusion::Max => "max",
            Fusion::Mean => "mean",
            Fusion::Concat => "concat",
        }
    }
}

impl fmt::Display for Fusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Fusion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sum" => Ok(Fusion::Sum),
            "max" => Ok(Fusion::Max),
            "mean" => Ok(Fusion::Mean),
            "concat" | "concatenate" => Ok(Fusion::Concat),
            other => Err(Error::Config(alloc::format!("unknown fusion `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Separate weights for the outgoing and incoming streams.
    Directed,
    /// `W1^l` and `W2^l` are one shared parameter.
    UndirectedTied,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Directed => "directed",
            Mode::UndirectedTied => "undirected-tied",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "directed" => Ok(Mode::Directed),
            "undirected-tied" | "undirected" | "tied" => Ok(Mode::UndirectedTied),
            other => Err(Error::Config(alloc::format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Softmax over the fused embeddings; the last layer width must equal
    /// `classes`.
    NodeClassifier { classes: usize },
    /// `FC([R ∥ S])`, sum pooling over nodes, then a linear map to one output.
    GraphRegressor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// `[d, d_1, ..., d_L]`: input width followed by each layer's output width.
    pub widths: Vec<usize>,
    pub fusion: Fusion,
    pub head: Head,
    pub mode: Mode,
    pub dropout: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::Config(
                "need at least an input and one layer width".into(),
            ));
        }
        if self.widths.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(alloc::format!(
                "dropout rate {} outside [0, 1)",
                self.dropout
            )));
        }
        if let Head::NodeClassifier { classes } = self.head {
            let last = *self.widths.last().unwrap();
            if last != classes {
                return Err(Error::Config(alloc::format!(
                    "last layer width {last} must equal the class count {classes}"
                )));
            }
        }
        Ok(())
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }
}

/// Index of a parameter tensor inside [`AgnnModel::params`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerParams {
    pub w1: ParamId,
    pub w2: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum HeadParams {
    Node {
        projection: Option<ParamId>,
    },
    Graph {
        fc_weight: ParamId,
        fc_bias: ParamId,
        out_weight: ParamId,
        out_bias: ParamId,
    },
}

/// Node input features. One-hot inputs are the sparse identity.
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    Dense(Tensor),
    Sparse(SparseMatrix),
}

impl Features {
    pub fn one_hot(n: usize) -> Self {
        Features::Sparse(SparseMatrix::identity(n))
    }

    /// Keeps `x` dense unless at most a quarter of its entries are nonzero.
    pub fn from_dense(x: Tensor) -> Self {
        let nnz = x.data().iter().filter(|&&v| v != 0.0).count();
        if nnz * 4 <= x.len() {
            Features::Sparse(SparseMatrix::from_dense(&x))
        } else {
            Features::Dense(x)
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            Features::Dense(t) => t.rows(),
            Features::Sparse(s) => s.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Features::Dense(t) => t.cols(),
            Features::Sparse(s) => s.cols(),
        }
    }

    pub fn to_dense(&self) -> Tensor {
        match self {
            Features::Dense(t) => t.clone(),
            Features::Sparse(s) => s.to_dense(),
        }
    }

    /// `X · W` on the tape, after applying `mask` to `X` if present.
    fn project<'a>(&'a self, tape: &mut Tape<'a>, w: Var, mask: Option<&Tensor>) -> Result<Var> {
        match (self, mask) {
            (Features::Dense(x), None) => {
                let c = tape.constant(x.clone());
                tape.matmul(c, w)
            }
            (Features::Dense(x), Some(m)) => {
                let c = tape.constant(x.hadamard(m)?);
                tape.matmul(c, w)
            }
            (Features::Sparse(s), None) => tape.spmm(s, w),
            (Features::Sparse(s), Some(m)) => {
                let dropped = s.scale_values(|i, j| m.get(i, j));
                tape.spmm(Cow::Owned(dropped), w)
            }
        }
    }
}

/// Per-layer values recorded during [`AgnnModel::forward`].
#[derive(Debug, Clone, Copy)]
pub struct LayerActivation {
    /// `Ã · S^{l-1} · W1^l` before the activation.
    pub s_messages: Var,
    /// `Â · R^{l-1} · W2^l` before the activation.
    pub r_messages: Var,
    pub s: Var,
    pub r: Var,
}

#[derive(Debug, Clone)]
pub struct Embeddings {
    /// Final outgoing embeddings `S^L`.
    pub s: Var,
    /// Final incoming embeddings `R^L`.
    pub r: Var,
    pub layers: Vec<LayerActivation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgnnModel {
    config: ModelConfig,
    params: Vec<Tensor>,
    layers: Vec<LayerParams>,
    head: HeadParams,
}

/// Parameter shapes in storage order, plus the layout that indexes them.
fn layout(config: &ModelConfig) -> (Vec<(usize, usize, bool)>, Vec<LayerParams>, HeadParams) {
    let mut shapes = Vec::new();
    let mut push = |r: usize, c: usize, weight: bool| {
        shapes.push((r, c, weight));
        ParamId(shapes.len() - 1)
    };
    let mut layers = Vec::new();
    for w in config.widths.windows(2) {
        let w1 = push(w[0], w[1], true);
        let w2 = match config.mode {
            Mode::Directed => push(w[0], w[1], true),
            Mode::UndirectedTied => w1,
        };
        layers.push(LayerParams { w1, w2 });
    }
    let last = *config.widths.last().unwrap();
    let head = match (config.head, config.fusion) {
        (Head::NodeClassifier { .. }, Fusion::Concat) => HeadParams::Node {
            projection: Some(push(2 * last, last, true)),
        },
        (Head::NodeClassifier { .. }, _) => HeadParams::Node { projection: None },
        (Head::GraphRegressor, _) => HeadParams::Graph {
            fc_weight: push(2 * last, last, true),
            fc_bias: push(1, last, false),
            out_weight: push(last, 1, true),
            out_bias: push(1, 1, false),
        },
    };
    (shapes, layers, head)
}

/// Fuses the final incoming and outgoing embeddings.
///
/// Sum gives `R + S`, Mean `(R + S) / 2`, Max the entrywise maximum (ties
/// take `S`) and Concat `[R ∥ S]`.
pub fn fuse(tape: &mut Tape<'_>, s: Var, r: Var, fusion: Fusion) -> Result<Var> {
    match fusion {
        Fusion::Sum => tape.add(r, s),
        Fusion::Mean => {
            let sum = tape.add(r, s)?;
            tape.scale(sum, 0.5)
        }
        Fusion::Max => tape.max(s, r),
        Fusion::Concat => tape.concat(r, s),
    }
}

/// Row-stochastic class probabilities from fused logits.
pub fn node_head(fused: &Tensor, classes: usize) -> Result<Tensor> {
    if fused.cols() != classes {
        return Err(Error::Config(alloc::format!(
            "fused width {} does not match {classes} classes",
            fused.cols()
        )));
    }
    Ok(fused.row_softmax())
}

impl AgnnModel {
    /// Draws every weight from `U(-a, a)` with `a = √(6 / (fan_in + fan_out))`;
    /// biases start at zero.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (shapes, layers, head) = layout(&config);
        let mut rng = seed::rng(seed);
        let params = shapes
            .iter()
            .map(|&(r, c, weight)| {
                if !weight {
                    return Tensor::zeros(r, c);
                }
                let bound = libm::sqrt(6.0 / (r + c) as f64);
                let data = (0..r * c).map(|_| rng.gen_range(-bound..bound)).collect();
                Tensor::new(r, c, data).expect("finite uniform draws")
            })
            .collect();
        Ok(AgnnModel {
            config,
            params,
            layers,
            head,
        })
    }

    /// Reassembles a model from its configuration and stored parameters.
    pub fn from_parts(config: ModelConfig, params: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let (shapes, layers, head) = layout(&config);
        if shapes.len() != params.len() {
            return Err(Error::Input(alloc::format!(
                "expected {} parameter tensors, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for (&(r, c, _), p) in shapes.iter().zip(&params) {
            if p.shape() != (r, c) {
                return Err(Error::Dimension {
                    op: "AgnnModel::from_parts",
                    left: (r, c),
                    right: p.shape(),
                });
            }
        }
        Ok(AgnnModel {
            config,
            params,
            layers,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param(&self, id: ParamId) -> &Tensor {
        &self.params[id.0]
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn embedding_width(&self) -> usize {
        *self.config.widths.last().unwrap()
    }

    /// Records every parameter on `tape` as a trainable leaf, in storage order.
    pub fn bind(&self, tape: &mut Tape<'_>) -> Vec<Var> {
        self.params.iter().map(|p| tape.param(p.clone())).collect()
    }

    /// Runs every layer. `dropout_seed = None` is evaluation mode; with a
    /// seed, inverted dropout masks are applied to each layer's input.
    pub fn forward<'a>(
        &self,
        tape: &mut Tape<'a>,
        bound: &[Var],
        ops: &'a PropagationOperators,
        x: &'a Features,
        dropout_seed: Option<u64>,
    ) -> Result<Embeddings> {
        let n = ops.a_tilde.rows();
        if x.rows() != n || x.cols() != self.config.widths[0] {
            return Err(Error::Dimension {
                op: "AgnnModel::forward",
                left: (n, self.config.widths[0]),
                right: (x.rows(), x.cols()),
            });
        }
        if bound.len() != self.params.len() {
            return Err(Error::Contract("parameters not bound to this tape".into()));
        }
        let rate = self.config.dropout;
        let tied = self.config.mode == Mode::UndirectedTied;
        let mask_for = |layer: usize, stream: u64, rows: usize, cols: usize| -> Option<Tensor> {
            let seed = dropout_seed?;
            if rate == 0.0 {
                return None;
            }
            let stream = if tied { 0 } else { stream };
            Some(dropout_mask(
                seed::derive(seed, &[layer as u64, stream]),
                rows,
                cols,
                rate,
            ))
        };

        let depth = self.layers.len();
        let mut acts: Vec<LayerActivation> = Vec::with_capacity(depth);
        for (l, lp) in self.layers.iter().enumerate() {
            let (w1, w2) = (bound[lp.w1.0], bound[lp.w2.0]);
            let (in_rows, in_cols) = (n, self.config.widths[l]);
            let mask_s = mask_for(l, 0, in_rows, in_cols);
            let mask_r = mask_for(l, 1, in_rows, in_cols);
            let (proj_s, proj_r) = match acts.last() {
                None => {
                    let ps = x.project(tape, w1, mask_s.as_ref())?;
                    let pr = if tied {
                        ps
                    } else {
                        x.project(tape, w2, mask_r.as_ref())?
                    };
                    (ps, pr)
                }
                Some(prev) => {
                    let (mut s_in, mut r_in) = (prev.s, prev.r);
                    if let Some(m) = mask_s {
                        s_in = tape.dropout(s_in, m)?;
                    }
                    if let Some(m) = mask_r {
                        r_in = tape.dropout(r_in, m)?;
                    }
                    (tape.matmul(s_in, w1)?, tape.matmul(r_in, w2)?)
                }
            };
            let s_messages = tape.spmm(&ops.a_tilde, proj_s)?;
            let r_messages = tape.spmm(&ops.a_hat, proj_r)?;
            let (s, r) = if l + 1 < depth {
                (tape.relu(s_messages)?, tape.relu(r_messages)?)
            } else {
                (s_messages, r_messages)
            };
            acts.push(LayerActivation {
                s_messages,
                r_messages,
                s,
                r,
            });
        }
        let last = *acts.last().expect("validated at least one layer");
        Ok(Embeddings {
            s: last.s,
            r: last.r,
            layers: acts,
        })
    }

    /// Fused class logits (pre-softmax). Concat fusion passes through a
    /// trained `2C → C` projection.
    pub fn node_logits(&self, tape: &mut Tape<'_>, bound: &[Var], emb: &Embeddings) -> Result<Var> {
        let HeadParams::Node { projection } = self.head else {
            return Err(Error::Config("model has a graph-level head".into()));
        };
        let fused = fuse(tape, emb.s, emb.r, self.config.fusion)?;
        match projection {
            Some(p) => tape.matmul(fused, bound[p.0]),
            None => Ok(fused),
        }
    }

    /// Graph-level readout for a batch of graphs stacked block-diagonally.
    /// `pool` is `graphs × nodes` with a one for every member node. Returns
    /// the pooled representation `Z_G` and the scalar prediction per graph.
    pub fn graph_readout<'a>(
        &self,
        tape: &mut Tape<'a>,
        bound: &[Var],
        emb: &Embeddings,
        pool: impl Into<Cow<'a, SparseMatrix>>,
    ) -> Result<(Var, Var)> {
        let HeadParams::Graph {
            fc_weight,
            fc_bias,
            out_weight,
            out_bias,
        } = self.head
        else {
            return Err(Error::Config("model has a node-level head".into()));
        };
        let cat = tape.concat(emb.r, emb.s)?;
        let z = tape.matmul(cat, bound[fc_weight.0])?;
        let z = tape.add_row_bias(z, bound[fc_bias.0])?;
        let pooled = tape.spmm(pool, z)?;
        let out = tape.matmul(pooled, bound[out_weight.0])?;
        let out = tape.add_row_bias(out, bound[out_bias.0])?;
        Ok((pooled, out))
    }

    /// Evaluation-mode class probabilities for every node.
    pub fn predict_proba(&self, ops: &PropagationOperators, x: &Features) -> Result<Tensor> {
        let Head::NodeClassifier { classes } = self.config.head else {
            return Err(Error::Config("model has a graph-level head".into()));
        };
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let emb = self.forward(&mut tape, &bound, ops, x, None)?;
        let logits = self.node_logits(&mut tape, &bound, &emb)?;
        node_head(tape.value(logits), classes)
    }
}

/// Inverted-dropout mask: each entry is `0` with probability `rate`, else
/// `1 / (1 - rate)`.
pub fn dropout_mask(seed: u64, rows: usize, cols: usize, rate: f64) -> Tensor {
    let mut rng = seed::rng(seed);
    let keep = 1.0 / (1.0 - rate);
    let data = (0..rows * cols)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    Tensor::new(rows, cols, data).expect("finite mask")
}

/// One-line summary used in reports.
pub fn describe(config: &ModelConfig) -> String {
    alloc::format!(
        "widths={:?} fusion={} mode={} dropout={}",
        config.widths,
        config.fusion,
        config.mode,
        config.dropout
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DirectedGraph;
    use alloc::vec;

    fn node_config(widths: Vec<usize>, fusion: Fusion, mode: Mode) -> ModelConfig {
        let classes = *widths.last().unwrap();
        ModelConfig {
            widths,
            fusion,
            head: Head::NodeClassifier { classes },
            mode,
            dropout: 0.0,
        }
    }

    #[test]
    fn init_shapes_and_determinism() {
        let cfg = node_config(vec![4, 8, 3], Fusion::Sum, Mode::Directed);
        let a = AgnnModel::init(cfg.clone(), 9).unwrap();
        let b = AgnnModel::init(cfg.clone(), 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.layers().len(), 2);
        assert_eq!(a.param(a.layers()[0].w1).shape(), (4, 8));
        assert_eq!(a.param(a.layers()[1].w2).shape(), (8, 3));
        assert_ne!(a, AgnnModel::init(cfg, 10).unwrap());
    }

    #[test]
    fn init_rejects_bad_configs() {
        let mut cfg = node_config(vec![4, 0, 3], Fusion::Sum, Mode::Directed);
        assert!(matches!(
            AgnnModel::init(cfg.clone(), 0),
            Err(Error::Config(_))
        ));
        cfg.widths = vec![4];
        assert!(AgnnModel::init(cfg.clone(), 0).is_err());
        cfg.widths = vec![4, 5];
        assert!(AgnnModel::init(cfg, 0).is_err());
    }

    #[test]
    fn init_bounds_and_mean() {
        let cfg = node_config(vec![300, 400, 2], Fusion::Sum, Mode::UndirectedTied);
        let m = AgnnModel::init(cfg, 1).unwrap();
        let w = m.param(m.layers()[0].w1);
        let bound = (6.0f64 / 700.0).sqrt();
        assert!(w.data().iter().all(|v| v.abs() < bound));
        // 1.2e5 draws from U(-a, a): standard error of the mean is a/sqrt(3N) ≈ 1.5e-4.
        assert!(w.mean().abs() < 0.01);
    }

    #[test]
    fn tied_mode_shares_weights() {
        let m = AgnnModel::init(
            node_config(vec![3, 5, 2], Fusion::Sum, Mode::UndirectedTied),
            0,
        )
        .unwrap();
        assert!(m.layers().iter().all(|l| l.w1 == l.w2));
        assert_eq!(m.params().len(), 2);
        let d = AgnnModel::init(
            node_config(vec![3, 5, 2], Fusion::Concat, Mode::Directed),
            0,
        )
        .unwrap();
        assert_eq!(d.params().len(), 5);
    }

    #[test]
    fn single_isolated_node_passes_features_through() {
        let g = DirectedGraph::from_edge_list(1, &[]).unwrap();
        let ops = g.build_operators();
        let cfg = node_config(vec![1, 1], Fusion::Sum, Mode::Directed);
        let m = AgnnModel::from_parts(cfg, vec![Tensor::scalar(1.0), Tensor::scalar(1.0)]).unwrap();
        let x = Features::Dense(Tensor::scalar(2.5));
        let mut tape = Tape::new();
        let bound = m.bind(&mut tape);
        let emb = m.forward(&mut tape, &bound, &ops, &x, None).unwrap();
        assert_eq!(tape.value(emb.s).item().unwrap(), 2.5);
        assert_eq!(tape.value(emb.r).item().unwrap(), 2.5);
    }

    #[test]
    fn two_node_chain_by_hand() {
        let g = DirectedGraph::from_edge_list(2, &[(0, 1)]).unwrap();
        let ops = g.build_operators();
        let cfg = node_config(vec![1, 1], Fusion::Sum, Mode::Directed);
        let m = AgnnModel::from_parts(cfg, vec![Tensor::scalar(1.0), Tensor::scalar(1.0)]).unwrap();
        let x = Features::Dense(Tensor::ones(2, 1));
        let mut tape = Tape::new();
        let bound = m.bind(&mut tape);
        let emb = m.forward(&mut tape, &bound, &ops, &x, None).unwrap();
        let s = core::f64::consts::FRAC_1_SQRT_2;
        let s_expected = Tensor::from_rows(&[&[s + 0.5], &[s]]).unwrap();
        let r_expected = Tensor::from_rows(&[&[s], &[0.5 + s]]).unwrap();
        assert!(tape.value(emb.s).max_abs_diff(&s_expected).unwrap() < 1e-15);
        assert!(tape.value(emb.r).max_abs_diff(&r_expected).unwrap() < 1e-15);
    }

    #[test]
    fn width_mismatch_is_a_dimension_error() {
        let g = DirectedGraph::from_edge_list(3, &[(0, 1)]).unwrap();
        let ops = g.build_operators();
        let m = AgnnModel::init(node_config(vec![4, 2], Fusion::Sum, Mode::Directed), 0).unwrap();
        let x = Features::Dense(Tensor::ones(3, 5));
        let mut tape = Tape::new();
        let bound = m.bind(&mut tape);
        assert!(matches!(
            m.forward(&mut tape, &bound, &ops, &x, None),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn fusion_examples() {
        let s_val = Tensor::from_rows(&[&[1.0, -2.0], &[0.5, 3.0]]).unwrap();
        let mut tape = Tape::new();
        let s = tape.constant(s_val.clone());
        let r = tape.constant(s_val.clone());
        let neg = tape.constant(s_val.scale(-1.0).unwrap());
        let sum = fuse(&mut tape, s, r, Fusion::Sum).unwrap();
        assert_eq!(tape.value(sum), &s_val.scale(2.0).unwrap());
        let mean = fuse(&mut tape, s, r, Fusion::Mean).unwrap();
        assert_eq!(tape.value(mean), &s_val);
        let max = fuse(&mut tape, s, r, Fusion::Max).unwrap();
        assert_eq!(tape.value(max), &s_val);
        let cat = fuse(&mut tape, s, r, Fusion::Concat).unwrap();
        assert_eq!(tape.value(cat), &s_val.concat_cols(&s_val).unwrap());
        let zero = fuse(&mut tape, s, neg, Fusion::Sum).unwrap();
        assert_eq!(tape.value(zero), &Tensor::zeros(2, 2));
    }

    #[test]
    fn node_head_examples() {
        let z = node_head(&Tensor::zeros(1, 4), 4).unwrap();
        assert_eq!(z, Tensor::filled(1, 4, 0.25));
        assert!(matches!(
            node_head(&Tensor::zeros(1, 4), 3),
            Err(Error::Config(_))
        ));
        let logits = Tensor::from_rows(&[&[0.2, 1.7, -0.3]]).unwrap();
        let shifted = Tensor::from_rows(&[&[100.2, 101.7, 99.7]]).unwrap();
        let (a, b) = (
            node_head(&logits, 3).unwrap(),
            node_head(&shifted, 3).unwrap(),
        );
        assert_eq!(a.argmax_row(0), b.argmax_row(0));
        assert!((a.row(0).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn dropout_mask_is_seeded_and_scaled() {
        let a = dropout_mask(3, 10, 10, 0.5);
        assert_eq!(a, dropout_mask(3, 10, 10, 0.5));
        assert!(a.data().iter().all(|&v| v == 0.0 || v == 2.0));
        assert_ne!(a, dropout_mask(4, 10, 10, 0.5));
    }

    #[test]
    fn graph_readout_of_zero_embeddings_is_zero() {
        let cfg = ModelConfig {
            widths: vec![2, 3],
            fusion: Fusion::Concat,
            head: Head::GraphRegressor,
            mode: Mode::Directed,
            dropout: 0.0,
        };
        let m = AgnnModel::init(cfg, 5).unwrap();
        let mut tape = Tape::new();
        let bound = m.bind(&mut tape);
        let zero = tape.constant(Tensor::zeros(4, 3));
        let emb = Embeddings {
            s: zero,
            r: zero,
            layers: vec![],
        };
        let pool =
            SparseMatrix::from_triplets(1, 4, (0..4).map(|i| (0, i, 1.0)).collect()).unwrap();
        let (zg, out) = m.graph_readout(&mut tape, &bound, &emb, pool).unwrap();
        assert_eq!(tape.value(zg), &Tensor::zeros(1, 3));
        assert_eq!(tape.value(out).item().unwrap(), 0.0);
    }
}
