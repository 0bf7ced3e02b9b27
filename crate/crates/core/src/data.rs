//! In-memory datasets and synthetic generators.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::graph::DirectedGraph;
use crate::linalg::Tensor;
use crate::loss::LabelSet;
use crate::model::Features;
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    NodeClassification,
    GraphRegression,
}

/// A node-classification dataset. `features = None` means one-hot inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub name: String,
    pub graph: DirectedGraph,
    pub features: Option<Tensor>,
    pub labels: LabelSet,
}

impl DatasetBundle {
    pub fn new(
        name: impl Into<String>,
        graph: DirectedGraph,
        features: Option<Tensor>,
        labels: LabelSet,
    ) -> Result<Self> {
        let n = graph.node_count();
        if let Some(x) = &features {
            if x.rows() != n {
                return Err(Error::Input(alloc::format!(
                    "feature matrix has {} rows for {n} nodes",
                    x.rows()
                )));
            }
        }
        if labels.is_empty() {
            return Err(Error::Input("dataset has no labels".into()));
        }
        if let Some(max) = labels.max_index() {
            if max >= n {
                return Err(Error::Input(alloc::format!(
                    "label for node {max} but n = {n}"
                )));
            }
        }
        Ok(DatasetBundle {
            name: name.into(),
            graph,
            features,
            labels,
        })
    }

    pub fn task(&self) -> Task {
        Task::NodeClassification
    }

    /// Model inputs: the given features, or the sparse identity.
    pub fn model_features(&self) -> Features {
        match &self.features {
            Some(x) => Features::from_dense(x.clone()),
            None => Features::one_hot(self.graph.node_count()),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.features
            .as_ref()
            .map_or(self.graph.node_count(), Tensor::cols)
    }
}

/// One graph with a real-valued target.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSample {
    pub graph: DirectedGraph,
    pub features: Tensor,
    pub target: f64,
}

/// A set of graphs with a train/test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSet {
    pub name: String,
    pub graphs: Vec<GraphSample>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl GraphSet {
    /// Partitions `graphs` into the first `ceil(train_fraction · count)`
    /// positions of a seeded shuffle and the rest.
    pub fn split(
        name: impl Into<String>,
        graphs: Vec<GraphSample>,
        train_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(Error::Config("train fraction outside [0, 1]".into()));
        }
        let width = graphs.first().map(|g| g.features.cols());
        if graphs.iter().any(|g| Some(g.features.cols()) != width) {
            return Err(Error::Input("graphs disagree on feature width".into()));
        }
        let mut order: Vec<usize> = (0..graphs.len()).collect();
        order.shuffle(&mut seed::rng(seed::derive(seed, &[0x5e7])));
        let cut = libm::ceil(train_fraction * graphs.len() as f64) as usize;
        let mut train = order[..cut].to_vec();
        let mut test = order[cut..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        Ok(GraphSet {
            name: name.into(),
            graphs,
            train,
            test,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.graphs.first().map_or(0, |g| g.features.cols())
    }
}

/// Directed stochastic block model. Edge `u → v` appears independently with
/// probability `probs[block(u)][block(v)]`; the matrix need not be symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SbmSpec {
    pub block_sizes: Vec<usize>,
    pub probs: Vec<Vec<f64>>,
    pub seed: u64,
}

impl SbmSpec {
    pub fn validate(&self) -> Result<()> {
        let k = self.block_sizes.len();
        if k == 0 || self.block_sizes.iter().sum::<usize>() == 0 {
            return Err(Error::Config(
                "SBM needs at least one non-empty block".into(),
            ));
        }
        if self.probs.len() != k || self.probs.iter().any(|row| row.len() != k) {
            return Err(Error::Config(alloc::format!(
                "SBM probability matrix must be {k}x{k}"
            )));
        }
        if self
            .probs
            .iter()
            .flatten()
            .any(|p| !(0.0..=1.0).contains(p))
        {
            return Err(Error::Config("SBM probabilities must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn block_of(&self) -> Vec<usize> {
        self.block_sizes
            .iter()
            .enumerate()
            .flat_map(|(b, &size)| core::iter::repeat_n(b, size))
            .collect()
    }
}

/// Samples a directed SBM. Nodes are numbered block by block, labels are the
/// block ids, features are one-hot, and no self-loops are drawn.
pub fn generate_directed_sbm(spec: &SbmSpec) -> Result<DatasetBundle> {
    spec.validate()?;
    let block = spec.block_of();
    let n = block.len();
    let mut rng = seed::rng(spec.seed);
    let mut edges = Vec::new();
    for u in 0..n {
        let row = &spec.probs[block[u]];
        for v in 0..n {
            if u == v {
                continue;
            }
            let p = row[block[v]];
            if p > 0.0 && rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let graph = DirectedGraph::from_edge_list(n, &edges)?;
    let labels = LabelSet::new((0..n).collect(), block, spec.block_sizes.len())?;
    DatasetBundle::new("directed-sbm", graph, None, labels)
}

/// Settings for the random-DAG regression generator.
#[derive(Debug, Clone, PartialEq)]
pub struct DagSpec {
    pub count: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Probability of each forward edge along the hidden topological order.
    pub edge_prob: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for DagSpec {
    fn default() -> Self {
        DagSpec {
            count: 500,
            min_nodes: 4,
            max_nodes: 12,
            edge_prob: 0.3,
            train_fraction: 0.9,
            seed: 0,
        }
    }
}

/// Number of edges on the longest directed path, or `None` for cyclic graphs.
pub fn longest_path_len(graph: &DirectedGraph) -> Option<usize> {
    let order = graph.topological_order()?;
    let mut depth = vec![0usize; graph.node_count()];
    for &v in &order {
        for w in graph.successors(v) {
            depth[w] = depth[w].max(depth[v] + 1);
        }
    }
    Some(depth.into_iter().max().unwrap_or(0))
}

/// Longest path length divided by `n - 1`, in `[0, 1]`.
pub fn longest_path_target(graph: &DirectedGraph) -> Result<f64> {
    let n = graph.node_count();
    if n < 2 {
        return Err(Error::Input(
            "longest-path target needs at least two nodes".into(),
        ));
    }
    let len = longest_path_len(graph).ok_or_else(|| Error::Input("graph has a cycle".into()))?;
    Ok(len as f64 / (n - 1) as f64)
}

/// Size-independent per-node inputs for graph-level tasks:
/// `[1, in_degree / (n-1), out_degree / (n-1), is_source, is_sink]`.
pub fn structural_features(graph: &DirectedGraph) -> Tensor {
    let n = graph.node_count();
    let scale = if n > 1 { 1.0 / (n - 1) as f64 } else { 1.0 };
    let mut data = Vec::with_capacity(n * 5);
    for v in 0..n {
        let (i, o) = (graph.in_degree()[v], graph.out_degree()[v]);
        data.extend_from_slice(&[
            1.0,
            i as f64 * scale,
            o as f64 * scale,
            (i == 0) as u8 as f64,
            (o == 0) as u8 as f64,
        ]);
    }
    Tensor::new(n, 5, data).expect("finite structural features")
}

/// Random DAGs: a random permutation fixes a hidden topological order and
/// every forward pair becomes an edge with probability `edge_prob`. Targets
/// are normalized longest-path lengths.
pub fn generate_dag_regression(spec: &DagSpec) -> Result<GraphSet> {
    if spec.min_nodes < 2 || spec.max_nodes < spec.min_nodes {
        return Err(Error::Config(
            "DAG sizes must satisfy 2 <= min <= max".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.edge_prob) {
        return Err(Error::Config("edge probability outside [0, 1]".into()));
    }
    let mut rng = seed::rng(spec.seed);
    let mut graphs = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let n = rng.gen_range(spec.min_nodes..=spec.max_nodes);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.gen::<f64>() < spec.edge_prob {
                    edges.push((order[a], order[b]));
                }
            }
        }
        let graph = DirectedGraph::from_edge_list(n, &edges)?;
        let target = longest_path_target(&graph)?;
        let features = structural_features(&graph);
        graphs.push(GraphSample {
            graph,
            features,
            target,
        });
    }
    GraphSet::split("random-dag", graphs, spec.train_fraction, spec.seed)
}
