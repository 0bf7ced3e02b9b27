//! Task losses and the edge-likelihood regularizer.
//!
//! The regularizer is the Bernoulli negative log-likelihood of the adjacency
//! matrix under `p_ij = sigmoid(s_i · r_j)`, averaged over all `n²` ordered
//! pairs (diagonal included):
//!
//! ```text
//! L_reg = -(1/n²) Σ_ij [ (s_i · r_j) a_ij - softplus(s_i · r_j) ]
//! ```

use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::linalg::{SparseMatrix, Tensor};
use crate::seed;
use crate::{Error, Result};

/// Labeled nodes (or graphs) and their classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    indices: Vec<usize>,
    labels: Vec<usize>,
    classes: usize,
}

impl LabelSet {
    pub fn new(indices: Vec<usize>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if indices.len() != labels.len() {
            return Err(Error::Input("indices and labels differ in length".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&c| c >= classes) {
            return Err(Error::Input(alloc::format!(
                "label {bad} not below class count {classes}"
            )));
        }
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Input("labeled indices must be unique".into()));
        }
        Ok(LabelSet {
            indices,
            labels,
            classes,
        })
    }

    /// Infers the class count as `1 + max label`.
    pub fn from_pairs(pairs: &[(usize, usize)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Input("empty label set".into()));
        }
        let classes = pairs.iter().map(|p| p.1).max().unwrap() + 1;
        Self::new(
            pairs.iter().map(|p| p.0).collect(),
            pairs.iter().map(|p| p.1).collect(),
            classes,
        )
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.labels.iter().copied())
    }

    pub fn label_of(&self, index: usize) -> Option<usize> {
        self.indices
            .iter()
            .position(|&i| i == index)
            .map(|k| self.labels[k])
    }

    /// `(index, class)` for each of `nodes` that carries a label.
    pub fn select(&self, nodes: &[usize]) -> Vec<(usize, usize)> {
        let mut lookup = alloc::collections::BTreeMap::new();
        for (i, c) in self.pairs() {
            lookup.insert(i, c);
        }
        nodes
            .iter()
            .filter_map(|n| lookup.get(n).map(|&c| (*n, c)))
            .collect()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.indices.iter().copied().max()
    }
}

/// Error term, regularizer and their λ-weighted total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub error_term: f64,
    pub reg_term: f64,
    pub total: f64,
    pub lambda: f64,
}

impl LossReport {
    pub fn new(error_term: f64, reg_term: f64, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(LossReport {
            error_term,
            reg_term,
            total: error_term + lambda * reg_term,
            lambda,
        })
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(alloc::format!(
            "regularization coefficient must be finite and non-negative, got {lambda}"
        )));
    }
    Ok(())
}

/// `-Σ ln softmax(logits)[node, class]` over the labeled `(node, class)`
/// pairs, computed in fused log-sum-exp form.
pub fn cross_entropy(tape: &mut Tape<'_>, logits: Var, labels: &[(usize, usize)]) -> Result<Var> {
    tape.softmax_cross_entropy(logits, labels)
}

/// `-Σ ln z[node, class]` directly on a row-stochastic matrix.
pub fn cross_entropy_from_probs(z: &Tensor, labels: &[(usize, usize)]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Contract(
            "cross-entropy over an empty label set".into(),
        ));
    }
    let mut total = 0.0;
    for &(row, class) in labels {
        if row >= z.rows() || class >= z.cols() {
            return Err(Error::Contract("label outside prediction matrix".into()));
        }
        total -= libm::log(z.get(row, class));
    }
    Ok(total)
}

fn check_embeddings(tape: &Tape<'_>, s: Var, r: Var, adjacency: &SparseMatrix) -> Result<usize> {
    let (sv, rv) = (tape.value(s), tape.value(r));
    if sv.shape() != rv.shape() {
        return Err(Error::Dimension {
            op: "regularization_loss",
            left: sv.shape(),
            right: rv.shape(),
        });
    }
    let n = sv.rows();
    if adjacency.shape() != (n, n) {
        return Err(Error::Dimension {
            op: "regularization_loss",
            left: (n, n),
            right: adjacency.shape(),
        });
    }
    Ok(n)
}

/// Exact edge-likelihood regularizer over all `n²` pairs. The pairwise logits
/// are the dense `S · Rᵀ`; the edge term gathers `s_i · r_j` over the stored
/// entries of the original (self-loop free) adjacency.
pub fn regularization_loss(
    tape: &mut Tape<'_>,
    s: Var,
    r: Var,
    adjacency: &SparseMatrix,
) -> Result<Var> {
    let n = check_embeddings(tape, s, r, adjacency)?;
    let rt = tape.transpose(r);
    let logits = tape.matmul(s, rt)?;
    let sp = tape.softplus(logits)?;
    let sp_sum = tape.sum(sp);
    let edges: Vec<(usize, usize)> = adjacency.entries().map(|(i, j, _)| (i, j)).collect();
    let inner = if edges.is_empty() {
        tape.scale(sp_sum, -1.0)?
    } else {
        let dots = tape.pair_dot(s, r, &edges)?;
        let edge_sum = tape.sum(dots);
        tape.sub(edge_sum, sp_sum)?
    };
    tape.scale(inner, -1.0 / (n * n) as f64)
}

/// Unbiased stochastic estimate of [`regularization_loss`] for graphs too
/// large for the dense `n × n` logits: the edge term is exact and the
/// softplus sum is estimated from `negatives_per_edge · |E|` pairs drawn
/// uniformly with replacement.
///
/// This approximation is an engineering addition, not part of the model.
pub fn regularization_loss_sampled(
    tape: &mut Tape<'_>,
    s: Var,
    r: Var,
    adjacency: &SparseMatrix,
    negatives_per_edge: usize,
    seed: u64,
) -> Result<Var> {
    let n = check_embeddings(tape, s, r, adjacency)?;
    if negatives_per_edge == 0 {
        return Err(Error::Config("negatives_per_edge must be positive".into()));
    }
    let samples = negatives_per_edge * adjacency.nnz().max(1);
    let mut rng = seed::rng(seed);
    let pairs: Vec<(usize, usize)> = (0..samples)
        .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))
        .collect();
    let dots = tape.pair_dot(s, r, &pairs)?;
    let sp = tape.softplus(dots)?;
    let sp_sum = tape.sum(sp);
    let sp_est = tape.scale(sp_sum, (n * n) as f64 / samples as f64)?;
    let edges: Vec<(usize, usize)> = adjacency.entries().map(|(i, j, _)| (i, j)).collect();
    let inner = if edges.is_empty() {
        tape.scale(sp_est, -1.0)?
    } else {
        let e = tape.pair_dot(s, r, &edges)?;
        let edge_sum = tape.sum(e);
        tape.sub(edge_sum, sp_est)?
    };
    tape.scale(inner, -1.0 / (n * n) as f64)
}

/// `error + λ · reg` on the tape. With `reg = None` the total is the error
/// node itself and the report carries a zero regularizer.
pub fn total_loss(
    tape: &mut Tape<'_>,
    error: Var,
    reg: Option<Var>,
    lambda: f64,
) -> Result<(Var, LossReport)> {
    check_lambda(lambda)?;
    let error_term = tape.value(error).item()?;
    match reg {
        None => Ok((error, LossReport::new(error_term, 0.0, lambda)?)),
        Some(reg) => {
            let reg_term = tape.value(reg).item()?;
            let weighted = tape.scale(reg, lambda)?;
            let total = tape.add(error, weighted)?;
            let report = LossReport {
                error_term,
                reg_term,
                total: tape.value(total).item()?,
                lambda,
            };
            Ok((total, report))
        }
    }
}

/// Mean squared error against a constant target.
pub fn regression_loss(tape: &mut Tape<'_>, pred: Var, target: &Tensor) -> Result<Var> {
    let p = tape.value(pred);
    if p.shape() != target.shape() {
        return Err(Error::Dimension {
            op: "regression_loss",
            left: p.shape(),
            right: target.shape(),
        });
    }
    let t = tape.constant(target.clone());
    let diff = tape.sub(pred, t)?;
    let sq = tape.hadamard(diff, diff)?;
    Ok(tape.mean(sq))
}
