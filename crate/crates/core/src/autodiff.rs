//! Reverse-mode differentiation over [`Tensor`] operations.
//!
//! A [`Tape`] records each operation as it is evaluated. Because a value can
//! only be recorded after its inputs exist, the node list is topologically
//! ordered by construction and [`Tape::backward`] is a single reverse sweep.
//! Sparse operands are borrowed constants: no gradient flows into them.

use alloc::borrow::Cow;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use crate::linalg::{sigmoid, SparseMatrix, Tensor};
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Parameterless operations reachable through [`Tape::record`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpTag {
    MatMul,
    Add,
    Sub,
    Hadamard,
    Max,
    AddRowBias,
    Relu,
    Sigmoid,
    Softplus,
    Transpose,
    Sum,
    Mean,
    SumRows,
    MaxRows,
    Concat,
}

impl OpTag {
    fn arity(self) -> usize {
        match self {
            OpTag::MatMul
            | OpTag::Add
            | OpTag::Sub
            | OpTag::Hadamard
            | OpTag::Max
            | OpTag::AddRowBias
            | OpTag::Concat => 2,
            _ => 1,
        }
    }
}

impl FromStr for OpTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "matmul" => OpTag::MatMul,
            "add" => OpTag::Add,
            "sub" => OpTag::Sub,
            "hadamard" => OpTag::Hadamard,
            "max" => OpTag::Max,
            "add_row_bias" => OpTag::AddRowBias,
            "relu" => OpTag::Relu,
            "sigmoid" => OpTag::Sigmoid,
            "softplus" => OpTag::Softplus,
            "transpose" => OpTag::Transpose,
            "sum" => OpTag::Sum,
            "mean" => OpTag::Mean,
            "sum_rows" => OpTag::SumRows,
            "max_rows" => OpTag::MaxRows,
            "concat" => OpTag::Concat,
            other => return Err(Error::Unsupported(other.to_string())),
        })
    }
}

enum Op<'a> {
    Leaf {
        trainable: bool,
    },
    MatMul(Var, Var),
    SpMM(Cow<'a, SparseMatrix>, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Max(Var, Var),
    AddRowBias(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Softplus(Var),
    Transpose(Var),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    MaxRows(Var, Vec<usize>),
    Concat(Var, Var),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Dropout(Var, Tensor),
    SoftmaxXent {
        logits: Var,
        targets: Vec<(usize, usize)>,
        probs: Tensor,
    },
    PairDot(Var, Var, Vec<(usize, usize)>),
}

struct Node<'a> {
    value: Tensor,
    op: Op<'a>,
}

/// Linear record of a forward computation.
#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients of a scalar with respect to every recorded value.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of `v`. Trainable leaves always have one (zero when the loss
    /// does not depend on them); intermediate values may not.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn dim(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Dimension {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op<'a>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn is_trainable(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].op, Op::Leaf { trainable: true })
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf { trainable: true })
    }

    /// Records a non-trainable leaf.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf { trainable: false })
    }

    /// Records a parameterless operation by tag. Arity is checked here;
    /// shapes are checked by the operation itself.
    pub fn record(&mut self, tag: OpTag, inputs: &[Var]) -> Result<Var> {
        if inputs.len() != tag.arity() {
            return Err(Error::Contract(alloc::format!(
                "{tag:?} takes {} inputs, got {}",
                tag.arity(),
                inputs.len()
            )));
        }
        let a = inputs[0];
        let b = inputs.get(1).copied().unwrap_or(a);
        match tag {
            OpTag::MatMul => self.matmul(a, b),
            OpTag::Add => self.add(a, b),
            OpTag::Sub => self.sub(a, b),
            OpTag::Hadamard => self.hadamard(a, b),
            OpTag::Max => self.max(a, b),
            OpTag::AddRowBias => self.add_row_bias(a, b),
            OpTag::Relu => self.relu(a),
            OpTag::Sigmoid => self.sigmoid(a),
            OpTag::Softplus => self.softplus(a),
            OpTag::Transpose => Ok(self.transpose(a)),
            OpTag::Sum => Ok(self.sum(a)),
            OpTag::Mean => Ok(self.mean(a)),
            OpTag::SumRows => Ok(self.sum_rows(a)),
            OpTag::MaxRows => self.max_rows(a),
            OpTag::Concat => self.concat(a, b),
        }
    }

    /// Records an operation named by a string tag.
    pub fn record_named(&mut self, tag: &str, inputs: &[Var]) -> Result<Var> {
        let tag = tag.parse::<OpTag>()?;
        self.record(tag, inputs)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// Constant sparse matrix times a recorded value.
    pub fn spmm(&mut self, s: impl Into<Cow<'a, SparseMatrix>>, b: Var) -> Result<Var> {
        let s = s.into();
        let v = s.spmm(self.value(b))?;
        Ok(self.push(v, Op::SpMM(s, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(v, Op::Hadamard(a, b)))
    }

    /// Entrywise maximum; a tie routes the gradient to `a`.
    pub fn max(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).maximum(self.value(b))?;
        Ok(self.push(v, Op::Max(a, b)))
    }

    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let v = self.value(a).add_row_bias(self.value(bias))?;
        Ok(self.push(v, Op::AddRowBias(a, bias)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let v = self.value(a).scale(factor)?;
        Ok(self.push(v, Op::Scale(a, factor)))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).relu()?;
        Ok(self.push(v, Op::Relu(a)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).sigmoid()?;
        Ok(self.push(v, Op::Sigmoid(a)))
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).softplus()?;
        Ok(self.push(v, Op::Softplus(a)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).mean());
        self.push(v, Op::Mean(a))
    }

    /// Column sums (sum pooling over rows).
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_rows();
        self.push(v, Op::SumRows(a))
    }

    /// Column maxima (max pooling over rows); ties go to the lowest row.
    pub fn max_rows(&mut self, a: Var) -> Result<Var> {
        let (v, arg) = self.value(a).max_rows()?;
        Ok(self.push(v, Op::MaxRows(a, arg)))
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).concat_cols(self.value(b))?;
        Ok(self.push(v, Op::Concat(a, b)))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let v = self.value(a).slice_cols(start, end)?;
        Ok(self.push(v, Op::SliceCols(a, start)))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let v = self.value(a).slice_rows(start, end)?;
        Ok(self.push(v, Op::SliceRows(a, start)))
    }

    /// Multiplies by a fixed mask (entries `0` or `1/(1-p)` for inverted
    /// dropout).
    pub fn dropout(&mut self, a: Var, mask: Tensor) -> Result<Var> {
        let v = self.value(a).hadamard(&mask)?;
        Ok(self.push(v, Op::Dropout(a, mask)))
    }

    /// Fused `-Σ ln softmax(logits)[row, class]` over `targets`, evaluated
    /// in log-sum-exp form.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: &[(usize, usize)],
    ) -> Result<Var> {
        if targets.is_empty() {
            return Err(Error::Contract(
                "cross-entropy over an empty label set".into(),
            ));
        }
        let x = self.value(logits);
        for &(row, class) in targets {
            if row >= x.rows() || class >= x.cols() {
                return Err(Error::Contract(alloc::format!(
                    "label ({row}, {class}) outside logits of shape {}x{}",
                    x.rows(),
                    x.cols()
                )));
            }
        }
        let mut loss = 0.0;
        for &(row, class) in targets {
            let r = x.row(row);
            let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + libm::log(r.iter().map(|v| libm::exp(v - max)).sum::<f64>());
            loss += lse - r[class];
        }
        let probs = x.row_softmax();
        let v = crate::linalg::Tensor::new(1, 1, vec![loss])?;
        Ok(self.push(
            v,
            Op::SoftmaxXent {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// Column vector of inner products `a[i] · b[j]` for each listed pair.
    pub fn pair_dot(&mut self, a: Var, b: Var, pairs: &[(usize, usize)]) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != y.cols() {
            return Err(dim("pair_dot", x, y));
        }
        if pairs.iter().any(|&(i, j)| i >= x.rows() || j >= y.rows()) {
            return Err(Error::Contract("pair index out of range".into()));
        }
        let data = pairs
            .iter()
            .map(|&(i, j)| x.row(i).iter().zip(y.row(j)).map(|(p, q)| p * q).sum())
            .collect();
        let v = Tensor::new(pairs.len(), 1, data)?;
        Ok(self.push(v, Op::PairDot(a, b, pairs.to_vec())))
    }

    /// Reverse sweep from a 1×1 `loss`. The tape is not consumed, so repeated
    /// calls return identical gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            let (r, c) = self.value(loss).shape();
            return Err(Error::Contract(alloc::format!(
                "backward needs a scalar loss, got {r}x{c}"
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let contributions = self.local_grads(node, &g)?;
            grads[idx] = Some(g);
            for (target, delta) in contributions {
                match &mut grads[target.0] {
                    Some(acc) => acc.add_assign(&delta)?,
                    slot @ None => *slot = Some(delta),
                }
            }
        }

        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Leaf { trainable: true } = node.op {
                if grads[idx].is_none() {
                    let (r, c) = node.value.shape();
                    grads[idx] = Some(Tensor::zeros(r, c));
                }
            }
            if let Some(g) = &grads[idx] {
                if g.data().iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { op: "backward" });
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn local_grads(&self, node: &Node<'a>, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let val = |v: Var| self.value(v);
        let map = |x: &Tensor, f: &dyn Fn(usize, f64) -> f64| -> Result<Tensor> {
            let data = x.data().iter().enumerate().map(|(k, &v)| f(k, v)).collect();
            Tensor::new(x.rows(), x.cols(), data)
        };
        let gd = g.data();
        Ok(match &node.op {
            Op::Leaf { .. } => vec![],
            Op::MatMul(a, b) => vec![(*a, g.matmul_nt(val(*b))?), (*b, val(*a).matmul_tn(g)?)],
            Op::SpMM(s, b) => vec![(*b, s.spmm_t(g)?)],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.scale(-1.0)?)],
            Op::Hadamard(a, b) => vec![(*a, g.hadamard(val(*b))?), (*b, g.hadamard(val(*a))?)],
            Op::Max(a, b) => {
                let (x, y) = (val(*a).data(), val(*b).data());
                let ga = map(g, &|k, v| if x[k] >= y[k] { v } else { 0.0 })?;
                let gb = map(g, &|k, v| if x[k] >= y[k] { 0.0 } else { v })?;
                vec![(*a, ga), (*b, gb)]
            }
            Op::AddRowBias(a, bias) => vec![(*a, g.clone()), (*bias, g.sum_rows())],
            Op::Scale(a, c) => vec![(*a, g.scale(*c)?)],
            Op::Relu(a) => {
                let x = val(*a).data();
                vec![(*a, map(g, &|k, v| if x[k] > 0.0 { v } else { 0.0 })?)]
            }
            Op::Sigmoid(_) | Op::Softplus(_) => {
                let (a, deriv): (Var, Vec<f64>) = match &node.op {
                    Op::Sigmoid(a) => (
                        *a,
                        node.value.data().iter().map(|y| y * (1.0 - y)).collect(),
                    ),
                    Op::Softplus(a) => (*a, val(*a).data().iter().map(|&x| sigmoid(x)).collect()),
                    _ => unreachable!(),
                };
                vec![(a, map(g, &|k, v| v * deriv[k])?)]
            }
            Op::Transpose(a) => vec![(*a, g.transpose())],
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                vec![(*a, Tensor::filled(r, c, gd[0]))]
            }
            Op::Mean(a) => {
                let (r, c) = val(*a).shape();
                vec![(*a, Tensor::filled(r, c, gd[0] / (r * c) as f64))]
            }
            Op::SumRows(a) => {
                let (r, c) = val(*a).shape();
                let mut out = Tensor::zeros(r, c);
                for i in 0..r {
                    out.row_mut(i).copy_from_slice(gd);
                }
                vec![(*a, out)]
            }
            Op::MaxRows(a, arg) => {
                let (r, c) = val(*a).shape();
                let mut out = Tensor::zeros(r, c);
                for (j, &i) in arg.iter().enumerate() {
                    out.set(i, j, gd[j]);
                }
                vec![(*a, out)]
            }
            Op::Concat(a, b) => {
                let split = val(*a).cols();
                vec![
                    (*a, g.slice_cols(0, split)?),
                    (*b, g.slice_cols(split, g.cols())?),
                ]
            }
            Op::SliceCols(a, start) => {
                let (r, c) = val(*a).shape();
                let mut out = Tensor::zeros(r, c);
                for i in 0..r {
                    out.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                }
                vec![(*a, out)]
            }
            Op::SliceRows(a, start) => {
                let (r, c) = val(*a).shape();
                let mut out = Tensor::zeros(r, c);
                for i in 0..g.rows() {
                    out.row_mut(start + i).copy_from_slice(g.row(i));
                }
                vec![(*a, out)]
            }
            Op::Dropout(a, mask) => vec![(*a, g.hadamard(mask)?)],
            Op::SoftmaxXent {
                logits,
                targets,
                probs,
            } => {
                let (r, c) = probs.shape();
                let mut out = Tensor::zeros(r, c);
                for &(row, class) in targets {
                    for (o, p) in out.row_mut(row).iter_mut().zip(probs.row(row)) {
                        *o += gd[0] * p;
                    }
                    let cur = out.get(row, class);
                    out.set(row, class, cur - gd[0]);
                }
                vec![(*logits, out)]
            }
            Op::PairDot(a, b, pairs) => {
                let (x, y) = (val(*a), val(*b));
                let mut ga = Tensor::zeros(x.rows(), x.cols());
                let mut gb = Tensor::zeros(y.rows(), y.cols());
                for (k, &(i, j)) in pairs.iter().enumerate() {
                    let w = gd[k];
                    for (o, q) in ga.row_mut(i).iter_mut().zip(y.row(j)) {
                        *o += w * q;
                    }
                    for (o, p) in gb.row_mut(j).iter_mut().zip(x.row(i)) {
                        *o += w * p;
                    }
                }
                vec![(*a, ga), (*b, gb)]
            }
        })
    }
}
