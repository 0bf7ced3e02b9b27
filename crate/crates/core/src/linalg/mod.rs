//! Dense row-major tensors and CSR sparse matrices.
//!
//! All values are `f64`. Reductions run in ascending index order so results
//! are bit-reproducible, and every operation rejects non-finite output.

mod sparse;
mod tensor;

pub use sparse::SparseMatrix;
pub use tensor::{BinaryOp, Tensor, UnaryOp};

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` in the overflow-safe form `max(x, 0) + ln(1 + e^{-|x|})`.
pub fn softplus(x: f64) -> f64 {
    let m = if x > 0.0 { x } else { 0.0 };
    m + libm::log1p(libm::exp(-libm::fabs(x)))
}

/// Probability of the directed edge `i → j` given the outgoing embedding of
/// `i` and the incoming embedding of `j`.
pub fn edge_likelihood(s: &[f64], r: &[f64]) -> crate::Result<f64> {
    if s.len() != r.len() {
        return Err(crate::Error::Dimension {
            op: "edge_likelihood",
            left: (1, s.len()),
            right: (1, r.len()),
        });
    }
    let dot: f64 = s.iter().zip(r).map(|(a, b)| a * b).sum();
    Ok(sigmoid(dot))
}
