use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

const SIMPLEX_TOL: f64 = 1e-6;

/// Checks that every row of a `[B, K]` tensor is a probability vector.
pub fn check_soft_labels<S: Scalar>(labels: &Tensor<S>) -> Result<()> {
    if labels.rank() != 2 {
        return Err(Error::InvalidLabels(format!("expected [B, K], got {:?}", labels.shape())));
    }
    let k = labels.shape()[1];
    for (i, row) in labels.data().chunks_exact(k).enumerate() {
        let row: Vec<f64> = row.iter().map(|v| v.to_f64_lossy()).collect();
        if row.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidLabels(format!("row {i} has a negative or non-finite entry")));
        }
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidLabels(format!("row {i} sums to {total}")));
        }
    }
    Ok(())
}

pub fn one_hot<S: Scalar>(classes: &[usize], n_classes: usize) -> Tensor<S> {
    let mut data = vec![S::zero(); classes.len() * n_classes];
    for (i, &c) in classes.iter().enumerate() {
        data[i * n_classes + c] = S::one();
    }
    Tensor::from_parts(vec![classes.len(), n_classes], data)
}

/// Row-wise softmax of `[B, K]` logits.
pub fn softmax<S: Scalar>(logits: &Tensor<S>) -> Tensor<S> {
    let k = logits.shape()[1];
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks_exact(k) {
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        let exps: Vec<S> = row.iter().map(|&z| (z - max).exp()).collect();
        let total: S = exps.iter().copied().sum();
        out.extend(exps.into_iter().map(|e| e / total));
    }
    Tensor::from_parts(logits.shape().to_vec(), out)
}

/// Batch mean of `−Σ_k y_k · log softmax(z)_k` for soft label rows `y`.
pub fn softmax_cross_entropy<S: Scalar>(tape: &mut Tape<S>, logits: Var, labels: &Tensor<S>) -> Result<Var> {
    if tape.shape(logits) != labels.shape() || labels.rank() != 2 {
        return Err(Error::ShapeMismatch {
            op: "softmax_cross_entropy",
            lhs: tape.shape(logits).to_vec(),
            rhs: labels.shape().to_vec(),
        });
    }
    check_soft_labels(labels)?;
    let [batch, k] = labels.shape()[..] else { unreachable!() };
    let z = tape.value(logits).data();
    let mut probs = Vec::with_capacity(z.len());
    let mut total = S::zero();
    for (zr, yr) in z.chunks_exact(k).zip(labels.data().chunks_exact(k)) {
        let max = zr.iter().copied().fold(S::neg_infinity(), S::max);
        let sum_exp: S = zr.iter().map(|&v| (v - max).exp()).sum();
        let lse = max + sum_exp.ln();
        for (&zi, &yi) in zr.iter().zip(yr) {
            total += yi * (lse - zi);
            probs.push((zi - lse).exp());
        }
    }
    let n = S::lit(batch as f64);
    let value = Tensor::scalar(total / n);
    let labels = labels.data().to_vec();
    Ok(tape.push_op("softmax_cross_entropy", value, &[logits], move |_, _, g| {
        let scale = g[0] / n;
        // label rows sum to one, so d/dz = softmax(z) − y
        vec![Some(probs.iter().zip(&labels).map(|(&p, &y)| scale * (p - y)).collect())]
    }))
}
