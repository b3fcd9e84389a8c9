use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

/// Running statistics of one batch-norm layer. The affine `gamma`/`beta`
/// pair lives with the trainable parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: DEFAULT_MOMENTUM,
            eps: DEFAULT_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

/// `(batch, channels, inner)` view of a `[B, C]` or `[B, C, T]` tensor.
fn layout(shape: &[usize], channels: usize) -> Result<(usize, usize)> {
    match shape {
        [b, c] if *c == channels => Ok((*b, 1)),
        [b, c, t] if *c == channels => Ok((*b, *t)),
        _ => Err(Error::ShapeMismatch {
            op: "batchnorm",
            lhs: shape.to_vec(),
            rhs: vec![0, channels, 0],
        }),
    }
}

/// Per-channel batch normalization over `[B, C, T]` (or `[B, C]`).
///
/// Train mode normalizes with the biased batch statistics over `(B, T)` and
/// moves the running estimates by `momentum`; eval mode uses the running
/// estimates. `gamma`/`beta` are applied last.
pub fn batch_norm<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    gamma: Var,
    beta: Var,
    state: &mut BatchNormState,
    mode: Mode,
) -> Result<Var> {
    let channels = state.channels();
    let shape = tape.shape(x).to_vec();
    let (batch, inner) = layout(&shape, channels)?;
    for p in [gamma, beta] {
        if tape.shape(p) != [channels] {
            return Err(Error::ShapeMismatch {
                op: "batchnorm affine",
                lhs: tape.shape(p).to_vec(),
                rhs: vec![channels],
            });
        }
    }
    let count = batch * inner;
    if mode == Mode::Train && count < 2 {
        return Err(Error::InvalidArgument(format!(
            "batchnorm: train mode needs at least 2 values per channel, got {count}"
        )));
    }
    let xd = tape.value(x).data();
    let gd = tape.value(gamma).data();
    let bd = tape.value(beta).data();
    let eps = S::lit(state.eps);

    let (mean, var): (Vec<S>, Vec<S>) = match mode {
        Mode::Train => {
            let n = S::lit(count as f64);
            let mut mean = vec![S::zero(); channels];
            let mut var = vec![S::zero(); channels];
            for bi in 0..batch {
                for c in 0..channels {
                    let row = &xd[(bi * channels + c) * inner..][..inner];
                    mean[c] += row.iter().copied().sum::<S>();
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            for bi in 0..batch {
                for c in 0..channels {
                    let row = &xd[(bi * channels + c) * inner..][..inner];
                    var[c] += row.iter().map(|&v| (v - mean[c]) * (v - mean[c])).sum::<S>();
                }
            }
            var.iter_mut().for_each(|v| *v /= n);
            let m = state.momentum;
            for c in 0..channels {
                state.running_mean[c] = (1.0 - m) * state.running_mean[c] + m * mean[c].to_f64_lossy();
                state.running_var[c] = (1.0 - m) * state.running_var[c] + m * var[c].to_f64_lossy();
            }
            (mean, var)
        }
        Mode::Eval => (
            state.running_mean.iter().map(|&v| S::lit(v)).collect(),
            state.running_var.iter().map(|&v| S::lit(v)).collect(),
        ),
    };
    let inv_std: Vec<S> = var.iter().map(|&v| S::one() / (v + eps).sqrt()).collect();

    let mut xhat = vec![S::zero(); xd.len()];
    let mut out = vec![S::zero(); xd.len()];
    for bi in 0..batch {
        for c in 0..channels {
            let off = (bi * channels + c) * inner;
            for i in off..off + inner {
                let h = (xd[i] - mean[c]) * inv_std[c];
                xhat[i] = h;
                out[i] = gd[c] * h + bd[c];
            }
        }
    }
    let value = Tensor::from_parts(shape, out);
    Ok(tape.push_op("batchnorm", value, &[x, gamma, beta], move |inputs, _, g| {
        let gamma = inputs[1].data();
        let mut dgamma = vec![S::zero(); channels];
        let mut dbeta = vec![S::zero(); channels];
        for bi in 0..batch {
            for c in 0..channels {
                let off = (bi * channels + c) * inner;
                for i in off..off + inner {
                    dgamma[c] += g[i] * xhat[i];
                    dbeta[c] += g[i];
                }
            }
        }
        let mut dx = vec![S::zero(); g.len()];
        match mode {
            Mode::Train => {
                // dx = γ/σ · (g − mean(g) − x̂ · mean(g · x̂))
                let n = S::lit(count as f64);
                for bi in 0..batch {
                    for c in 0..channels {
                        let off = (bi * channels + c) * inner;
                        let k = gamma[c] * inv_std[c];
                        let mg = dbeta[c] / n;
                        let mgx = dgamma[c] / n;
                        for i in off..off + inner {
                            dx[i] = k * (g[i] - mg - xhat[i] * mgx);
                        }
                    }
                }
            }
            Mode::Eval => {
                for bi in 0..batch {
                    for c in 0..channels {
                        let off = (bi * channels + c) * inner;
                        let k = gamma[c] * inv_std[c];
                        for i in off..off + inner {
                            dx[i] = k * g[i];
                        }
                    }
                }
            }
        }
        vec![Some(dx), Some(dgamma), Some(dbeta)]
    }))
}
