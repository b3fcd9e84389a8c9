use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub fn avgpool_output_len(len: usize, window: usize, stride: usize) -> Result<usize> {
    if window == 0 || stride == 0 {
        return Err(Error::InvalidArgument("avgpool1d: window and stride must be positive".into()));
    }
    if window > len {
        return Err(Error::InvalidShape {
            op: "avgpool1d",
            reason: format!("window {window} exceeds length {len}"),
        });
    }
    Ok((len - window) / stride + 1)
}

/// Mean over sliding windows of the last axis of a `[B, C, T]` tensor.
pub fn avgpool1d<S: Scalar>(tape: &mut Tape<S>, x: Var, window: usize, stride: usize) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    let [batch, channels, len] = shape[..] else {
        return Err(Error::InvalidShape {
            op: "avgpool1d",
            reason: format!("expected [B, C, T], got {shape:?}"),
        });
    };
    let out_len = avgpool_output_len(len, window, stride)?;
    let w = S::lit(window as f64);
    let xd = tape.value(x).data();
    let mut out = Vec::with_capacity(batch * channels * out_len);
    for row in xd.chunks_exact(len) {
        for t in 0..out_len {
            let s = t * stride;
            out.push(row[s..s + window].iter().copied().sum::<S>() / w);
        }
    }
    let value = Tensor::from_parts(vec![batch, channels, out_len], out);
    Ok(tape.push_op("avgpool1d", value, &[x], move |_, _, g| {
        let mut dx = vec![S::zero(); batch * channels * len];
        for (drow, grow) in dx.chunks_exact_mut(len).zip(g.chunks_exact(out_len)) {
            for (t, &gt) in grow.iter().enumerate() {
                let share = gt / w;
                drow[t * stride..t * stride + window].iter_mut().for_each(|d| *d += share);
            }
        }
        vec![Some(dx)]
    }))
}

/// Mean over the time axis, `[B, C, T] → [B, C]`.
pub fn global_avgpool<S: Scalar>(tape: &mut Tape<S>, x: Var) -> Result<Var> {
    if tape.value(x).rank() != 3 {
        return Err(Error::InvalidShape {
            op: "global_avgpool",
            reason: format!("expected [B, C, T], got {:?}", tape.shape(x)),
        });
    }
    tape.mean(x, &[2], false)
}
