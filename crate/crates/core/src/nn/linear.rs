use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Affine map `x · W + b` with `x: [B, F]`, `W: [F, O]`, `b: [O]`.
pub fn linear<S: Scalar>(tape: &mut Tape<S>, x: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
    let (xs, ws) = (tape.shape(x).to_vec(), tape.shape(weight).to_vec());
    let (&[batch, features], &[wf, outputs]) = (&xs[..], &ws[..]) else {
        return Err(Error::ShapeMismatch {
            op: "linear",
            lhs: xs,
            rhs: ws,
        });
    };
    if wf != features {
        return Err(Error::ShapeMismatch {
            op: "linear",
            lhs: xs,
            rhs: ws,
        });
    }
    if let Some(b) = bias {
        if tape.shape(b) != [outputs] {
            return Err(Error::ShapeMismatch {
                op: "linear bias",
                lhs: tape.shape(b).to_vec(),
                rhs: vec![outputs],
            });
        }
    }
    let mut out = vec![S::zero(); batch * outputs];
    if let Some(b) = bias {
        let bd = tape.value(b).data();
        out.chunks_exact_mut(outputs).for_each(|row| row.copy_from_slice(bd));
    }
    S::gemm(batch, features, outputs, tape.value(x).data(), false, tape.value(weight).data(), false, S::one(), &mut out);
    let value = Tensor::from_parts(vec![batch, outputs], out);
    let need_dx = tape.requires_grad(x);
    let mut inputs = vec![x, weight];
    inputs.extend(bias);
    Ok(tape.push_op("linear", value, &inputs, move |inputs, _, g| {
        let dx = need_dx.then(|| {
            let mut dx = vec![S::zero(); batch * features];
            S::gemm(batch, outputs, features, g, false, inputs[1].data(), true, S::zero(), &mut dx);
            dx
        });
        let mut dw = vec![S::zero(); features * outputs];
        S::gemm(features, batch, outputs, inputs[0].data(), true, g, false, S::zero(), &mut dw);
        let mut grads = vec![dx, Some(dw)];
        if inputs.len() == 3 {
            let mut db = vec![S::zero(); outputs];
            for row in g.chunks_exact(outputs) {
                db.iter_mut().zip(row).for_each(|(d, &r)| *d += r);
            }
            grads.push(Some(db));
        }
        grads
    }))
}
