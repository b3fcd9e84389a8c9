use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::Mode;
use crate::tensor::{Scalar, Tensor};

/// Exponential linear unit with unit scale: `x` for `x > 0`, `eˣ − 1`
/// otherwise.
pub fn elu<S: Scalar>(tape: &mut Tape<S>, x: Var) -> Var {
    let value = tape.value(x).map(|v| if v > S::zero() { v } else { v.exp_m1() });
    tape.push_op("elu", value, &[x], |inputs, out, g| {
        let grad = inputs[0]
            .data()
            .iter()
            .zip(out.data())
            .zip(g)
            .map(|((&xi, &yi), &gi)| if xi > S::zero() { gi } else { gi * (yi + S::one()) })
            .collect();
        vec![Some(grad)]
    })
}

/// Inverted dropout: in train mode each element is zeroed with probability
/// `p` and survivors are scaled by `1 / (1 − p)`. Eval mode and `p = 0`
/// return `x` unchanged.
pub fn dropout<S: Scalar, R: Rng + ?Sized>(tape: &mut Tape<S>, x: Var, p: f64, mode: Mode, rng: &mut R) -> Result<Var> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("dropout probability {p} outside [0, 1)")));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok(x);
    }
    let keep = S::lit(1.0 / (1.0 - p));
    let mask: Vec<S> = (0..tape.value(x).len())
        .map(|_| if rng.random::<f64>() < p { S::zero() } else { keep })
        .collect();
    dropout_with_mask(tape, x, Tensor::from_parts(tape.shape(x).to_vec(), mask))
}

/// Multiplies by a fixed (already scaled) mask.
pub fn dropout_with_mask<S: Scalar>(tape: &mut Tape<S>, x: Var, mask: Tensor<S>) -> Result<Var> {
    if tape.shape(x) != mask.shape() {
        return Err(Error::ShapeMismatch {
            op: "dropout",
            lhs: tape.shape(x).to_vec(),
            rhs: mask.shape().to_vec(),
        });
    }
    let data = tape.value(x).data().iter().zip(mask.data()).map(|(&a, &m)| a * m).collect();
    let value = Tensor::from_parts(mask.shape().to_vec(), data);
    Ok(tape.push_op("dropout", value, &[x], move |_, _, g| {
        vec![Some(g.iter().zip(mask.data()).map(|(&gi, &m)| gi * m).collect())]
    }))
}
