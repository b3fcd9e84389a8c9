//! Central finite-difference checks of the tape's analytic gradients, and a
//! catalog covering every layer and augmentation operation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::{make_reference, mix_features, mix_labels, mixstyle_transform, PairPermutation};
use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::nn::{self, BatchNormState, ConvSpec, Mode};
use crate::tensor::{Scalar, Tensor};

/// Step used by the high-precision catalog.
pub const DEFAULT_EPS: f64 = 1e-6;
/// Pass threshold on the max relative error in high-precision mode.
pub const TOLERANCE: f64 = 1e-4;
/// Random shapes tried per catalog entry.
pub const SHAPES_PER_OP: usize = 3;

/// Max over all input coordinates of
/// `|analytic − central| / max(1, |analytic|)`.
///
/// Any non-finite value along the way yields `f64::INFINITY`.
pub fn finite_diff_check_many<S, F>(f: F, inputs: &[Tensor<S>], eps: f64) -> Result<f64>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| tape.grad(v).unwrap_or_default().iter().map(|g| g.to_f64_lossy()).collect())
        .collect();

    let eval = |xs: &[Tensor<S>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item().to_f64_lossy())
    };

    let mut work = inputs.to_vec();
    let mut worst: f64 = 0.0;
    for (i, grads) in analytic.iter().enumerate() {
        if grads.len() != inputs[i].len() {
            return Ok(f64::INFINITY);
        }
        for (j, &a) in grads.iter().enumerate() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + S::lit(eps);
            let up = eval(&work)?;
            work[i].data_mut()[j] = orig - S::lit(eps);
            let down = eval(&work)?;
            work[i].data_mut()[j] = orig;
            // the step actually taken after rounding to S
            let h = (orig + S::lit(eps)).to_f64_lossy() - (orig - S::lit(eps)).to_f64_lossy();
            let central = (up - down) / h;
            let err = (a - central).abs() / a.abs().max(1.0);
            if !err.is_finite() {
                return Ok(f64::INFINITY);
            }
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

pub fn finite_diff_check<S, F>(f: F, x: &Tensor<S>, eps: f64) -> Result<f64>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, Var) -> Result<Var>,
{
    finite_diff_check_many(|tape, v| f(tape, v[0]), std::slice::from_ref(x), eps)
}

/// `sum(op(inputs) ⊙ R)` for a fixed random `R`, so every output coordinate
/// contributes with a distinct weight.
pub fn check_projected<F>(inputs: &[Tensor<f64>], rng: &mut ChaCha8Rng, op: F) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.constant(x.clone())).collect();
    let out = op(&mut tape, &vars)?;
    let r = uniform(rng, tape.shape(out), -1.0, 1.0);
    finite_diff_check_many(
        |tape, vars| {
            let y = op(tape, vars)?;
            let rv = tape.constant(r.clone());
            let p = tape.mul(y, rv)?;
            Ok(tape.sum_all(p))
        },
        inputs,
        DEFAULT_EPS,
    )
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product::<usize>().max(1);
    Tensor::from_parts(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect())
}

/// One catalog entry: draws a random shape and inputs from the rng and
/// returns the max relative error.
#[derive(Clone, Copy)]
pub struct GradCase {
    pub name: &'static str,
    pub check: fn(&mut ChaCha8Rng) -> Result<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradRow {
    pub op: &'static str,
    /// One entry per random shape.
    pub errors: Vec<f64>,
}

impl GradRow {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, |a, b| if b.is_nan() { f64::INFINITY } else { a.max(b) })
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.max_error() < tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub rows: Vec<GradRow>,
    pub tolerance: f64,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed(self.tolerance))
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.rows.iter().filter(|r| !r.passed(self.tolerance)).map(|r| r.op).collect()
    }
}

/// Runs every case at [`SHAPES_PER_OP`] random shapes. Each case draws from
/// its own stream of `seed`, so results do not depend on catalog order.
pub fn run_cases(cases: &[GradCase], seed: u64) -> Result<GradReport> {
    let mut rows = Vec::with_capacity(cases.len());
    for case in cases {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id(case.name));
        let errors = (0..SHAPES_PER_OP).map(|_| (case.check)(&mut rng)).collect::<Result<Vec<_>>>()?;
        rows.push(GradRow { op: case.name, errors });
    }
    Ok(GradReport {
        rows,
        tolerance: TOLERANCE,
    })
}

fn stream_id(name: &str) -> u64 {
    // FNV-1a
    name.bytes()
        .fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

fn dims3(rng: &mut ChaCha8Rng) -> [usize; 3] {
    [rng.random_range(2..5), rng.random_range(1..4), rng.random_range(4..10)]
}

fn perm_for(rng: &mut ChaCha8Rng, batch: usize) -> PairPermutation {
    make_reference(batch, rng).expect("batch is positive")
}

macro_rules! case {
    ($name:literal, $body:expr) => {
        GradCase {
            name: $name,
            check: $body,
        }
    };
}

/// Every differentiable operation used in training.
pub fn catalog() -> Vec<GradCase> {
    vec![
        case!("add", |rng| {
            let s = dims3(rng);
            let b = [1, s[1], 1];
            let inputs = [uniform(rng, &s, -1.0, 1.0), uniform(rng, &b, -1.0, 1.0)];
            check_projected(&inputs, rng, |t, v| t.add(v[0], v[1]))
        }),
        case!("sub", |rng| {
            let s = dims3(rng);
            let b = [s[0], s[1], 1];
            let inputs = [uniform(rng, &s, -1.0, 1.0), uniform(rng, &b, -1.0, 1.0)];
            check_projected(&inputs, rng, |t, v| t.sub(v[0], v[1]))
        }),
        case!("mul", |rng| {
            let s = dims3(rng);
            let inputs = [uniform(rng, &s, -1.0, 1.0), uniform(rng, &s, -1.0, 1.0)];
            check_projected(&inputs, rng, |t, v| t.mul(v[0], v[1]))
        }),
        case!("div", |rng| {
            let s = dims3(rng);
            let b = [s[0], 1, s[2]];
            let inputs = [uniform(rng, &s, -1.0, 1.0), uniform(rng, &b, 0.5, 2.0)];
            check_projected(&inputs, rng, |t, v| t.div(v[0], v[1]))
        }),
        case!("scale", |rng| {
            let s = dims3(rng);
            let k = rng.random_range(-2.0..2.0);
            check_projected(&[uniform(rng, &s, -1.0, 1.0)], rng, move |t, v| Ok(t.scale(v[0], k)))
        }),
        case!("add_scalar", |rng| {
            let s = dims3(rng);
            check_projected(&[uniform(rng, &s, -1.0, 1.0)], rng, |t, v| Ok(t.add_scalar(v[0], 0.75)))
        }),
        case!("square", |rng| {
            let s = dims3(rng);
            check_projected(&[uniform(rng, &s, -1.0, 1.0)], rng, |t, v| Ok(t.square(v[0])))
        }),
        case!("sqrt", |rng| {
            let s = dims3(rng);
            check_projected(&[uniform(rng, &s, 0.2, 2.0)], rng, |t, v| t.sqrt(v[0]))
        }),
        case!("exp", |rng| {
            let s = dims3(rng);
            check_projected(&[uniform(rng, &s, -1.0, 1.0)], rng, |t, v| Ok(t.exp(v[0])))
        }),
        case!("sum", |rng| {
            let s = dims3(rng);
            check_projected(&[uniform(rng, &s, -1.0, 1.0)], rng, |t, v| t.sum(v[0], &[0, 2], false))
        }),
        case!("mean", |rng| {
            let s = dims3(rng);
            check_projected(&[uniform(rng, &s, -1.0, 1.0)], rng, |t, v| t.mean(v[0], &[2], true))
        }),
        case!("var", |rng| {
            let s = dims3(rng);
            check_projected(&[uniform(rng, &s, -1.0, 1.0)], rng, |t, v| t.var(v[0], &[0, 2], true))
        }),
        case!("reshape", |rng| {
            let s = dims3(rng);
            check_projected(&[uniform(rng, &s, -1.0, 1.0)], rng, move |t, v| t.reshape(v[0], &[s[0] * s[1], s[2]]))
        }),
        case!("permute", |rng| {
            let s = dims3(rng);
            check_projected(&[uniform(rng, &s, -1.0, 1.0)], rng, |t, v| t.permute(v[0], &[2, 0, 1]))
        }),
        case!("index_select", |rng| {
            let s = dims3(rng);
            let idx: Vec<usize> = (0..s[0] + 1).map(|_| rng.random_range(0..s[0])).collect();
            check_projected(&[uniform(rng, &s, -1.0, 1.0)], rng, move |t, v| t.index_select(v[0], &idx))
        }),
        case!("conv1d", |rng| {
            let groups = rng.random_range(1..3);
            let cin = groups * rng.random_range(1..3);
            let cout = groups * rng.random_range(1..3);
            let k = rng.random_range(1..5);
            let spec = ConvSpec::new(cin, cout, k)
                .groups(groups)
                .stride(rng.random_range(1..3))
                .padding(rng.random_range(0..3));
            let t_len = rng.random_range(k.max(4)..10);
            let inputs = [
                uniform(rng, &[2, cin, t_len], -1.0, 1.0),
                uniform(rng, &spec.weight_shape(), -1.0, 1.0),
                uniform(rng, &[cout], -1.0, 1.0),
            ];
            check_projected(&inputs, rng, move |t, v| nn::conv1d(t, v[0], v[1], Some(v[2]), &spec))
        }),
        case!("batch_norm", |rng| {
            let s = dims3(rng);
            let c = s[1];
            let inputs = [
                uniform(rng, &s, -1.0, 1.0),
                uniform(rng, &[c], 0.5, 1.5),
                uniform(rng, &[c], -0.5, 0.5),
            ];
            check_projected(&inputs, rng, move |t, v| {
                let mut state = BatchNormState::new(c);
                nn::batch_norm(t, v[0], v[1], v[2], &mut state, Mode::Train)
            })
        }),
        case!("elu", |rng| {
            let s = dims3(rng);
            check_projected(&[uniform(rng, &s, -2.0, 2.0)], rng, |t, v| Ok(nn::elu(t, v[0])))
        }),
        case!("dropout", |rng| {
            let s = dims3(rng);
            let mask = Tensor::from_parts(
                s.to_vec(),
                (0..s.iter().product()).map(|_| if rng.random_bool(0.5) { 0.0 } else { 2.0 }).collect(),
            );
            check_projected(&[uniform(rng, &s, -1.0, 1.0)], rng, move |t, v| {
                nn::dropout_with_mask(t, v[0], mask.clone())
            })
        }),
        case!("avgpool1d", |rng| {
            let s = dims3(rng);
            let window = rng.random_range(1..=s[2].min(4));
            let stride = rng.random_range(1..=window);
            check_projected(&[uniform(rng, &s, -1.0, 1.0)], rng, move |t, v| {
                nn::avgpool1d(t, v[0], window, stride)
            })
        }),
        case!("global_avgpool", |rng| {
            let s = dims3(rng);
            check_projected(&[uniform(rng, &s, -1.0, 1.0)], rng, |t, v| nn::global_avgpool(t, v[0]))
        }),
        case!("linear", |rng| {
            let (b, f, o) = (rng.random_range(1..4), rng.random_range(1..6), rng.random_range(1..4));
            let inputs = [
                uniform(rng, &[b, f], -1.0, 1.0),
                uniform(rng, &[f, o], -1.0, 1.0),
                uniform(rng, &[o], -1.0, 1.0),
            ];
            check_projected(&inputs, rng, |t, v| nn::linear(t, v[0], v[1], Some(v[2])))
        }),
        case!("softmax_cross_entropy", |rng| {
            let (b, k) = (rng.random_range(1..5), rng.random_range(2..4));
            let raw = uniform(rng, &[b, k], 0.1, 1.0);
            let mut y = raw.clone();
            for row in y.data_mut().chunks_exact_mut(k) {
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= s);
            }
            let z = uniform(rng, &[b, k], -2.0, 2.0);
            finite_diff_check(move |t, v| nn::softmax_cross_entropy(t, v, &y), &z, DEFAULT_EPS)
        }),
        case!("mixup", |rng| {
            let s = dims3(rng);
            let lam = rng.random_range(0.0..1.0);
            let perm = perm_for(rng, s[0]);
            check_projected(&[uniform(rng, &s, -1.0, 1.0)], rng, move |t, v| mix_features(t, v[0], lam, &perm))
        }),
        case!("manifold_mixup", |rng| {
            // hidden features after a linear layer, mixed, then scored
            // against the mixed labels
            let (b, f) = (rng.random_range(2..5), rng.random_range(2..5));
            let lam = rng.random_range(0.0..1.0);
            let perm = perm_for(rng, b);
            let classes: Vec<usize> = (0..b).map(|_| rng.random_range(0..2)).collect();
            let y = mix_labels(&nn::one_hot::<f64>(&classes, 2), lam, &perm)?;
            let inputs = [uniform(rng, &[b, f], -1.0, 1.0), uniform(rng, &[f, 2], -1.0, 1.0)];
            finite_diff_check_many(
                move |t, v| {
                    let z = mix_features(t, v[0], lam, &perm)?;
                    let logits = nn::linear(t, z, v[1], None)?;
                    nn::softmax_cross_entropy(t, logits, &y)
                },
                &inputs,
                DEFAULT_EPS,
            )
        }),
        case!("mixstyle", |rng| {
            let s = dims3(rng);
            let s = [s[0], s[1], s[2].max(3)];
            let lam = rng.random_range(0.0..1.0);
            let perm = perm_for(rng, s[0]);
            check_projected(&[uniform(rng, &s, -1.0, 1.0)], rng, move |t, v| {
                mixstyle_transform(t, v[0], lam, &perm)
            })
        }),
        case!("conv_bn_elu_stack", |rng| {
            let (cin, cout) = (rng.random_range(1..4), rng.random_range(1..4));
            let spec = ConvSpec::new(cin, cout, 3).same();
            let inputs = [
                uniform(rng, &[3, cin, 8], -1.0, 1.0),
                uniform(rng, &spec.weight_shape(), -1.0, 1.0),
                uniform(rng, &[cout], 0.5, 1.5),
                uniform(rng, &[cout], -0.5, 0.5),
            ];
            check_projected(&inputs, rng, move |t, v| {
                let h = nn::conv1d(t, v[0], v[1], None, &spec)?;
                let mut state = BatchNormState::new(cout);
                let h = nn::batch_norm(t, h, v[2], v[3], &mut state, Mode::Train)?;
                Ok(nn::elu(t, h))
            })
        }),
    ]
}

/// A squaring op whose backward rule is off by a factor, for exercising the
/// failure path.
pub fn corrupted_case() -> GradCase {
    case!("corrupted_square", |rng| {
        let s = dims3(rng);
        check_projected(&[uniform(rng, &s, -1.0, 1.0)], rng, |t, v| {
            let value = t.value(v[0]).map(|x| x * x);
            Ok(t.push_op("corrupted_square", value, &[v[0]], |inputs, _, g| {
                vec![Some(inputs[0].data().iter().zip(g).map(|(&x, &gi)| 3.0 * x * gi).collect())]
            }))
        })
    })
}
