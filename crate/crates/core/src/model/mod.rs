//! Model zoo: EEGNet and 1D residual networks built as ordered stages with
//! named tap points, where feature-space hooks may rewrite the activations
//! (and, for at most one hook per pass, the soft labels).

mod config;
mod eegnet;
mod resnet;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{self, BatchNormState, ConvSpec, Mode};
use crate::tensor::{Scalar, Tensor};

pub use config::{Arch, ModelConfig, EEGNET_DROPOUT, RESNET_DROPOUT};
pub use eegnet::{eegnet_min_timesteps, EEGNET_POOL1, EEGNET_POOL2, EEGNET_SEPARABLE_KERNEL, EEGNET_TEMPORAL_KERNEL};
pub use resnet::{ResnetPlan, RESNET18_PLAN, RESNET8_PLAN};

/// Name of the pseudo tap point in front of the first stage.
pub const INPUT_TAP: &str = "input";

#[derive(Debug, Clone, PartialEq)]
pub struct Param<S> {
    pub name: String,
    pub value: Tensor<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv {
        spec: ConvSpec,
        weight: usize,
        bias: Option<usize>,
    },
    BatchNorm {
        gamma: usize,
        beta: usize,
        state: usize,
    },
    Elu,
    Dropout(f64),
    AvgPool {
        window: usize,
        stride: usize,
    },
    GlobalAvgPool,
    Flatten,
    Linear {
        weight: usize,
        bias: Option<usize>,
    },
    /// `[B, C, T] → [B·C, 1, T]`: every electrode becomes its own sample so a
    /// temporal filter bank is shared across electrodes.
    SplitChannels,
    /// `[B·C, F, T] → [B, F·C, T]`, output channel `f·C + c`.
    MergeFilters { channels: usize },
    /// `elu(main(x) + skip(x))`; an empty `skip` is the identity.
    Residual { main: Vec<Layer>, skip: Vec<Layer> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub tap: String,
    pub layers: Vec<Layer>,
}

/// A feature-space transformation run at a named tap point during forward.
pub trait TapHook<S: Scalar> {
    fn tap(&self) -> &str;

    /// Whether the hook rewrites the soft labels.
    fn replaces_labels(&self) -> bool {
        false
    }

    fn apply(&mut self, tape: &mut Tape<S>, features: Var, labels: Option<&mut Tensor<S>>) -> Result<Var>;
}

/// Passes features through untouched.
#[derive(Debug, Clone)]
pub struct IdentityHook(pub String);

impl<S: Scalar> TapHook<S> for IdentityHook {
    fn tap(&self) -> &str {
        &self.0
    }

    fn apply(&mut self, _: &mut Tape<S>, features: Var, _: Option<&mut Tensor<S>>) -> Result<Var> {
        Ok(features)
    }
}

pub struct ForwardOutput<S> {
    pub logits: Var,
    pub labels: Option<Tensor<S>>,
}

#[derive(Debug, Clone)]
pub struct Model<S> {
    config: ModelConfig,
    params: Vec<Param<S>>,
    norms: Vec<BatchNormState>,
    stages: Vec<Stage>,
    head: Vec<Layer>,
    mode: Mode,
}

impl<S: Scalar> Model<S> {
    /// Builds the architecture named by `config` with freshly initialized
    /// parameters.
    pub fn new(config: &ModelConfig, rng: &mut dyn RngCore) -> Result<Self> {
        config.validate()?;
        match config.arch {
            Arch::Eegnet => eegnet::build(config, rng),
            Arch::Resnet1d => resnet::build(config, rng),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn params(&self) -> &[Param<S>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<S>] {
        &mut self.params
    }

    pub fn norms(&self) -> &[BatchNormState] {
        &self.norms
    }

    pub fn norms_mut(&mut self) -> &mut [BatchNormState] {
        &mut self.norms
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn head(&self) -> &[Layer] {
        &self.head
    }

    pub fn tap_names(&self) -> Vec<String> {
        self.stages.iter().map(|s| s.tap.clone()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Places every parameter on `tape`, trainable or constant.
    pub fn bind(&self, tape: &mut Tape<S>, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| tape.leaf(p.value.clone(), trainable))
            .collect()
    }

    /// Runs the network on `x: [B, C, T]` with `params` from [`Model::bind`].
    ///
    /// Hooks fire in stage order at their tap (the `input` tap first);
    /// hooks sharing a tap fire in the order given.
    pub fn forward(
        &mut self,
        tape: &mut Tape<S>,
        params: &[Var],
        x: Var,
        hooks: &mut [&mut dyn TapHook<S>],
        labels: Option<Tensor<S>>,
        rng: &mut dyn RngCore,
    ) -> Result<ForwardOutput<S>> {
        let taps = self.tap_names();
        let mut label_hooks = 0;
        for hook in hooks.iter() {
            if hook.tap() != INPUT_TAP && !taps.iter().any(|t| t == hook.tap()) {
                let mut available = vec![INPUT_TAP.to_string()];
                available.extend(taps.iter().cloned());
                return Err(Error::UnknownTap {
                    name: hook.tap().to_string(),
                    available,
                });
            }
            label_hooks += hook.replaces_labels() as usize;
        }
        if label_hooks > 1 {
            return Err(Error::MultipleLabelHooks);
        }
        let shape = tape.shape(x).to_vec();
        if shape.len() != 3 || shape[1] != self.config.in_channels {
            return Err(Error::ShapeMismatch {
                op: "model input",
                lhs: shape,
                rhs: vec![0, self.config.in_channels, self.config.in_timesteps],
            });
        }

        let mut labels = labels;
        let mut h = run_hooks(tape, INPUT_TAP, x, hooks, &mut labels)?;
        let mut ctx = Ctx {
            tape,
            params,
            norms: &mut self.norms,
            mode: self.mode,
            rng,
        };
        for stage in &self.stages {
            for layer in &stage.layers {
                h = ctx.layer(layer, h)?;
            }
            h = run_hooks(ctx.tape, &stage.tap, h, hooks, &mut labels)?;
        }
        for layer in &self.head {
            h = ctx.layer(layer, h)?;
        }
        Ok(ForwardOutput { logits: h, labels })
    }

    /// Eval-mode logits for a batch, without recording gradients.
    pub fn predict(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let previous = self.mode;
        self.mode = Mode::Eval;
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        // eval mode never draws from the rng
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.forward(&mut tape, &params, xv, &mut [], None, &mut rng);
        self.mode = previous;
        Ok(tape.value(out?.logits).clone())
    }
}

fn run_hooks<S: Scalar>(
    tape: &mut Tape<S>,
    tap: &str,
    mut h: Var,
    hooks: &mut [&mut dyn TapHook<S>],
    labels: &mut Option<Tensor<S>>,
) -> Result<Var> {
    for hook in hooks.iter_mut().filter(|hk| hk.tap() == tap) {
        let before = tape.shape(h).to_vec();
        h = hook.apply(tape, h, labels.as_mut())?;
        if tape.shape(h) != before.as_slice() {
            return Err(Error::ShapeMismatch {
                op: "tap hook",
                lhs: before,
                rhs: tape.shape(h).to_vec(),
            });
        }
    }
    Ok(h)
}

struct Ctx<'a, S: Scalar> {
    tape: &'a mut Tape<S>,
    params: &'a [Var],
    norms: &'a mut [BatchNormState],
    mode: Mode,
    rng: &'a mut dyn RngCore,
}

impl<S: Scalar> Ctx<'_, S> {
    fn layer(&mut self, layer: &Layer, x: Var) -> Result<Var> {
        let p = self.params;
        match layer {
            Layer::Conv { spec, weight, bias } => nn::conv1d(self.tape, x, p[*weight], bias.map(|b| p[b]), spec),
            Layer::BatchNorm { gamma, beta, state } => {
                nn::batch_norm(self.tape, x, p[*gamma], p[*beta], &mut self.norms[*state], self.mode)
            }
            Layer::Elu => Ok(nn::elu(self.tape, x)),
            Layer::Dropout(prob) => nn::dropout(self.tape, x, *prob, self.mode, &mut *self.rng),
            Layer::AvgPool { window, stride } => nn::avgpool1d(self.tape, x, *window, *stride),
            Layer::GlobalAvgPool => nn::global_avgpool(self.tape, x),
            Layer::Flatten => {
                let shape = self.tape.shape(x).to_vec();
                let rest: usize = shape[1..].iter().product();
                self.tape.reshape(x, &[shape[0], rest])
            }
            Layer::Linear { weight, bias } => nn::linear(self.tape, x, p[*weight], bias.map(|b| p[b])),
            Layer::SplitChannels => {
                let s = self.tape.shape(x).to_vec();
                self.tape.reshape(x, &[s[0] * s[1], 1, s[2]])
            }
            Layer::MergeFilters { channels } => {
                let s = self.tape.shape(x).to_vec();
                let (bc, f, t) = (s[0], s[1], s[2]);
                let b = bc / channels;
                let h = self.tape.reshape(x, &[b, *channels, f, t])?;
                let h = self.tape.permute(h, &[0, 2, 1, 3])?;
                self.tape.reshape(h, &[b, f * channels, t])
            }
            Layer::Residual { main, skip } => {
                let mut m = x;
                for l in main {
                    m = self.layer(l, m)?;
                }
                let mut s = x;
                for l in skip {
                    s = self.layer(l, s)?;
                }
                let sum = self.tape.add(m, s)?;
                Ok(nn::elu(self.tape, sum))
            }
        }
    }
}

/// Allocates parameters and normalization state while a model is laid out.
pub struct ModelBuilder<'r, S> {
    params: Vec<Param<S>>,
    norms: Vec<BatchNormState>,
    rng: &'r mut dyn RngCore,
}

impl<'r, S: Scalar> ModelBuilder<'r, S> {
    pub fn new(rng: &'r mut dyn RngCore) -> Self {
        ModelBuilder {
            params: Vec::new(),
            norms: Vec::new(),
            rng,
        }
    }

    fn uniform(&mut self, name: String, shape: Vec<usize>, bound: f64) -> usize {
        let n = shape.iter().product();
        let data = (0..n).map(|_| S::lit(self.rng.random_range(-bound..bound))).collect();
        self.push(name, Tensor::from_parts(shape, data))
    }

    fn push(&mut self, name: String, value: Tensor<S>) -> usize {
        self.params.push(Param { name, value });
        self.params.len() - 1
    }

    /// Convolution with weights and bias drawn from `U(±1/√fan_in)`.
    pub fn conv(&mut self, name: &str, spec: ConvSpec, bias: bool) -> Layer {
        let fan_in = spec.in_channels / spec.groups * spec.kernel_size;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = self.uniform(format!("{name}.weight"), spec.weight_shape().to_vec(), bound);
        let bias = bias.then(|| self.uniform(format!("{name}.bias"), vec![spec.out_channels], bound));
        Layer::Conv { spec, weight, bias }
    }

    pub fn batch_norm(&mut self, name: &str, channels: usize) -> Layer {
        let gamma = self.push(format!("{name}.gamma"), Tensor::full(vec![channels], S::one()));
        let beta = self.push(format!("{name}.beta"), Tensor::zeros(vec![channels]));
        self.norms.push(BatchNormState::new(channels));
        Layer::BatchNorm {
            gamma,
            beta,
            state: self.norms.len() - 1,
        }
    }

    pub fn linear(&mut self, name: &str, inputs: usize, outputs: usize, bias: bool) -> Layer {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weight = self.uniform(format!("{name}.weight"), vec![inputs, outputs], bound);
        let bias = bias.then(|| self.uniform(format!("{name}.bias"), vec![outputs], bound));
        Layer::Linear { weight, bias }
    }

    pub fn finish(self, config: ModelConfig, stages: Vec<Stage>, head: Vec<Layer>) -> Model<S> {
        Model {
            config,
            params: self.params,
            norms: self.norms,
            stages,
            head,
            mode: Mode::Train,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lone_linear_layer_parameter_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut b = ModelBuilder::<f32>::new(&mut rng);
        let head = vec![b.linear("fc", 10, 2, true)];
        let model = b.finish(ModelConfig::resnet1d(8), Vec::new(), head);
        assert_eq!(model.param_count(), 22);
    }

    #[test]
    fn unknown_tap_and_double_label_hooks_are_rejected() {
        struct LabelHook(&'static str);
        impl TapHook<f64> for LabelHook {
            fn tap(&self) -> &str {
                self.0
            }
            fn replaces_labels(&self) -> bool {
                true
            }
            fn apply(&mut self, _: &mut Tape<f64>, f: Var, _: Option<&mut Tensor<f64>>) -> Result<Var> {
                Ok(f)
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = ModelConfig::resnet1d(8).with_input(2, 16);
        let mut model = Model::<f64>::new(&cfg, &mut rng).unwrap();
        let mut tape = Tape::new();
        let params = model.bind(&mut tape, true);
        let x = tape.constant(Tensor::zeros(vec![2, 2, 16]));

        let mut bogus = IdentityHook("block9".into());
        let err = model.forward(&mut tape, &params, x, &mut [&mut bogus], None, &mut rng);
        assert!(matches!(err, Err(Error::UnknownTap { .. })));

        let (mut a, mut b) = (LabelHook("block1"), LabelHook("block2"));
        let err = model.forward(&mut tape, &params, x, &mut [&mut a, &mut b], None, &mut rng);
        assert!(matches!(err, Err(Error::MultipleLabelHooks)));
    }
}
