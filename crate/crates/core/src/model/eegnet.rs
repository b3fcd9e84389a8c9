//! EEGNet-F1,D for `[B, C, T]` trials sampled at 128 Hz.
//!
//! ```text
//! block1  temporal conv (K=64, F1 filters shared by all electrodes) → BN
//! block2  depthwise spatial conv over all C electrodes (D per filter) → BN → ELU → avgpool 4 → dropout
//! block3  separable conv (depthwise K=16, pointwise) → BN → ELU → avgpool 8 → dropout
//! head    flatten → linear
//! ```

use rand::RngCore;

use super::{Layer, Model, ModelBuilder, ModelConfig, Stage};
use crate::error::{Error, Result};
use crate::nn::{avgpool_output_len, ConvSpec};
use crate::tensor::Scalar;

/// Half the 128 Hz sampling rate.
pub const EEGNET_TEMPORAL_KERNEL: usize = 64;
pub const EEGNET_SEPARABLE_KERNEL: usize = 16;
pub const EEGNET_POOL1: usize = 4;
pub const EEGNET_POOL2: usize = 8;

fn temporal_spec() -> ConvSpec {
    ConvSpec::new(1, 1, EEGNET_TEMPORAL_KERNEL).padding(EEGNET_TEMPORAL_KERNEL / 2)
}

fn separable_spec(channels: usize) -> ConvSpec {
    ConvSpec::new(channels, channels, EEGNET_SEPARABLE_KERNEL)
        .padding(EEGNET_SEPARABLE_KERNEL / 2)
        .groups(channels)
}

/// Time extent entering the classifier head, or `None` when the pooling
/// chain does not fit.
fn head_len(timesteps: usize) -> Option<usize> {
    let t = temporal_spec().output_len(timesteps).ok()?;
    let t = avgpool_output_len(t, EEGNET_POOL1, EEGNET_POOL1).ok()?;
    let t = separable_spec(1).output_len(t).ok()?;
    avgpool_output_len(t, EEGNET_POOL2, EEGNET_POOL2).ok()
}

/// Shortest input accepted: long enough for the temporal kernel and for the
/// whole pooling chain.
pub fn eegnet_min_timesteps() -> usize {
    (EEGNET_TEMPORAL_KERNEL..)
        .find(|&t| head_len(t).is_some())
        .expect("some length fits")
}

pub(super) fn build<S: Scalar>(cfg: &ModelConfig, rng: &mut dyn RngCore) -> Result<Model<S>> {
    let (c, f1, d) = (cfg.in_channels, cfg.temporal_filters, cfg.depth_multiplier);
    let Some(t_head) = head_len(cfg.in_timesteps).filter(|_| cfg.in_timesteps >= EEGNET_TEMPORAL_KERNEL) else {
        return Err(Error::InputTooShort {
            minimum: eegnet_min_timesteps(),
            got: cfg.in_timesteps,
        });
    };
    let f2 = f1 * d;
    let p = cfg.dropout_p();
    let mut b = ModelBuilder::new(rng);

    let mut temporal = temporal_spec();
    temporal.out_channels = f1;
    let block1 = vec![
        Layer::SplitChannels,
        b.conv("block1.temporal", temporal, false),
        b.batch_norm("block1.bn", f1),
        Layer::MergeFilters { channels: c },
    ];

    let spatial = ConvSpec::new(f1 * c, f2, 1).groups(f1);
    let block2 = vec![
        b.conv("block2.spatial", spatial, false),
        b.batch_norm("block2.bn", f2),
        Layer::Elu,
        Layer::AvgPool {
            window: EEGNET_POOL1,
            stride: EEGNET_POOL1,
        },
        Layer::Dropout(p),
    ];

    let block3 = vec![
        b.conv("block3.depthwise", separable_spec(f2), false),
        b.conv("block3.pointwise", ConvSpec::new(f2, f2, 1), false),
        b.batch_norm("block3.bn", f2),
        Layer::Elu,
        Layer::AvgPool {
            window: EEGNET_POOL2,
            stride: EEGNET_POOL2,
        },
        Layer::Dropout(p),
    ];

    let head = vec![Layer::Flatten, b.linear("head", f2 * t_head, cfg.n_classes, true)];
    let stages = [block1, block2, block3]
        .into_iter()
        .enumerate()
        .map(|(i, layers)| Stage {
            tap: format!("block{}", i + 1),
            layers,
        })
        .collect();
    Ok(b.finish(cfg.clone(), stages, head))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::autodiff::Tape;
    use crate::tensor::Tensor;

    #[test]
    fn spatial_stage_has_f1_times_d_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = Model::<f32>::new(&ModelConfig::eegnet(4, 2), &mut rng).unwrap();
        let Layer::Conv { spec, .. } = &model.stages()[1].layers[0] else {
            panic!("block2 starts with the spatial conv")
        };
        assert_eq!(spec.out_channels, 8);
        assert_eq!(spec.in_channels, 4 * 32);
    }

    #[test]
    fn corpus_geometry_gives_two_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = Model::<f32>::new(&ModelConfig::eegnet(4, 2), &mut rng).unwrap();
        let logits = model.predict(&Tensor::zeros(vec![2, 32, 384])).unwrap();
        assert_eq!(logits.shape(), &[2, 2]);
    }

    #[test]
    fn short_inputs_report_the_minimum() {
        let min = eegnet_min_timesteps();
        assert!(min >= EEGNET_TEMPORAL_KERNEL);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = ModelConfig::eegnet(4, 2).with_input(4, min - 1);
        match Model::<f32>::new(&cfg, &mut rng) {
            Err(Error::InputTooShort { minimum, got }) => assert_eq!((minimum, got), (min, min - 1)),
            other => panic!("expected InputTooShort, got {:?}", other.map(|_| ())),
        }
        let cfg = ModelConfig::eegnet(4, 2).with_input(4, min);
        assert!(Model::<f32>::new(&cfg, &mut rng).is_ok());
    }

    #[test]
    fn taps_carry_batch_leading_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = ModelConfig::eegnet(2, 2).with_input(3, 64);
        let mut model = Model::<f64>::new(&cfg, &mut rng).unwrap();
        let mut tape = Tape::new();
        let params = model.bind(&mut tape, false);
        let x = tape.constant(Tensor::full(vec![2, 3, 64], 0.5));

        struct Probe(String, Vec<Vec<usize>>);
        impl crate::model::TapHook<f64> for Probe {
            fn tap(&self) -> &str {
                &self.0
            }
            fn apply(&mut self, tape: &mut Tape<f64>, f: crate::Var, _: Option<&mut Tensor<f64>>) -> Result<crate::Var> {
                self.1.push(tape.shape(f).to_vec());
                Ok(f)
            }
        }
        let mut probes: Vec<Probe> = model.tap_names().into_iter().map(|t| Probe(t, Vec::new())).collect();
        let mut hooks: Vec<&mut dyn crate::model::TapHook<f64>> =
            probes.iter_mut().map(|p| p as &mut dyn crate::model::TapHook<f64>).collect();
        model.forward(&mut tape, &params, x, &mut hooks, None, &mut rng).unwrap();
        assert_eq!(probes[0].1, vec![vec![2, 6, 65]]);
        assert_eq!(probes[1].1, vec![vec![2, 4, 16]]);
        assert_eq!(probes[2].1, vec![vec![2, 4, 2]]);
    }
}
