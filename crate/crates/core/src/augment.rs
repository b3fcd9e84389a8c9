//! Batch mixing augmentations: Mixup on raw trials, Manifold Mixup on hidden
//! features, and MixStyle on per-instance feature statistics.
//!
//! All feature transformations are recorded on the tape, so gradients flow
//! through the mixed statistics as well as the features.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::model::{TapHook, INPUT_TAP};
use crate::nn::{check_soft_labels, Mode};
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_P_ACTIVE: f64 = 0.5;
/// Added to the variance before the square root in MixStyle statistics.
pub const STATS_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    None,
    Mixup,
    ManifoldMixup,
    MixStyle,
}

impl Method {
    /// Methods that act at hidden tap points and need a placement.
    pub fn is_manifold_level(self) -> bool {
        matches!(self, Method::ManifoldMixup | Method::MixStyle)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Mixup => "mixup",
            Method::ManifoldMixup => "manifold_mixup",
            Method::MixStyle => "mixstyle",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "none" | "baseline" => Ok(Method::None),
            "mixup" => Ok(Method::Mixup),
            "manifold_mixup" => Ok(Method::ManifoldMixup),
            "mixstyle" => Ok(Method::MixStyle),
            _ => Err(Error::InvalidArgument(format!(
                "unknown method `{s}` (expected none, mixup, manifold-mixup or mixstyle)"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixParams {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_p_active")]
    pub p_active: f64,
    #[serde(default)]
    pub placement: Vec<String>,
    #[serde(default = "default_method")]
    pub method: Method,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_p_active() -> f64 {
    DEFAULT_P_ACTIVE
}
fn default_method() -> Method {
    Method::None
}

impl Default for MixParams {
    fn default() -> Self {
        MixParams {
            alpha: DEFAULT_ALPHA,
            p_active: DEFAULT_P_ACTIVE,
            placement: Vec::new(),
            method: Method::None,
        }
    }
}

impl MixParams {
    pub fn new(method: Method, placement: &[&str]) -> Self {
        MixParams {
            method,
            placement: placement.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.p_active) {
            return Err(Error::InvalidArgument(format!(
                "p_active must lie in [0, 1], got {}",
                self.p_active
            )));
        }
        if self.method.is_manifold_level() && self.placement.is_empty() {
            return Err(Error::InvalidArgument(format!("{} needs a non-empty placement", self.method)));
        }
        Ok(())
    }
}

/// Draws λ ~ Beta(α, α), kept strictly inside (0, 1).
pub fn sample_lambda<R: Rng + ?Sized>(params: &MixParams, rng: &mut R) -> Result<f64> {
    let beta = Beta::new(params.alpha, params.alpha)
        .map_err(|e| Error::InvalidArgument(format!("alpha {}: {e}", params.alpha)))?;
    let lam: f64 = beta.sample(rng);
    // small α puts mass so close to the endpoints that draws can round onto them
    Ok(lam.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))
}

/// A permutation of batch positions; `perm[i]` is the partner of sample `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PairPermutation(Vec<usize>);

impl PairPermutation {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidArgument(format!("{perm:?} is not a permutation")));
            }
        }
        Ok(PairPermutation(perm))
    }

    pub fn identity(n: usize) -> Self {
        PairPermutation((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// `(self ∘ other)[i] = self[other[i]]`.
    pub fn compose(&self, other: &Self) -> Self {
        PairPermutation(other.0.iter().map(|&i| self.0[i]).collect())
    }
}

/// Uniformly random reference order for a batch.
pub fn make_reference<R: Rng + ?Sized>(batch_size: usize, rng: &mut R) -> Result<PairPermutation> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    let mut perm: Vec<usize> = (0..batch_size).collect();
    perm.shuffle(rng);
    Ok(PairPermutation(perm))
}

fn check_lambda(lam: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lam) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("lambda {lam} outside [0, 1]")))
    }
}

fn check_batch(op: &str, batch: usize, perm: &PairPermutation) -> Result<()> {
    if batch != perm.len() {
        return Err(Error::InvalidArgument(format!(
            "{op}: batch of {batch} with a permutation of {}",
            perm.len()
        )));
    }
    Ok(())
}

fn mix_tensor<S: Scalar>(a: &Tensor<S>, lam: f64, perm: &PairPermutation) -> Tensor<S> {
    let other = a.select_rows(perm.as_slice());
    let (l, r) = (S::lit(lam), S::lit(1.0 - lam));
    let data = a.data().iter().zip(other.data()).map(|(&x, &y)| l * x + r * y).collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

/// `λ·y + (1−λ)·y[perm]` for soft label rows.
pub fn mix_labels<S: Scalar>(y: &Tensor<S>, lam: f64, perm: &PairPermutation) -> Result<Tensor<S>> {
    check_lambda(lam)?;
    check_soft_labels(y)?;
    check_batch("mix_labels", y.shape()[0], perm)?;
    Ok(mix_tensor(y, lam, perm))
}

/// Mixup of raw trials and their soft labels.
pub fn mixup_raw<S: Scalar>(
    x: &Tensor<S>,
    y: &Tensor<S>,
    lam: f64,
    perm: &PairPermutation,
) -> Result<(Tensor<S>, Tensor<S>)> {
    let y_mix = mix_labels(y, lam, perm)?;
    if x.shape().first() != y.shape().first() {
        return Err(Error::ShapeMismatch {
            op: "mixup",
            lhs: x.shape().to_vec(),
            rhs: y.shape().to_vec(),
        });
    }
    Ok((mix_tensor(x, lam, perm), y_mix))
}

/// `λ·z + (1−λ)·z[perm]` on the tape.
pub fn mix_features<S: Scalar>(tape: &mut Tape<S>, z: Var, lam: f64, perm: &PairPermutation) -> Result<Var> {
    check_lambda(lam)?;
    check_batch("mix_features", tape.shape(z)[0], perm)?;
    let partner = tape.index_select(z, perm.as_slice())?;
    let a = tape.scale(z, S::lit(lam));
    let b = tape.scale(partner, S::lit(1.0 - lam));
    tape.add(a, b)
}

/// Manifold Mixup of hidden features `z` and labels `y`.
pub fn manifold_mixup<S: Scalar>(
    tape: &mut Tape<S>,
    z: Var,
    y: &Tensor<S>,
    lam: f64,
    perm: &PairPermutation,
) -> Result<(Var, Tensor<S>)> {
    let y_mix = mix_labels(y, lam, perm)?;
    if tape.shape(z)[0] != y.shape()[0] {
        return Err(Error::ShapeMismatch {
            op: "manifold_mixup",
            lhs: tape.shape(z).to_vec(),
            rhs: y.shape().to_vec(),
        });
    }
    Ok((mix_features(tape, z, lam, perm)?, y_mix))
}

/// Per-sample per-channel statistics over the time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceStats {
    /// `[B, C]`
    pub mu: Vec<f64>,
    /// `[B, C]`, `sqrt(population variance + eps)`
    pub sigma: Vec<f64>,
    pub batch: usize,
    pub channels: usize,
    pub eps: f64,
}

pub fn instance_stats<S: Scalar>(x: &Tensor<S>, eps: f64) -> Result<InstanceStats> {
    let &[batch, channels, t] = x.shape() else {
        return Err(Error::InvalidShape {
            op: "instance_stats",
            reason: format!("expected [B, C, T], got {:?}", x.shape()),
        });
    };
    let mut mu = Vec::with_capacity(batch * channels);
    let mut sigma = Vec::with_capacity(batch * channels);
    for row in x.data().chunks_exact(t) {
        let n = t as f64;
        let m = row.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / n;
        let var = row.iter().map(|v| (v.to_f64_lossy() - m).powi(2)).sum::<f64>() / n;
        mu.push(m);
        sigma.push((var + eps).sqrt());
    }
    Ok(InstanceStats {
        mu,
        sigma,
        batch,
        channels,
        eps,
    })
}

/// MixStyle with a fixed λ and partner order: every sample is normalized by
/// its own statistics and re-styled with the mixture of its own and its
/// partner's statistics.
pub fn mixstyle_transform<S: Scalar>(tape: &mut Tape<S>, x: Var, lam: f64, perm: &PairPermutation) -> Result<Var> {
    check_lambda(lam)?;
    if tape.shape(x).len() != 3 {
        return Err(Error::InvalidShape {
            op: "mixstyle",
            reason: format!("expected [B, C, T], got {:?}", tape.shape(x)),
        });
    }
    check_batch("mixstyle", tape.shape(x)[0], perm)?;
    let mu = tape.mean(x, &[2], true)?;
    let var = tape.var(x, &[2], true)?;
    let var = tape.add_scalar(var, S::lit(STATS_EPS));
    let sigma = tape.sqrt(var)?;
    let centered = tape.sub(x, mu)?;
    let normed = tape.div(centered, sigma)?;

    let mu_p = tape.index_select(mu, perm.as_slice())?;
    let sigma_p = tape.index_select(sigma, perm.as_slice())?;
    let (l, r) = (S::lit(lam), S::lit(1.0 - lam));
    let g0 = tape.scale(sigma, l);
    let g1 = tape.scale(sigma_p, r);
    let gamma = tape.add(g0, g1)?;
    let b0 = tape.scale(mu, l);
    let b1 = tape.scale(mu_p, r);
    let beta = tape.add(b0, b1)?;
    let styled = tape.mul(normed, gamma)?;
    tape.add(styled, beta)
}

/// MixStyle as applied during training: active with probability `p_active`
/// (one draw per call), identity otherwise and always identity in eval mode.
pub fn mixstyle<S: Scalar, R: Rng + ?Sized>(
    tape: &mut Tape<S>,
    x: Var,
    lam: f64,
    perm: &PairPermutation,
    params: &MixParams,
    mode: Mode,
    rng: &mut R,
) -> Result<Var> {
    check_lambda(lam)?;
    if mode == Mode::Eval {
        return Ok(x);
    }
    if rng.random_bool(params.p_active) {
        mixstyle_transform(tape, x, lam, perm)
    } else {
        Ok(x)
    }
}

/// Label-replacing mix at a single tap.
#[derive(Debug, Clone)]
pub struct ManifoldMixupHook {
    pub tap: String,
    pub lambda: f64,
    pub perm: PairPermutation,
}

impl ManifoldMixupHook {
    /// Plain Mixup: mixing at the input tap.
    pub fn mixup<R: Rng + ?Sized>(params: &MixParams, batch: usize, rng: &mut R) -> Result<Self> {
        Ok(ManifoldMixupHook {
            tap: INPUT_TAP.to_string(),
            lambda: sample_lambda(params, rng)?,
            perm: make_reference(batch, rng)?,
        })
    }

    /// Manifold Mixup at a tap drawn uniformly from the input and the
    /// placement.
    pub fn sample<R: Rng + ?Sized>(params: &MixParams, batch: usize, rng: &mut R) -> Result<Self> {
        let lambda = sample_lambda(params, rng)?;
        let perm = make_reference(batch, rng)?;
        let pick = rng.random_range(0..=params.placement.len());
        let tap = if pick == 0 {
            INPUT_TAP.to_string()
        } else {
            params.placement[pick - 1].clone()
        };
        Ok(ManifoldMixupHook { tap, lambda, perm })
    }
}

impl<S: Scalar> TapHook<S> for ManifoldMixupHook {
    fn tap(&self) -> &str {
        &self.tap
    }

    fn replaces_labels(&self) -> bool {
        true
    }

    fn apply(&mut self, tape: &mut Tape<S>, features: Var, labels: Option<&mut Tensor<S>>) -> Result<Var> {
        let labels = labels.ok_or_else(|| Error::InvalidLabels("mixing needs soft labels".into()))?;
        let (z, y) = manifold_mixup(tape, features, labels, self.lambda, &self.perm)?;
        *labels = y;
        Ok(z)
    }
}

/// MixStyle at one tap. Hooks for one batch share λ and the partner order;
/// whether each fires was decided when the batch was drawn.
#[derive(Debug, Clone)]
pub struct MixStyleHook {
    pub tap: String,
    pub lambda: f64,
    pub perm: PairPermutation,
    pub active: bool,
}

impl MixStyleHook {
    /// One λ and permutation for the batch, then an independent activation
    /// draw per placed tap.
    pub fn sample_batch<R: Rng + ?Sized>(params: &MixParams, batch: usize, rng: &mut R) -> Result<Vec<Self>> {
        let lambda = sample_lambda(params, rng)?;
        let perm = make_reference(batch, rng)?;
        Ok(params
            .placement
            .iter()
            .map(|tap| MixStyleHook {
                tap: tap.clone(),
                lambda,
                perm: perm.clone(),
                active: rng.random_bool(params.p_active),
            })
            .collect())
    }
}

impl<S: Scalar> TapHook<S> for MixStyleHook {
    fn tap(&self) -> &str {
        &self.tap
    }

    fn apply(&mut self, tape: &mut Tape<S>, features: Var, _: Option<&mut Tensor<S>>) -> Result<Var> {
        if self.active {
            mixstyle_transform(tape, features, self.lambda, &self.perm)
        } else {
            Ok(features)
        }
    }
}

/// Builds the hooks for one training batch.
pub fn batch_hooks<S: Scalar>(params: &MixParams, batch: usize, rng: &mut dyn RngCore) -> Result<Vec<Box<dyn TapHook<S>>>> {
    Ok(match params.method {
        Method::None => Vec::new(),
        Method::Mixup => vec![Box::new(ManifoldMixupHook::mixup(params, batch, rng)?)],
        Method::ManifoldMixup => vec![Box::new(ManifoldMixupHook::sample(params, batch, rng)?)],
        Method::MixStyle => MixStyleHook::sample_batch(params, batch, rng)?
            .into_iter()
            .map(|h| Box::new(h) as Box<dyn TapHook<S>>)
            .collect(),
    })
}
