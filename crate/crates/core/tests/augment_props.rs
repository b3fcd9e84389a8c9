use std::collections::HashMap;

use eegmix_core::augment::{
    instance_stats, make_reference, manifold_mixup, mix_labels, mixstyle, mixstyle_transform, mixup_raw,
    MixParams, Method, PairPermutation, STATS_EPS,
};
use eegmix_core::nn::{linear, Mode};
use eegmix_core::{Tape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tensor<S: eegmix_core::Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<S> {
    let n = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::<f64>::from_f64(shape.to_vec(), &v).unwrap().cast()
}

/// A batch whose channels each get their own scale and offset, so instance
/// statistics differ across samples the way styles do.
fn styled_batch(rng: &mut ChaCha8Rng, b: usize, c: usize, t: usize) -> Tensor<f32> {
    let mut v = Vec::with_capacity(b * c * t);
    for _ in 0..b * c {
        let (scale, shift) = (rng.random_range(0.5..3.0), rng.random_range(-2.0..2.0));
        v.extend((0..t).map(|_| (rng.random_range(-1.0f64..1.0) * scale + shift) as f32));
    }
    Tensor::new(vec![b, c, t], v).unwrap()
}

fn soft_labels(rng: &mut ChaCha8Rng, b: usize, k: usize) -> Tensor<f64> {
    let mut v = Vec::with_capacity(b * k);
    for _ in 0..b {
        let row: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
        let s: f64 = row.iter().sum();
        v.extend(row.iter().map(|r| r / s));
    }
    Tensor::new(vec![b, k], v).unwrap()
}

fn inverse(p: &PairPermutation) -> PairPermutation {
    let mut inv = vec![0; p.len()];
    for (i, &j) in p.as_slice().iter().enumerate() {
        inv[j] = i;
    }
    PairPermutation::new(inv).unwrap()
}

fn apply_mixstyle(x: &Tensor<f32>, lam: f64, perm: &PairPermutation) -> Tensor<f32> {
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let y = mixstyle_transform(&mut tape, v, lam, perm).unwrap();
    tape.value(y).clone()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn batch_dims() -> impl Strategy<Value = (u64, usize, usize, usize)> {
    (any::<u64>(), 1usize..9, 1usize..5, 16usize..64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mixup_at_one_returns_its_inputs((seed, b, c, t) in batch_dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Tensor<f64> = tensor(&mut rng, &[b, c, t], -5.0, 5.0);
        let y = soft_labels(&mut rng, b, 2);
        let perm = make_reference(b, &mut rng).unwrap();
        let (xm, ym) = mixup_raw(&x, &y, 1.0, &perm).unwrap();
        prop_assert_eq!(xm.data(), x.data());
        prop_assert_eq!(ym.data(), y.data());
    }

    #[test]
    fn mixup_is_symmetric_in_the_pair((seed, b, c, t) in batch_dims(), lam in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Tensor<f64> = tensor(&mut rng, &[b, c, t], -5.0, 5.0);
        let y = soft_labels(&mut rng, b, 2);
        let perm = make_reference(b, &mut rng).unwrap();
        let (xm, ym) = mixup_raw(&x, &y, lam, &perm).unwrap();
        // reorder so each sample's partner sits in its slot, then mix back with 1 − λ
        let (xp, yp) = (x.select_rows(perm.as_slice()), y.select_rows(perm.as_slice()));
        let (xs, ys) = mixup_raw(&xp, &yp, 1.0 - lam, &inverse(&perm)).unwrap();
        prop_assert!(xm.max_abs_diff(&xs) < 1e-12);
        prop_assert!(ym.max_abs_diff(&ys) < 1e-12);
    }

    #[test]
    fn mixed_labels_stay_on_the_simplex(seed in any::<u64>(), b in 1usize..17, k in 2usize..5, lam in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = soft_labels(&mut rng, b, k);
        let perm = make_reference(b, &mut rng).unwrap();
        let ym = mix_labels(&y, lam, &perm).unwrap();
        for row in ym.data().chunks(k) {
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        // and hard labels too, in single precision
        let hard: Tensor<f32> = Tensor::new(
            vec![b, 2],
            (0..b).flat_map(|_| if rng.random_bool(0.5) { [1.0, 0.0] } else { [0.0, 1.0] }).collect(),
        ).unwrap();
        let hm = mix_labels(&hard, lam, &perm).unwrap();
        for row in hm.data().chunks(2) {
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f32>() as f64 - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn manifold_mixup_commutes_with_a_linear_map(seed in any::<u64>(), b in 1usize..9, lam in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: Tensor<f32> = tensor(&mut rng, &[b, 12], -2.0, 2.0);
        let w: Tensor<f32> = tensor(&mut rng, &[12, 5], -1.0, 1.0);
        let y: Tensor<f32> = soft_labels(&mut rng, b, 2).cast();
        let perm = make_reference(b, &mut rng).unwrap();
        let mut tape = Tape::new();
        let (zv, wv) = (tape.constant(z), tape.constant(w));
        let (mixed, _) = manifold_mixup(&mut tape, zv, &y, lam, &perm).unwrap();
        let a = linear(&mut tape, mixed, wv, None).unwrap();
        let lz = linear(&mut tape, zv, wv, None).unwrap();
        let (b_out, _) = manifold_mixup(&mut tape, lz, &y, lam, &perm).unwrap();
        prop_assert!(tape.value(a).max_abs_diff(tape.value(b_out)) < 1e-5);
    }

    #[test]
    fn mixstyle_with_identity_partners_is_a_fixpoint((seed, b, c, t) in batch_dims(), lam in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = styled_batch(&mut rng, b, c, t);
        let y = apply_mixstyle(&x, lam, &PairPermutation::identity(b));
        prop_assert!(y.max_abs_diff(&x) < 1e-5, "{}", y.max_abs_diff(&x));
    }

    #[test]
    fn mixstyle_at_one_is_a_fixpoint((seed, b, c, t) in batch_dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = styled_batch(&mut rng, b, c, t);
        let perm = make_reference(b, &mut rng).unwrap();
        let y = apply_mixstyle(&x, 1.0, &perm);
        prop_assert!(y.max_abs_diff(&x) < 1e-5, "{}", y.max_abs_diff(&x));
    }

    #[test]
    fn mixstyle_at_zero_transfers_partner_statistics((seed, b, c, t) in batch_dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = styled_batch(&mut rng, b, c, t);
        let perm = make_reference(b, &mut rng).unwrap();
        let out = instance_stats(&apply_mixstyle(&x, 0.0, &perm), STATS_EPS).unwrap();
        let want = instance_stats(&x.select_rows(perm.as_slice()), STATS_EPS).unwrap();
        prop_assert!(max_diff(&out.mu, &want.mu) < 1e-4);
        prop_assert!(max_diff(&out.sigma, &want.sigma) < 1e-4);
    }

    #[test]
    fn mixstyle_output_carries_the_mixed_statistics((seed, b, c, t) in batch_dims(), lam in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = styled_batch(&mut rng, b, c, t);
        let perm = make_reference(b, &mut rng).unwrap();
        let out = instance_stats(&apply_mixstyle(&x, lam, &perm), STATS_EPS).unwrap();
        let own = instance_stats(&x, STATS_EPS).unwrap();
        let partner = instance_stats(&x.select_rows(perm.as_slice()), STATS_EPS).unwrap();
        let mix = |a: &[f64], p: &[f64]| -> Vec<f64> { a.iter().zip(p).map(|(a, p)| lam * a + (1.0 - lam) * p).collect() };
        prop_assert!(max_diff(&out.mu, &mix(&own.mu, &partner.mu)) < 1e-4);
        prop_assert!(max_diff(&out.sigma, &mix(&own.sigma, &partner.sigma)) < 1e-4);
        prop_assert_eq!(out.batch, b);
    }

    #[test]
    fn inactive_or_eval_mixstyle_is_the_identity((seed, b, c, t) in batch_dims(), lam in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = styled_batch(&mut rng, b, c, t);
        let perm = make_reference(b, &mut rng).unwrap();
        let mut off = MixParams::new(Method::MixStyle, &["block1"]);
        off.p_active = 0.0;
        let on = MixParams::new(Method::MixStyle, &["block1"]);
        let mut tape = Tape::new();
        let v = tape.constant(x.clone());
        prop_assert_eq!(mixstyle(&mut tape, v, lam, &perm, &off, Mode::Train, &mut rng).unwrap(), v);
        prop_assert_eq!(mixstyle(&mut tape, v, lam, &perm, &on, Mode::Eval, &mut rng).unwrap(), v);
    }
}

#[test]
fn worked_mixup_example() {
    let x = Tensor::<f64>::new(vec![2, 1, 2], vec![2.0, 4.0, 0.0, 0.0]).unwrap();
    let y = Tensor::<f64>::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let (xm, ym) = mixup_raw(&x, &y, 0.5, &PairPermutation::new(vec![1, 0]).unwrap()).unwrap();
    assert_eq!(&xm.data()[..2], &[1.0, 2.0]);
    assert_eq!(&ym.data()[..2], &[0.5, 0.5]);
}

#[test]
fn reference_orders_are_uniform_over_permutations() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    let n = 10_000;
    for _ in 0..n {
        *counts.entry(make_reference(3, &mut rng).unwrap().as_slice().to_vec()).or_default() += 1;
    }
    assert_eq!(counts.len(), 6);
    for (perm, k) in counts {
        let f = k as f64 / n as f64;
        assert!((f - 1.0 / 6.0).abs() < 0.02, "{perm:?}: {f}");
    }
}

#[test]
fn reference_orders_compose_to_permutations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for b in 1..20 {
        let p = make_reference(b, &mut rng).unwrap();
        let q = make_reference(b, &mut rng).unwrap();
        PairPermutation::new(p.compose(&q).as_slice().to_vec()).unwrap();
        assert_eq!(p.compose(&inverse(&p)), PairPermutation::identity(b));
    }
    assert_eq!(make_reference(1, &mut rng).unwrap(), PairPermutation::identity(1));
}
