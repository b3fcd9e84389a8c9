//! Synthetic multi-subject drowsiness corpus.
//!
//! Every trial is pink-like background noise on each channel plus a steady
//! alpha rhythm whose strength and frequency belong to the subject; drowsy
//! trials add a windowed burst near the subject's alpha frequency with a
//! fixed spatial pattern. Each subject also has its own per-channel gain
//! and offset, applied to the whole trial. Absolute alpha power therefore
//! varies between subjects in both classes, while the burst shows up as a
//! change within the trial.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DatasetBundle, Label, SubjectRecord, Trial, CLASS_NAMES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub trials_per_class: usize,
    pub seed: u64,
    pub channels: usize,
    pub rate_hz: u32,
    pub window_seconds: u32,
    /// Burst amplitude relative to the unit-variance background.
    pub burst_amplitude: f64,
    /// Burst duration range in seconds.
    pub burst_seconds: (f64, f64),
    /// SD of the subject-wide log gain.
    pub subject_gain_sd: f64,
    /// SD of the per-channel log gain on top of the subject gain.
    pub channel_gain_sd: f64,
    /// SD of the per-channel offset.
    pub offset_sd: f64,
    /// Range of the subject's steady alpha amplitude.
    pub background_alpha: (f64, f64),
    /// Range of the subject's alpha frequency in Hz.
    pub alpha_hz: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 6,
            trials_per_class: 60,
            seed: 0,
            channels: super::DEFAULT_CHANNELS,
            rate_hz: super::DEFAULT_RATE_HZ,
            window_seconds: super::DEFAULT_WINDOW_SECONDS,
            burst_amplitude: 2.0,
            burst_seconds: (1.0, 2.0),
            subject_gain_sd: 0.5,
            channel_gain_sd: 0.3,
            offset_sd: 1.0,
            background_alpha: (0.0, 1.0),
            alpha_hz: (8.5, 11.5),
        }
    }
}

impl SynthConfig {
    pub fn new(n_subjects: usize, trials_per_class: usize, seed: u64) -> Self {
        SynthConfig {
            n_subjects,
            trials_per_class,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.n_subjects < 3 {
            return bad("synthetic corpus needs at least 3 subjects");
        }
        if self.trials_per_class == 0 || self.channels == 0 {
            return bad("trials per class and channels must be positive");
        }
        if self.rate_hz < 32 || self.window_seconds == 0 {
            return bad("sampling rate must be at least 32 Hz and the window non-empty");
        }
        let (lo, hi) = self.burst_seconds;
        if !(lo > 0.0 && lo <= hi && hi <= self.window_seconds as f64) {
            return bad("burst duration range must lie inside the window");
        }
        let (a_lo, a_hi) = self.background_alpha;
        if [self.burst_amplitude, self.subject_gain_sd, self.channel_gain_sd, self.offset_sd, a_lo, a_hi]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
            || a_lo > a_hi
        {
            return bad("amplitudes and spreads must be finite and non-negative");
        }
        let (f_lo, f_hi) = self.alpha_hz;
        if !(f_lo > 0.0 && f_lo <= f_hi && 2.0 * f_hi < self.rate_hz as f64) {
            return bad("alpha frequency range must be positive and below Nyquist");
        }
        Ok(())
    }
}

/// Unit-variance 1/f-like noise from a bank of leaky integrators.
struct PinkNoise {
    state: [f64; 3],
}

impl PinkNoise {
    const POLES: [f64; 3] = [0.99765, 0.963, 0.57];
    const GAINS: [f64; 3] = [0.099046, 0.2965164, 1.0526913];
    const WHITE: f64 = 0.1848;

    fn new<R: Rng>(rng: &mut R) -> Self {
        let mut p = PinkNoise { state: [0.0; 3] };
        for _ in 0..256 {
            p.next(rng);
        }
        p
    }

    fn next<R: Rng>(&mut self, rng: &mut R) -> f64 {
        let w: f64 = StandardNormal.sample(rng);
        let mut out = w * Self::WHITE;
        for ((s, p), g) in self.state.iter_mut().zip(Self::POLES).zip(Self::GAINS) {
            *s = p * *s + g * w;
            out += *s;
        }
        out
    }

    fn std() -> f64 {
        // stationary variance of the sum for unit white input
        let mut var = Self::WHITE * Self::WHITE;
        for i in 0..3 {
            for j in 0..3 {
                let cov = Self::GAINS[i] * Self::GAINS[j] / (1.0 - Self::POLES[i] * Self::POLES[j]);
                var += cov;
            }
            var += 2.0 * Self::WHITE * Self::GAINS[i];
        }
        var.sqrt()
    }
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn topography(c: usize, channels: usize) -> f64 {
    // stronger towards the last (posterior) channels
    if channels == 1 {
        1.0
    } else {
        0.3 + 0.7 * c as f64 / (channels - 1) as f64
    }
}

fn subject_trials(cfg: &SynthConfig, index: usize, id: &str) -> Vec<Trial> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);
    let (c_n, rate) = (cfg.channels, cfg.rate_hz as f64);
    let t_n = (cfg.rate_hz * cfg.window_seconds) as usize;
    let normal = |sd: f64| Normal::new(0.0, sd).expect("validated spread");

    let subject_gain: f64 = normal(cfg.subject_gain_sd).sample(&mut rng);
    let gains: Vec<f64> = (0..c_n)
        .map(|_| (subject_gain + normal(cfg.channel_gain_sd).sample(&mut rng)).exp())
        .collect();
    let offsets: Vec<f64> = (0..c_n).map(|_| normal(cfg.offset_sd).sample(&mut rng)).collect();
    let steady = uniform(&mut rng, cfg.background_alpha);
    let alpha_hz = uniform(&mut rng, cfg.alpha_hz);
    let noise_scale = 1.0 / PinkNoise::std();

    (0..2 * cfg.trials_per_class)
        .map(|i| {
            let label = if i % 2 == 0 { Label::Alert } else { Label::Drowsy };
            let mut signal = vec![0.0f32; c_n * t_n];
            let mut alpha = vec![0.0f64; t_n];
            let phase = rng.random_range(0.0..2.0 * PI);
            for (t, a) in alpha.iter_mut().enumerate() {
                *a = steady * (2.0 * PI * alpha_hz * t as f64 / rate + phase).sin();
            }
            if label == Label::Drowsy {
                let freq = alpha_hz + rng.random_range(-0.5..0.5);
                let phase = rng.random_range(0.0..2.0 * PI);
                let dur = uniform(&mut rng, cfg.burst_seconds);
                let len = ((dur * rate) as usize).clamp(2, t_n);
                let start = rng.random_range(0..=t_n - len);
                for k in 0..len {
                    let env = 0.5 - 0.5 * (2.0 * PI * k as f64 / (len - 1) as f64).cos();
                    let t = (start + k) as f64 / rate;
                    alpha[start + k] += cfg.burst_amplitude * env * (2.0 * PI * freq * t + phase).sin();
                }
            }
            for c in 0..c_n {
                let mut noise = PinkNoise::new(&mut rng);
                let w = topography(c, c_n);
                for t in 0..t_n {
                    let v = noise.next(&mut rng) * noise_scale + w * alpha[t];
                    signal[c * t_n + t] = (gains[c] * v + offsets[c]) as f32;
                }
            }
            let rt_seconds = match label {
                Label::Alert => rng.random_range(0.3..0.9),
                Label::Drowsy => rng.random_range(1.2..3.0),
            };
            Trial {
                signal,
                label,
                rt_seconds,
                subject_id: id.to_string(),
            }
        })
        .collect()
}

/// Builds a balanced synthetic bundle; `(cfg, seed)` determine every value.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<DatasetBundle> {
    cfg.validate()?;
    let width = cfg.n_subjects.to_string().len().max(2);
    let subjects = (0..cfg.n_subjects)
        .map(|i| {
            let id = format!("s{:0width$}", i + 1);
            SubjectRecord {
                trials: subject_trials(cfg, i, &id),
                subject_id: id,
            }
        })
        .collect();
    let generator = serde_json::to_value(cfg).expect("config serializes");
    Ok(DatasetBundle {
        subjects,
        rate_hz: cfg.rate_hz,
        window_seconds: cfg.window_seconds,
        channels: cfg.channels,
        class_names: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        generator: Some(serde_json::json!({ "synthetic": generator })),
    })
}

/// Mean over channels of the periodogram power in the 8–12 Hz band, with the
/// channel mean removed.
pub fn alpha_bandpower(signal: &[f32], channels: usize, rate_hz: f64) -> f64 {
    let t_n = signal.len() / channels;
    let lo = (8.0 * t_n as f64 / rate_hz).ceil() as usize;
    let hi = (12.0 * t_n as f64 / rate_hz).floor() as usize;
    let mut total = 0.0;
    for row in signal.chunks_exact(t_n) {
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / t_n as f64;
        for k in lo..=hi {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in row.iter().enumerate() {
                let a = 2.0 * PI * (k * t) as f64 / t_n as f64;
                re += (v as f64 - mean) * a.cos();
                im -= (v as f64 - mean) * a.sin();
            }
            total += (re * re + im * im) / t_n as f64;
        }
    }
    total / channels as f64
}
