use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::{Complex, Fft, Waveform, SAMPLE_RATE, SEGMENT_MS};
use crate::rng::{rng_from, ChaCha8Rng};
use crate::{Error, Result};

/// Amplitude above which an event counts as active (−40 dBFS).
pub const ACTIVITY_THRESHOLD: f64 = 0.01;
const MAX_PEAK: f64 = 0.65;
const MIN_PEAK: f64 = 0.35;
const AMBIENT_RMS: f64 = 0.001;
const AMBIENT_LIMIT: f64 = 0.004;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Tone,
    Chirp,
    HarmonicStack,
    AmTone,
    NoiseBurst,
    ClickTrain,
    Warble,
    FilteredNoise,
}

/// A synthetic sound class: a generator kind plus the ranges its random
/// parameters are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventClass {
    pub id: usize,
    pub kind: EventKind,
    /// Primary frequency range in Hz (f0, carrier, sweep span or band).
    pub freq_range: (f64, f64),
    /// Modulation or repetition rate range in Hz, where the kind uses one.
    pub rate_range: (f64, f64),
    /// Sparse classes use the lower activity threshold when filtering.
    pub sparse: bool,
}

pub fn default_classes() -> Vec<EventClass> {
    use EventKind::*;
    let c = |id, kind, freq_range, rate_range, sparse| EventClass {
        id,
        kind,
        freq_range,
        rate_range,
        sparse,
    };
    alloc::vec![
        c(0, Tone, (600.0, 1200.0), (0.0, 0.0), false),
        c(1, Chirp, (500.0, 5000.0), (0.0, 0.0), false),
        c(2, HarmonicStack, (150.0, 300.0), (0.0, 0.0), false),
        c(3, AmTone, (1500.0, 2500.0), (6.0, 14.0), false),
        c(4, NoiseBurst, (20.0, 11_000.0), (0.0, 0.0), true),
        c(5, ClickTrain, (20.0, 11_000.0), (4.0, 10.0), true),
        c(6, Warble, (3000.0, 5000.0), (3.0, 7.0), false),
        c(7, FilteredNoise, (300.0, 3000.0), (0.0, 0.0), false),
    ]
}

/// A rendered event with its exact per-sample activity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedEvent {
    pub waveform: Waveform,
    pub active: Vec<bool>,
}

impl RenderedEvent {
    pub fn active_fraction(&self, start: usize, len: usize) -> f64 {
        let n = self.active[start..start + len].iter().filter(|&&a| a).count();
        n as f64 / len as f64
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn white(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn band_noise(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64, sr: f64) -> Vec<f64> {
    let size = n.next_power_of_two();
    let fft = Fft::new(size).expect("power of two");
    let mut buf: Vec<Complex> = white(rng, n).into_iter().map(|v| Complex::new(v, 0.0)).collect();
    buf.resize(size, Complex::default());
    fft.forward(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let bin = if k <= size / 2 { k } else { size - k };
        let hz = bin as f64 * sr / size as f64;
        if hz < lo || hz > hi {
            *c = Complex::default();
        }
    }
    fft.inverse(&mut buf);
    buf.truncate(n);
    buf.into_iter().map(|c| c.re).collect()
}

/// Raised-cosine gate over `[start, end)` with `fade` samples at each side.
fn gate(env: &mut [f64], start: usize, end: usize, fade: usize) {
    let end = end.min(env.len());
    let fade = fade.min((end.saturating_sub(start)) / 2).max(1);
    for (i, e) in env[start..end].iter_mut().enumerate() {
        let from_end = end - start - 1 - i;
        let edge = i.min(from_end);
        let g = if edge < fade {
            0.5 - 0.5 * libm::cos(PI * (edge as f64 + 0.5) / fade as f64)
        } else {
            1.0
        };
        *e = e.max(g);
    }
}

pub fn render_event(class: &EventClass, duration_s: f64, sample_rate: u32, seed: u64) -> Result<RenderedEvent> {
    if duration_s < SEGMENT_MS / 1000.0 {
        return Err(Error::arg(format!(
            "event duration {duration_s} s is shorter than one {SEGMENT_MS} ms window"
        )));
    }
    let sr = f64::from(sample_rate);
    let n = libm::round(duration_s * sr) as usize;
    let mut rng = rng_from(seed);
    let body_len = (uniform(&mut rng, (0.6, 0.8)) * n as f64) as usize;
    let onset = rng.random_range(0..=n - body_len);
    let body_end = onset + body_len;
    let fade = (0.01 * sr) as usize;
    let t = |i: usize| i as f64 / sr;

    let mut env = alloc::vec![0.0; n];
    let carrier: Vec<f64> = match class.kind {
        EventKind::Tone => {
            let f0 = uniform(&mut rng, class.freq_range);
            let phase = uniform(&mut rng, (0.0, 2.0 * PI));
            gate(&mut env, onset, body_end, fade);
            (0..n).map(|i| libm::sin(2.0 * PI * f0 * t(i) + phase)).collect()
        }
        EventKind::Chirp => {
            let (lo, hi) = class.freq_range;
            let f_start = uniform(&mut rng, (lo, lo * 1.6));
            let f_end = uniform(&mut rng, (hi / 1.6, hi));
            let dur = body_len as f64 / sr;
            let k = (f_end - f_start) / dur;
            gate(&mut env, onset, body_end, fade);
            (0..n)
                .map(|i| {
                    let tau = (t(i) - onset as f64 / sr).clamp(0.0, dur);
                    libm::sin(2.0 * PI * (f_start * tau + 0.5 * k * tau * tau))
                })
                .collect()
        }
        EventKind::HarmonicStack => {
            let f0 = uniform(&mut rng, class.freq_range);
            let harmonics: Vec<(f64, f64)> = (1..=8)
                .filter(|&h| f64::from(h) * f0 < 0.45 * sr)
                .map(|h| (f64::from(h), uniform(&mut rng, (0.0, 2.0 * PI))))
                .collect();
            gate(&mut env, onset, body_end, fade);
            (0..n)
                .map(|i| {
                    harmonics
                        .iter()
                        .map(|(h, ph)| libm::sin(2.0 * PI * h * f0 * t(i) + ph) / h)
                        .sum()
                })
                .collect()
        }
        EventKind::AmTone => {
            let fc = uniform(&mut rng, class.freq_range);
            let rate = uniform(&mut rng, class.rate_range);
            gate(&mut env, onset, body_end, fade);
            for (i, e) in env.iter_mut().enumerate() {
                *e *= (1.0 + 0.9 * libm::sin(2.0 * PI * rate * t(i))) / 1.9;
            }
            (0..n).map(|i| libm::sin(2.0 * PI * fc * t(i))).collect()
        }
        EventKind::NoiseBurst => {
            let bursts = rng.random_range(2..=4);
            for _ in 0..bursts {
                let len = (uniform(&mut rng, (0.08, 0.2)) * sr) as usize;
                let len = len.min(body_len);
                let start = onset + rng.random_range(0..=body_len - len);
                gate(&mut env, start, start + len, (0.005 * sr) as usize);
            }
            let (lo, hi) = class.freq_range;
            band_noise(&mut rng, n, lo, hi, sr)
        }
        EventKind::ClickTrain => {
            let rate = uniform(&mut rng, class.rate_range);
            let tau = 0.01 * sr;
            let period = (sr / rate) as usize;
            let mut c = onset + rng.random_range(0..period.max(1));
            while c < body_end {
                for (j, e) in env[c..body_end.min(c + (8.0 * tau) as usize)].iter_mut().enumerate() {
                    *e = e.max(libm::exp(-(j as f64) / tau));
                }
                c += period;
            }
            let (lo, hi) = class.freq_range;
            band_noise(&mut rng, n, lo, hi, sr)
        }
        EventKind::Warble => {
            let fc = uniform(&mut rng, class.freq_range);
            let rate = uniform(&mut rng, class.rate_range);
            let dev = 0.1 * fc;
            gate(&mut env, onset, body_end, fade);
            (0..n)
                .map(|i| {
                    let x = t(i);
                    libm::sin(2.0 * PI * fc * x - dev / rate * libm::cos(2.0 * PI * rate * x))
                })
                .collect()
        }
        EventKind::FilteredNoise => {
            gate(&mut env, onset, body_end, fade);
            let (lo, hi) = class.freq_range;
            band_noise(&mut rng, n, lo, hi, sr)
        }
    };

    let raw: Vec<f64> = carrier.iter().zip(&env).map(|(c, e)| c * e).collect();
    let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let target = uniform(&mut rng, (MIN_PEAK, MAX_PEAK));
    let scale = if peak > 0.0 { target / peak } else { 0.0 };
    let active = env.iter().map(|e| e * scale > ACTIVITY_THRESHOLD).collect();
    let ambient = white(&mut rng, n);
    let samples = raw
        .iter()
        .zip(ambient)
        .map(|(r, a)| r * scale + (a * AMBIENT_RMS).clamp(-AMBIENT_LIMIT, AMBIENT_LIMIT))
        .collect();
    Ok(RenderedEvent {
        waveform: Waveform::new(samples, sample_rate)?,
        active,
    })
}

/// Renders one event of `class` at the feature sample rate.
pub fn synth_event(class: &EventClass, duration_s: f64, seed: u64) -> Result<Waveform> {
    Ok(render_event(class, duration_s, SAMPLE_RATE, seed)?.waveform)
}

/// Spectral flatness (geometric over arithmetic mean) of a linear power
/// spectrum, ignoring the DC bin.
pub fn spectral_flatness(power: &[f64]) -> f64 {
    let p = &power[1..];
    let log_mean = p.iter().map(|v| libm::log(v.max(1e-30))).sum::<f64>() / p.len() as f64;
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    libm::exp(log_mean) / mean
}
