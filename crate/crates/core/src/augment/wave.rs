use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dsp::{fft_convolve, resample_ratio, Waveform};
use crate::Result;

/// Adds white Gaussian noise at a signal-to-noise ratio drawn uniformly from
/// `snr_db_range`, scaled so the realized ratio equals the draw. Silent
/// input and an infinite SNR are returned unchanged.
pub fn gaussian_noise(w: &Waveform, snr_db_range: (f64, f64), rng: &mut impl Rng) -> Result<Waveform> {
    let (lo, hi) = snr_db_range;
    let snr_db = if lo == hi {
        lo
    } else {
        rng.random_range(lo.min(hi)..=hi.max(lo))
    };
    let signal = w.energy();
    if snr_db == f64::INFINITY || signal == 0.0 {
        return Ok(w.clone());
    }
    let noise: Vec<f64> = (0..w.len()).map(|_| StandardNormal.sample(rng)).collect();
    let noise_energy: f64 = noise.iter().map(|v| v * v).sum();
    let k = libm::sqrt(signal / (noise_energy * libm::pow(10.0, snr_db / 10.0)));
    let samples = w.samples().iter().zip(&noise).map(|(s, n)| s + k * n).collect();
    Waveform::new(samples, w.sample_rate())
}

/// Full convolution with `rir`, truncated to the input length.
pub fn reverb(w: &Waveform, rir: &Waveform) -> Result<Waveform> {
    let mut y = fft_convolve(w.samples(), rir.samples());
    y.truncate(w.len());
    Waveform::new(y, w.sample_rate())
}

/// Exponentially decaying Gaussian noise with a direct-path impulse, 60 dB
/// down after `t60` seconds, normalized to unit energy. Length is `t60`
/// seconds, capped at `max_len` samples.
pub fn synthetic_rir(t60: f64, sample_rate: u32, max_len: usize, rng: &mut impl Rng) -> Result<Waveform> {
    let len = (libm::round(t60 * sample_rate as f64) as usize).clamp(1, max_len.max(1));
    let rate = 3.0 * core::f64::consts::LN_10 / (t60 * sample_rate as f64);
    let mut h: Vec<f64> = (0..len)
        .map(|i| {
            let z: f64 = StandardNormal.sample(rng);
            z * libm::exp(-rate * i as f64)
        })
        .collect();
    h[0] = 1.0;
    let norm = libm::sqrt(h.iter().map(|v| v * v).sum::<f64>());
    h.iter_mut().for_each(|v| *v /= norm);
    Waveform::new(h, sample_rate)
}

/// Raises pitch by `semitones` by resampling with factor `2^(s/12)` and
/// zero-padding or trimming back to the input length; duration is not
/// preserved.
pub fn pitch_shift(w: &Waveform, semitones: f64) -> Result<Waveform> {
    if semitones == 0.0 {
        return Ok(w.clone());
    }
    let factor = libm::exp2(semitones / 12.0);
    let mut y = resample_ratio(w.samples(), 1.0 / factor)?;
    y.resize(w.len(), 0.0);
    Waveform::new(y, w.sample_rate())
}
