use alloc::vec::Vec;
use core::f64::consts::PI;

use super::Waveform;
use crate::{Error, Result};

/// Zero crossings of the interpolation kernel on each side.
const ZERO_CROSSINGS: f64 = 32.0;
/// Passband edge as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.92;
/// Kaiser shape for roughly 80 dB stopband attenuation.
const KAISER_BETA: f64 = 7.857;
const TABLE_SIZE: usize = 4096;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

struct KaiserTable {
    values: Vec<f64>,
}

impl KaiserTable {
    fn new() -> Self {
        let norm = bessel_i0(KAISER_BETA);
        let values = (0..=TABLE_SIZE)
            .map(|i| {
                let u = i as f64 / TABLE_SIZE as f64;
                bessel_i0(KAISER_BETA * libm::sqrt((1.0 - u * u).max(0.0))) / norm
            })
            .collect();
        Self { values }
    }

    /// Window value at `|u| <= 1`, linearly interpolated.
    fn at(&self, u: f64) -> f64 {
        let pos = u.abs() * TABLE_SIZE as f64;
        let i = pos as usize;
        if i >= TABLE_SIZE {
            return self.values[TABLE_SIZE];
        }
        let frac = pos - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }
}

/// Band-limited resampling of raw samples by `ratio = out_rate / in_rate`
/// using a Kaiser-windowed sinc kernel. Output length is
/// `round(len · ratio)`, at least one sample.
pub fn resample_ratio(samples: &[f64], ratio: f64) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::InvalidWaveform("no samples".into()));
    }
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(Error::arg("resampling ratio must be positive and finite"));
    }
    if ratio == 1.0 {
        return Ok(samples.to_vec());
    }
    let table = KaiserTable::new();
    // Cutoff in cycles per input sample.
    let fc = 0.5 * ratio.min(1.0) * ROLLOFF;
    let half_width = ZERO_CROSSINGS / (2.0 * fc);
    let out_len = (libm::round(samples.len() as f64 * ratio) as usize).max(1);
    let n = samples.len() as isize;
    let out = (0..out_len)
        .map(|j| {
            let t = j as f64 / ratio;
            let lo = libm::ceil(t - half_width) as isize;
            let hi = libm::floor(t + half_width) as isize;
            let mut acc = 0.0;
            for k in lo.max(0)..=hi.min(n - 1) {
                let d = t - k as f64;
                let arg = 2.0 * fc * d;
                let sinc = if arg.abs() < 1e-12 {
                    1.0
                } else {
                    libm::sin(PI * arg) / (PI * arg)
                };
                acc += samples[k as usize] * 2.0 * fc * sinc * table.at(d / half_width);
            }
            acc
        })
        .collect();
    Ok(out)
}

pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::arg("target rate must be positive"));
    }
    let ratio = f64::from(target_rate) / f64::from(w.sample_rate());
    Waveform::new(resample_ratio(w.samples(), ratio)?, target_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sine(freq: f64, rate: u32, secs: f64) -> Waveform {
        let n = (secs * f64::from(rate)) as usize;
        Waveform::new(
            (0..n)
                .map(|i| 0.5 * libm::sin(2.0 * PI * freq * i as f64 / f64::from(rate)))
                .collect(),
            rate,
        )
        .unwrap()
    }

    /// DFT amplitude of `x` at an arbitrary frequency (oracle).
    fn dft_amplitude(x: &[f64], freq: f64, rate: u32) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (i, &v) in x.iter().enumerate() {
            let a = 2.0 * PI * freq * i as f64 / f64::from(rate);
            re += v * libm::cos(a);
            im -= v * libm::sin(a);
        }
        2.0 * libm::sqrt(re * re + im * im) / x.len() as f64
    }

    #[test]
    fn identity_rate_is_exact() {
        let w = sine(500.0, 44_100, 0.1);
        assert_eq!(resample(&w, 44_100).unwrap(), w);
    }

    #[test]
    fn length_arithmetic() {
        let w = sine(500.0, 44_100, 1.0);
        let r = resample(&w, 22_050).unwrap();
        assert!((r.len() as i64 - 22_050).abs() <= 1);
        assert_eq!(r.sample_rate(), 22_050);
    }

    #[test]
    fn tone_frequency_and_amplitude_preserved() {
        let w = sine(500.0, 44_100, 1.0);
        let r = resample(&w, 22_050).unwrap();
        // Interior only, away from the zero-padded edges.
        let inner = &r.samples()[2000..20_050];
        let amp = dft_amplitude(inner, 500.0, 22_050);
        assert!((amp - 0.5).abs() < 0.005, "amplitude {amp}");
        let off = dft_amplitude(inner, 560.0, 22_050);
        assert!(off < 0.01);
        let orig = dft_amplitude(&w.samples()[4000..40_100], 500.0, 44_100);
        assert!((orig - amp).abs() / orig < 0.01);
    }

    #[test]
    fn aliasing_suppressed() {
        // 15 kHz at 44.1 kHz lies above the 11.025 kHz output Nyquist.
        let w = sine(15_000.0, 44_100, 0.5);
        let r = resample(&w, 22_050).unwrap();
        let inner = &r.samples()[1000..10_000];
        let rms = libm::sqrt(inner.iter().map(|v| v * v).sum::<f64>() / inner.len() as f64);
        let db = 20.0 * libm::log10(rms / (0.5 / libm::sqrt(2.0)));
        assert!(db < -60.0, "alias level {db} dB");
    }

    #[test]
    fn errors() {
        assert!(resample_ratio(&[], 0.5).is_err());
        let w = Waveform::new(vec![0.0; 4], 8).unwrap();
        assert!(resample(&w, 0).is_err());
    }
}
