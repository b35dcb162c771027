use alloc::format;
use alloc::vec::Vec;

use super::{hann_window, Fft, Waveform};
use crate::{Error, Result};

/// Floor applied to linear power before the dB conversion.
const DB_FLOOR: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq)]
pub struct WelchSpectrum {
    /// Power per frequency bin in dB, `seg_len/2 + 1` entries.
    pub power_db: Vec<f64>,
    /// Bin spacing in Hz.
    pub resolution: f64,
}

impl WelchSpectrum {
    pub fn bin_of(&self, hz: f64) -> usize {
        libm::round(hz / self.resolution) as usize
    }
}

pub fn power_to_db(p: f64) -> f64 {
    10.0 * libm::log10(p.max(DB_FLOOR))
}

/// One-sided Hann-windowed periodogram, `|FFT(x·w)|² / Σw²`, linear power.
pub fn periodogram(x: &[f64]) -> Result<Vec<f64>> {
    let fft = Fft::new(x.len())?;
    let window = hann_window(x.len());
    let norm: f64 = window.iter().map(|w| w * w).sum();
    let frame: Vec<f64> = x.iter().zip(&window).map(|(a, w)| a * w).collect();
    let mut scratch = Vec::with_capacity(x.len());
    Ok(fft
        .power_spectrum(&frame, &mut scratch)
        .into_iter()
        .map(|p| p / norm)
        .collect())
}

/// Mean of Hann-windowed periodograms over segments of `seg_len` with the
/// given fractional overlap, in dB.
pub fn welch_spectrum(w: &Waveform, seg_len: usize, overlap: f64) -> Result<WelchSpectrum> {
    if seg_len > w.len() {
        return Err(Error::arg(format!(
            "segment length {seg_len} exceeds signal length {}",
            w.len()
        )));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::arg("overlap must lie in [0, 1)"));
    }
    let hop = (seg_len - (seg_len as f64 * overlap) as usize).max(1);
    let n_segments = (w.len() - seg_len) / hop + 1;
    let mut acc = alloc::vec![0.0; seg_len / 2 + 1];
    for s in 0..n_segments {
        let p = periodogram(&w.samples()[s * hop..s * hop + seg_len])?;
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    Ok(WelchSpectrum {
        power_db: acc.into_iter().map(|a| power_to_db(a / n_segments as f64)).collect(),
        resolution: f64::from(w.sample_rate()) / seg_len as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use core::f64::consts::PI;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn single_segment_equals_periodogram_exactly() {
        let x: Vec<f64> = (0..1024).map(|i| libm::sin(i as f64 * 0.3) + 0.01 * i as f64).collect();
        let w = Waveform::new(x.clone(), 22_050).unwrap();
        let spec = welch_spectrum(&w, 1024, 0.5).unwrap();
        let direct: Vec<f64> = periodogram(&x).unwrap().into_iter().map(power_to_db).collect();
        assert_eq!(spec.power_db, direct);
        assert_eq!(spec.power_db.len(), 513);
    }

    #[test]
    fn white_noise_is_flat() {
        let mut rng = rng_from(11);
        let n = 512 * 101;
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let w = Waveform::new(x, 22_050).unwrap();
        let spec = welch_spectrum(&w, 1024, 0.5).unwrap();
        let mut sorted = spec.power_db.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        for v in &spec.power_db {
            assert!((v - median).abs() < 2.0, "{v} vs median {median}");
        }
    }

    #[test]
    fn tone_peak_at_tone_bin() {
        let x: Vec<f64> = (0..8192)
            .map(|i| libm::sin(2.0 * PI * 3000.0 * i as f64 / 22_050.0))
            .collect();
        let w = Waveform::new(x, 22_050).unwrap();
        let spec = welch_spectrum(&w, 1024, 0.5).unwrap();
        let peak = spec
            .power_db
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, spec.bin_of(3000.0));
    }

    #[test]
    fn segment_longer_than_signal_is_error() {
        let w = Waveform::new(alloc::vec![0.0; 100], 22_050).unwrap();
        assert!(welch_spectrum(&w, 1024, 0.5).is_err());
    }
}
