use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

/// HTK mel scale: `2595 · log10(1 + f/700)`.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * libm::log10(1.0 + hz / 700.0)
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (libm::pow(10.0, mel / 2595.0) - 1.0)
}

/// Triangular filters with peak weight 1, centers equally spaced in mel.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Vec<f64>,
    n_mels: usize,
    n_bins: usize,
    sample_rate: u32,
    n_fft: usize,
    fmin: f64,
    fmax: f64,
    /// `n_mels + 2` band edges in Hz; filter `m` peaks at `edges[m + 1]`.
    edges: Vec<f64>,
}

impl MelFilterbank {
    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn fmin(&self) -> f64 {
        self.fmin
    }

    pub fn fmax(&self) -> f64 {
        self.fmax
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    pub fn center_hz(&self, m: usize) -> f64 {
        self.edges[m + 1]
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.edges[1..=self.n_mels]
    }

    pub fn bin_hz(&self, bin: usize) -> f64 {
        bin as f64 * f64::from(self.sample_rate) / self.n_fft as f64
    }

    /// Applies the filterbank to a linear power vector over FFT bins.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        (0..self.n_mels)
            .map(|m| self.row(m).iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }
}

/// Filterbank spanning `0 .. sample_rate/2`.
pub fn mel_filterbank(sample_rate: u32, n_fft: usize, n_mels: usize) -> Result<MelFilterbank> {
    mel_filterbank_range(sample_rate, n_fft, n_mels, 0.0, f64::from(sample_rate) / 2.0)
}

pub fn mel_filterbank_range(
    sample_rate: u32,
    n_fft: usize,
    n_mels: usize,
    fmin: f64,
    fmax: f64,
) -> Result<MelFilterbank> {
    if n_mels == 0 {
        return Err(Error::arg("n_mels must be at least 1"));
    }
    if n_fft < 2 {
        return Err(Error::arg("n_fft must be at least 2"));
    }
    if !(fmin >= 0.0 && fmin < fmax && fmax <= f64::from(sample_rate) / 2.0) {
        return Err(Error::arg(format!(
            "need 0 <= fmin < fmax <= sr/2, got [{fmin}, {fmax}]"
        )));
    }
    if n_mels > n_fft / 2 {
        return Err(Error::OverResolved {
            n_mels,
            n_bins: n_fft / 2 + 1,
        });
    }
    let n_bins = n_fft / 2 + 1;
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut weights = alloc::vec![0.0; n_mels * n_bins];
    for m in 0..n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        for b in 0..n_bins {
            let f = b as f64 * f64::from(sample_rate) / n_fft as f64;
            let up = (f - left) / (center - left);
            let down = (right - f) / (right - center);
            weights[m * n_bins + b] = up.min(down).max(0.0);
        }
    }
    Ok(MelFilterbank {
        weights,
        n_mels,
        n_bins,
        sample_rate,
        n_fft,
        fmin,
        fmax,
        edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{N_FFT, N_MELS, SAMPLE_RATE};

    fn default_fb() -> MelFilterbank {
        mel_filterbank(SAMPLE_RATE, N_FFT, N_MELS).unwrap()
    }

    #[test]
    fn single_filter_spans_range() {
        let fb = mel_filterbank(SAMPLE_RATE, N_FFT, 1).unwrap();
        let row = fb.row(0);
        assert_eq!(row[0], 0.0);
        assert_eq!(row[N_FFT / 2], 0.0);
        assert!(row[1..N_FFT / 2].iter().all(|&w| w > 0.0));
    }

    #[test]
    fn centers_strictly_increasing() {
        let fb = default_fb();
        assert!(fb.centers_hz().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn peak_bins_match_independent_mel_formula() {
        let fb = default_fb();
        let sr = f64::from(SAMPLE_RATE);
        let mel_max = 2595.0 * libm::log10(1.0 + (sr / 2.0) / 700.0);
        for m in 0..N_MELS {
            // Oracle: centers recomputed from the mel formula; the triangle
            // peak bin is whichever neighbouring bin the triangle rates higher.
            let mel_at = |i: usize| mel_max * i as f64 / (N_MELS + 1) as f64;
            let hz = |mel: f64| 700.0 * (libm::pow(10.0, mel / 2595.0) - 1.0);
            let (l, c, r) = (hz(mel_at(m)), hz(mel_at(m + 1)), hz(mel_at(m + 2)));
            let tri = |b: usize| {
                let f = b as f64 * sr / N_FFT as f64;
                ((f - l) / (c - l)).min((r - f) / (r - c)).max(0.0)
            };
            let below = libm::floor(c * N_FFT as f64 / sr) as usize;
            let expected = if tri(below + 1) > tri(below) { below + 1 } else { below };
            let row = fb.row(m);
            let peak = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
            assert_eq!(peak.0, expected, "filter {m}");
            assert_eq!(
                row.iter().filter(|&&w| w == *peak.1).count(),
                1,
                "filter {m} has a unique maximum"
            );
        }
    }

    #[test]
    fn weights_nonnegative_and_cover_interior_bins() {
        let fb = default_fb();
        for b in 1..N_FFT / 2 {
            assert!((0..N_MELS).any(|m| fb.row(m)[b] > 0.0), "bin {b} uncovered");
        }
        for m in 0..N_MELS {
            assert!(fb.row(m).iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn over_resolved_and_bad_ranges() {
        assert!(matches!(
            mel_filterbank(SAMPLE_RATE, 64, 33),
            Err(Error::OverResolved { .. })
        ));
        assert!(mel_filterbank_range(SAMPLE_RATE, N_FFT, 10, 500.0, 400.0).is_err());
        assert!(mel_filterbank_range(SAMPLE_RATE, N_FFT, 10, 0.0, 20000.0).is_err());
        assert!(mel_filterbank(SAMPLE_RATE, N_FFT, 0).is_err());
    }

    #[test]
    fn mel_round_trip() {
        for f in [0.0, 100.0, 700.0, 5000.0, 11025.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-8);
        }
        assert!((hz_to_mel(700.0) - 2595.0 * libm::log10(2.0)).abs() < 1e-9);
    }
}
