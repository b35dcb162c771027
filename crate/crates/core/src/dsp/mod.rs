//! Waveform ingestion, log-mel feature extraction, segmentation and Welch
//! spectral analysis. All functions are pure and deterministic.

mod analysis;
mod convolve;
mod fft;
mod mel;
mod resample;
mod segment;
pub(crate) mod stft;
mod welch;

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

pub use analysis::{difference_spectrum, nat_to_db, temporal_average};
pub use convolve::{convolve_direct, fft_convolve};
pub use fft::{Complex, Fft};
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz, MelFilterbank};
pub use resample::{resample, resample_ratio};
pub use segment::{segment, segment_bounds, window_length};
pub use stft::{hann_window, log_mel, stft, PowerMatrix};
pub use welch::{periodogram, power_to_db, welch_spectrum, WelchSpectrum};

/// Feature sample rate.
pub const SAMPLE_RATE: u32 = 22_050;
pub const N_FFT: usize = 1024;
pub const HOP: usize = 256;
pub const N_MELS: usize = 80;
/// Power floor applied before the natural log.
pub const LOG_FLOOR: f64 = 1e-10;
/// Segment window length in milliseconds.
pub const SEGMENT_MS: f64 = 930.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidWaveform("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidWaveform("no samples".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidWaveform(format!("sample {i} is not finite")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }
}

/// Log-mel spectrogram, `n_mels × n_frames`, row-major (mel bin major).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    n_mels: usize,
    n_frames: usize,
    hop: u32,
    sample_rate: u32,
    values: Vec<f32>,
}

impl Spectrogram {
    pub fn new(n_mels: usize, n_frames: usize, hop: u32, sample_rate: u32, values: Vec<f32>) -> Result<Self> {
        if n_mels == 0 || n_frames == 0 {
            return Err(Error::EmptyInput("spectrogram"));
        }
        if values.len() != n_mels * n_frames {
            return Err(Error::shape(
                "spectrogram",
                format!("{} values for {n_mels}x{n_frames}", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "spectrogram" });
        }
        Ok(Self {
            n_mels,
            n_frames,
            hop,
            sample_rate,
            values,
        })
    }

    /// Same metadata as `self` with new values of identical length.
    pub fn with_values(&self, values: Vec<f32>) -> Result<Self> {
        Self::new(self.n_mels, self.n_frames, self.hop, self.sample_rate, values)
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn hop(&self) -> u32 {
        self.hop
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn get(&self, mel: usize, frame: usize) -> f32 {
        self.values[mel * self.n_frames + frame]
    }

    pub fn row(&self, mel: usize) -> &[f32] {
        &self.values[mel * self.n_frames..(mel + 1) * self.n_frames]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&v| f64::from(v)).sum::<f64>() / self.values.len() as f64
    }

    /// Frames `[start, start + width)` as a new spectrogram.
    pub fn crop_frames(&self, start: usize, width: usize) -> Result<Self> {
        if width == 0 || start + width > self.n_frames {
            return Err(Error::shape(
                "crop_frames",
                format!("[{start}, {}) outside {} frames", start + width, self.n_frames),
            ));
        }
        let mut values = Vec::with_capacity(self.n_mels * width);
        for m in 0..self.n_mels {
            values.extend_from_slice(&self.row(m)[start..start + width]);
        }
        Self::new(self.n_mels, width, self.hop, self.sample_rate, values)
    }
}

/// Round half up, as used for window-length arithmetic.
pub(crate) fn round_half_up(x: f64) -> usize {
    libm::floor(x + 0.5) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn waveform_validation() {
        assert!(matches!(Waveform::new(vec![], 100), Err(Error::InvalidWaveform(_))));
        assert!(Waveform::new(vec![0.0], 0).is_err());
        assert!(Waveform::new(vec![0.0, f64::NAN], 10).is_err());
        let w = Waveform::new(vec![0.5; 22050], 22050).unwrap();
        assert!((w.duration_s() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectrogram_crop() {
        let s = Spectrogram::new(2, 3, 256, 22050, vec![0., 1., 2., 3., 4., 5.]).unwrap();
        let c = s.crop_frames(1, 2).unwrap();
        assert_eq!(c.values(), &[1., 2., 4., 5.]);
        assert!(s.crop_frames(2, 2).is_err());
    }
}
