use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::{Fft, MelFilterbank, Spectrogram, Waveform, LOG_FLOOR};
use crate::{Error, Result};

/// Periodic Hann window (the FFT-analysis convention).
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * libm::cos(2.0 * PI * i as f64 / n as f64))
        .collect()
}

/// STFT power, `(n_fft/2 + 1) × n_frames`, row-major (frequency bin major).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerMatrix {
    pub n_bins: usize,
    pub n_frames: usize,
    pub hop: usize,
    pub sample_rate: u32,
    pub values: Vec<f64>,
}

impl PowerMatrix {
    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.values[bin * self.n_frames + frame]
    }

    pub fn frame(&self, frame: usize) -> Vec<f64> {
        (0..self.n_bins).map(|b| self.get(b, frame)).collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

/// Index into a signal of length `len` under numpy-style "reflect" padding
/// (edge sample not repeated), folding as often as needed.
pub(crate) fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

/// Centered, reflect-padded short-time power spectrum with a Hann window.
pub fn stft(w: &Waveform, n_fft: usize, hop: usize) -> Result<PowerMatrix> {
    let fft = Fft::new(n_fft)?;
    if hop == 0 {
        return Err(Error::arg("hop must be positive"));
    }
    let x = w.samples();
    let window = hann_window(n_fft);
    let n_frames = x.len() / hop + 1;
    let n_bins = n_fft / 2 + 1;
    let pad = (n_fft / 2) as isize;
    let mut values = alloc::vec![0.0; n_bins * n_frames];
    let mut frame = alloc::vec![0.0; n_fft];
    let mut scratch = Vec::with_capacity(n_fft);
    for t in 0..n_frames {
        let start = (t * hop) as isize - pad;
        for (k, f) in frame.iter_mut().enumerate() {
            *f = x[reflect_index(start + k as isize, x.len())] * window[k];
        }
        let p = fft.power_spectrum(&frame, &mut scratch);
        for (b, v) in p.into_iter().enumerate() {
            values[b * n_frames + t] = v;
        }
    }
    Ok(PowerMatrix {
        n_bins,
        n_frames,
        hop,
        sample_rate: w.sample_rate(),
        values,
    })
}

/// `ln(max(fb · power, floor))`.
pub fn log_mel(power: &PowerMatrix, fb: &MelFilterbank) -> Result<Spectrogram> {
    if power.n_bins != fb.n_bins() {
        return Err(Error::shape(
            "log_mel",
            format!("power has {} bins, filterbank expects {}", power.n_bins, fb.n_bins()),
        ));
    }
    let n_frames = power.n_frames;
    let mut values = Vec::with_capacity(fb.n_mels() * n_frames);
    let mut acc = alloc::vec![0.0f64; n_frames];
    for m in 0..fb.n_mels() {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for (b, &wgt) in fb.row(m).iter().enumerate() {
            if wgt == 0.0 {
                continue;
            }
            let row = &power.values[b * n_frames..(b + 1) * n_frames];
            for (a, &p) in acc.iter_mut().zip(row) {
                *a += wgt * p;
            }
        }
        values.extend(acc.iter().map(|&a| libm::log(a.max(LOG_FLOOR)) as f32));
    }
    Spectrogram::new(fb.n_mels(), n_frames, power.hop as u32, power.sample_rate, values)
}
