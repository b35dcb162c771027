use alloc::vec::Vec;

use super::{round_half_up, Waveform};
use crate::{Error, Result};

/// Window length in samples, `round(window_ms/1000 · rate)` with halves
/// rounded up (930 ms at 22.05 kHz gives 20,507).
pub fn window_length(window_ms: f64, sample_rate: u32) -> usize {
    round_half_up(window_ms / 1000.0 * f64::from(sample_rate))
}

/// Start offsets and the window length for overlapping segmentation.
/// The hop is `floor(window · (1 − overlap))`; a trailing partial window is
/// dropped.
pub fn segment_bounds(len: usize, sample_rate: u32, window_ms: f64, overlap: f64) -> Result<(Vec<usize>, usize)> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::arg("overlap must lie in [0, 1)"));
    }
    let window = window_length(window_ms, sample_rate);
    if window == 0 {
        return Err(Error::arg("window is shorter than one sample"));
    }
    let hop = ((window as f64 * (1.0 - overlap)) as usize).max(1);
    let starts = if len < window {
        Vec::new()
    } else {
        (0..=(len - window) / hop).map(|i| i * hop).collect()
    };
    Ok((starts, window))
}

pub fn segment(w: &Waveform, window_ms: f64, overlap: f64) -> Result<Vec<Waveform>> {
    let (starts, window) = segment_bounds(w.len(), w.sample_rate(), window_ms, overlap)?;
    starts
        .into_iter()
        .map(|s| Waveform::new(w.samples()[s..s + window].to_vec(), w.sample_rate()))
        .collect()
}
