//! WAV ingestion via `hound`: 16-bit PCM or 32-bit float, averaged to mono.

use std::path::Path;

use hound::{SampleFormat, WavSpec, WavWriter};
use micshift_core::dsp::Waveform;

use crate::error::{Error, Result};

pub fn read_wav(path: &Path) -> Result<Waveform> {
    let mut r = hound::WavReader::open(path)?;
    let spec = r.spec();
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => r
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()?,
        (SampleFormat::Float, 32) => r.samples::<f32>().map(|s| s.map(f64::from)).collect::<Result<_, _>>()?,
        (f, b) => {
            return Err(Error::format("WAV", format!("{b}-bit {f:?} samples are not supported")));
        }
    };
    let ch = spec.channels as usize;
    let mono = samples
        .chunks_exact(ch)
        .map(|f| f.iter().sum::<f64>() / ch as f64)
        .collect();
    Ok(Waveform::new(mono, spec.sample_rate)?)
}

/// Writes mono 32-bit float.
pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut out = WavWriter::create(path, spec)?;
    for &s in w.samples() {
        out.write_sample(s as f32)?;
    }
    out.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stereo_pcm16_averages_to_mono() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        for (l, r) in [(16384i16, 0i16), (-32768, -32768)] {
            w.write_sample(l).unwrap();
            w.write_sample(r).unwrap();
        }
        w.finalize().unwrap();
        let m = read_wav(&path).unwrap();
        assert_eq!(m.samples(), &[0.25, -1.0]);
        assert_eq!(m.sample_rate(), 8000);
    }

    #[test]
    fn float_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.wav");
        let w = Waveform::new(vec![0.5, -0.125, 0.0], 22_050).unwrap();
        write_wav(&path, &w).unwrap();
        assert_eq!(read_wav(&path).unwrap(), w);
    }

    #[test]
    fn rejects_8_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 8,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        w.write_sample(3i8).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_wav(&path), Err(Error::Format { .. })));
    }
}
