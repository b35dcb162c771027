use alloc::format;
use alloc::vec::Vec;

use super::Spectrogram;
use crate::{Error, Result};

/// Mean over every frame of every spectrogram, per mel bin. Units follow the
/// input (natural-log power for log-mel spectrograms).
pub fn temporal_average(specs: &[Spectrogram]) -> Result<Vec<f64>> {
    let first = specs.first().ok_or(Error::EmptyInput("temporal_average"))?;
    let n_mels = first.n_mels();
    let mut acc = alloc::vec![0.0; n_mels];
    let mut frames = 0usize;
    for s in specs {
        if s.n_mels() != n_mels {
            return Err(Error::shape(
                "temporal_average",
                format!("{} mel bins, expected {n_mels}", s.n_mels()),
            ));
        }
        for (m, a) in acc.iter_mut().enumerate() {
            *a += s.row(m).iter().map(|&v| f64::from(v)).sum::<f64>();
        }
        frames += s.n_frames();
    }
    Ok(acc.into_iter().map(|a| a / frames as f64).collect())
}

/// Elementwise `a − b` of two spectra already in a log domain.
pub fn difference_spectrum(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::shape(
            "difference_spectrum",
            format!("{} vs {}", a.len(), b.len()),
        ));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// Natural-log power to decibels.
pub fn nat_to_db(x: f64) -> f64 {
    x * 10.0 / core::f64::consts::LN_10
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn constant(c: f32, frames: usize) -> Spectrogram {
        Spectrogram::new(4, frames, 256, 22_050, vec![c; 4 * frames]).unwrap()
    }

    #[test]
    fn averages() {
        assert_eq!(temporal_average(&[constant(2.5, 3)]).unwrap(), vec![2.5; 4]);
        let avg = temporal_average(&[constant(1.0, 5), constant(3.0, 5)]).unwrap();
        assert_eq!(avg, vec![2.0; 4]);
        assert!(temporal_average(&[]).is_err());
    }

    #[test]
    fn frame_order_irrelevant() {
        let vals: Vec<f32> = (0..12).map(|i| i as f32 * 0.5).collect();
        let s = Spectrogram::new(2, 6, 256, 22_050, vals.clone()).unwrap();
        let mut rev = vals.clone();
        rev[..6].reverse();
        rev[6..].reverse();
        let r = Spectrogram::new(2, 6, 256, 22_050, rev).unwrap();
        assert_eq!(temporal_average(&[s]).unwrap(), temporal_average(&[r]).unwrap());
    }

    #[test]
    fn difference_laws() {
        let a = [1.0, -2.0, 3.5];
        let b = [0.5, 1.0, 3.5];
        assert_eq!(difference_spectrum(&a, &a).unwrap(), vec![0.0; 3]);
        let d1 = difference_spectrum(&a, &b).unwrap();
        let d2 = difference_spectrum(&b, &a).unwrap();
        assert!(d1.iter().zip(&d2).all(|(x, y)| *x == -*y));
        assert!(difference_spectrum(&a, &b[..2]).is_err());
    }

    #[test]
    fn db_conversion() {
        assert!((nat_to_db(libm::log(10.0)) - 10.0).abs() < 1e-12);
    }
}
