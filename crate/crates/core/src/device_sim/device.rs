use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use super::DeviceProfile;
use crate::dsp::{hann_window, Complex, Fft, Waveform};
use crate::rng::rng_from;
use crate::Result;

pub const FIR_TAPS: usize = 512;
const BLOCK_FFT: usize = 2048;

/// Linear-phase FIR realizing a profile's gain curve, designed by frequency
/// sampling on a 512-point grid and smoothed with a Hann window. The group
/// delay of `FIR_TAPS / 2` samples is compensated on application.
#[derive(Debug, Clone)]
pub struct DeviceFilter {
    taps: Vec<f64>,
    spectrum: Vec<Complex>,
    fft: Fft,
}

impl DeviceFilter {
    pub fn design(profile: &DeviceProfile, sample_rate: u32) -> Result<Self> {
        profile.validate()?;
        let n = FIR_TAPS;
        let fft = Fft::new(n)?;
        let mut h: Vec<Complex> = (0..n)
            .map(|k| {
                let bin = if k <= n / 2 { k } else { n - k };
                let hz = bin as f64 * f64::from(sample_rate) / n as f64;
                Complex::new(profile.amplitude_at(hz), 0.0)
            })
            .collect();
        fft.inverse(&mut h);
        let window = hann_window(n);
        let taps: Vec<f64> = (0..n).map(|i| h[(i + n - n / 2) % n].re * window[i]).collect();
        let block = Fft::new(BLOCK_FFT)?;
        let mut spectrum: Vec<Complex> = taps.iter().map(|&t| Complex::new(t, 0.0)).collect();
        spectrum.resize(BLOCK_FFT, Complex::default());
        block.forward(&mut spectrum);
        Ok(Self {
            taps,
            spectrum,
            fft: block,
        })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Delay-compensated filtering, output length equal to input length.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let delay = FIR_TAPS / 2;
        let block_len = BLOCK_FFT - FIR_TAPS + 1;
        let full_len = x.len() + FIR_TAPS - 1;
        let mut full = alloc::vec![0.0; full_len];
        let mut buf = Vec::with_capacity(BLOCK_FFT);
        for start in (0..x.len()).step_by(block_len) {
            let chunk = &x[start..(start + block_len).min(x.len())];
            buf.clear();
            buf.extend(chunk.iter().map(|&v| Complex::new(v, 0.0)));
            buf.resize(BLOCK_FFT, Complex::default());
            self.fft.forward(&mut buf);
            for (b, h) in buf.iter_mut().zip(&self.spectrum) {
                *b = Complex::new(b.re * h.re - b.im * h.im, b.re * h.im + b.im * h.re);
            }
            self.fft.inverse(&mut buf);
            let used = chunk.len() + FIR_TAPS - 1;
            for (i, c) in buf[..used].iter().enumerate() {
                full[start + i] += c.re;
            }
        }
        full[delay..delay + x.len()].to_vec()
    }
}

/// Filter, add noise at the profile's floor, then hard-clip.
pub fn apply_device(w: &Waveform, profile: &DeviceProfile, seed: u64) -> Result<Waveform> {
    let filter = DeviceFilter::design(profile, w.sample_rate())?;
    apply_with_filter(w, profile, &filter, seed)
}

pub(crate) fn apply_with_filter(
    w: &Waveform,
    profile: &DeviceProfile,
    filter: &DeviceFilter,
    seed: u64,
) -> Result<Waveform> {
    let mut y = filter.apply(w.samples());
    if let Some(db) = profile.noise_floor_db {
        let sigma = libm::pow(10.0, db / 20.0);
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        let mut rng = rng_from(seed);
        for v in y.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    let c = profile.clip_level;
    if c < 1.0 || y.iter().any(|v| v.abs() > c) {
        for v in y.iter_mut() {
            *v = v.clamp(-c, c);
        }
    }
    Waveform::new(y, w.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device_sim::{flat_profile, shelf_profile, GainPoint};
    use crate::dsp::{difference_spectrum, welch_spectrum, SAMPLE_RATE};
    use rand_distr::StandardNormal;

    fn noise(n: usize, seed: u64, scale: f64) -> Waveform {
        let mut rng = rng_from(seed);
        Waveform::new(
            (0..n)
                .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect(),
            SAMPLE_RATE,
        )
        .unwrap()
    }

    #[test]
    fn flat_profile_is_identity() {
        let w = noise(5000, 1, 0.1);
        let y = apply_device(&w, &flat_profile("f"), 0).unwrap();
        for (a, b) in w.samples().iter().zip(y.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_gain_scales() {
        let w = noise(5000, 2, 0.1);
        let mut d = flat_profile("g");
        d.gain_curve[0].db = 6.0;
        let y = apply_device(&w, &d, 0).unwrap();
        let g = libm::pow(10.0, 6.0 / 20.0);
        assert!((g - 2.0).abs() < 0.01);
        for (a, b) in w.samples().iter().zip(y.samples()) {
            assert!((a * g - b).abs() < 1e-9);
        }
    }

    #[test]
    fn linear_when_noise_and_clip_disabled() {
        let d = shelf_profile("s", 1500.0, 8.0);
        let a = noise(4000, 3, 0.05);
        let b = noise(4000, 4, 0.05);
        let sum = Waveform::new(
            a.samples().iter().zip(b.samples()).map(|(x, y)| x + y).collect(),
            SAMPLE_RATE,
        )
        .unwrap();
        let ya = apply_device(&a, &d, 0).unwrap();
        let yb = apply_device(&b, &d, 0).unwrap();
        let ys = apply_device(&sum, &d, 0).unwrap();
        for i in 0..4000 {
            assert!((ya.samples()[i] + yb.samples()[i] - ys.samples()[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn shelf_matches_gain_curve_under_welch() {
        let flat = flat_profile("flat");
        let shelf = shelf_profile("shelf", 2000.0, 6.0);
        let w = noise(512 * 200, 5, 0.1);
        let a = welch_spectrum(&apply_device(&w, &shelf, 0).unwrap(), 1024, 0.5).unwrap();
        let b = welch_spectrum(&apply_device(&w, &flat, 0).unwrap(), 1024, 0.5).unwrap();
        let diff = difference_spectrum(&a.power_db, &b.power_db).unwrap();
        for (k, d) in diff.iter().enumerate() {
            let hz = k as f64 * a.resolution;
            let transition = hz > 2000.0 / 1.6 && hz < 2000.0 * 1.6;
            if !transition && k > 0 {
                let expected = shelf.gain_db_at(hz);
                assert!((d - expected).abs() < 1.0, "bin {k}: {d} vs {expected}");
            }
        }
    }

    #[test]
    fn noise_and_clip() {
        let w = Waveform::new(alloc::vec![0.9; 3000], SAMPLE_RATE).unwrap();
        let mut d = flat_profile("c");
        d.clip_level = 0.5;
        let y = apply_device(&w, &d, 0).unwrap();
        assert!(y.samples().iter().all(|v| v.abs() <= 0.5));
        let silent = Waveform::new(alloc::vec![0.0; 20_000], SAMPLE_RATE).unwrap();
        let mut n = flat_profile("n");
        n.noise_floor_db = Some(-40.0);
        let y1 = apply_device(&silent, &n, 9).unwrap();
        let y2 = apply_device(&silent, &n, 9).unwrap();
        assert_eq!(y1, y2);
        let rms = libm::sqrt(y1.energy() / 20_000.0);
        assert!((20.0 * libm::log10(rms) + 40.0).abs() < 0.2);
        let _ = GainPoint { hz: 1.0, db: 0.0 };
    }
}
