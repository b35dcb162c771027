use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
}

/// Iterative radix-2 FFT plan.
#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    twiddles: Vec<Complex>,
    bitrev: Vec<usize>,
}

impl Fft {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(n));
        }
        let twiddles = (0..n / 2)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / n as f64;
                Complex::new(libm::cos(a), libm::sin(a))
            })
            .collect();
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        Ok(Self { n, twiddles, bitrev })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn transform(&self, buf: &mut [Complex], inverse: bool) {
        assert_eq!(buf.len(), self.n, "FFT buffer length");
        for i in 0..self.n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= self.n {
            let step = self.n / len;
            for start in (0..self.n).step_by(len) {
                for k in 0..len / 2 {
                    let mut w = self.twiddles[k * step];
                    if inverse {
                        w.im = -w.im;
                    }
                    let a = buf[start + k];
                    let b = buf[start + k + len / 2].mul(w);
                    buf[start + k] = Complex::new(a.re + b.re, a.im + b.im);
                    buf[start + k + len / 2] = Complex::new(a.re - b.re, a.im - b.im);
                }
            }
            len <<= 1;
        }
    }

    pub fn forward(&self, buf: &mut [Complex]) {
        self.transform(buf, false);
    }

    /// Inverse transform, scaled by `1/n`.
    pub fn inverse(&self, buf: &mut [Complex]) {
        self.transform(buf, true);
        let s = 1.0 / self.n as f64;
        for c in buf.iter_mut() {
            c.re *= s;
            c.im *= s;
        }
    }

    /// `|X_k|²` for `k = 0..=n/2` of a real frame.
    pub fn power_spectrum(&self, frame: &[f64], scratch: &mut Vec<Complex>) -> Vec<f64> {
        scratch.clear();
        scratch.extend(frame.iter().map(|&x| Complex::new(x, 0.0)));
        scratch.resize(self.n, Complex::default());
        self.forward(scratch);
        scratch[..=self.n / 2].iter().map(|c| c.norm_sqr()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn naive_dft(x: &[Complex]) -> Vec<Complex> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter().enumerate().fold(Complex::default(), |acc, (t, &v)| {
                    let a = -2.0 * PI * (k * t) as f64 / n as f64;
                    let w = Complex::new(libm::cos(a), libm::sin(a));
                    let p = v.mul(w);
                    Complex::new(acc.re + p.re, acc.im + p.im)
                })
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        let x: Vec<Complex> = (0..64)
            .map(|i| Complex::new(libm::sin(i as f64 * 0.37), libm::cos(i as f64 * 1.1)))
            .collect();
        let mut y = x.clone();
        Fft::new(64).unwrap().forward(&mut y);
        for (a, b) in y.iter().zip(naive_dft(&x)) {
            assert!((a.re - b.re).abs() < 1e-9 && (a.im - b.im).abs() < 1e-9);
        }
    }

    #[test]
    fn round_trip_and_rejects_non_power_of_two() {
        let fft = Fft::new(16).unwrap();
        let x: Vec<Complex> = (0..16).map(|i| Complex::new(i as f64, 0.0)).collect();
        let mut y = x.clone();
        fft.forward(&mut y);
        fft.inverse(&mut y);
        for (a, b) in x.iter().zip(&y) {
            assert!((a.re - b.re).abs() < 1e-12 && b.im.abs() < 1e-12);
        }
        assert_eq!(Fft::new(1000).unwrap_err(), Error::NotPowerOfTwo(1000));
        let mut one = vec![Complex::new(3.0, 0.0)];
        Fft::new(1).unwrap().forward(&mut one);
        assert_eq!(one[0].re, 3.0);
    }
}
