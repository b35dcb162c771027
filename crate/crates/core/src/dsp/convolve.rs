use alloc::vec::Vec;

use super::{Complex, Fft};

/// Full linear convolution, `a.len() + b.len() − 1` samples, by direct sum.
pub fn convolve_direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = alloc::vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &h) in b.iter().enumerate() {
            out[i + j] += x * h;
        }
    }
    out
}

/// Full linear convolution via a single zero-padded FFT.
pub fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 32 {
        return convolve_direct(a, b);
    }
    let n = out_len.next_power_of_two();
    let fft = Fft::new(n).expect("power of two");
    let load = |x: &[f64]| {
        let mut buf: Vec<Complex> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        buf.resize(n, Complex::default());
        fft.forward(&mut buf);
        buf
    };
    let fa = load(a);
    let fb = load(b);
    let mut prod: Vec<Complex> = fa
        .iter()
        .zip(&fb)
        .map(|(x, y)| Complex::new(x.re * y.re - x.im * y.im, x.re * y.im + x.im * y.re))
        .collect();
    fft.inverse(&mut prod);
    prod[..out_len].iter().map(|c| c.re).collect()
}
