use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::dsp::Spectrogram;
use crate::tensor::{ReduceAxes, Scalar, Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpecAugmentCfg {
    pub n_time_masks: usize,
    pub n_freq_masks: usize,
    /// Upper bound on a time mask, in frames; each width is drawn from `0..=max`.
    pub max_time_width: usize,
    /// Upper bound on a frequency mask, in mel bins.
    pub max_freq_width: usize,
}

impl Default for SpecAugmentCfg {
    fn default() -> Self {
        Self {
            n_time_masks: 2,
            n_freq_masks: 2,
            max_time_width: 10,
            max_freq_width: 8,
        }
    }
}

/// Sets mel rows `start..start + width` to `fill`.
pub fn mask_freq(s: &mut Spectrogram, start: usize, width: usize, fill: f32) -> Result<()> {
    let (m, f) = (s.n_mels(), s.n_frames());
    if start + width > m {
        return Err(Error::shape("mask_freq", format!("rows {start}+{width} exceed {m}")));
    }
    s.values_mut()[start * f..(start + width) * f].fill(fill);
    Ok(())
}

/// Sets frame columns `start..start + width` to `fill`.
pub fn mask_time(s: &mut Spectrogram, start: usize, width: usize, fill: f32) -> Result<()> {
    let (m, f) = (s.n_mels(), s.n_frames());
    if start + width > f {
        return Err(Error::shape("mask_time", format!("frames {start}+{width} exceed {f}")));
    }
    let v = s.values_mut();
    for r in 0..m {
        v[r * f + start..r * f + start + width].fill(fill);
    }
    Ok(())
}

/// Time and frequency masking; masked cells take the mean of the input.
pub fn spec_augment(s: &Spectrogram, cfg: &SpecAugmentCfg, rng: &mut impl Rng) -> Result<Spectrogram> {
    if cfg.max_time_width > s.n_frames() || cfg.max_freq_width > s.n_mels() {
        return Err(Error::shape(
            "spec_augment",
            format!(
                "mask widths {}x{} exceed {}x{}",
                cfg.max_freq_width,
                cfg.max_time_width,
                s.n_mels(),
                s.n_frames()
            ),
        ));
    }
    let fill = s.mean() as f32;
    let mut out = s.clone();
    for _ in 0..cfg.n_freq_masks {
        let w = rng.random_range(0..=cfg.max_freq_width);
        let start = rng.random_range(0..=s.n_mels() - w);
        mask_freq(&mut out, start, w, fill)?;
    }
    for _ in 0..cfg.n_time_masks {
        let w = rng.random_range(0..=cfg.max_time_width);
        let start = rng.random_range(0..=s.n_frames() - w);
        mask_time(&mut out, start, w, fill)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterAugmentCfg {
    pub n_bands: (usize, usize),
    pub gain_db: (f64, f64),
}

impl Default for FilterAugmentCfg {
    fn default() -> Self {
        Self {
            n_bands: (3, 6),
            gain_db: (-6.0, 6.0),
        }
    }
}

/// Per-mel-bin gain in dB, linear between `(boundary, gain)` knots. Knot
/// positions must be strictly increasing and span `0..n_mels - 1`.
pub fn filter_gain_curve(n_mels: usize, knots: &[(usize, f64)]) -> Result<Vec<f64>> {
    let ok = knots.len() >= 2
        && knots[0].0 == 0
        && knots[knots.len() - 1].0 == n_mels - 1
        && knots.windows(2).all(|w| w[0].0 < w[1].0);
    if !ok {
        return Err(Error::arg(
            "filter knots must increase strictly from bin 0 to the last bin",
        ));
    }
    let mut curve = vec![0.0; n_mels];
    for w in knots.windows(2) {
        let ((a, ga), (b, gb)) = (w[0], w[1]);
        for (m, c) in curve.iter_mut().enumerate().take(b + 1).skip(a) {
            *c = ga + (gb - ga) * (m - a) as f64 / (b - a) as f64;
        }
    }
    Ok(curve)
}

/// Adds a dB gain curve to a natural-log spectrogram.
pub fn apply_gain_curve(s: &Spectrogram, curve_db: &[f64]) -> Result<Spectrogram> {
    if curve_db.len() != s.n_mels() {
        return Err(Error::shape(
            "filter_augment",
            format!("{} gains for {} bins", curve_db.len(), s.n_mels()),
        ));
    }
    let f = s.n_frames();
    let mut v = s.values().to_vec();
    for (row, &g) in v.chunks_mut(f).zip(curve_db) {
        let shift = (g * core::f64::consts::LN_10 / 10.0) as f32;
        row.iter_mut().for_each(|x| *x += shift);
    }
    s.with_values(v)
}

/// Random piecewise-linear mel-axis filter; `n_bands` bands with gains
/// drawn at their boundaries.
pub fn filter_augment(s: &Spectrogram, cfg: &FilterAugmentCfg, rng: &mut impl Rng) -> Result<Spectrogram> {
    let m = s.n_mels();
    let (lo, hi) = cfg.n_bands;
    if lo < 2 || lo > hi || hi >= m {
        return Err(Error::arg(format!("band count range {lo}..={hi} invalid for {m} bins")));
    }
    let bands = rng.random_range(lo..=hi);
    let mut interior: Vec<usize> = (1..m - 1).collect();
    interior.shuffle(rng);
    let mut bounds: Vec<usize> = interior[..bands - 1].to_vec();
    bounds.push(0);
    bounds.push(m - 1);
    bounds.sort_unstable();
    let (glo, ghi) = cfg.gain_db;
    let knots: Vec<(usize, f64)> = bounds
        .into_iter()
        .map(|b| (b, if glo == ghi { glo } else { rng.random_range(glo..=ghi) }))
        .collect();
    apply_gain_curve(s, &filter_gain_curve(m, &knots)?)
}

fn check_batch(x: &Tensor<f32>, y: Option<&Tensor<f32>>, perm: &[usize]) -> Result<usize> {
    let n = *x.shape().first().ok_or(Error::EmptyInput("batch"))?;
    if n < 2 {
        return Err(Error::arg("mixing needs a batch of at least two"));
    }
    if let Some(y) = y {
        if y.rank() != 2 || y.shape()[0] != n {
            return Err(Error::shape(
                "mixup",
                format!("labels {:?} for batch of {n}", y.shape()),
            ));
        }
    }
    if perm.len() != n || perm.iter().any(|&j| j >= n) {
        return Err(Error::arg("partner index out of range"));
    }
    Ok(n)
}

/// `x_i ← λx_i + (1−λ)x_perm[i]`, labels likewise.
pub fn mixup_with(x: &Tensor<f32>, y: &Tensor<f32>, lambda: f64, perm: &[usize]) -> Result<(Tensor<f32>, Tensor<f32>)> {
    check_batch(x, Some(y), perm)?;
    let mix = |t: &Tensor<f32>| {
        let n = t.shape()[0];
        let row = t.numel() / n;
        let (l, r) = (lambda as f32, (1.0 - lambda) as f32);
        let d = t.data();
        let mut out = d.to_vec();
        if lambda != 1.0 {
            for (i, &j) in perm.iter().enumerate() {
                for k in 0..row {
                    out[i * row + k] = l * d[i * row + k] + r * d[j * row + k];
                }
            }
        }
        Tensor::new(t.shape(), out)
    };
    Ok((mix(x)?, mix(y)?))
}

/// MixUp with one `λ ~ Beta(α, α)` per batch and a random partner permutation.
pub fn mixup(x: &Tensor<f32>, y: &Tensor<f32>, alpha: f64, rng: &mut impl Rng) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let n = *x.shape().first().ok_or(Error::EmptyInput("batch"))?;
    let lambda = beta(alpha, rng)?;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    mixup_with(x, y, lambda, &perm)
}

fn beta(alpha: f64, rng: &mut impl Rng) -> Result<f64> {
    let d = Beta::new(alpha, alpha).map_err(|_| Error::arg(format!("beta parameter {alpha} must be positive")))?;
    Ok(d.sample(rng))
}

/// Guards the per-frequency std of a flat row.
const MIXSTYLE_EPS: f64 = 1e-6;

/// Per `(sample, channel, mel)` mean and std over time of an `[n, c, f, t]` batch.
pub fn freq_stats(x: &Tensor<f32>) -> Result<(Vec<f64>, Vec<f64>)> {
    let [_, _, _, t] = x.dims4()?;
    Ok(x.data()
        .chunks(t)
        .map(|row| {
            let mu = row.iter().map(|&v| v as f64).sum::<f64>() / t as f64;
            let var = row.iter().map(|&v| (v as f64 - mu) * (v as f64 - mu)).sum::<f64>() / t as f64;
            (mu, libm::sqrt(var + MIXSTYLE_EPS))
        })
        .unzip())
}

/// Re-standardizes sample `i` to `λ_i·stats_i + (1−λ_i)·stats_perm[i]`.
pub fn freq_mixstyle_with(x: &Tensor<f32>, lambdas: &[f64], perm: &[usize]) -> Result<Tensor<f32>> {
    let n = check_batch(x, None, perm)?;
    if lambdas.len() != n {
        return Err(Error::arg("one mixing weight per sample"));
    }
    let [_, c, f, t] = x.dims4()?;
    let (mu, sd) = freq_stats(x)?;
    let rows = c * f;
    let mut out = x.data().to_vec();
    for i in 0..n {
        let (l, j) = (lambdas[i], perm[i]);
        if l == 1.0 || j == i {
            continue;
        }
        for r in 0..rows {
            let (a, b) = (i * rows + r, j * rows + r);
            let m2 = l * mu[a] + (1.0 - l) * mu[b];
            let s2 = l * sd[a] + (1.0 - l) * sd[b];
            for v in &mut out[a * t..(a + 1) * t] {
                *v = (((*v as f64 - mu[a]) / sd[a]) * s2 + m2) as f32;
            }
        }
    }
    Tensor::new(x.shape(), out)
}

/// Freq-MixStyle on an `[n, c, f, t]` batch; fires with probability `p`.
pub fn freq_mixstyle(x: &Tensor<f32>, alpha: f64, p: f64, rng: &mut impl Rng) -> Result<Tensor<f32>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::arg(format!("probability {p} outside [0, 1]")));
    }
    if rng.random::<f64>() >= p {
        return Ok(x.clone());
    }
    let n = *x.shape().first().ok_or(Error::EmptyInput("batch"))?;
    let lambdas = (0..n).map(|_| beta(alpha, rng)).collect::<Result<Vec<_>>>()?;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    freq_mixstyle_with(x, &lambdas, &perm)
}

/// Which axes share statistics in relaxed frequency-wise normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RfnAxes {
    /// One mean/std per (sample, frequency) over channels and time.
    #[default]
    Joint,
    /// One mean/std per (sample, channel, frequency) over time.
    PerChannel,
}

impl RfnAxes {
    pub fn reduce(self) -> ReduceAxes {
        match self {
            Self::Joint => ReduceAxes::FREQ_JOINT,
            Self::PerChannel => ReduceAxes::FREQ_PER_CHANNEL,
        }
    }
}

pub const RFN_EPS: f64 = 1e-5;

/// `relax·x + (1−relax)·IFN(x)` on an `[n, c, f, t]` feature map.
pub fn rfn<T: Scalar>(t: &mut Tape<T>, x: Var, relax: f64, axes: RfnAxes) -> Result<Var> {
    if !(0.0..=1.0).contains(&relax) {
        return Err(Error::arg(format!("relax {relax} outside [0, 1]")));
    }
    if relax == 1.0 {
        return Ok(x);
    }
    let ifn = t.standardize(x, axes.reduce(), T::of(RFN_EPS))?;
    if relax == 0.0 {
        return Ok(ifn);
    }
    let a = t.scale(x, T::of(relax))?;
    let b = t.scale(ifn, T::of(1.0 - relax))?;
    t.add(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use proptest::prelude::*;
    use rand::Rng;

    fn spec(m: usize, f: usize, seed: u64) -> Spectrogram {
        let mut rng = rng_from(seed);
        let v = (0..m * f).map(|_| rng.random_range(-8.0f32..2.0)).collect();
        Spectrogram::new(m, f, 256, 22_050, v).unwrap()
    }

    fn batch(shape: &[usize], seed: u64) -> Tensor<f32> {
        let mut rng = rng_from(seed);
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-3.0f32..3.0)).collect()).unwrap()
    }

    #[test]
    fn spec_augment_identities() {
        let s = spec(20, 30, 1);
        let none = SpecAugmentCfg {
            n_time_masks: 0,
            n_freq_masks: 0,
            ..Default::default()
        };
        assert_eq!(spec_augment(&s, &none, &mut rng_from(0)).unwrap(), s);
        let zero = SpecAugmentCfg {
            max_time_width: 0,
            max_freq_width: 0,
            ..Default::default()
        };
        assert_eq!(spec_augment(&s, &zero, &mut rng_from(0)).unwrap(), s);
        let wide = SpecAugmentCfg {
            max_time_width: 31,
            ..Default::default()
        };
        assert!(spec_augment(&s, &wide, &mut rng_from(0)).is_err());
    }

    #[test]
    fn freq_mask_rows() {
        let s = spec(20, 30, 2);
        let fill = s.mean() as f32;
        let mut out = s.clone();
        mask_freq(&mut out, 5, 3, fill).unwrap();
        let filled: Vec<usize> = (0..20).filter(|&r| out.row(r).iter().all(|&v| v == fill)).collect();
        assert_eq!(filled, vec![5, 6, 7]);
        for r in (0..20).filter(|r| !(5..8).contains(r)) {
            assert_eq!(out.row(r), s.row(r));
        }
    }

    #[test]
    fn spec_augment_touches_only_masked_cells() {
        let s = spec(40, 50, 3);
        let fill = s.mean() as f32;
        let out = spec_augment(&s, &SpecAugmentCfg::default(), &mut rng_from(9)).unwrap();
        assert_eq!(out.values().len(), s.values().len());
        for (a, b) in out.values().iter().zip(s.values()) {
            assert!(a.to_bits() == b.to_bits() || *a == fill);
        }
        assert_eq!(
            out,
            spec_augment(&s, &SpecAugmentCfg::default(), &mut rng_from(9)).unwrap()
        );
    }

    #[test]
    fn mixup_cases() {
        let x = batch(&[4, 1, 3, 5], 4);
        let y = Tensor::new(&[4, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let perm = [1, 0, 3, 2];
        let (x1, y1) = mixup_with(&x, &y, 1.0, &perm).unwrap();
        assert_eq!((x1, y1), (x.clone(), y.clone()));
        let (_, yh) = mixup_with(&x, &y, 0.5, &perm).unwrap();
        assert!(yh.data().iter().all(|&v| v == 0.5));
        let (xm, ym) = mixup(&x, &y, 0.2, &mut rng_from(5)).unwrap();
        assert_eq!(xm.shape(), x.shape());
        for row in ym.data().chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-6);
        }
        assert!(mixup(
            &x.slice_outer(0, 1).unwrap(),
            &y.slice_outer(0, 1).unwrap(),
            0.2,
            &mut rng_from(0)
        )
        .is_err());
    }

    #[test]
    fn filter_gain_cases() {
        let s = spec(16, 10, 6);
        let flat = filter_gain_curve(16, &[(0, 0.0), (7, 0.0), (15, 0.0)]).unwrap();
        assert_eq!(apply_gain_curve(&s, &flat).unwrap(), s);
        let g = 4.0;
        let curve = filter_gain_curve(16, &[(0, g), (15, g)]).unwrap();
        let out = apply_gain_curve(&s, &curve).unwrap();
        // 4 dB power gain is 0.921034 in natural-log units.
        for (a, b) in out.values().iter().zip(s.values()) {
            assert!(((a - b) as f64 - 0.921_034).abs() < 1e-5);
        }
        let knots = [(0, -3.0), (4, 6.0), (11, -6.0), (15, 1.0)];
        let c = filter_gain_curve(16, &knots).unwrap();
        for w in knots.windows(2) {
            for m in w[0].0 + 1..w[1].0 {
                assert!((c[m - 1] - 2.0 * c[m] + c[m + 1]).abs() < 1e-12);
            }
        }
        assert!(filter_gain_curve(16, &[(0, 0.0), (14, 0.0)]).is_err());
        let zero = FilterAugmentCfg {
            gain_db: (0.0, 0.0),
            ..Default::default()
        };
        assert_eq!(filter_augment(&s, &zero, &mut rng_from(1)).unwrap(), s);
    }

    #[test]
    fn freq_mixstyle_cases() {
        let x = batch(&[3, 2, 4, 12], 7);
        let same = freq_mixstyle_with(&x, &[1.0, 1.0, 1.0], &[1, 2, 0]).unwrap();
        assert_eq!(same, x);
        let self_partner = freq_mixstyle_with(&x, &[0.3, 0.5, 0.7], &[0, 1, 2]).unwrap();
        assert_eq!(self_partner, x);
        let (l, perm) = ([0.3, 0.5, 0.9], [1, 2, 0]);
        let out = freq_mixstyle_with(&x, &l, &perm).unwrap();
        let (mu, _) = freq_stats(&x).unwrap();
        let (mu_out, _) = freq_stats(&out).unwrap();
        for i in 0..3 {
            for r in 0..8 {
                let want = l[i] * mu[i * 8 + r] + (1.0 - l[i]) * mu[perm[i] * 8 + r];
                assert!((mu_out[i * 8 + r] - want).abs() < 1e-4);
            }
        }
        assert_eq!(freq_mixstyle(&x, 0.3, 0.0, &mut rng_from(0)).unwrap(), x);
    }

    #[test]
    fn rfn_cases() {
        let x = batch(&[2, 3, 4, 6], 8).cast::<f64>();
        let run = |relax: f64, axes| {
            let mut t = Tape::new();
            let v = t.constant(x.clone()).unwrap();
            let o = rfn(&mut t, v, relax, axes).unwrap();
            t.value(o).clone()
        };
        assert_eq!(run(1.0, RfnAxes::Joint), x);
        for axes in [RfnAxes::Joint, RfnAxes::PerChannel] {
            let zero = run(0.0, axes);
            let half = run(0.5, axes);
            let d = zero.data();
            // Per-frequency means over the normalized axes.
            for n in 0..2 {
                for f in 0..4 {
                    let mut sums = [0.0; 3];
                    for c in 0..3 {
                        sums[c] = (0..6).map(|k| d[((n * 3 + c) * 4 + f) * 6 + k]).sum::<f64>() / 6.0;
                    }
                    match axes {
                        RfnAxes::Joint => assert!((sums.iter().sum::<f64>() / 3.0).abs() < 1e-4),
                        RfnAxes::PerChannel => assert!(sums.iter().all(|s| s.abs() < 1e-4)),
                    }
                }
            }
            for ((h, z), o) in half.data().iter().zip(d).zip(x.data()) {
                assert!((h - 0.5 * (z + o)).abs() < 1e-6);
            }
        }
        let mut t = Tape::<f64>::new();
        let v = t.constant(x).unwrap();
        assert!(rfn(&mut t, v, 1.5, RfnAxes::Joint).is_err());
    }

    proptest! {
        #[test]
        fn augmentations_preserve_shape(seed in 0u64..500, m in 10usize..30, f in 12usize..40) {
            let s = spec(m, f, seed);
            let mut rng = rng_from(seed);
            let a = spec_augment(&s, &SpecAugmentCfg { max_freq_width: 8.min(m), ..Default::default() }, &mut rng).unwrap();
            prop_assert_eq!((a.n_mels(), a.n_frames()), (m, f));
            let b = filter_augment(&s, &FilterAugmentCfg::default(), &mut rng).unwrap();
            prop_assert_eq!((b.n_mels(), b.n_frames()), (m, f));
        }
    }
}
