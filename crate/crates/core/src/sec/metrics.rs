use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// `counts[true][pred]`, square with side `n_classes`.
pub fn confusion(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<Vec<Vec<u32>>> {
    if preds.len() != labels.len() {
        return Err(Error::shape(
            "confusion",
            format!("{} predictions, {} labels", preds.len(), labels.len()),
        ));
    }
    let mut m = vec![vec![0u32; n_classes]; n_classes];
    for (&p, &l) in preds.iter().zip(labels) {
        if p >= n_classes || l >= n_classes {
            return Err(Error::arg(format!("class index out of range for {n_classes} classes")));
        }
        m[l][p] += 1;
    }
    Ok(m)
}

/// Support-weighted mean of per-class F1 from a confusion matrix. Classes
/// without support carry zero weight; a class never predicted and never
/// correct has F1 0.
pub fn weighted_f1_from_confusion(m: &[Vec<u32>]) -> Result<f64> {
    let total: u64 = m.iter().flatten().map(|&c| c as u64).sum();
    if total == 0 {
        return Err(Error::EmptyInput("weighted_f1"));
    }
    let k = m.len();
    let mut score = 0.0;
    for c in 0..k {
        let support: u64 = m[c].iter().map(|&v| v as u64).sum();
        if support == 0 {
            continue;
        }
        let tp = m[c][c] as f64;
        let predicted: u64 = (0..k).map(|r| m[r][c] as u64).sum();
        // 2TP / (2TP + FP + FN) equals the harmonic mean of P and R and is 0
        // when TP is 0.
        let f1 = 2.0 * tp / (predicted as f64 + support as f64);
        score += f1 * support as f64 / total as f64;
    }
    Ok(score)
}

pub fn weighted_f1(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::EmptyInput("weighted_f1"));
    }
    let n_classes = preds.iter().chain(labels).max().map_or(0, |&m| m + 1);
    weighted_f1_from_confusion(&confusion(preds, labels, n_classes)?)
}

/// Two-sided 97.5% quantiles of Student's t for 1..=30 degrees of freedom.
const T975: [f64; 30] = [
    12.706_204_736,
    4.302_652_730,
    3.182_446_305,
    2.776_445_105,
    2.570_581_836,
    2.446_911_851,
    2.364_624_252,
    2.306_004_135,
    2.262_157_163,
    2.228_138_852,
    2.200_985_160,
    2.178_812_830,
    2.160_368_656,
    2.144_786_688,
    2.131_449_546,
    2.119_905_299,
    2.109_815_578,
    2.100_922_040,
    2.093_024_054,
    2.085_963_447,
    2.079_613_845,
    2.073_873_068,
    2.068_657_610,
    2.063_898_562,
    2.059_538_553,
    2.055_529_439,
    2.051_830_516,
    2.048_407_142,
    2.045_229_642,
    2.042_272_456,
];

/// 0.975 quantile of Student's t with `df` degrees of freedom. Beyond the
/// table, the Cornish-Fisher expansion around the normal quantile is
/// accurate to better than 1e-5.
pub fn t_quantile_975(df: usize) -> Result<f64> {
    if df == 0 {
        return Err(Error::arg("t quantile needs at least one degree of freedom"));
    }
    if df <= T975.len() {
        return Ok(T975[df - 1]);
    }
    let z: f64 = 1.959_963_984_540_054;
    let n = df as f64;
    let z3 = z * z * z;
    let (z5, z7) = (z3 * z * z, z3 * z3 * z);
    Ok(z + (z3 + z) / (4.0 * n)
        + (5.0 * z5 + 16.0 * z3 + 3.0 * z) / (96.0 * n * n)
        + (3.0 * z7 + 19.0 * z5 + 17.0 * z3 - 15.0 * z) / (384.0 * n * n * n))
}

/// Sample mean and the Student-t 95% half-width `t·s/√n`. A single value,
/// or all-identical values, have half-width 0.
pub fn mean_ci95(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("mean_ci95"));
    }
    // Identical values: exact mean, zero width, free of rounding in the sum.
    if xs.iter().all(|&x| x == xs[0]) {
        return Ok((xs[0], 0.0));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, t_quantile_975(xs.len() - 1)? * libm::sqrt(var / n)))
}
