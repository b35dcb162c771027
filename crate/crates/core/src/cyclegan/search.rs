use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::train::{spec_batch, train_mc, CycleGanModel, McTrainConfig, HALVE_RANGE, LR_RANGE};
use crate::device_sim::Corpus;
use crate::dsp::Spectrogram;
use crate::rng::{derive_seed, rng_from, tag};
use crate::tensor::Tape;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    Random,
    /// Sequential surrogate: past trials are split at a score quantile and
    /// candidates are ranked by the density ratio of the good to the bad
    /// group. Falls back to random draws until enough trials exist.
    QuantileSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub lr_init: f64,
    pub halve_interval: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: McTrainConfig,
    pub best_score: f64,
    pub trials: Vec<Trial>,
}

const STARTUP_TRIALS: usize = 3;
const GOOD_QUANTILE: f64 = 0.25;
const CANDIDATES: usize = 24;
const BANDWIDTH: f64 = 0.15;

/// Mean cycle L1 (model domain) over the two devices' segments, each
/// center-cropped to the training patch.
pub fn validation_cycle_loss(model: &CycleGanModel, corpus: &Corpus) -> Result<f64> {
    let mut total = 0.0;
    for (dev, first, second) in [
        (&model.device_a, &model.f, &model.g),
        (&model.device_b, &model.g, &model.f),
    ] {
        let specs: Vec<&Spectrogram> = corpus.by_device(dev).map(|e| &e.spectrogram).collect();
        if specs.is_empty() {
            return Err(Error::MissingDevice(dev.clone()));
        }
        let mut sum = 0.0;
        for chunk in specs.chunks(16) {
            let starts: Vec<usize> = chunk
                .iter()
                .map(|s| s.n_frames().saturating_sub(model.patch_frames) / 2)
                .collect();
            let x = spec_batch(chunk, &starts, model.patch_frames, &model.norm)?;
            let mut t = Tape::new();
            let v1 = first.params.bind_frozen(&mut t)?;
            let v2 = second.params.bind_frozen(&mut t)?;
            let xv = t.constant(x)?;
            let y = first.forward(&mut t, &v1, xv)?;
            let r = second.forward(&mut t, &v2, y)?;
            let l = t.l1(r, xv)?;
            sum += t.value(l).item()? as f64 * chunk.len() as f64;
        }
        total += sum / specs.len() as f64;
    }
    Ok(total)
}

fn to_unit(lr: f64, interval: usize) -> [f64; 2] {
    let (lo, hi) = LR_RANGE;
    [
        (libm::log(lr) - libm::log(lo)) / (libm::log(hi) - libm::log(lo)),
        (interval - HALVE_RANGE.0) as f64 / (HALVE_RANGE.1 - HALVE_RANGE.0) as f64,
    ]
}

fn from_unit(u: [f64; 2]) -> (f64, usize) {
    let (lo, hi) = LR_RANGE;
    let u0 = u[0].clamp(0.0, 1.0);
    let u1 = u[1].clamp(0.0, 1.0);
    let lr = libm::exp(libm::log(lo) + u0 * (libm::log(hi) - libm::log(lo)));
    let span = (HALVE_RANGE.1 - HALVE_RANGE.0) as f64;
    let interval = HALVE_RANGE.0 + libm::round(u1 * span) as usize;
    (lr.clamp(lo, hi), interval)
}

/// Gaussian-kernel density on the unit square with a flat floor.
fn density(points: &[[f64; 2]], x: [f64; 2]) -> f64 {
    let k: f64 = points
        .iter()
        .map(|p| {
            let d0 = (x[0] - p[0]) / BANDWIDTH;
            let d1 = (x[1] - p[1]) / BANDWIDTH;
            libm::exp(-0.5 * (d0 * d0 + d1 * d1))
        })
        .sum();
    k / points.len().max(1) as f64 + 1e-3
}

fn propose(trials: &[Trial], strategy: SearchStrategy, rng: &mut impl Rng) -> (f64, usize) {
    if strategy == SearchStrategy::Random || trials.len() < STARTUP_TRIALS {
        return McTrainConfig::draw_schedule(rng);
    }
    let mut sorted: Vec<&Trial> = trials.iter().collect();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));
    let n_good = libm::ceil(GOOD_QUANTILE * sorted.len() as f64).max(1.0) as usize;
    let good: Vec<[f64; 2]> = sorted[..n_good]
        .iter()
        .map(|t| to_unit(t.lr_init, t.halve_interval))
        .collect();
    let bad: Vec<[f64; 2]> = sorted[n_good..]
        .iter()
        .map(|t| to_unit(t.lr_init, t.halve_interval))
        .collect();
    let mut best = None;
    for _ in 0..CANDIDATES {
        let c = good[rng.random_range(0..good.len())];
        let z0: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
        let z1: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
        let u = [
            (c[0] + BANDWIDTH * z0).clamp(0.0, 1.0),
            (c[1] + BANDWIDTH * z1).clamp(0.0, 1.0),
        ];
        let ratio = density(&good, u) / density(&bad, u);
        if best.is_none_or(|(r, _)| ratio > r) {
            best = Some((ratio, u));
        }
    }
    from_unit(best.expect("at least one candidate").1)
}

/// Searches `(lr_init, halve_interval)` within their bounds, training with
/// `base` (whose `epochs` sets the shortened budget) and scoring each
/// proposal by validation cycle loss. Ties keep the earliest trial.
pub fn hyperparam_search(
    train: &Corpus,
    val: &Corpus,
    pair: (&str, &str),
    base: &McTrainConfig,
    n_iter: usize,
    strategy: SearchStrategy,
    seed: u64,
) -> Result<SearchOutcome> {
    if n_iter == 0 {
        return Err(Error::arg("hyperparameter search needs at least one iteration"));
    }
    let mut rng = rng_from(derive_seed(seed, &[tag("search")]));
    let mut trials: Vec<Trial> = Vec::with_capacity(n_iter);
    let mut best: Option<(f64, McTrainConfig)> = None;
    for _ in 0..n_iter {
        let (lr_init, halve_interval) = propose(&trials, strategy, &mut rng);
        let cfg = McTrainConfig {
            lr_init,
            halve_interval,
            ..base.clone()
        };
        let outcome = train_mc(train, pair, &cfg, &mut ())?;
        let score = validation_cycle_loss(&outcome.model, val)?;
        if !score.is_finite() {
            return Err(Error::arg(format!("non-finite validation score for lr {lr_init}")));
        }
        trials.push(Trial {
            lr_init,
            halve_interval,
            score,
        });
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, cfg));
        }
    }
    let (best_score, best) = best.expect("n_iter >= 1");
    Ok(SearchOutcome {
        best,
        best_score,
        trials,
    })
}
