use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{input_batch, Classifier, ClassifierCfg, Mode, RfnCfg};
use crate::augment::{mic_convert_choice, AugmentKind, AugmentSpec, ConversionCache, Stage};
use crate::device_sim::CorpusEntry;
use crate::dsp::{log_mel, mel_filterbank, stft, Spectrogram, Waveform, HOP, N_FFT};
use crate::rng::{derive_seed, rng_from, tag};
use crate::tensor::{Adam, AdamConfig, Tape, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SecTrainConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    pub weight_decay: f64,
    /// The learning rate is multiplied by `lr_gamma` every this many epochs.
    pub lr_step_epochs: usize,
    pub lr_gamma: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Applied online, in order within each stage.
    pub augment: Vec<AugmentSpec>,
    pub seed: u64,
    pub classifier: ClassifierCfg,
}

impl Default for SecTrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            betas: (0.9, 0.999),
            weight_decay: 1e-4,
            lr_step_epochs: 10,
            lr_gamma: 0.1,
            epochs: 30,
            batch_size: 32,
            augment: Vec::new(),
            seed: 0,
            classifier: ClassifierCfg::default(),
        }
    }
}

impl SecTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.lr_gamma > 0.0) || self.weight_decay < 0.0 {
            return Err(Error::arg(
                "lr and lr_gamma must be positive, weight_decay non-negative",
            ));
        }
        if self.lr_step_epochs == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::arg("lr_step_epochs, epochs and batch_size must be positive"));
        }
        for a in &self.augment {
            a.validate()?;
        }
        if self
            .augment
            .iter()
            .filter(|a| matches!(a.kind, AugmentKind::MicConvert { .. }))
            .count()
            > 1
        {
            return Err(Error::arg("at most one mic_convert augmentation per chain"));
        }
        self.effective_classifier().validate()
    }

    /// Learning rate for 0-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * libm::pow(self.lr_gamma, (epoch / self.lr_step_epochs) as f64)
    }

    /// The classifier config with an `rfn` entry of the augmentation chain
    /// folded in.
    pub fn effective_classifier(&self) -> ClassifierCfg {
        let mut c = self.classifier.clone();
        for a in &self.augment {
            if let AugmentKind::Rfn { relax, axes } = a.kind {
                c.rfn = Some(RfnCfg { relax, axes });
            }
        }
        c
    }
}

/// Recovers the waveform behind a corpus entry, for waveform-stage
/// augmentations.
pub trait WaveSource {
    fn waveform(&self, entry: &CorpusEntry) -> Result<Waveform>;
}

/// Precomputed conversions of the training items (same order) and the
/// device they were converted from.
pub struct McSource<'a> {
    pub cache: &'a ConversionCache,
    pub source_device: &'a str,
}

#[derive(Default)]
pub struct AugmentContext<'a> {
    pub waves: Option<&'a dyn WaveSource>,
    pub mc: Option<McSource<'a>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecEpoch {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
}

pub trait SecObserver {
    fn on_epoch(&mut self, _record: &SecEpoch) {}
}

impl SecObserver for () {}

pub struct SecOutcome {
    pub model: Classifier,
    pub history: Vec<SecEpoch>,
}

/// One training item after per-item augmentation.
fn augment_item(
    item: usize,
    entry: &CorpusEntry,
    cfg: &SecTrainConfig,
    ctx: &AugmentContext<'_>,
    epoch: usize,
) -> Result<Spectrogram> {
    let mut rng = rng_from(derive_seed(cfg.seed, &[tag("augment"), epoch as u64, item as u64]));
    let mut spec = None;
    let wave_specs: Vec<&AugmentSpec> = cfg
        .augment
        .iter()
        .filter(|a| a.kind.stage() == Stage::Waveform)
        .collect();
    if !wave_specs.is_empty() {
        let src = ctx
            .waves
            .ok_or_else(|| Error::arg("waveform augmentation needs a waveform source"))?;
        let mut w = src.waveform(entry)?;
        for a in wave_specs {
            w = a.apply_waveform(&w, &mut rng)?;
        }
        let fb = mel_filterbank(w.sample_rate(), N_FFT, entry.spectrogram.n_mels())?;
        spec = Some(log_mel(&stft(&w, N_FFT, HOP)?, &fb)?);
    }
    let mut spec = spec.unwrap_or_else(|| entry.spectrogram.clone());
    for a in &cfg.augment {
        match a.kind {
            AugmentKind::MicConvert { mode } => {
                let mc = ctx
                    .mc
                    .as_ref()
                    .ok_or_else(|| Error::arg("mic_convert needs trained converters"))?;
                if entry.device != mc.source_device {
                    continue;
                }
                if let Some(k) = mic_convert_choice(mode, mc.cache.targets().len(), a.p, &mut rng)? {
                    spec = mc
                        .cache
                        .get(k, item)
                        .ok_or_else(|| Error::arg(format!("conversion cache has no item {item}")))?
                        .clone();
                }
            }
            _ if a.kind.stage() == Stage::Spectrogram => spec = a.apply_spectrogram(&spec, &mut rng)?,
            _ => {}
        }
    }
    Ok(spec)
}

/// Supervised training on `train` with the configured augmentation chain
/// applied online. Every class in `0..n_classes` must be present.
pub fn train_sec(
    train: &[&CorpusEntry],
    cfg: &SecTrainConfig,
    ctx: &AugmentContext<'_>,
    observer: &mut dyn SecObserver,
) -> Result<SecOutcome> {
    cfg.validate()?;
    let ccfg = cfg.effective_classifier();
    let k = ccfg.n_classes;
    let mut seen = vec![false; k];
    for e in train {
        *seen.get_mut(e.class_id).ok_or(Error::AbsentClass(e.class_id))? = true;
    }
    if let Some(c) = seen.iter().position(|s| !s) {
        return Err(Error::AbsentClass(c));
    }
    let mut model = Classifier::new(&ccfg, &mut rng_from(derive_seed(cfg.seed, &[tag("classifier")])))?;
    let mut opt = Adam::new(AdamConfig::adamw(cfg.lr, cfg.betas, cfg.weight_decay), &model.params);
    let mut order_rng = rng_from(derive_seed(cfg.seed, &[tag("order")]));
    let batch_specs: Vec<(usize, &AugmentSpec)> = cfg
        .augment
        .iter()
        .enumerate()
        .filter(|(_, a)| a.kind.stage() == Stage::Batch)
        .collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        opt.config.lr = lr;
        order.shuffle(&mut order_rng);
        let (mut loss_sum, mut batches) = (0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let specs = chunk
                .iter()
                .map(|&i| augment_item(i, train[i], cfg, ctx, epoch))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&Spectrogram> = specs.iter().collect();
            let mut x = input_batch(&refs)?;
            let mut y = Tensor::from_fn(&[chunk.len(), k], |j| {
                (train[chunk[j / k]].class_id == j % k) as u8 as f32
            });
            if chunk.len() >= 2 {
                for &(s, a) in &batch_specs {
                    let mut rng = rng_from(derive_seed(
                        cfg.seed,
                        &[tag("batch_aug"), epoch as u64, b as u64, s as u64],
                    ));
                    (x, y) = a.apply_batch(&x, &y, &mut rng)?;
                }
            }
            let mut t = Tape::new();
            let vars = model.params.bind(&mut t)?;
            let xv = t.constant(x)?;
            let out = model.forward(&mut t, &vars, xv, Mode::Train)?;
            let loss = t.soft_cross_entropy(out.logits, &y)?;
            let lv = t.value(loss).item()? as f64;
            if !lv.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    detail: format!("classifier loss {lv} at lr {lr}"),
                });
            }
            model.update_running(&t, &out)?;
            let mut grads = t.backward(loss)?;
            let g = model.params.collect_grads(&mut grads, &vars);
            opt.step(&mut model.params, &g)?;
            loss_sum += lv;
            batches += 1;
        }
        let record = SecEpoch {
            epoch: epoch + 1,
            loss: loss_sum / batches as f64,
            lr,
        };
        observer.on_epoch(&record);
        history.push(record);
    }
    Ok(SecOutcome { model, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_schedule() {
        let full_scale = SecTrainConfig {
            lr_step_epochs: 25,
            ..Default::default()
        };
        assert_eq!(full_scale.lr_at(0), 1e-3);
        assert_eq!(full_scale.lr_at(24), 1e-3);
        // 0-based epoch 25 is the 26th epoch.
        assert!((full_scale.lr_at(25) - 1e-4).abs() < 1e-15);
        assert!((SecTrainConfig::default().lr_at(10) - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn rfn_spec_configures_classifier() {
        let cfg = SecTrainConfig {
            augment: vec![AugmentSpec::new(AugmentKind::by_name("rfn").unwrap(), 0.5).unwrap()],
            ..Default::default()
        };
        assert_eq!(cfg.effective_classifier().n_rfn(), 5);
        assert_eq!(SecTrainConfig::default().effective_classifier().n_rfn(), 0);
    }
}
