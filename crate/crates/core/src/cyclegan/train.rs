use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::ReplayBuffer;
use super::losses::{cycle_loss, discriminator_loss, generator_adv_loss, total_generator_loss, BoundGenerator};
use super::nets::{Discriminator, DiscriminatorCfg, Generator, GeneratorCfg};
use crate::device_sim::Corpus;
use crate::dsp::Spectrogram;
use crate::rng::{derive_seed, rng_from, tag};
use crate::tensor::{Adam, AdamConfig, Tape, Tensor};
use crate::{Error, Result};

pub const LR_RANGE: (f64, f64) = (2e-5, 2e-3);
pub const HALVE_RANGE: (usize, usize) = (10, 50);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McTrainConfig {
    pub lr_init: f64,
    /// Epochs between learning-rate halvings, fixed for the run.
    pub halve_interval: usize,
    pub betas: (f64, f64),
    pub batch_size: usize,
    pub lambda_cycle: f64,
    pub epochs: usize,
    pub seed: u64,
    pub checkpoint_every: usize,
    /// Training crops are `n_mels × patch_frames`.
    pub patch_frames: usize,
    pub buffer_capacity: usize,
    pub generator: GeneratorCfg,
    pub discriminator: DiscriminatorCfg,
}

impl Default for McTrainConfig {
    fn default() -> Self {
        Self {
            lr_init: 2e-4,
            halve_interval: 25,
            betas: (0.5, 0.999),
            batch_size: 16,
            lambda_cycle: 10.0,
            epochs: 30,
            seed: 0,
            checkpoint_every: 10,
            patch_frames: 80,
            buffer_capacity: ReplayBuffer::<f32>::DEFAULT_CAPACITY,
            generator: GeneratorCfg::default(),
            discriminator: DiscriminatorCfg::default(),
        }
    }
}

impl McTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = LR_RANGE;
        if !(lo..=hi).contains(&self.lr_init) {
            return Err(Error::arg(format!("lr_init {} outside [{lo}, {hi}]", self.lr_init)));
        }
        if !(HALVE_RANGE.0..=HALVE_RANGE.1).contains(&self.halve_interval) {
            return Err(Error::arg(format!(
                "halve_interval {} outside [{}, {}]",
                self.halve_interval, HALVE_RANGE.0, HALVE_RANGE.1
            )));
        }
        if !(self.lambda_cycle > 0.0) {
            return Err(Error::arg("lambda_cycle must be positive"));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.checkpoint_every == 0 {
            return Err(Error::arg("batch_size, epochs and checkpoint_every must be positive"));
        }
        if self.patch_frames == 0 || self.patch_frames % self.generator.size_multiple() != 0 {
            return Err(Error::arg(format!(
                "patch_frames {} must be a positive multiple of {}",
                self.patch_frames,
                self.generator.size_multiple()
            )));
        }
        self.generator.validate()
    }

    /// Draws `(lr_init, halve_interval)`: the rate log-uniformly, the
    /// interval uniformly over the integers in range.
    pub fn draw_schedule(rng: &mut impl Rng) -> (f64, usize) {
        let (lo, hi) = LR_RANGE;
        let lr = libm::exp(rng.random_range(libm::log(lo)..=libm::log(hi)));
        let interval = rng.random_range(HALVE_RANGE.0..=HALVE_RANGE.1);
        (lr.clamp(lo, hi), interval)
    }

    /// Learning rate in effect during 0-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let halvings = (epoch / self.halve_interval) as i32;
        self.lr_init * libm::pow(0.5, halvings as f64)
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig::adam(self.lr_init, self.betas)
    }
}

/// Global affine map from log-mel values to the model domain,
/// `u = (x − center) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainNorm {
    pub center: f32,
    pub scale: f32,
}

impl DomainNorm {
    pub fn fit<'a>(specs: impl Iterator<Item = &'a Spectrogram>) -> Result<Self> {
        let (mut n, mut s1, mut s2) = (0usize, 0.0f64, 0.0f64);
        for s in specs {
            for &v in s.values() {
                n += 1;
                s1 += v as f64;
                s2 += (v as f64) * (v as f64);
            }
        }
        if n == 0 {
            return Err(Error::EmptyInput("domain normalization"));
        }
        let mean = s1 / n as f64;
        let var = (s2 / n as f64 - mean * mean).max(0.0);
        let std = libm::sqrt(var);
        if !(std > 1e-6) {
            return Err(Error::DegenerateNorm);
        }
        Ok(Self {
            center: mean as f32,
            scale: std as f32,
        })
    }

    pub fn forward(&self, x: f32) -> f32 {
        (x - self.center) / self.scale
    }

    pub fn inverse(&self, u: f32) -> f32 {
        u * self.scale + self.center
    }
}

/// Generators `F: A → B`, `G: B → A` and discriminators for both domains.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleGanModel {
    pub device_a: String,
    pub device_b: String,
    pub norm: DomainNorm,
    pub n_mels: usize,
    pub patch_frames: usize,
    pub f: Generator<f32>,
    pub g: Generator<f32>,
    pub d_a: Discriminator<f32>,
    pub d_b: Discriminator<f32>,
}

impl CycleGanModel {
    pub fn new(cfg: &McTrainConfig, pair: (&str, &str), norm: DomainNorm, n_mels: usize) -> Result<Self> {
        cfg.validate()?;
        if n_mels % cfg.generator.size_multiple() != 0 {
            return Err(Error::arg(format!(
                "{n_mels} mel bands not divisible by {}",
                cfg.generator.size_multiple()
            )));
        }
        let mut rng = rng_from(derive_seed(cfg.seed, &[tag("init")]));
        Ok(Self {
            device_a: pair.0.to_string(),
            device_b: pair.1.to_string(),
            norm,
            n_mels,
            patch_frames: cfg.patch_frames,
            f: Generator::new(&cfg.generator, n_mels, "F", &mut rng)?,
            g: Generator::new(&cfg.generator, n_mels, "G", &mut rng)?,
            d_a: Discriminator::new(&cfg.discriminator, "D_A", &mut rng)?,
            d_b: Discriminator::new(&cfg.discriminator, "D_B", &mut rng)?,
        })
    }
}

/// One Adam state per network.
#[derive(Debug, Clone, PartialEq)]
pub struct McOptim {
    pub f: Adam<f32>,
    pub g: Adam<f32>,
    pub d_a: Adam<f32>,
    pub d_b: Adam<f32>,
}

impl McOptim {
    pub fn new(cfg: AdamConfig, m: &CycleGanModel) -> Self {
        Self {
            f: Adam::new(cfg, &m.f.params),
            g: Adam::new(cfg, &m.g.params),
            d_a: Adam::new(cfg, &m.d_a.params),
            d_b: Adam::new(cfg, &m.d_b.params),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        for o in [&mut self.f, &mut self.g, &mut self.d_a, &mut self.d_b] {
            o.set_lr(lr);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub g_total: f64,
    pub cycle: f64,
    pub d_a: f64,
    pub d_b: f64,
}

/// Per-epoch means of the step losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub loss_g_total: f64,
    pub loss_cycle: f64,
    pub loss_d_a: f64,
    pub loss_d_b: f64,
    pub lr: f64,
}

/// Hooks called by [`train_mc`] between epochs.
pub trait TrainObserver {
    fn on_epoch(&mut self, _record: &EpochRecord) {}

    /// Called every `checkpoint_every` epochs and after the last one.
    fn on_checkpoint(&mut self, _epoch: usize, _model: &CycleGanModel, _optim: &McOptim) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

#[derive(Debug, Clone)]
pub struct McTrainOutcome {
    pub model: CycleGanModel,
    pub optim: McOptim,
    pub history: Vec<EpochRecord>,
}

/// Stacks normalized `n_mels × width` crops into `[n, 1, n_mels, width]`.
pub fn spec_batch(specs: &[&Spectrogram], starts: &[usize], width: usize, norm: &DomainNorm) -> Result<Tensor<f32>> {
    let n_mels = specs.first().ok_or(Error::EmptyInput("spec_batch"))?.n_mels();
    let mut data = Vec::with_capacity(specs.len() * n_mels * width);
    for (s, &start) in specs.iter().zip(starts) {
        if s.n_mels() != n_mels || start + width > s.n_frames() {
            return Err(Error::shape(
                "spec_batch",
                format!("crop {start}+{width} of {}x{}", s.n_mels(), s.n_frames()),
            ));
        }
        for m in 0..n_mels {
            data.extend(s.row(m)[start..start + width].iter().map(|&v| norm.forward(v)));
        }
    }
    Tensor::new(&[specs.len(), 1, n_mels, width], data)
}

/// Generator update on `total_generator_loss`; discriminators are bound as
/// constants and left untouched. Returns the losses and the fakes
/// `(F(a), G(b))`.
pub fn generator_step(
    model: &mut CycleGanModel,
    optim: &mut McOptim,
    a: &Tensor<f32>,
    b: &Tensor<f32>,
    lambda: f32,
) -> Result<(f64, f64, Tensor<f32>, Tensor<f32>)> {
    let mut t = Tape::new();
    let fv = model.f.params.bind(&mut t)?;
    let gv = model.g.params.bind(&mut t)?;
    let dav = model.d_a.params.bind_frozen(&mut t)?;
    let dbv = model.d_b.params.bind_frozen(&mut t)?;
    let xa = t.constant(a.clone())?;
    let xb = t.constant(b.clone())?;
    let f = BoundGenerator {
        net: &model.f,
        vars: &fv,
    };
    let g = BoundGenerator {
        net: &model.g,
        vars: &gv,
    };
    let cyc = cycle_loss(&mut t, &f, &g, xa, xb)?;
    let score_b = model.d_b.forward(&mut t, &dbv, cyc.fake_b)?;
    let score_a = model.d_a.forward(&mut t, &dav, cyc.fake_a)?;
    let adv_f = generator_adv_loss(&mut t, score_b)?;
    let adv_g = generator_adv_loss(&mut t, score_a)?;
    let total = total_generator_loss(&mut t, adv_f, adv_g, cyc.loss, lambda)?;
    let total_v = t.value(total).item()? as f64;
    let cycle_v = t.value(cyc.loss).item()? as f64;
    let fake_b = t.value(cyc.fake_b).clone();
    let fake_a = t.value(cyc.fake_a).clone();
    let mut grads = t.backward(total)?;
    let gf = model.f.params.collect_grads(&mut grads, &fv);
    let gg = model.g.params.collect_grads(&mut grads, &gv);
    optim.f.step(&mut model.f.params, &gf)?;
    optim.g.step(&mut model.g.params, &gg)?;
    Ok((total_v, cycle_v, fake_b, fake_a))
}

/// Discriminator update on least-squares losses; generators untouched.
pub fn discriminator_step(
    model: &mut CycleGanModel,
    optim: &mut McOptim,
    real_a: &Tensor<f32>,
    real_b: &Tensor<f32>,
    fake_a: &Tensor<f32>,
    fake_b: &Tensor<f32>,
) -> Result<(f64, f64)> {
    let mut t = Tape::new();
    let dav = model.d_a.params.bind(&mut t)?;
    let dbv = model.d_b.params.bind(&mut t)?;
    let side = |t: &mut Tape<f32>, d: &Discriminator<f32>, vars: &[_], real: &Tensor<f32>, fake: &Tensor<f32>| {
        let r = t.constant(real.clone())?;
        let f = t.constant(fake.clone())?;
        let sr = d.forward(t, vars, r)?;
        let sf = d.forward(t, vars, f)?;
        discriminator_loss(t, sr, sf)
    };
    let la = side(&mut t, &model.d_a, &dav, real_a, fake_a)?;
    let lb = side(&mut t, &model.d_b, &dbv, real_b, fake_b)?;
    let (va, vb) = (t.value(la).item()? as f64, t.value(lb).item()? as f64);
    let total = t.add(la, lb)?;
    let mut grads = t.backward(total)?;
    let ga = model.d_a.params.collect_grads(&mut grads, &dav);
    let gb = model.d_b.params.collect_grads(&mut grads, &dbv);
    optim.d_a.step(&mut model.d_a.params, &ga)?;
    optim.d_b.step(&mut model.d_b.params, &gb)?;
    Ok((va, vb))
}

/// Index stream of `len` entries drawn from back-to-back shuffles of `0..n`.
fn stream(n: usize, len: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut out = Vec::with_capacity(len + n);
    while out.len() < len {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        out.extend(perm);
    }
    out.truncate(len);
    out
}

fn diverged(epoch: usize, batch: usize, e: Error, last: Option<&StepLosses>, lr: f64) -> Error {
    let detail = match e {
        Error::Diverged { detail, .. } => detail,
        other => format!("{other}; lr {lr}, last losses {last:?}"),
    };
    Error::Diverged {
        epoch: epoch + 1,
        batch,
        detail,
    }
}

/// Unpaired CycleGAN training of `A → B` on the two devices' segments.
/// Each epoch draws the two domain streams independently; no segment
/// correspondence is used.
pub fn train_mc(
    corpus: &Corpus,
    pair: (&str, &str),
    cfg: &McTrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<McTrainOutcome> {
    cfg.validate()?;
    for d in [pair.0, pair.1] {
        if !corpus.has_device(d) {
            return Err(Error::MissingDevice(d.to_string()));
        }
    }
    let data_a: Vec<&Spectrogram> = corpus.by_device(pair.0).map(|e| &e.spectrogram).collect();
    let data_b: Vec<&Spectrogram> = corpus.by_device(pair.1).map(|e| &e.spectrogram).collect();
    let n_mels = data_a[0].n_mels();
    let min_frames = data_a.iter().chain(&data_b).map(|s| s.n_frames()).min().unwrap_or(0);
    if min_frames < cfg.patch_frames {
        return Err(Error::shape(
            "train_mc",
            format!(
                "segments of {min_frames} frames shorter than patch {}",
                cfg.patch_frames
            ),
        ));
    }
    let norm = DomainNorm::fit(data_a.iter().chain(&data_b).copied())?;
    let mut model = CycleGanModel::new(cfg, pair, norm, n_mels)?;
    let mut optim = McOptim::new(cfg.adam(), &model);
    let mut buf_a = ReplayBuffer::new(cfg.buffer_capacity, derive_seed(cfg.seed, &[tag("buffer_a")]));
    let mut buf_b = ReplayBuffer::new(cfg.buffer_capacity, derive_seed(cfg.seed, &[tag("buffer_b")]));
    let mut rng_a = rng_from(derive_seed(cfg.seed, &[tag("stream_a")]));
    let mut rng_b = rng_from(derive_seed(cfg.seed, &[tag("stream_b")]));
    let bs = cfg.batch_size;
    let n_batches = data_a.len().max(data_b.len()).div_ceil(bs);
    let lambda = cfg.lambda_cycle as f32;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        optim.set_lr(lr);
        let ia = stream(data_a.len(), n_batches * bs, &mut rng_a);
        let ib = stream(data_b.len(), n_batches * bs, &mut rng_b);
        let mut sums = StepLosses {
            g_total: 0.0,
            cycle: 0.0,
            d_a: 0.0,
            d_b: 0.0,
        };
        let mut last = None;
        for batch in 0..n_batches {
            let pick = |idx: &[usize], data: &[&Spectrogram], rng: &mut crate::rng::ChaCha8Rng| {
                let specs: Vec<&Spectrogram> = idx.iter().map(|&i| data[i]).collect();
                let starts: Vec<usize> = specs
                    .iter()
                    .map(|s| rng.random_range(0..=s.n_frames() - cfg.patch_frames))
                    .collect();
                spec_batch(&specs, &starts, cfg.patch_frames, &norm)
            };
            let step = (|| {
                let a = pick(&ia[batch * bs..(batch + 1) * bs], &data_a, &mut rng_a)?;
                let b = pick(&ib[batch * bs..(batch + 1) * bs], &data_b, &mut rng_b)?;
                let (g_total, cycle, fake_b, fake_a) = generator_step(&mut model, &mut optim, &a, &b, lambda)?;
                let fake_a = buf_a.query_batch(&fake_a)?;
                let fake_b = buf_b.query_batch(&fake_b)?;
                let (d_a, d_b) = discriminator_step(&mut model, &mut optim, &a, &b, &fake_a, &fake_b)?;
                let losses = StepLosses {
                    g_total,
                    cycle,
                    d_a,
                    d_b,
                };
                if [g_total, cycle, d_a, d_b].iter().any(|v| !v.is_finite()) {
                    return Err(Error::Diverged {
                        epoch,
                        batch,
                        detail: format!("non-finite loss {losses:?} at lr {lr}"),
                    });
                }
                Ok(losses)
            })()
            .map_err(|e| diverged(epoch, batch, e, last.as_ref(), lr))?;
            sums.g_total += step.g_total;
            sums.cycle += step.cycle;
            sums.d_a += step.d_a;
            sums.d_b += step.d_b;
            last = Some(step);
        }
        let k = n_batches as f64;
        let record = EpochRecord {
            epoch: epoch + 1,
            loss_g_total: sums.g_total / k,
            loss_cycle: sums.cycle / k,
            loss_d_a: sums.d_a / k,
            loss_d_b: sums.d_b / k,
            lr,
        };
        observer.on_epoch(&record);
        history.push(record);
        if (epoch + 1) % cfg.checkpoint_every == 0 || epoch + 1 == cfg.epochs {
            observer.on_checkpoint(epoch + 1, &model, &optim)?;
        }
    }
    Ok(McTrainOutcome { model, optim, history })
}
