use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{rfn, RfnAxes};
use crate::dsp::Spectrogram;
use crate::tensor::{normal_init, Conv2dSpec, PadMode, ParamSet, ReduceAxes, Tape, Tensor, Var};
use crate::{Error, Result};

const BN_EPS: f64 = 1e-5;
/// Weight of the newest batch in the running statistics.
const BN_MOMENTUM: f32 = 0.1;
/// Floor on the per-spectrogram standard deviation.
const ZSCORE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfnCfg {
    pub relax: f64,
    #[serde(default)]
    pub axes: RfnAxes,
}

/// Residual classifier: stem, `n_stages` stages of basic blocks with
/// channels doubling and stride 2 from the second stage, global pooling and
/// a linear head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierCfg {
    pub base_channels: usize,
    pub n_stages: usize,
    pub blocks_per_stage: usize,
    pub stem_stride: usize,
    /// Relaxed frequency-wise normalization after the stem and every stage.
    pub rfn: Option<RfnCfg>,
    pub n_classes: usize,
}

impl Default for ClassifierCfg {
    fn default() -> Self {
        Self {
            base_channels: 16,
            n_stages: 4,
            blocks_per_stage: 2,
            stem_stride: 1,
            rfn: None,
            n_classes: 10,
        }
    }
}

impl ClassifierCfg {
    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 || self.n_stages == 0 || self.blocks_per_stage == 0 || self.stem_stride == 0 {
            return Err(Error::arg("classifier dimensions must be positive"));
        }
        if self.n_classes < 2 {
            return Err(Error::arg("classifier needs at least two classes"));
        }
        if let Some(r) = self.rfn {
            if !(0.0..=1.0).contains(&r.relax) {
                return Err(Error::arg(format!("relax {} outside [0, 1]", r.relax)));
            }
        }
        Ok(())
    }

    /// Width of the pooled embedding feeding the head.
    pub fn embedding_dim(&self) -> usize {
        self.base_channels << (self.n_stages - 1)
    }

    /// Number of relaxed normalization layers inserted.
    pub fn n_rfn(&self) -> usize {
        if self.rfn.is_some() {
            self.n_stages + 1
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; the standardization nodes are returned for
    /// running-statistic updates.
    Train,
    /// Running statistics.
    Eval,
}

/// Running mean and variance of one batch-norm layer.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BnStats {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
}

impl BnStats {
    fn new(c: usize) -> Self {
        Self {
            mean: vec![0.0; c],
            var: vec![1.0; c],
        }
    }

    fn update(&mut self, mean: &[f32], var: &[f32], count: usize) {
        // Unbiased variance, as batch norm conventionally tracks.
        let unbias = if count > 1 {
            count as f32 / (count - 1) as f32
        } else {
            1.0
        };
        for (r, &m) in self.mean.iter_mut().zip(mean) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
        }
        for (r, &v) in self.var.iter_mut().zip(var) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * unbias;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub cfg: ClassifierCfg,
    pub params: ParamSet<f32>,
    pub bn: Vec<BnStats>,
}

pub struct ForwardOut {
    pub logits: Var,
    pub embedding: Var,
    /// Standardization node of every batch-norm layer, in layer order.
    pub bn_nodes: Vec<Var>,
}

struct Cursor<'a> {
    vars: &'a [Var],
    at: usize,
    bn_at: usize,
}

impl Cursor<'_> {
    fn next(&mut self) -> Var {
        let v = self.vars[self.at];
        self.at += 1;
        v
    }
}

fn stage_stride(s: usize) -> usize {
    if s == 0 {
        1
    } else {
        2
    }
}

impl Classifier {
    pub fn new(cfg: &ClassifierCfg, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        let mut bn = Vec::new();
        let mut conv_bn =
            |params: &mut ParamSet<f32>, name: &str, co: usize, ci: usize, k: usize, rng: &mut _| -> Result<()> {
                // He initialization for ReLU stacks.
                let std = libm::sqrt(2.0 / (ci * k * k) as f64);
                params.add(format!("{name}.weight"), normal_init(&[co, ci, k, k], std, rng), true)?;
                params.add(format!("{name}.bn.gamma"), Tensor::ones(&[co]), true)?;
                params.add(format!("{name}.bn.beta"), Tensor::zeros(&[co]), true)?;
                bn.push(BnStats::new(co));
                Ok(())
            };
        let c0 = cfg.base_channels;
        conv_bn(&mut params, "stem", c0, 1, 3, rng)?;
        let mut ci = c0;
        for s in 0..cfg.n_stages {
            let co = c0 << s;
            for b in 0..cfg.blocks_per_stage {
                let name = format!("s{s}.b{b}");
                conv_bn(&mut params, &format!("{name}.conv0"), co, ci, 3, rng)?;
                conv_bn(&mut params, &format!("{name}.conv1"), co, co, 3, rng)?;
                if b == 0 && (co != ci || stage_stride(s) != 1) {
                    conv_bn(&mut params, &format!("{name}.proj"), co, ci, 1, rng)?;
                }
                ci = co;
            }
        }
        let d = cfg.embedding_dim();
        let bound = 1.0 / libm::sqrt(d as f64);
        let w = Tensor::from_fn(&[cfg.n_classes, d], |_| rng.random_range(-bound..bound) as f32);
        params.add("head.weight", w, true)?;
        params.add("head.bias", Tensor::zeros(&[cfg.n_classes]), true)?;
        Ok(Self {
            cfg: cfg.clone(),
            params,
            bn,
        })
    }

    fn conv_bn(
        &self,
        t: &mut Tape<f32>,
        p: &mut Cursor<'_>,
        x: Var,
        spec: Conv2dSpec,
        mode: Mode,
        nodes: &mut Vec<Var>,
    ) -> Result<Var> {
        let w = p.next();
        let y = t.conv2d(x, w, None, spec)?;
        let (g, b) = (p.next(), p.next());
        let stats = &self.bn[p.bn_at];
        p.bn_at += 1;
        let z = match mode {
            Mode::Train => {
                let z = t.standardize(y, ReduceAxes::BATCH, BN_EPS as f32)?;
                nodes.push(z);
                z
            }
            Mode::Eval => t.normalize_fixed(y, ReduceAxes::BATCH, &stats.mean, &stats.var, BN_EPS as f32)?,
        };
        t.channel_affine(z, g, b)
    }

    fn maybe_rfn(&self, t: &mut Tape<f32>, x: Var) -> Result<Var> {
        match self.cfg.rfn {
            Some(r) => rfn(t, x, r.relax, r.axes),
            None => Ok(x),
        }
    }

    /// `x: [n, 1, mels, frames]`, already standardized per spectrogram.
    pub fn forward(&self, t: &mut Tape<f32>, vars: &[Var], x: Var, mode: Mode) -> Result<ForwardOut> {
        let [_, c, _, _] = t.value(x).dims4()?;
        if c != 1 {
            return Err(Error::shape("classifier", format!("{c} input channels, expected 1")));
        }
        let mut p = Cursor { vars, at: 0, bn_at: 0 };
        let mut nodes = Vec::new();
        let conv = |stride, pad| Conv2dSpec::new(stride, pad, PadMode::Zero);
        let y = self.conv_bn(t, &mut p, x, conv(self.cfg.stem_stride, 1), mode, &mut nodes)?;
        let y = t.relu(y)?;
        let mut y = self.maybe_rfn(t, y)?;
        let mut ci = self.cfg.base_channels;
        for s in 0..self.cfg.n_stages {
            let co = self.cfg.base_channels << s;
            for b in 0..self.cfg.blocks_per_stage {
                let stride = if b == 0 { stage_stride(s) } else { 1 };
                let h = self.conv_bn(t, &mut p, y, conv(stride, 1), mode, &mut nodes)?;
                let h = t.relu(h)?;
                let h = self.conv_bn(t, &mut p, h, conv(1, 1), mode, &mut nodes)?;
                let short = if b == 0 && (co != ci || stride != 1) {
                    self.conv_bn(t, &mut p, y, conv(stride, 0), mode, &mut nodes)?
                } else {
                    y
                };
                let sum = t.add(h, short)?;
                y = t.relu(sum)?;
                ci = co;
            }
            y = self.maybe_rfn(t, y)?;
        }
        let embedding = t.global_avg_pool(y)?;
        let (hw, hb) = (p.next(), p.next());
        let logits = t.linear(embedding, hw, hb)?;
        debug_assert_eq!(p.at, vars.len());
        Ok(ForwardOut {
            logits,
            embedding,
            bn_nodes: nodes,
        })
    }

    /// Folds the batch statistics of a training forward pass into the
    /// running estimates.
    pub fn update_running(&mut self, t: &Tape<f32>, out: &ForwardOut) -> Result<()> {
        if out.bn_nodes.len() != self.bn.len() {
            return Err(Error::arg("forward pass was not in training mode"));
        }
        for (stats, &node) in self.bn.iter_mut().zip(&out.bn_nodes) {
            let [n, _, h, w] = t.value(node).dims4()?;
            let (m, v) = t
                .batch_stats(node)
                .ok_or_else(|| Error::arg("node is not a standardization"))?;
            stats.update(m, v, n * h * w);
        }
        Ok(())
    }
}

/// Per-spectrogram standardization applied before the classifier.
pub fn zscore(s: &Spectrogram) -> Vec<f32> {
    let v = s.values();
    let n = v.len() as f64;
    let mu = v.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = v.iter().map(|&x| (x as f64 - mu) * (x as f64 - mu)).sum::<f64>() / n;
    let sd = libm::sqrt(var).max(ZSCORE_EPS);
    v.iter().map(|&x| ((x as f64 - mu) / sd) as f32).collect()
}

/// Stacks standardized spectrograms into `[n, 1, mels, frames]`.
pub fn input_batch(specs: &[&Spectrogram]) -> Result<Tensor<f32>> {
    let first = specs.first().ok_or(Error::EmptyInput("classifier batch"))?;
    let (m, f) = (first.n_mels(), first.n_frames());
    let mut data = Vec::with_capacity(specs.len() * m * f);
    for s in specs {
        if (s.n_mels(), s.n_frames()) != (m, f) {
            return Err(Error::shape(
                "classifier batch",
                format!("{}x{} among {m}x{f}", s.n_mels(), s.n_frames()),
            ));
        }
        data.extend(zscore(s));
    }
    Tensor::new(&[specs.len(), 1, m, f], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn small(rfn: Option<RfnCfg>) -> ClassifierCfg {
        ClassifierCfg {
            base_channels: 4,
            n_stages: 3,
            blocks_per_stage: 1,
            rfn,
            n_classes: 5,
            ..Default::default()
        }
    }

    fn logits(c: &Classifier, x: &Tensor<f32>, mode: Mode) -> Tensor<f32> {
        let mut t = Tape::new();
        let vars = c.params.bind_frozen(&mut t).unwrap();
        let xv = t.constant(x.clone()).unwrap();
        let out = c.forward(&mut t, &vars, xv, mode).unwrap();
        t.value(out.logits).clone()
    }

    #[test]
    fn shapes_and_embedding_width() {
        let cfg = small(None);
        let c = Classifier::new(&cfg, &mut rng_from(0)).unwrap();
        let x = Tensor::randn(&[3, 1, 16, 12], 1.0, &mut rng_from(1));
        let mut t = Tape::new();
        let vars = c.params.bind(&mut t).unwrap();
        let xv = t.constant(x).unwrap();
        let out = c.forward(&mut t, &vars, xv, Mode::Train).unwrap();
        assert_eq!(t.value(out.logits).shape(), &[3, 5]);
        assert_eq!(t.value(out.embedding).shape(), &[3, cfg.embedding_dim()]);
        assert_eq!(out.bn_nodes.len(), c.bn.len());
        assert_eq!(ClassifierCfg::default().embedding_dim(), 128);
        assert_eq!(
            ClassifierCfg {
                rfn: Some(RfnCfg {
                    relax: 0.5,
                    axes: RfnAxes::Joint
                }),
                ..Default::default()
            }
            .n_rfn(),
            5
        );
    }

    #[test]
    fn rfn_relax_one_matches_baseline() {
        let x = Tensor::randn(&[2, 1, 16, 12], 1.0, &mut rng_from(2));
        let base = Classifier::new(&small(None), &mut rng_from(7)).unwrap();
        let relaxed = Classifier::new(
            &small(Some(RfnCfg {
                relax: 1.0,
                axes: RfnAxes::Joint,
            })),
            &mut rng_from(7),
        )
        .unwrap();
        for mode in [Mode::Train, Mode::Eval] {
            assert_eq!(logits(&base, &x, mode), logits(&relaxed, &x, mode));
        }
        let half = Classifier::new(
            &small(Some(RfnCfg {
                relax: 0.5,
                axes: RfnAxes::Joint,
            })),
            &mut rng_from(7),
        )
        .unwrap();
        assert_ne!(logits(&base, &x, Mode::Eval), logits(&half, &x, Mode::Eval));
    }

    #[test]
    fn running_stats_track_batches() {
        let mut c = Classifier::new(&small(None), &mut rng_from(0)).unwrap();
        let x = Tensor::randn(&[4, 1, 8, 8], 1.0, &mut rng_from(3)).map(|v| 3.0 * v + 2.0);
        for _ in 0..60 {
            let mut t = Tape::new();
            let vars = c.params.bind_frozen(&mut t).unwrap();
            let xv = t.constant(x.clone()).unwrap();
            let out = c.forward(&mut t, &vars, xv, Mode::Train).unwrap();
            c.update_running(&t, &out).unwrap();
        }
        // With converged running statistics, eval mode nearly reproduces
        // training mode on the same batch.
        let a = logits(&c, &x, Mode::Train);
        let b = logits(&c, &x, Mode::Eval);
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 0.05 * (1.0 + p.abs()), "{p} vs {q}");
        }
    }

    #[test]
    fn zscore_moments() {
        let s = Spectrogram::new(4, 5, 256, 22_050, (0..20).map(|i| i as f32 * 0.5 - 3.0).collect()).unwrap();
        let z = zscore(&s);
        let mu: f32 = z.iter().sum::<f32>() / 20.0;
        let var: f32 = z.iter().map(|v| (v - mu).powi(2)).sum::<f32>() / 20.0;
        assert!(mu.abs() < 1e-5 && (var - 1.0).abs() < 1e-4);
        let flat = Spectrogram::new(2, 2, 256, 22_050, vec![4.0; 4]).unwrap();
        assert_eq!(zscore(&flat), vec![0.0; 4]);
    }
}
