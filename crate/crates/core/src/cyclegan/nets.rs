use alloc::format;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::{normal_init, Conv2dSpec, PadMode, ParamSet, ReduceAxes, Scalar, Tape, Tensor, Var};
use crate::{Error, Result};

pub(crate) const NORM_EPS: f64 = 1e-5;
const INIT_STD: f64 = 0.02;
const LEAK: f64 = 0.2;

/// ResNet generator: c7s1, stride-2 downsampling, residual blocks,
/// nearest-neighbour upsampling + conv, and a final c7s1 to one channel
/// with no output squashing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorCfg {
    pub base_channels: usize,
    pub n_resblocks: usize,
    pub n_sampling_layers: usize,
    /// Run the network on per-sample standardized input and map its output
    /// back with the input's mean and standard deviation. Instance
    /// normalization would otherwise discard the input level entirely.
    pub level_carry: bool,
    /// Add the (standardized) input to the network output.
    pub global_skip: bool,
    /// A learned per-frequency-row output offset. Convolutions are blind to
    /// absolute frequency, while a device's log-gain curve is a function of
    /// it; this gives the curve a direct parameterization.
    pub freq_bias: bool,
}

impl Default for GeneratorCfg {
    fn default() -> Self {
        Self {
            base_channels: 16,
            n_resblocks: 3,
            n_sampling_layers: 2,
            level_carry: true,
            global_skip: true,
            freq_bias: true,
        }
    }
}

impl GeneratorCfg {
    pub fn validate(&self) -> Result<()> {
        if self.n_resblocks == 0 || self.base_channels == 0 {
            return Err(Error::arg("generator needs at least one resblock and one channel"));
        }
        Ok(())
    }

    /// Spatial dims must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        1 << self.n_sampling_layers
    }
}

/// PatchGAN discriminator: k4s2 conv, k4s1 conv + instance norm, k4s1 conv
/// to one score channel. Each score sees a 16×16 input patch:
/// receptive field 4 → 4+3 = 7 → (7−1)·2+4 = 16, walking back from the
/// output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorCfg {
    pub base_channels: usize,
}

impl Default for DiscriminatorCfg {
    fn default() -> Self {
        Self { base_channels: 16 }
    }
}

impl DiscriminatorCfg {
    pub const RECEPTIVE_FIELD: usize = 16;

    /// Score grid side for a square input side.
    pub fn output_side(input: usize) -> usize {
        let l1 = (input + 2 - 4) / 2 + 1;
        l1 - 1 - 1
    }
}

fn conv_weight<T: Scalar>(co: usize, ci: usize, k: usize, rng: &mut impl Rng) -> Tensor<T> {
    normal_init(&[co, ci, k, k], INIT_STD, rng)
}

struct Builder<'a, T, R> {
    params: ParamSet<T>,
    prefix: &'a str,
    rng: &'a mut R,
}

impl<T: Scalar, R: Rng> Builder<'_, T, R> {
    fn add(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        self.params.add(format!("{}.{name}", self.prefix), value, true)?;
        Ok(())
    }

    fn conv(&mut self, name: &str, co: usize, ci: usize, k: usize, bias: bool) -> Result<()> {
        let w = conv_weight(co, ci, k, self.rng);
        self.add(&format!("{name}.weight"), w)?;
        if bias {
            self.add(&format!("{name}.bias"), Tensor::zeros(&[co]))?;
        }
        Ok(())
    }

    fn norm(&mut self, name: &str, c: usize) -> Result<()> {
        self.add(&format!("{name}.gamma"), Tensor::ones(&[c]))?;
        self.add(&format!("{name}.beta"), Tensor::zeros(&[c]))
    }
}

/// Walks bound parameter vars in registration order.
struct Cursor<'a> {
    vars: &'a [Var],
    at: usize,
}

impl Cursor<'_> {
    fn next(&mut self) -> Var {
        let v = self.vars[self.at];
        self.at += 1;
        v
    }
}

fn conv_in<T: Scalar>(t: &mut Tape<T>, p: &mut Cursor<'_>, x: Var, spec: Conv2dSpec, act: Option<T>) -> Result<Var> {
    let w = p.next();
    let y = t.conv2d(x, w, None, spec)?;
    let (g, b) = (p.next(), p.next());
    let y = t.instance_norm(y, Some((g, b)), T::of(NORM_EPS))?;
    match act {
        Some(slope) if slope == T::zero() => t.relu(y),
        Some(slope) => t.leaky_relu(y, slope),
        None => Ok(y),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T> {
    pub cfg: GeneratorCfg,
    pub params: ParamSet<T>,
}

impl<T: Scalar> Generator<T> {
    /// `rows` is the input height the frequency bias is sized for; it is
    /// unused without one.
    pub fn new(cfg: &GeneratorCfg, rows: usize, prefix: &str, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.base_channels;
        let mut b = Builder {
            params: ParamSet::new(),
            prefix,
            rng,
        };
        b.conv("in", c, 1, 7, false)?;
        b.norm("in.norm", c)?;
        for i in 0..cfg.n_sampling_layers {
            let name = format!("down{i}");
            b.conv(&name, c << (i + 1), c << i, 3, false)?;
            b.norm(&format!("{name}.norm"), c << (i + 1))?;
        }
        let cm = c << cfg.n_sampling_layers;
        for r in 0..cfg.n_resblocks {
            for j in 0..2 {
                let name = format!("res{r}.conv{j}");
                b.conv(&name, cm, cm, 3, false)?;
                b.norm(&format!("{name}.norm"), cm)?;
            }
        }
        for i in (0..cfg.n_sampling_layers).rev() {
            let name = format!("up{i}");
            b.conv(&name, c << i, c << (i + 1), 3, false)?;
            b.norm(&format!("{name}.norm"), c << i)?;
        }
        b.conv("out", 1, c, 7, true)?;
        if cfg.freq_bias {
            b.add("freq_bias", Tensor::zeros(&[rows]))?;
        }
        Ok(Self {
            cfg: cfg.clone(),
            params: b.params,
        })
    }

    pub fn cast<U: Scalar>(&self) -> Generator<U> {
        Generator {
            cfg: self.cfg.clone(),
            params: self.params.cast(),
        }
    }

    /// Maps `x: [n, 1, h, w]` to the same shape.
    pub fn forward(&self, t: &mut Tape<T>, vars: &[Var], x: Var) -> Result<Var> {
        let [_, c, h, w] = t.value(x).dims4()?;
        let m = self.cfg.size_multiple();
        if c != 1 || h % m != 0 || w % m != 0 {
            return Err(Error::shape(
                "generator",
                format!("input [_, {c}, {h}, {w}] needs one channel and sides divisible by {m}"),
            ));
        }
        let eps = T::of(NORM_EPS);
        let mut p = Cursor { vars, at: 0 };
        let z = if self.cfg.level_carry {
            t.standardize(x, ReduceAxes::SAMPLE, eps)?
        } else {
            x
        };
        let relu = Some(T::zero());
        let refl = |pad| Conv2dSpec::new(1, pad, PadMode::Reflect);
        let mut y = conv_in(t, &mut p, z, refl(3), relu)?;
        for _ in 0..self.cfg.n_sampling_layers {
            y = conv_in(t, &mut p, y, Conv2dSpec::new(2, 1, PadMode::Zero), relu)?;
        }
        for _ in 0..self.cfg.n_resblocks {
            let r = conv_in(t, &mut p, y, refl(1), relu)?;
            let r = conv_in(t, &mut p, r, refl(1), None)?;
            y = t.add(y, r)?;
        }
        for _ in 0..self.cfg.n_sampling_layers {
            let u = t.upsample2x(y)?;
            y = conv_in(t, &mut p, u, refl(1), relu)?;
        }
        let (ow, ob) = (p.next(), p.next());
        let mut out = t.conv2d(y, ow, Some(ob), refl(3))?;
        if self.cfg.global_skip {
            out = t.add(out, z)?;
        }
        if self.cfg.level_carry {
            out = t.restore_moments(out, x, eps)?;
        }
        if self.cfg.freq_bias {
            out = t.row_bias(out, p.next())?;
        }
        debug_assert_eq!(p.at, vars.len());
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator<T> {
    pub cfg: DiscriminatorCfg,
    pub params: ParamSet<T>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new(cfg: &DiscriminatorCfg, prefix: &str, rng: &mut impl Rng) -> Result<Self> {
        let c = cfg.base_channels;
        if c == 0 {
            return Err(Error::arg("discriminator needs at least one channel"));
        }
        let mut b = Builder {
            params: ParamSet::new(),
            prefix,
            rng,
        };
        b.conv("c0", c, 1, 4, true)?;
        b.conv("c1", 2 * c, c, 4, false)?;
        b.norm("c1.norm", 2 * c)?;
        b.conv("c2", 1, 2 * c, 4, true)?;
        Ok(Self {
            cfg: cfg.clone(),
            params: b.params,
        })
    }

    pub fn cast<U: Scalar>(&self) -> Discriminator<U> {
        Discriminator {
            cfg: self.cfg.clone(),
            params: self.params.cast(),
        }
    }

    /// Score grid `[n, 1, h', w']` for `x: [n, 1, h, w]`.
    pub fn forward(&self, t: &mut Tape<T>, vars: &[Var], x: Var) -> Result<Var> {
        let mut p = Cursor { vars, at: 0 };
        let slope = T::of(LEAK);
        let (w0, b0) = (p.next(), p.next());
        let y = t.conv2d(x, w0, Some(b0), Conv2dSpec::new(2, 1, PadMode::Zero))?;
        let y = t.leaky_relu(y, slope)?;
        let y = conv_in(t, &mut p, y, Conv2dSpec::new(1, 1, PadMode::Zero), Some(slope))?;
        let (w2, b2) = (p.next(), p.next());
        t.conv2d(y, w2, Some(b2), Conv2dSpec::new(1, 1, PadMode::Zero))
    }
}
