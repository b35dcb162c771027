use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::conv::{conv2d_backward, conv2d_forward, Conv2dSpec, ConvGeom};
use super::{Scalar, Tensor};
use crate::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Axes of an `[n, c, h, w]` tensor pooled into one statistic by a
/// normalization; the remaining axes index the groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReduceAxes(pub [bool; 4]);

impl ReduceAxes {
    /// Per sample and channel, over space.
    pub const INSTANCE: Self = Self([false, false, true, true]);
    /// Per channel, over batch and space.
    pub const BATCH: Self = Self([true, false, true, true]);
    /// Per sample, over channels and space.
    pub const SAMPLE: Self = Self([false, true, true, true]);
    /// Per sample and frequency row (axis 2), over channels and time.
    pub const FREQ_JOINT: Self = Self([false, true, false, true]);
    /// Per sample, channel and frequency row, over time.
    pub const FREQ_PER_CHANNEL: Self = Self([false, false, false, true]);

    fn group_dims(self, dims: [usize; 4]) -> [usize; 4] {
        core::array::from_fn(|i| if self.0[i] { 1 } else { dims[i] })
    }

    pub fn n_groups(self, dims: [usize; 4]) -> usize {
        self.group_dims(dims).iter().product()
    }

    /// Calls `f(flat_index, group)` for every element in storage order.
    fn for_each(self, dims: [usize; 4], mut f: impl FnMut(usize, usize)) {
        let gd = self.group_dims(dims);
        let pick = |axis: usize, i: usize| if self.0[axis] { 0 } else { i };
        let mut flat = 0;
        for n in 0..dims[0] {
            for c in 0..dims[1] {
                for h in 0..dims[2] {
                    let base = ((pick(0, n) * gd[1] + pick(1, c)) * gd[2] + pick(2, h)) * gd[3];
                    for w in 0..dims[3] {
                        f(flat, base + pick(3, w));
                        flat += 1;
                    }
                }
            }
        }
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Shift(Var),
    Relu(Var),
    LeakyRelu(Var, T),
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    Upsample2x(Var),
    Standardize {
        x: Var,
        axes: ReduceAxes,
        inv_std: Vec<T>,
    },
    NormalizeFixed {
        x: Var,
        axes: ReduceAxes,
        inv_std: Vec<T>,
    },
    ChannelAffine {
        x: Var,
        gamma: Var,
        beta: Var,
    },
    RowBias(Var, Var),
    RestoreMoments {
        y: Var,
        x: Var,
        mean: Vec<T>,
        std: Vec<T>,
    },
    GlobalAvgPool(Var),
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Mean(Var),
    Sum(Var),
    L1(Var, Var),
    Mse(Var, Var),
    MseConst(Var, T),
    SoftCrossEntropy {
        logits: Var,
        targets: Tensor<T>,
        probs: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
    // Batch statistics (mean, biased variance) of a standardization node.
    stats: Option<(Vec<T>, Vec<T>)>,
}

/// Single-threaded record of a computation.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    kinks: Option<u64>,
}

const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn sign_class<T: Scalar>(v: T) -> u64 {
    if v > T::zero() {
        1
    } else if v < T::zero() {
        2
    } else {
        3
    }
}

fn same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())))
    }
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape(), data).expect("operands share a shape")
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            kinks: None,
        }
    }

    /// A tape that fingerprints the side of every non-differentiable point
    /// (ReLU and L1 kinks) its inputs fall on; see [`Self::kink_signature`].
    pub fn with_kink_tracking() -> Self {
        Self {
            nodes: Vec::new(),
            kinks: Some(0xcbf2_9ce4_8422_2325),
        }
    }

    pub fn kink_signature(&self) -> Option<u64> {
        self.kinks
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Mean and biased variance per group of a [`Self::standardize`] node.
    pub fn batch_stats(&self, v: Var) -> Option<(&[T], &[T])> {
        self.nodes[v.0]
            .stats
            .as_ref()
            .map(|(m, s)| (m.as_slice(), s.as_slice()))
    }

    fn push(&mut self, name: &'static str, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            stats: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn track(&mut self, id: u64, values: impl Iterator<Item = T>) {
        if let Some(h) = self.kinks.as_mut() {
            *h = (*h ^ id).wrapping_mul(FNV_PRIME);
            for v in values {
                *h = (*h ^ sign_class(v)).wrapping_mul(FNV_PRIME);
            }
        }
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: "leaf" });
        }
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: requires_grad,
            stats: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.leaf(value, false)
    }

    pub fn variable(&mut self, value: Tensor<T>) -> Result<Var> {
        self.leaf(value, true)
    }

    /// A constant copy of `v`, cut from the graph.
    pub fn detach(&mut self, v: Var) -> Result<Var> {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("add", x, y)?;
        let out = zip_map(x, y, |p, q| p + q);
        self.push("add", out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("sub", x, y)?;
        let out = zip_map(x, y, |p, q| p - q);
        self.push("sub", out, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("mul", x, y)?;
        let out = zip_map(x, y, |p, q| p * q);
        self.push("mul", out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var> {
        let out = self.value(a).map(|v| v * c);
        self.push("scale", out, Op::Scale(a, c), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Result<Var> {
        let out = self.value(a).map(|v| v + c);
        self.push("add_scalar", out, Op::Shift(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| if v > T::zero() { v } else { T::zero() });
        if self.kinks.is_some() {
            let vals = self.value(a).data().to_vec();
            self.track(a.0 as u64, vals.into_iter());
        }
        self.push("relu", out, Op::Relu(a), &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Result<Var> {
        let out = self.value(a).map(|v| if v > T::zero() { v } else { v * slope });
        if self.kinks.is_some() {
            let vals = self.value(a).data().to_vec();
            self.track(a.0 as u64, vals.into_iter());
        }
        self.push("leaky_relu", out, Op::LeakyRelu(a, slope), &[a])
    }

    /// Cross-correlation of `x: [n, ci, h, w]` with `w: [co, ci, k, k]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, spec: Conv2dSpec) -> Result<Var> {
        let bias = b.map(|b| self.value(b));
        let (geom, out) = conv2d_forward(self.value(x), self.value(w), bias, spec)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push("conv2d", out, Op::Conv2d { x, w, b, geom }, &inputs)
    }

    /// Nearest-neighbour ×2 upsampling of the two trailing axes.
    pub fn upsample2x(&mut self, a: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(a).dims4()?;
        let src = self.value(a).data();
        let mut out = vec![T::zero(); n * c * 4 * h * w];
        for (plane, dst) in src.chunks_exact(h * w).zip(out.chunks_exact_mut(4 * h * w)) {
            for y in 0..2 * h {
                for x in 0..2 * w {
                    dst[y * 2 * w + x] = plane[(y / 2) * w + x / 2];
                }
            }
        }
        let out = Tensor::new(&[n, c, 2 * h, 2 * w], out)?;
        self.push("upsample2x", out, Op::Upsample2x(a), &[a])
    }

    /// Standardizes each group of a rank-4 tensor with its own mean and
    /// biased variance; gradients flow through the statistics.
    pub fn standardize(&mut self, x: Var, axes: ReduceAxes, eps: T) -> Result<Var> {
        let t = self.value(x);
        let dims = t.dims4()?;
        let g = axes.n_groups(dims);
        let m = t.numel() / g.max(1);
        if eps <= T::zero() && m <= 1 {
            return Err(Error::DegenerateNorm);
        }
        let inv_m = T::one() / T::of(m as f64);
        let mut mean = vec![T::zero(); g];
        axes.for_each(dims, |i, gi| mean[gi] += t.data()[i]);
        mean.iter_mut().for_each(|v| *v = *v * inv_m);
        let mut var = vec![T::zero(); g];
        axes.for_each(dims, |i, gi| {
            let d = t.data()[i] - mean[gi];
            var[gi] += d * d;
        });
        var.iter_mut().for_each(|v| *v = *v * inv_m);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        if inv_std.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateNorm);
        }
        let mut out = vec![T::zero(); t.numel()];
        axes.for_each(dims, |i, gi| out[i] = (t.data()[i] - mean[gi]) * inv_std[gi]);
        let out = Tensor::new(t.shape(), out)?;
        let v = self.push("standardize", out, Op::Standardize { x, axes, inv_std }, &[x])?;
        self.nodes[v.0].stats = Some((mean, var));
        Ok(v)
    }

    /// Standardizes with externally supplied per-group statistics, which
    /// are treated as constants.
    pub fn normalize_fixed(&mut self, x: Var, axes: ReduceAxes, mean: &[T], var: &[T], eps: T) -> Result<Var> {
        let t = self.value(x);
        let dims = t.dims4()?;
        let g = axes.n_groups(dims);
        if mean.len() != g || var.len() != g {
            return Err(Error::shape(
                "normalize_fixed",
                format!("{g} groups, stats of length {} and {}", mean.len(), var.len()),
            ));
        }
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut out = vec![T::zero(); t.numel()];
        axes.for_each(dims, |i, gi| out[i] = (t.data()[i] - mean[gi]) * inv_std[gi]);
        let out = Tensor::new(t.shape(), out)?;
        self.push("normalize_fixed", out, Op::NormalizeFixed { x, axes, inv_std }, &[x])
    }

    /// `x[:, c] * gamma[c] + beta[c]` for a tensor with channels on axis 1.
    pub fn channel_affine(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let t = self.value(x);
        let (gm, bt) = (self.value(gamma), self.value(beta));
        let c = *t
            .shape()
            .get(1)
            .ok_or_else(|| Error::shape("channel_affine", "rank below 2"))?;
        if gm.shape() != [c] || bt.shape() != [c] {
            return Err(Error::shape(
                "channel_affine",
                format!("{c} channels, affine {:?} / {:?}", gm.shape(), bt.shape()),
            ));
        }
        let inner: usize = t.shape()[2..].iter().product();
        let out = Tensor::from_fn(t.shape(), |i| {
            let ch = (i / inner) % c;
            t.data()[i] * gm.data()[ch] + bt.data()[ch]
        });
        self.push(
            "channel_affine",
            out,
            Op::ChannelAffine { x, gamma, beta },
            &[x, gamma, beta],
        )
    }

    /// `x[n, c, h, w] + bias[h]`: a bias tied to the row (frequency) axis.
    pub fn row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (t, b) = (self.value(x), self.value(bias));
        let [_, _, h, w] = t.dims4()?;
        if b.shape() != [h] {
            return Err(Error::shape("row_bias", format!("{h} rows, bias {:?}", b.shape())));
        }
        let out = Tensor::from_fn(t.shape(), |i| t.data()[i] + b.data()[(i / w) % h]);
        self.push("row_bias", out, Op::RowBias(x, bias), &[x, bias])
    }

    /// Instance normalization with an optional per-channel affine.
    pub fn instance_norm(&mut self, x: Var, affine: Option<(Var, Var)>, eps: T) -> Result<Var> {
        let z = self.standardize(x, ReduceAxes::INSTANCE, eps)?;
        match affine {
            Some((g, b)) => self.channel_affine(z, g, b),
            None => Ok(z),
        }
    }

    /// `mean_x[n] + std_x[n] * y[n]`, where the moments are taken per
    /// sample over all trailing elements of `x`, and `std = sqrt(var + eps)`.
    pub fn restore_moments(&mut self, y: Var, x: Var, eps: T) -> Result<Var> {
        let (yt, xt) = (self.value(y), self.value(x));
        let n = *xt
            .shape()
            .first()
            .ok_or_else(|| Error::shape("restore_moments", "scalar input"))?;
        if yt.shape().first() != Some(&n) || n == 0 {
            return Err(Error::shape(
                "restore_moments",
                format!("{:?} vs {:?}", yt.shape(), xt.shape()),
            ));
        }
        let m = xt.numel() / n;
        let my = yt.numel() / n;
        let mut mean = Vec::with_capacity(n);
        let mut std = Vec::with_capacity(n);
        for s in xt.data().chunks_exact(m) {
            let mu = s.iter().fold(T::zero(), |a, &b| a + b) / T::of(m as f64);
            let var = s.iter().fold(T::zero(), |a, &b| a + (b - mu) * (b - mu)) / T::of(m as f64);
            mean.push(mu);
            std.push((var + eps).sqrt());
        }
        let out = Tensor::from_fn(yt.shape(), |i| mean[i / my] + std[i / my] * yt.data()[i]);
        self.push("restore_moments", out, Op::RestoreMoments { y, x, mean, std }, &[y, x])
    }

    /// `[n, c, h, w] -> [n, c]` spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4()?;
        let inv = T::one() / T::of((h * w) as f64);
        let data = self
            .value(x)
            .data()
            .chunks_exact(h * w)
            .map(|p| p.iter().fold(T::zero(), |a, &b| a + b) * inv)
            .collect();
        let out = Tensor::new(&[n, c], data)?;
        self.push("global_avg_pool", out, Op::GlobalAvgPool(x), &[x])
    }

    /// `x: [n, k]`, `w: [m, k]`, `b: [m]` to `x wᵀ + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xt, wt, bt) = (self.value(x), self.value(w), self.value(b));
        let (&[n, k], &[m, wk]) = (xt.shape(), wt.shape()) else {
            return Err(Error::shape("linear", format!("{:?} x {:?}", xt.shape(), wt.shape())));
        };
        if wk != k || bt.shape() != [m] {
            return Err(Error::shape(
                "linear",
                format!("{:?} x {:?} + {:?}", xt.shape(), wt.shape(), bt.shape()),
            ));
        }
        let mut out = vec![T::zero(); n * m];
        for row in out.chunks_exact_mut(m) {
            row.copy_from_slice(bt.data());
        }
        T::gemm(n, k, m, T::one(), xt.data(), false, wt.data(), true, T::one(), &mut out);
        let out = Tensor::new(&[n, m], out)?;
        self.push("linear", out, Op::Linear { x, w, b }, &[x, w, b])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.numel() == 0 {
            return Err(Error::EmptyInput("mean"));
        }
        let out = Tensor::scalar(t.sum() / T::of(t.numel() as f64));
        self.push("mean", out, Op::Mean(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push("sum", out, Op::Sum(a), &[a])
    }

    /// Mean absolute difference.
    pub fn l1(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("l1", x, y)?;
        if x.numel() == 0 {
            return Err(Error::EmptyInput("l1"));
        }
        let s = x
            .data()
            .iter()
            .zip(y.data())
            .fold(T::zero(), |acc, (&p, &q)| acc + (p - q).abs());
        let out = Tensor::scalar(s / T::of(x.numel() as f64));
        if self.kinks.is_some() {
            let diffs: Vec<T> = x.data().iter().zip(y.data()).map(|(&p, &q)| p - q).collect();
            self.track(((a.0 as u64) << 32) ^ b.0 as u64, diffs.into_iter());
        }
        self.push("l1", out, Op::L1(a, b), &[a, b])
    }

    /// Mean squared difference.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("mse", x, y)?;
        if x.numel() == 0 {
            return Err(Error::EmptyInput("mse"));
        }
        let s = x
            .data()
            .iter()
            .zip(y.data())
            .fold(T::zero(), |acc, (&p, &q)| acc + (p - q) * (p - q));
        let out = Tensor::scalar(s / T::of(x.numel() as f64));
        self.push("mse", out, Op::Mse(a, b), &[a, b])
    }

    /// Mean squared difference from a constant target.
    pub fn mse_const(&mut self, a: Var, target: T) -> Result<Var> {
        let x = self.value(a);
        if x.numel() == 0 {
            return Err(Error::EmptyInput("mse_const"));
        }
        let s = x
            .data()
            .iter()
            .fold(T::zero(), |acc, &p| acc + (p - target) * (p - target));
        let out = Tensor::scalar(s / T::of(x.numel() as f64));
        self.push("mse_const", out, Op::MseConst(a, target), &[a])
    }

    /// Mean over rows of `-Σ_k t_k log softmax(logits)_k` for soft targets.
    pub fn soft_cross_entropy(&mut self, logits: Var, targets: &Tensor<T>) -> Result<Var> {
        let l = self.value(logits);
        same_shape("soft_cross_entropy", l, targets)?;
        let &[n, k] = l.shape() else {
            return Err(Error::shape("soft_cross_entropy", format!("logits {:?}", l.shape())));
        };
        if n == 0 || k == 0 {
            return Err(Error::EmptyInput("soft_cross_entropy"));
        }
        let mut probs = vec![T::zero(); n * k];
        let mut loss = T::zero();
        for ((row, p), t) in l
            .data()
            .chunks_exact(k)
            .zip(probs.chunks_exact_mut(k))
            .zip(targets.data().chunks_exact(k))
        {
            let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            let z = row.iter().fold(T::zero(), |a, &b| a + (b - max).exp());
            let log_z = z.ln() + max;
            for ((pi, &li), &ti) in p.iter_mut().zip(row).zip(t) {
                *pi = (li - log_z).exp();
                loss = loss - ti * (li - log_z);
            }
        }
        let out = Tensor::scalar(loss / T::of(n as f64));
        let op = Op::SoftCrossEntropy {
            logits,
            targets: targets.clone(),
            probs,
        };
        self.push("soft_cross_entropy", out, op, &[logits])
    }

    /// Reverse sweep from a scalar `loss`. Gradients accumulate across
    /// fan-out; only leaves keep theirs in the result.
    pub fn backward(mut self, loss: Var) -> Result<Gradients<T>> {
        let numel = self.value(loss).numel();
        if numel != 1 {
            return Err(Error::NonScalarBackward { numel });
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].needs_grad {
            grads[loss.0] = Some(Tensor::ones(self.value(loss).shape()));
        }
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.backprop_node(i, &g, &mut grads);
            self.nodes[i].value = Tensor::zeros(&[0]);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf) {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let nodes = &self.nodes;
        let val = |v: Var| &nodes[v.0].value;
        let wants = |v: Var| nodes[v.0].needs_grad;
        let mut acc = |v: Var, d: Tensor<T>| {
            debug_assert_eq!(d.shape(), nodes[v.0].value.shape());
            match &mut grads[v.0] {
                Some(t) => t.add_assign(&d),
                slot => *slot = Some(d),
            }
        };
        match &nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if wants(*a) {
                    acc(*a, g.clone());
                }
                if wants(*b) {
                    acc(*b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    acc(*a, g.clone());
                }
                if wants(*b) {
                    acc(*b, g.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    acc(*a, zip_map(g, val(*b), |p, q| p * q));
                }
                if wants(*b) {
                    acc(*b, zip_map(g, val(*a), |p, q| p * q));
                }
            }
            Op::Scale(a, c) => acc(*a, g.map(|v| v * *c)),
            Op::Shift(a) => acc(*a, g.clone()),
            Op::Relu(a) => acc(
                *a,
                zip_map(g, val(*a), |d, x| if x > T::zero() { d } else { T::zero() }),
            ),
            Op::LeakyRelu(a, slope) => acc(
                *a,
                zip_map(g, val(*a), |d, x| if x > T::zero() { d } else { d * *slope }),
            ),
            Op::Conv2d { x, w, b, geom } => {
                let want = (wants(*x), wants(*w), b.is_some_and(wants));
                let (dx, dw, db) = conv2d_backward(geom, val(*x), val(*w), g, want);
                if let Some(d) = dx {
                    acc(*x, d);
                }
                if let Some(d) = dw {
                    acc(*w, d);
                }
                if let (Some(b), Some(d)) = (b, db) {
                    acc(*b, d);
                }
            }
            Op::Upsample2x(a) => {
                let shape = val(*a).shape();
                let (h, w) = (shape[2], shape[3]);
                let mut d = Tensor::zeros(shape);
                for (plane, src) in d
                    .data_mut()
                    .chunks_exact_mut(h * w)
                    .zip(g.data().chunks_exact(4 * h * w))
                {
                    for y in 0..2 * h {
                        for x in 0..2 * w {
                            plane[(y / 2) * w + x / 2] += src[y * 2 * w + x];
                        }
                    }
                }
                acc(*a, d);
            }
            Op::Standardize { x, axes, inv_std } => {
                let xhat = &nodes[i].value;
                let dims = xhat.dims4().expect("rank checked on forward");
                let groups = inv_std.len();
                let m = T::of((xhat.numel() / groups) as f64);
                let mut s1 = vec![T::zero(); groups];
                let mut s2 = vec![T::zero(); groups];
                axes.for_each(dims, |j, gi| {
                    s1[gi] += g.data()[j];
                    s2[gi] += g.data()[j] * xhat.data()[j];
                });
                let mut d = vec![T::zero(); xhat.numel()];
                axes.for_each(dims, |j, gi| {
                    d[j] = inv_std[gi] * (g.data()[j] - s1[gi] / m - xhat.data()[j] * s2[gi] / m);
                });
                acc(*x, Tensor::new(xhat.shape(), d).expect("same shape"));
            }
            Op::NormalizeFixed { x, axes, inv_std } => {
                let dims = g.dims4().expect("rank checked on forward");
                let mut d = vec![T::zero(); g.numel()];
                axes.for_each(dims, |j, gi| d[j] = g.data()[j] * inv_std[gi]);
                acc(*x, Tensor::new(g.shape(), d).expect("same shape"));
            }
            Op::RowBias(x, b) => {
                if wants(*x) {
                    acc(*x, g.clone());
                }
                if wants(*b) {
                    let [_, _, h, w] = g.dims4().expect("rank checked on forward");
                    let mut db = vec![T::zero(); h];
                    for (j, &gv) in g.data().iter().enumerate() {
                        db[(j / w) % h] += gv;
                    }
                    acc(*b, Tensor::new(&[h], db).expect("row vector"));
                }
            }
            Op::ChannelAffine { x, gamma, beta } => {
                let xt = val(*x);
                let c = xt.shape()[1];
                let inner: usize = xt.shape()[2..].iter().product();
                let gm = val(*gamma).data();
                if wants(*x) {
                    acc(*x, Tensor::from_fn(xt.shape(), |j| g.data()[j] * gm[(j / inner) % c]));
                }
                if wants(*gamma) || wants(*beta) {
                    let mut dg = vec![T::zero(); c];
                    let mut db = vec![T::zero(); c];
                    for (j, (&gv, &xv)) in g.data().iter().zip(xt.data()).enumerate() {
                        let ch = (j / inner) % c;
                        dg[ch] += gv * xv;
                        db[ch] += gv;
                    }
                    if wants(*gamma) {
                        acc(*gamma, Tensor::new(&[c], dg).expect("channel vector"));
                    }
                    if wants(*beta) {
                        acc(*beta, Tensor::new(&[c], db).expect("channel vector"));
                    }
                }
            }
            Op::RestoreMoments { y, x, mean, std } => {
                let (yt, xt) = (val(*y), val(*x));
                let n = mean.len();
                let (my, mx) = (yt.numel() / n, xt.numel() / n);
                if wants(*y) {
                    acc(*y, Tensor::from_fn(yt.shape(), |j| g.data()[j] * std[j / my]));
                }
                if wants(*x) {
                    let mut d = vec![T::zero(); xt.numel()];
                    for s in 0..n {
                        let gs = &g.data()[s * my..(s + 1) * my];
                        let ys = &yt.data()[s * my..(s + 1) * my];
                        let dmu = gs.iter().fold(T::zero(), |a, &b| a + b);
                        let dsd = gs.iter().zip(ys).fold(T::zero(), |a, (&p, &q)| a + p * q);
                        let mxt = T::of(mx as f64);
                        for (dj, &xj) in d[s * mx..(s + 1) * mx].iter_mut().zip(&xt.data()[s * mx..]) {
                            *dj = dmu / mxt + dsd * (xj - mean[s]) / (mxt * std[s]);
                        }
                    }
                    acc(*x, Tensor::new(xt.shape(), d).expect("same shape"));
                }
            }
            Op::GlobalAvgPool(x) => {
                let xt = val(*x);
                let hw: usize = xt.shape()[2..].iter().product();
                let inv = T::one() / T::of(hw as f64);
                acc(*x, Tensor::from_fn(xt.shape(), |j| g.data()[j / hw] * inv));
            }
            Op::Linear { x, w, b } => {
                let (xt, wt) = (val(*x), val(*w));
                let (n, k, m) = (xt.shape()[0], xt.shape()[1], wt.shape()[0]);
                if wants(*x) {
                    let mut d = vec![T::zero(); n * k];
                    T::gemm(n, m, k, T::one(), g.data(), false, wt.data(), false, T::zero(), &mut d);
                    acc(*x, Tensor::new(&[n, k], d).expect("input shape"));
                }
                if wants(*w) {
                    let mut d = vec![T::zero(); m * k];
                    T::gemm(m, n, k, T::one(), g.data(), true, xt.data(), false, T::zero(), &mut d);
                    acc(*w, Tensor::new(&[m, k], d).expect("weight shape"));
                }
                if wants(*b) {
                    let mut d = vec![T::zero(); m];
                    for row in g.data().chunks_exact(m) {
                        for (dj, &r) in d.iter_mut().zip(row) {
                            *dj += r;
                        }
                    }
                    acc(*b, Tensor::new(&[m], d).expect("bias shape"));
                }
            }
            Op::Mean(a) => {
                let t = val(*a);
                let s = g.data()[0] / T::of(t.numel() as f64);
                acc(*a, Tensor::full(t.shape(), s));
            }
            Op::Sum(a) => acc(*a, Tensor::full(val(*a).shape(), g.data()[0])),
            Op::L1(a, b) => {
                let (x, y) = (val(*a), val(*b));
                let s = g.data()[0] / T::of(x.numel() as f64);
                let d = zip_map(x, y, |p, q| {
                    let diff = p - q;
                    if diff > T::zero() {
                        s
                    } else if diff < T::zero() {
                        -s
                    } else {
                        T::zero()
                    }
                });
                if wants(*b) {
                    acc(*b, d.map(|v| -v));
                }
                if wants(*a) {
                    acc(*a, d);
                }
            }
            Op::Mse(a, b) => {
                let (x, y) = (val(*a), val(*b));
                let s = T::of(2.0) * g.data()[0] / T::of(x.numel() as f64);
                let d = zip_map(x, y, |p, q| (p - q) * s);
                if wants(*b) {
                    acc(*b, d.map(|v| -v));
                }
                if wants(*a) {
                    acc(*a, d);
                }
            }
            Op::MseConst(a, c) => {
                let x = val(*a);
                let s = T::of(2.0) * g.data()[0] / T::of(x.numel() as f64);
                acc(*a, x.map(|p| (p - *c) * s));
            }
            Op::SoftCrossEntropy { logits, targets, probs } => {
                let l = val(*logits);
                let s = g.data()[0] / T::of(l.shape()[0] as f64);
                let d = probs.iter().zip(targets.data()).map(|(&p, &t)| (p - t) * s).collect();
                acc(*logits, Tensor::new(l.shape(), d).expect("logit shape"));
            }
        }
    }
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
