use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Scalar, Tensor};
use crate::dsp::stft::reflect_index;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadMode {
    Zero,
    Reflect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub padding: usize,
    pub pad_mode: PadMode,
}

impl Conv2dSpec {
    pub const fn new(stride: usize, padding: usize, pad_mode: PadMode) -> Self {
        Self {
            stride,
            padding,
            pad_mode,
        }
    }
}

const OUTSIDE: usize = usize::MAX;

/// Shapes and index maps for one convolution; input `[n, ci, h, w]`,
/// kernel `[co, ci, k, k]`, output `[n, co, ho, wo]`.
#[derive(Debug, Clone)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub ci: usize,
    pub h: usize,
    pub w: usize,
    pub co: usize,
    pub k: usize,
    pub ho: usize,
    pub wo: usize,
    // Input coordinate for (kernel offset, output coordinate), or OUTSIDE
    // where zero padding applies.
    ymap: Vec<usize>,
    xmap: Vec<usize>,
}

fn axis_map(len: usize, out: usize, k: usize, spec: Conv2dSpec) -> Vec<usize> {
    let mut map = vec![OUTSIDE; k * out];
    for kk in 0..k {
        for o in 0..out {
            let i = (o * spec.stride + kk) as isize - spec.padding as isize;
            map[kk * out + o] = if (0..len as isize).contains(&i) {
                i as usize
            } else {
                match spec.pad_mode {
                    PadMode::Zero => OUTSIDE,
                    PadMode::Reflect => reflect_index(i, len),
                }
            };
        }
    }
    map
}

impl ConvGeom {
    pub fn new(x: &[usize], kernel: &[usize], spec: Conv2dSpec) -> Result<Self> {
        let (&[n, ci, h, w], &[co, kci, kh, kw]) = (x, kernel) else {
            return Err(Error::shape(
                "conv2d",
                format!("input {x:?} and kernel {kernel:?} must be rank 4"),
            ));
        };
        if kci != ci || kh != kw || kh == 0 {
            return Err(Error::shape(
                "conv2d",
                format!("input {x:?} incompatible with square kernel {kernel:?}"),
            ));
        }
        if spec.stride == 0 {
            return Err(Error::arg("conv2d stride must be at least 1"));
        }
        if spec.pad_mode == PadMode::Reflect && spec.padding >= h.min(w) {
            return Err(Error::shape(
                "conv2d",
                format!(
                    "reflect padding {} needs spatial dims above it, got {h}x{w}",
                    spec.padding
                ),
            ));
        }
        let k = kh;
        let (hp, wp) = (h + 2 * spec.padding, w + 2 * spec.padding);
        if hp < k || wp < k {
            return Err(Error::shape(
                "conv2d",
                format!("kernel {k} larger than padded input {hp}x{wp}"),
            ));
        }
        let ho = (hp - k) / spec.stride + 1;
        let wo = (wp - k) / spec.stride + 1;
        Ok(Self {
            n,
            ci,
            h,
            w,
            co,
            k,
            ho,
            wo,
            ymap: axis_map(h, ho, k, spec),
            xmap: axis_map(w, wo, k, spec),
        })
    }

    pub fn ckk(&self) -> usize {
        self.ci * self.k * self.k
    }

    pub fn positions(&self) -> usize {
        self.ho * self.wo
    }

    /// Unfolds one sample into a `[ci·k·k, ho·wo]` matrix.
    pub fn im2col<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        let (k, ho, wo, p) = (self.k, self.ho, self.wo, self.positions());
        for c in 0..self.ci {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((c * k + ky) * k + kx) * p..][..p];
                    let xm = &self.xmap[kx * wo..(kx + 1) * wo];
                    for oy in 0..ho {
                        let dst = &mut row[oy * wo..(oy + 1) * wo];
                        let iy = self.ymap[ky * ho + oy];
                        if iy == OUTSIDE {
                            dst.fill(T::zero());
                            continue;
                        }
                        let src = &plane[iy * self.w..(iy + 1) * self.w];
                        for (d, &ix) in dst.iter_mut().zip(xm) {
                            *d = if ix == OUTSIDE { T::zero() } else { src[ix] };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: scatters columns back, accumulating.
    pub fn col2im<T: Scalar>(&self, cols: &[T], dx: &mut [T]) {
        let (k, ho, wo, p) = (self.k, self.ho, self.wo, self.positions());
        for c in 0..self.ci {
            let plane = &mut dx[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((c * k + ky) * k + kx) * p..][..p];
                    let xm = &self.xmap[kx * wo..(kx + 1) * wo];
                    for oy in 0..ho {
                        let iy = self.ymap[ky * ho + oy];
                        if iy == OUTSIDE {
                            continue;
                        }
                        let dst = &mut plane[iy * self.w..(iy + 1) * self.w];
                        for (&s, &ix) in row[oy * wo..(oy + 1) * wo].iter().zip(xm) {
                            if ix != OUTSIDE {
                                dst[ix] += s;
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: Conv2dSpec,
) -> Result<(ConvGeom, Tensor<T>)> {
    let g = ConvGeom::new(x.shape(), kernel.shape(), spec)?;
    if let Some(b) = bias {
        if b.shape() != [g.co] {
            return Err(Error::shape(
                "conv2d",
                format!("bias {:?} for {} output channels", b.shape(), g.co),
            ));
        }
    }
    let (p, ckk) = (g.positions(), g.ckk());
    let mut out = vec![T::zero(); g.n * g.co * p];
    let mut cols = vec![T::zero(); ckk * p];
    let in_stride = g.ci * g.h * g.w;
    for s in 0..g.n {
        g.im2col(&x.data()[s * in_stride..(s + 1) * in_stride], &mut cols);
        let o = &mut out[s * g.co * p..(s + 1) * g.co * p];
        T::gemm(g.co, ckk, p, T::one(), kernel.data(), false, &cols, false, T::zero(), o);
        if let Some(b) = bias {
            for (row, &bv) in o.chunks_exact_mut(p).zip(b.data()) {
                row.iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    let out = Tensor::new(&[g.n, g.co, g.ho, g.wo], out)?;
    Ok((g, out))
}

/// Gradients with respect to input, kernel and bias, each computed only
/// when requested. Per-sample contributions are summed in sample order.
pub(crate) fn conv2d_backward<T: Scalar>(
    g: &ConvGeom,
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    want: (bool, bool, bool),
) -> (Option<Tensor<T>>, Option<Tensor<T>>, Option<Tensor<T>>) {
    let (p, ckk) = (g.positions(), g.ckk());
    let in_stride = g.ci * g.h * g.w;
    let mut dx = want.0.then(|| vec![T::zero(); x.numel()]);
    let mut dw = want.1.then(|| vec![T::zero(); kernel.numel()]);
    let mut cols = vec![T::zero(); ckk * p];
    for s in 0..g.n {
        let go = &grad_out.data()[s * g.co * p..(s + 1) * g.co * p];
        if let Some(dw) = dw.as_mut() {
            g.im2col(&x.data()[s * in_stride..(s + 1) * in_stride], &mut cols);
            T::gemm(g.co, p, ckk, T::one(), go, false, &cols, true, T::one(), dw);
        }
        if let Some(dx) = dx.as_mut() {
            T::gemm(
                ckk,
                g.co,
                p,
                T::one(),
                kernel.data(),
                true,
                go,
                false,
                T::zero(),
                &mut cols,
            );
            g.col2im(&cols, &mut dx[s * in_stride..(s + 1) * in_stride]);
        }
    }
    let db = want.2.then(|| {
        let mut db = vec![T::zero(); g.co];
        for s in 0..g.n {
            for (c, d) in db.iter_mut().enumerate() {
                let row = &grad_out.data()[(s * g.co + c) * p..][..p];
                *d += row.iter().fold(T::zero(), |a, &b| a + b);
            }
        }
        Tensor::new(&[g.co], db).expect("bias gradient shape")
    });
    (
        dx.map(|d| Tensor::new(x.shape(), d).expect("input gradient shape")),
        dw.map(|d| Tensor::new(kernel.shape(), d).expect("kernel gradient shape")),
        db,
    )
}
