//! Encoder layer kernels: standard, depthwise and pointwise convolution,
//! average/max pooling and ReLU, each in a real-valued reference form and
//! a bit-exact integer form.
//!
//! Weight layouts (row-major):
//! - conv: `K_h x K_w x M x N`
//! - depthwise: `K_h x K_w x M`
//! - pointwise: `M x N`
//!
//! Integer kernels accumulate `w * (a - zp_in)` in 32 bits in the fixed
//! order kernel row, kernel column, input channel, add the 32-bit bias and
//! requantize. Padding is zero in real terms, i.e. `zp_in` in the integer
//! domain, so padded taps contribute nothing to the accumulator.

use crate::error::{Error, Result};
use crate::lfsr;
use crate::pruner::CompressedWeights;
use crate::quant::{requantize, QParams, QTensor, Requantizer};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }
}

/// Sliding-window geometry: kernel, stride, leading padding and the output
/// grid the window is evaluated over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub pad: (usize, usize),
    pub out: (usize, usize),
}

/// `(out, pad_before)` for one axis under SAME-with-ceil padding.
pub fn same_axis(input: usize, k: usize, s: usize) -> (usize, usize) {
    let out = input.div_ceil(s);
    let total = ((out.saturating_sub(1)) * s + k).saturating_sub(input);
    (out, total / 2)
}

impl ConvGeometry {
    pub fn same(input: (usize, usize), kernel: (usize, usize), stride: (usize, usize)) -> Self {
        let (oh, pt) = same_axis(input.0, kernel.0, stride.0);
        let (ow, pl) = same_axis(input.1, kernel.1, stride.1);
        Self {
            kernel,
            stride,
            pad: (pt, pl),
            out: (oh, ow),
        }
    }

    /// Unpadded window placement.
    pub fn valid(input: (usize, usize), kernel: (usize, usize), stride: (usize, usize)) -> Result<Self> {
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::Shape("stride must be non-zero".into()));
        }
        if kernel.0 > input.0 || kernel.1 > input.1 {
            return Err(Error::Shape(format!(
                "window {}x{} larger than input {}x{}",
                kernel.0, kernel.1, input.0, input.1
            )));
        }
        Ok(Self {
            kernel,
            stride,
            pad: (0, 0),
            out: ((input.0 - kernel.0) / stride.0 + 1, (input.1 - kernel.1) / stride.1 + 1),
        })
    }

    fn check(&self) -> Result<()> {
        if self.kernel.0 == 0 || self.kernel.1 == 0 || self.stride.0 == 0 || self.stride.1 == 0 {
            return Err(Error::Shape("kernel and stride must be non-zero".into()));
        }
        Ok(())
    }

    /// Input coordinate read by output `o` at kernel tap `k`, if inside.
    #[inline]
    fn src(o: usize, k: usize, s: usize, pad: usize, len: usize) -> Option<usize> {
        let p = (o * s + k).checked_sub(pad)?;
        (p < len).then_some(p)
    }
}

/// Computational cost of a depthwise-separable block relative to the
/// standard convolution it replaces.
pub fn dws_cost_ratio(kernel: (usize, usize), n: usize) -> f64 {
    1.0 / n as f64 + 1.0 / (kernel.0 * kernel.1) as f64
}

fn expect_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Shape(format!("{what}: expected {want} elements, got {got}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Real-valued reference path

pub fn conv2d(
    ia: &Tensor,
    w: &[f64],
    bias: &[f64],
    n: usize,
    g: &ConvGeometry,
    act: Activation,
) -> Result<Tensor> {
    g.check()?;
    let (kh, kw) = g.kernel;
    let m = ia.c;
    expect_len("conv weights", w.len(), kh * kw * m * n)?;
    expect_len("conv bias", bias.len(), n)?;
    let mut out = Tensor::zeros(g.out.0, g.out.1, n);
    let mut acc = vec![0.0; n];
    for oy in 0..g.out.0 {
        for ox in 0..g.out.1 {
            acc.copy_from_slice(bias);
            for i in 0..kh {
                let Some(y) = ConvGeometry::src(oy, i, g.stride.0, g.pad.0, ia.h) else { continue };
                for j in 0..kw {
                    let Some(x) = ConvGeometry::src(ox, j, g.stride.1, g.pad.1, ia.w) else { continue };
                    for mi in 0..m {
                        let a = ia.at(y, x, mi);
                        let row = &w[((i * kw + j) * m + mi) * n..][..n];
                        for (o, &wv) in acc.iter_mut().zip(row) {
                            *o += wv * a;
                        }
                    }
                }
            }
            let base = out.idx(oy, ox, 0);
            for (dst, &v) in out.data[base..base + n].iter_mut().zip(&acc) {
                *dst = act.apply(v);
            }
        }
    }
    Ok(out)
}

pub fn dw_conv(ia: &Tensor, w: &[f64], bias: &[f64], g: &ConvGeometry, act: Activation) -> Result<Tensor> {
    g.check()?;
    let (kh, kw) = g.kernel;
    let m = ia.c;
    expect_len("depthwise weights", w.len(), kh * kw * m)?;
    expect_len("depthwise bias", bias.len(), m)?;
    let mut out = Tensor::zeros(g.out.0, g.out.1, m);
    for oy in 0..g.out.0 {
        for ox in 0..g.out.1 {
            for c in 0..m {
                let mut acc = bias[c];
                for i in 0..kh {
                    let Some(y) = ConvGeometry::src(oy, i, g.stride.0, g.pad.0, ia.h) else { continue };
                    for j in 0..kw {
                        let Some(x) = ConvGeometry::src(ox, j, g.stride.1, g.pad.1, ia.w) else { continue };
                        acc += w[(i * kw + j) * m + c] * ia.at(y, x, c);
                    }
                }
                let k = out.idx(oy, ox, c);
                out.data[k] = act.apply(acc);
            }
        }
    }
    Ok(out)
}

pub fn pw_conv(ia: &Tensor, w: &[f64], bias: &[f64], n: usize, act: Activation) -> Result<Tensor> {
    let m = ia.c;
    expect_len("pointwise weights", w.len(), m * n)?;
    expect_len("pointwise bias", bias.len(), n)?;
    let mut out = Tensor::zeros(ia.h, ia.w, n);
    for p in 0..ia.h * ia.w {
        let px = &ia.data[p * m..][..m];
        let dst = &mut out.data[p * n..][..n];
        dst.copy_from_slice(bias);
        for (mi, &a) in px.iter().enumerate() {
            for (o, &wv) in dst.iter_mut().zip(&w[mi * n..][..n]) {
                *o += wv * a;
            }
        }
        for v in dst.iter_mut() {
            *v = act.apply(*v);
        }
    }
    Ok(out)
}

pub fn avg_pool(ia: &Tensor, kernel: (usize, usize), stride: (usize, usize)) -> Result<Tensor> {
    let g = ConvGeometry::valid((ia.h, ia.w), kernel, stride)?;
    g.check()?;
    let area = (kernel.0 * kernel.1) as f64;
    let mut out = Tensor::zeros(g.out.0, g.out.1, ia.c);
    for oy in 0..g.out.0 {
        for ox in 0..g.out.1 {
            for c in 0..ia.c {
                let mut s = 0.0;
                for i in 0..kernel.0 {
                    for j in 0..kernel.1 {
                        s += ia.at(oy * stride.0 + i, ox * stride.1 + j, c);
                    }
                }
                let k = out.idx(oy, ox, c);
                out.data[k] = s / area;
            }
        }
    }
    Ok(out)
}

pub fn max_pool(ia: &Tensor, kernel: (usize, usize), stride: (usize, usize)) -> Result<Tensor> {
    let g = ConvGeometry::valid((ia.h, ia.w), kernel, stride)?;
    g.check()?;
    let mut out = Tensor::zeros(g.out.0, g.out.1, ia.c);
    for oy in 0..g.out.0 {
        for ox in 0..g.out.1 {
            for c in 0..ia.c {
                let mut best = f64::NEG_INFINITY;
                for i in 0..kernel.0 {
                    for j in 0..kernel.1 {
                        best = best.max(ia.at(oy * stride.0 + i, ox * stride.1 + j, c));
                    }
                }
                let k = out.idx(oy, ox, c);
                out.data[k] = best;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Integer path

/// Requantization and activation applied to 32-bit accumulators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputStage {
    pub requant: Requantizer,
    pub out_q: QParams,
    pub activation: Activation,
}

impl OutputStage {
    #[inline]
    pub fn apply(&self, acc: i32) -> i32 {
        let v = requantize(acc, self.requant, self.out_q.zero_point);
        match self.activation {
            // real zero sits at the zero point
            Activation::Relu => v.max(self.out_q.zero_point),
            Activation::Identity => v,
        }
    }

    pub fn finish(&self, h: usize, w: usize, c: usize, acc: &[i32]) -> QTensor {
        QTensor {
            h,
            w,
            c,
            data: acc.iter().map(|&a| self.apply(a)).collect(),
            qparams: self.out_q,
        }
    }
}

pub fn conv2d_acc(ia: &QTensor, w: &[i8], bias: &[i32], n: usize, g: &ConvGeometry) -> Result<Vec<i32>> {
    g.check()?;
    let (kh, kw) = g.kernel;
    let m = ia.c;
    expect_len("conv weights", w.len(), kh * kw * m * n)?;
    expect_len("conv bias", bias.len(), n)?;
    let zp = ia.qparams.zero_point;
    let mut out = vec![0i32; g.out.0 * g.out.1 * n];
    for oy in 0..g.out.0 {
        for ox in 0..g.out.1 {
            let acc = &mut out[(oy * g.out.1 + ox) * n..][..n];
            acc.copy_from_slice(bias);
            for i in 0..kh {
                let Some(y) = ConvGeometry::src(oy, i, g.stride.0, g.pad.0, ia.h) else { continue };
                for j in 0..kw {
                    let Some(x) = ConvGeometry::src(ox, j, g.stride.1, g.pad.1, ia.w) else { continue };
                    for mi in 0..m {
                        let a = ia.at(y, x, mi) - zp;
                        if a == 0 {
                            continue;
                        }
                        let row = &w[((i * kw + j) * m + mi) * n..][..n];
                        for (o, &wv) in acc.iter_mut().zip(row) {
                            *o += wv as i32 * a;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn dw_conv_acc(ia: &QTensor, w: &[i8], bias: &[i32], g: &ConvGeometry) -> Result<Vec<i32>> {
    g.check()?;
    let (kh, kw) = g.kernel;
    let m = ia.c;
    expect_len("depthwise weights", w.len(), kh * kw * m)?;
    expect_len("depthwise bias", bias.len(), m)?;
    let zp = ia.qparams.zero_point;
    let mut out = vec![0i32; g.out.0 * g.out.1 * m];
    for oy in 0..g.out.0 {
        for ox in 0..g.out.1 {
            for c in 0..m {
                let mut acc = bias[c];
                for i in 0..kh {
                    let Some(y) = ConvGeometry::src(oy, i, g.stride.0, g.pad.0, ia.h) else { continue };
                    for j in 0..kw {
                        let Some(x) = ConvGeometry::src(ox, j, g.stride.1, g.pad.1, ia.w) else { continue };
                        acc += w[(i * kw + j) * m + c] as i32 * (ia.at(y, x, c) - zp);
                    }
                }
                out[(oy * g.out.1 + ox) * m + c] = acc;
            }
        }
    }
    Ok(out)
}

pub fn pw_conv_acc(ia: &QTensor, w: &[i8], bias: &[i32], n: usize) -> Result<Vec<i32>> {
    let m = ia.c;
    expect_len("pointwise weights", w.len(), m * n)?;
    expect_len("pointwise bias", bias.len(), n)?;
    let zp = ia.qparams.zero_point;
    let mut out = vec![0i32; ia.h * ia.w * n];
    for p in 0..ia.h * ia.w {
        let acc = &mut out[p * n..][..n];
        acc.copy_from_slice(bias);
        for mi in 0..m {
            let a = ia.data[p * m + mi] - zp;
            if a == 0 {
                continue;
            }
            for (o, &wv) in acc.iter_mut().zip(&w[mi * n..][..n]) {
                *o += wv as i32 * a;
            }
        }
    }
    Ok(out)
}

/// Pointwise accumulation straight from a compressed store: stored values
/// are matched against activations addressed by the tile's slot indices,
/// rebuilt from the LFSR configuration in stochastic mode or read from the
/// stored nibbles in magnitude mode.
pub fn pw_conv_compressed_acc(ia: &QTensor, cw: &CompressedWeights, bias: &[i32]) -> Result<Vec<i32>> {
    let (m, n) = (cw.rows, cw.cols);
    if ia.c != m {
        return Err(Error::Shape(format!(
            "compressed pointwise expects {m} input channels, activation has {}",
            ia.c
        )));
    }
    expect_len("pointwise bias", bias.len(), n)?;
    let tiles = cw.tile_slots()?;
    let zp = ia.qparams.zero_point;
    let blocks = m.div_ceil(lfsr::TILE_WIDTH);
    let mut out = vec![0i32; ia.h * ia.w * n];
    for p in 0..ia.h * ia.w {
        let px = &ia.data[p * m..][..m];
        let acc = &mut out[p * n..][..n];
        acc.copy_from_slice(bias);
        for (t, (slots, values)) in tiles.iter().enumerate() {
            let (col, block) = (t / blocks, t % blocks);
            let base = block * lfsr::TILE_WIDTH;
            let mut s = 0i32;
            for (&slot, &v) in slots.iter().zip(values.iter()) {
                s += v as i32 * (px[base + slot as usize] - zp);
            }
            acc[col] += s;
        }
    }
    Ok(out)
}

pub fn avg_pool_acc(ia: &QTensor, kernel: (usize, usize), stride: (usize, usize)) -> Result<(Vec<i32>, ConvGeometry)> {
    let g = ConvGeometry::valid((ia.h, ia.w), kernel, stride)?;
    g.check()?;
    let zp = ia.qparams.zero_point;
    let mut out = vec![0i32; g.out.0 * g.out.1 * ia.c];
    for oy in 0..g.out.0 {
        for ox in 0..g.out.1 {
            for c in 0..ia.c {
                let mut s = 0i32;
                for i in 0..kernel.0 {
                    for j in 0..kernel.1 {
                        s += ia.at(oy * stride.0 + i, ox * stride.1 + j, c) - zp;
                    }
                }
                out[(oy * g.out.1 + ox) * ia.c + c] = s;
            }
        }
    }
    Ok((out, g))
}

/// Requantizer for an average pool: `s_in / (s_out * K_h * K_w)`.
pub fn avg_pool_requantizer(in_q: QParams, out_q: QParams, kernel: (usize, usize)) -> Result<Requantizer> {
    Requantizer::from_ratio(in_q.scale as f64 / (out_q.scale as f64 * (kernel.0 * kernel.1) as f64))
}

pub fn conv2d_int(
    ia: &QTensor,
    w: &[i8],
    bias: &[i32],
    n: usize,
    g: &ConvGeometry,
    stage: &OutputStage,
) -> Result<QTensor> {
    let acc = conv2d_acc(ia, w, bias, n, g)?;
    Ok(stage.finish(g.out.0, g.out.1, n, &acc))
}

pub fn dw_conv_int(ia: &QTensor, w: &[i8], bias: &[i32], g: &ConvGeometry, stage: &OutputStage) -> Result<QTensor> {
    let acc = dw_conv_acc(ia, w, bias, g)?;
    Ok(stage.finish(g.out.0, g.out.1, ia.c, &acc))
}

pub fn pw_conv_int(ia: &QTensor, w: &[i8], bias: &[i32], n: usize, stage: &OutputStage) -> Result<QTensor> {
    let acc = pw_conv_acc(ia, w, bias, n)?;
    Ok(stage.finish(ia.h, ia.w, n, &acc))
}

pub fn pw_conv_compressed_int(
    ia: &QTensor,
    cw: &CompressedWeights,
    bias: &[i32],
    stage: &OutputStage,
) -> Result<QTensor> {
    let acc = pw_conv_compressed_acc(ia, cw, bias)?;
    Ok(stage.finish(ia.h, ia.w, cw.cols, &acc))
}

pub fn avg_pool_int(ia: &QTensor, kernel: (usize, usize), stride: (usize, usize), stage: &OutputStage) -> Result<QTensor> {
    let (acc, g) = avg_pool_acc(ia, kernel, stride)?;
    Ok(stage.finish(g.out.0, g.out.1, ia.c, &acc))
}

/// Integer max pool; the output keeps the input's quantization parameters.
pub fn max_pool_int(ia: &QTensor, kernel: (usize, usize), stride: (usize, usize)) -> Result<QTensor> {
    let g = ConvGeometry::valid((ia.h, ia.w), kernel, stride)?;
    g.check()?;
    let mut data = vec![0i32; g.out.0 * g.out.1 * ia.c];
    for oy in 0..g.out.0 {
        for ox in 0..g.out.1 {
            for c in 0..ia.c {
                let mut best = i32::MIN;
                for i in 0..kernel.0 {
                    for j in 0..kernel.1 {
                        best = best.max(ia.at(oy * stride.0 + i, ox * stride.1 + j, c));
                    }
                }
                data[(oy * g.out.1 + ox) * ia.c + c] = best;
            }
        }
    }
    Ok(QTensor {
        h: g.out.0,
        w: g.out.1,
        c: ia.c,
        data,
        qparams: ia.qparams,
    })
}
