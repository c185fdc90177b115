//! Float transposed convolutions for offline reconstruction.
//!
//! Output `(h, w, n)` sums `W[i, j, m, n] * IA[(h - i) / s, (w - j) / s, m]`
//! over taps whose source coordinate is integral and inside the input. The
//! canonical output `s * (H - 1) + K` is cropped at the high edge to the
//! layer's explicit target.

use crate::error::{Error, Result};
use crate::model::{ModelSpec, TKind, TLayerSpec};
use crate::ops::Activation;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TGeometry {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub out: (usize, usize),
}

/// Largest output a transposed convolution produces along one axis.
pub fn canonical_len(input: usize, k: usize, s: usize) -> usize {
    s * (input - 1) + k
}

fn reachable(input: usize, k: usize, s: usize, target: usize) -> bool {
    input > 0 && k > 0 && s > 0 && s * (input - 1) < target && target <= canonical_len(input, k, s)
}

impl TGeometry {
    pub fn new(kernel: (usize, usize), stride: (usize, usize), out: (usize, usize)) -> Self {
        Self { kernel, stride, out }
    }

    pub fn check(&self, input: (usize, usize)) -> Result<()> {
        if !reachable(input.0, self.kernel.0, self.stride.0, self.out.0)
            || !reachable(input.1, self.kernel.1, self.stride.1, self.out.1)
        {
            return Err(Error::Shape(format!(
                "target {}x{} unreachable from {}x{} with kernel {}x{} stride {}x{}",
                self.out.0, self.out.1, input.0, input.1, self.kernel.0, self.kernel.1, self.stride.0, self.stride.1
            )));
        }
        Ok(())
    }

    /// Source coordinate for output `o` at tap `k`, if integral and inside.
    #[inline]
    fn src(o: usize, k: usize, s: usize, len: usize) -> Option<usize> {
        let d = o.checked_sub(k)?;
        (d % s == 0 && d / s < len).then_some(d / s)
    }
}

impl TLayerSpec {
    pub fn geometry(&self) -> TGeometry {
        TGeometry::new(self.kernel, self.stride, self.out_shape)
    }
}

/// Transposed convolution, weights `K_h x K_w x M x N`.
pub fn t_conv(ia: &Tensor, w: &[f64], bias: &[f64], n: usize, g: &TGeometry, act: Activation) -> Result<Tensor> {
    g.check((ia.h, ia.w))?;
    let (kh, kw) = g.kernel;
    let m = ia.c;
    if w.len() != kh * kw * m * n || bias.len() != n {
        return Err(Error::Shape(format!(
            "transposed conv expects {} weights and {n} biases, got {} and {}",
            kh * kw * m * n,
            w.len(),
            bias.len()
        )));
    }
    let mut out = Tensor::zeros(g.out.0, g.out.1, n);
    let mut acc = vec![0.0; n];
    for h in 0..g.out.0 {
        for x in 0..g.out.1 {
            acc.copy_from_slice(bias);
            for i in 0..kh {
                let Some(y) = TGeometry::src(h, i, g.stride.0, ia.h) else { continue };
                for j in 0..kw {
                    let Some(xx) = TGeometry::src(x, j, g.stride.1, ia.w) else { continue };
                    for mi in 0..m {
                        let a = ia.at(y, xx, mi);
                        let row = &w[((i * kw + j) * m + mi) * n..][..n];
                        for (o, &wv) in acc.iter_mut().zip(row) {
                            *o += wv * a;
                        }
                    }
                }
            }
            let base = out.idx(h, x, 0);
            for (d, &v) in out.data[base..base + n].iter_mut().zip(&acc) {
                *d = act.apply(v);
            }
        }
    }
    Ok(out)
}

/// Depthwise transposed convolution, weights `K_h x K_w x M`.
pub fn t_dw_conv(ia: &Tensor, w: &[f64], bias: &[f64], g: &TGeometry, act: Activation) -> Result<Tensor> {
    g.check((ia.h, ia.w))?;
    let (kh, kw) = g.kernel;
    let m = ia.c;
    if w.len() != kh * kw * m || bias.len() != m {
        return Err(Error::Shape(format!(
            "depthwise transposed conv expects {} weights and {m} biases, got {} and {}",
            kh * kw * m,
            w.len(),
            bias.len()
        )));
    }
    let mut out = Tensor::zeros(g.out.0, g.out.1, m);
    for h in 0..g.out.0 {
        for x in 0..g.out.1 {
            for c in 0..m {
                let mut acc = bias[c];
                for i in 0..kh {
                    let Some(y) = TGeometry::src(h, i, g.stride.0, ia.h) else { continue };
                    for j in 0..kw {
                        let Some(xx) = TGeometry::src(x, j, g.stride.1, ia.w) else { continue };
                        acc += w[(i * kw + j) * m + c] * ia.at(y, xx, c);
                    }
                }
                let k = out.idx(h, x, c);
                out.data[k] = act.apply(acc);
            }
        }
    }
    Ok(out)
}

/// Float weights of one decoder layer.
#[derive(Debug, Clone, PartialEq)]
pub struct TWeights {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn run_layer(l: &TLayerSpec, ia: &Tensor, p: &TWeights) -> Result<Tensor> {
    if ia.c != l.in_channels || (ia.h, ia.w) != l.in_shape {
        return Err(Error::Shape(format!(
            "{}: input {}x{}x{} does not match {}x{}x{}",
            l.name, ia.h, ia.w, ia.c, l.in_shape.0, l.in_shape.1, l.in_channels
        )));
    }
    match l.kind {
        TKind::TConv => t_conv(ia, &p.weights, &p.bias, l.out_channels, &l.geometry(), l.activation),
        TKind::TDwConv => t_dw_conv(ia, &p.weights, &p.bias, &l.geometry(), l.activation),
    }
}

/// Run the decoder stack on one latent vector.
pub fn reconstruct(z: &[f64], spec: &ModelSpec, weights: &[TWeights]) -> Result<Tensor> {
    if z.len() != spec.gamma {
        return Err(Error::Shape(format!("latent has {} values, model needs {}", z.len(), spec.gamma)));
    }
    if weights.len() != spec.decoder.len() {
        return Err(Error::Shape(format!(
            "{} decoder weight sets for {} layers",
            weights.len(),
            spec.decoder.len()
        )));
    }
    let mut x = Tensor::from_vec(1, 1, spec.gamma, z.to_vec())?;
    for (l, p) in spec.decoder.iter().zip(weights) {
        x = run_layer(l, &x, p)?;
    }
    Ok(x)
}
