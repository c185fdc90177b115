//! Adjoint identity between the strided forward convolution and the
//! cropped transposed convolution. Unlike the oracles in the parent module
//! this drives the kernels under test, once per side of the identity.

use std::collections::BTreeSet;

use neurocae::decoder::{self, TGeometry};
use neurocae::model::{all_models, TKind};
use neurocae::ops::{self, Activation, ConvGeometry};
use neurocae::tensor::Tensor;
use rand::Rng;

use super::rng;

pub const ADJOINT_REL_TOL: f64 = 1e-6;

pub fn random(r: &mut impl Rng, h: usize, w: usize, c: usize) -> Tensor {
    Tensor::from_vec(h, w, c, (0..h * w * c).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

/// The forward (strided, unpadded at the low edge) convolution whose
/// adjoint the cropped transposed convolution is.
fn forward_geometry(kernel: (usize, usize), stride: (usize, usize), out: (usize, usize)) -> ConvGeometry {
    ConvGeometry { kernel, stride, pad: (0, 0), out }
}

/// `K x K x M x N` -> `K x K x N x M`.
fn swap_channels(w: &[f64], taps: usize, m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; w.len()];
    for t in 0..taps {
        for a in 0..m {
            for b in 0..n {
                out[(t * n + b) * m + a] = w[(t * m + a) * n + b];
            }
        }
    }
    out
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Distinct decoder geometries across every registered model.
/// `(depthwise, kernel, stride, t_conv input, t_conv output)`.
pub type Geometry = (bool, (usize, usize), (usize, usize), (usize, usize), (usize, usize));

pub fn model_geometries() -> BTreeSet<Geometry> {
    let mut set = BTreeSet::new();
    for spec in all_models() {
        for l in &spec.decoder {
            set.insert((l.kind == TKind::TDwConv, l.kernel, l.stride, l.in_shape, l.out_shape));
        }
    }
    set
}

/// `<conv(x), y> - <x, t_conv(y)>` relative error for one geometry with
/// small channel counts.
pub fn adjoint_error(dw: bool, kernel: (usize, usize), stride: (usize, usize), t_in: (usize, usize), t_out: (usize, usize), seed: u64) -> f64 {
    let mut r = rng(seed);
    let (m, n) = if dw { (3, 3) } else { (3, 2) };
    let taps = kernel.0 * kernel.1;
    let y = random(&mut r, t_in.0, t_in.1, m);
    let x = random(&mut r, t_out.0, t_out.1, n);
    let tg = TGeometry::new(kernel, stride, t_out);
    let fg = forward_geometry(kernel, stride, t_in);
    if dw {
        let w: Vec<f64> = (0..taps * m).map(|_| r.random_range(-1.0..1.0)).collect();
        let ty = decoder::t_dw_conv(&y, &w, &vec![0.0; m], &tg, Activation::Identity).unwrap();
        let cx = ops::dw_conv(&x, &w, &vec![0.0; m], &fg, Activation::Identity).unwrap();
        rel_err(cx.dot(&y), x.dot(&ty))
    } else {
        let w: Vec<f64> = (0..taps * m * n).map(|_| r.random_range(-1.0..1.0)).collect();
        let ty = decoder::t_conv(&y, &w, &vec![0.0; n], n, &tg, Activation::Identity).unwrap();
        let cx = ops::conv2d(&x, &swap_channels(&w, taps, m, n), &vec![0.0; m], m, &fg, Activation::Identity).unwrap();
        rel_err(cx.dot(&y), x.dot(&ty))
    }
}

