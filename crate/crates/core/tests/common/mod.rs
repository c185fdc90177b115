//! Brute-force oracles and random instance generators shared by the
//! integration tests. Nothing here calls into the kernels under test.

#![allow(dead_code)]

pub mod adjoint;
pub mod tables;

use neurocae::ops::{Activation, ConvGeometry, OutputStage};
use neurocae::quant::{QParams, QTensor, Requantizer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SAME-with-ceil output length and leading pad, from first principles.
pub fn same(input: usize, k: usize, s: usize) -> (usize, usize) {
    let out = input.div_ceil(s);
    let need = (out - 1) * s + k;
    let total = need.saturating_sub(input);
    (out, total / 2)
}

/// Activation minus zero point, materialized with explicit zero padding.
/// Returns the padded tensor as `[y][x][c]` plus its padded extent.
fn padded(ia: &QTensor, pad: (usize, usize), extent: (usize, usize)) -> Vec<Vec<Vec<i64>>> {
    let mut p = vec![vec![vec![0i64; ia.c]; extent.1]; extent.0];
    for y in 0..ia.h {
        for x in 0..ia.w {
            for c in 0..ia.c {
                let (py, px) = (y + pad.0, x + pad.1);
                if py < extent.0 && px < extent.1 {
                    p[py][px][c] = (ia.data[(y * ia.w + x) * ia.c + c] - ia.qparams.zero_point) as i64;
                }
            }
        }
    }
    p
}

fn extent(input: usize, out: usize, k: usize, s: usize, pad: usize) -> usize {
    ((out - 1) * s + k).max(input + pad)
}

/// Standard convolution accumulators; weights `[i][j][m][n]` row-major.
pub fn conv_acc(ia: &QTensor, w: &[i8], bias: &[i32], n: usize, k: (usize, usize), s: (usize, usize)) -> Vec<i64> {
    let (oh, pt) = same(ia.h, k.0, s.0);
    let (ow, pl) = same(ia.w, k.1, s.1);
    let p = padded(ia, (pt, pl), (extent(ia.h, oh, k.0, s.0, pt), extent(ia.w, ow, k.1, s.1, pl)));
    let m = ia.c;
    let mut out = Vec::with_capacity(oh * ow * n);
    for oy in 0..oh {
        for ox in 0..ow {
            for o in 0..n {
                let mut acc = bias[o] as i64;
                for i in 0..k.0 {
                    for j in 0..k.1 {
                        for c in 0..m {
                            let wv = w[((i * k.1 + j) * m + c) * n + o] as i64;
                            acc += wv * p[oy * s.0 + i][ox * s.1 + j][c];
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

/// Depthwise accumulators; weights `[i][j][c]`.
pub fn dw_acc(ia: &QTensor, w: &[i8], bias: &[i32], k: (usize, usize), s: (usize, usize)) -> Vec<i64> {
    let (oh, pt) = same(ia.h, k.0, s.0);
    let (ow, pl) = same(ia.w, k.1, s.1);
    let p = padded(ia, (pt, pl), (extent(ia.h, oh, k.0, s.0, pt), extent(ia.w, ow, k.1, s.1, pl)));
    let mut out = Vec::with_capacity(oh * ow * ia.c);
    for oy in 0..oh {
        for ox in 0..ow {
            for c in 0..ia.c {
                let mut acc = bias[c] as i64;
                for i in 0..k.0 {
                    for j in 0..k.1 {
                        acc += w[(i * k.1 + j) * ia.c + c] as i64 * p[oy * s.0 + i][ox * s.1 + j][c];
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

/// Pointwise accumulators as a plain matrix product; weights `[m][n]`.
pub fn pw_acc(ia: &QTensor, w: &[i8], bias: &[i32], n: usize) -> Vec<i64> {
    let m = ia.c;
    let zp = ia.qparams.zero_point as i64;
    let mut out = Vec::with_capacity(ia.h * ia.w * n);
    for px in 0..ia.h * ia.w {
        for o in 0..n {
            let s: i64 = (0..m).map(|c| w[c * n + o] as i64 * (ia.data[px * m + c] as i64 - zp)).sum();
            out.push(bias[o] as i64 + s);
        }
    }
    out
}

/// Unpadded pooling windows: `(sum of a - zp, max of a)` per output.
pub fn pool(ia: &QTensor, k: (usize, usize), s: (usize, usize)) -> (Vec<i64>, Vec<i32>, (usize, usize)) {
    let oh = (ia.h - k.0) / s.0 + 1;
    let ow = (ia.w - k.1) / s.1 + 1;
    let mut sums = Vec::new();
    let mut maxes = Vec::new();
    for oy in 0..oh {
        for ox in 0..ow {
            for c in 0..ia.c {
                let vals: Vec<i32> = (0..k.0)
                    .flat_map(|i| (0..k.1).map(move |j| (i, j)))
                    .map(|(i, j)| ia.data[((oy * s.0 + i) * ia.w + ox * s.1 + j) * ia.c + c])
                    .collect();
                sums.push(vals.iter().map(|&v| (v - ia.qparams.zero_point) as i64).sum());
                maxes.push(*vals.iter().max().unwrap());
            }
        }
    }
    (sums, maxes, (oh, ow))
}

/// `round(acc * M / 2^(31 + shift))`, halves away from zero, via exact
/// integer division.
pub fn requant(acc: i64, r: Requantizer, zp: i32, act: Activation) -> i32 {
    let num = acc as i128 * r.multiplier as i128;
    let den = 1i128 << (31 + r.shift as u32);
    let q = num.abs() / den;
    let rem = num.abs() % den;
    let mag = if 2 * rem >= den { q + 1 } else { q };
    let v = if num < 0 { -mag } else { mag };
    let v = (v + zp as i128).clamp(-128, 127) as i32;
    match act {
        Activation::Relu => v.max(zp),
        Activation::Identity => v,
    }
}

pub fn finish(acc: &[i64], st: &OutputStage) -> Vec<i32> {
    acc.iter().map(|&a| requant(a, st.requant, st.out_q.zero_point, st.activation)).collect()
}

pub fn random_qparams(r: &mut ChaCha8Rng) -> QParams {
    QParams::new(r.random_range(0.01f32..1.0), r.random_range(-128..=127), 8).unwrap()
}

pub fn random_qtensor(r: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> QTensor {
    let q = random_qparams(r);
    let data = (0..h * w * c).map(|_| r.random_range(-128..=127)).collect();
    QTensor::new(h, w, c, data, q).unwrap()
}

pub fn random_i8(r: &mut ChaCha8Rng, n: usize) -> Vec<i8> {
    (0..n).map(|_| r.random_range(-127i8..=127)).collect()
}

pub fn random_bias(r: &mut ChaCha8Rng, n: usize) -> Vec<i32> {
    (0..n).map(|_| r.random_range(-5000..=5000)).collect()
}

pub fn random_stage(r: &mut ChaCha8Rng) -> OutputStage {
    OutputStage {
        requant: Requantizer::from_ratio(r.random_range(1e-5..0.5)).unwrap(),
        out_q: random_qparams(r),
        activation: if r.random_bool(0.5) { Activation::Relu } else { Activation::Identity },
    }
}

pub fn random_geometry_dims(r: &mut ChaCha8Rng) -> ((usize, usize), (usize, usize), (usize, usize)) {
    let k = (r.random_range(1..=4), r.random_range(1..=4));
    let s = (r.random_range(1..=3), r.random_range(1..=3));
    let hw = (r.random_range(1..=9), r.random_range(1..=9));
    (hw, k, s)
}

/// Runs `count` random instances of each integer kernel against the
/// oracles above; returns the number of instances checked or the first
/// mismatch.
pub fn integer_kernel_sweep(seed: u64, count: usize) -> Result<usize, String> {
    use neurocae::ops;
    let mut r = rng(seed);
    let mut checked = 0;
    for case in 0..count {
        let (hw, k, s) = random_geometry_dims(&mut r);
        let m = r.random_range(1..=6);
        let n = r.random_range(1..=6);
        let ia = random_qtensor(&mut r, hw.0, hw.1, m);
        let st = random_stage(&mut r);
        let g = ConvGeometry::same(hw, k, s);

        // standard convolution
        let w = random_i8(&mut r, k.0 * k.1 * m * n);
        let b = random_bias(&mut r, n);
        let want = conv_acc(&ia, &w, &b, n, k, s);
        let got = ops::conv2d_acc(&ia, &w, &b, n, &g).map_err(|e| e.to_string())?;
        if got.iter().map(|&v| v as i64).ne(want.iter().copied()) {
            return Err(format!("conv accumulators differ in case {case}"));
        }
        let out = ops::conv2d_int(&ia, &w, &b, n, &g, &st).map_err(|e| e.to_string())?;
        if out.data != finish(&want, &st) {
            return Err(format!("conv outputs differ in case {case}"));
        }

        // depthwise
        let w = random_i8(&mut r, k.0 * k.1 * m);
        let b = random_bias(&mut r, m);
        let want = dw_acc(&ia, &w, &b, k, s);
        let out = ops::dw_conv_int(&ia, &w, &b, &g, &st).map_err(|e| e.to_string())?;
        if out.data != finish(&want, &st) {
            return Err(format!("depthwise outputs differ in case {case}"));
        }

        // pointwise
        let w = random_i8(&mut r, m * n);
        let b = random_bias(&mut r, n);
        let want = pw_acc(&ia, &w, &b, n);
        let out = ops::pw_conv_int(&ia, &w, &b, n, &st).map_err(|e| e.to_string())?;
        if out.data != finish(&want, &st) {
            return Err(format!("pointwise outputs differ in case {case}"));
        }

        // pooling, window no larger than the input
        let pk = (r.random_range(1..=hw.0), r.random_range(1..=hw.1));
        let ps = (r.random_range(1..=2), r.random_range(1..=2));
        let (sums, maxes, _) = pool(&ia, pk, ps);
        let out = ops::avg_pool_int(&ia, pk, ps, &st).map_err(|e| e.to_string())?;
        if out.data != finish(&sums, &st) {
            return Err(format!("average pool outputs differ in case {case}"));
        }
        let out = ops::max_pool_int(&ia, pk, ps).map_err(|e| e.to_string())?;
        if out.data != maxes {
            return Err(format!("max pool outputs differ in case {case}"));
        }
        checked += 5;
    }
    Ok(checked)
}
