mod common;

use common::*;
use neurocae::lfsr::LfsrConfig;
use neurocae::ops::{self, Activation, ConvGeometry, OutputStage};
use neurocae::pruner::{self, PruneMode, WeightTileSet};
use neurocae::quant::{QParams, QTensor, Requantizer};
use neurocae::tensor::Tensor;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn integer_kernels_match_brute_force() {
    let n = integer_kernel_sweep(0x5eed, 250).unwrap();
    assert!(n >= 1000, "only {n} instances");
}

fn float_conv_oracle(x: &Tensor, w: &[f64], b: &[f64], n: usize, k: (usize, usize), s: (usize, usize)) -> Tensor {
    let (oh, pt) = same(x.h, k.0, s.0);
    let (ow, pl) = same(x.w, k.1, s.1);
    let mut out = Tensor::zeros(oh, ow, n);
    for oy in 0..oh {
        for ox in 0..ow {
            for o in 0..n {
                let mut acc = b[o];
                for i in 0..k.0 {
                    for j in 0..k.1 {
                        let (y, xx) = ((oy * s.0 + i) as isize - pt as isize, (ox * s.1 + j) as isize - pl as isize);
                        if y < 0 || xx < 0 || y as usize >= x.h || xx as usize >= x.w {
                            continue;
                        }
                        for c in 0..x.c {
                            acc += w[((i * k.1 + j) * x.c + c) * n + o] * x.at(y as usize, xx as usize, c);
                        }
                    }
                }
                let idx = out.idx(oy, ox, o);
                out.data[idx] = acc;
            }
        }
    }
    out
}

fn random_tensor(r: &mut impl Rng, h: usize, w: usize, c: usize) -> Tensor {
    Tensor::from_vec(h, w, c, (0..h * w * c).map(|_| r.random_range(-2.0..2.0)).collect()).unwrap()
}

#[test]
fn float_kernels_match_brute_force() {
    let mut r = rng(11);
    for _ in 0..200 {
        let (hw, k, s) = random_geometry_dims(&mut r);
        let (m, n) = (r.random_range(1..=5), r.random_range(1..=5));
        let x = random_tensor(&mut r, hw.0, hw.1, m);
        let g = ConvGeometry::same(hw, k, s);
        let w: Vec<f64> = (0..k.0 * k.1 * m * n).map(|_| r.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let got = ops::conv2d(&x, &w, &b, n, &g, Activation::Identity).unwrap();
        let want = float_conv_oracle(&x, &w, &b, n, k, s);
        assert_eq!(got.dims(), want.dims());
        for (a, b) in got.data.iter().zip(&want.data) {
            assert!((a - b).abs() < 1e-12);
        }

        // depthwise = per-channel standard convolution with a diagonal filter
        let wd: Vec<f64> = (0..k.0 * k.1 * m).map(|_| r.random_range(-1.0..1.0)).collect();
        let bd: Vec<f64> = (0..m).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut diag = vec![0.0; k.0 * k.1 * m * m];
        for t in 0..k.0 * k.1 {
            for c in 0..m {
                diag[(t * m + c) * m + c] = wd[t * m + c];
            }
        }
        let got = ops::dw_conv(&x, &wd, &bd, &g, Activation::Relu).unwrap();
        let want = float_conv_oracle(&x, &diag, &bd, m, k, s);
        for (a, b) in got.data.iter().zip(&want.data) {
            assert!((a - b.max(0.0)).abs() < 1e-12);
        }

        // pointwise = 1x1 stride-1 standard convolution
        let wp: Vec<f64> = (0..m * n).map(|_| r.random_range(-1.0..1.0)).collect();
        let got = ops::pw_conv(&x, &wp, &b, n, Activation::Identity).unwrap();
        let want = float_conv_oracle(&x, &wp, &b, n, (1, 1), (1, 1));
        for (a, b) in got.data.iter().zip(&want.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn float_pools_match_window_statistics() {
    let mut r = rng(12);
    for _ in 0..100 {
        let (h, w, c) = (r.random_range(1..8), r.random_range(1..8), r.random_range(1..4));
        let x = random_tensor(&mut r, h, w, c);
        let k = (r.random_range(1..=h), r.random_range(1..=w));
        let avg = ops::avg_pool(&x, k, (1, 1)).unwrap();
        let max = ops::max_pool(&x, k, (1, 1)).unwrap();
        for oy in 0..avg.h {
            for ox in 0..avg.w {
                for ch in 0..c {
                    let vals: Vec<f64> = (0..k.0)
                        .flat_map(|i| (0..k.1).map(move |j| (i, j)))
                        .map(|(i, j)| x.at(oy + i, ox + j, ch))
                        .collect();
                    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                    assert!((avg.at(oy, ox, ch) - mean).abs() < 1e-12);
                    assert_eq!(max.at(oy, ox, ch), vals.iter().cloned().fold(f64::MIN, f64::max));
                }
            }
        }
    }
}

#[test]
fn compressed_pointwise_equals_masked_dense() {
    let mut r = rng(13);
    for case in 0..300 {
        let (m, n) = (r.random_range(1..=40), r.random_range(1..=6));
        let theta = [4, 8, 12][case % 3];
        let (h, w) = (r.random_range(1..4), r.random_range(1..4));
        let ia = random_qtensor(&mut r, h, w, m);
        let w = random_i8(&mut r, m * n);
        let b = random_bias(&mut r, n);
        let set = WeightTileSet::from_matrix(0, &w, m, n, theta).unwrap();
        let cfg = LfsrConfig::default();
        for mode in [PruneMode::Stochastic, PruneMode::Magnitude] {
            let masked = match mode {
                PruneMode::Stochastic => pruner::stochastic_mask(&set, &cfg).unwrap(),
                PruneMode::Magnitude => pruner::magnitude_mask(&set, theta).unwrap(),
            };
            let cw = pruner::compress(&masked, mode, Some(&cfg)).unwrap();
            let got = ops::pw_conv_compressed_acc(&ia, &cw, &b).unwrap();
            let want = pw_acc(&ia, &masked.to_matrix(), &b, n);
            assert!(got.iter().map(|&v| v as i64).eq(want.iter().copied()), "case {case} {mode:?}");
        }
    }
}

#[test]
fn integer_conv_tracks_real_arithmetic() {
    // dequantized integer output stays within one output step of the real
    // convolution of the dequantized operands
    let mut r = rng(14);
    for _ in 0..200 {
        let (hw, k, s) = random_geometry_dims(&mut r);
        let (m, n) = (r.random_range(1..=4), r.random_range(1..=4));
        let ia = random_qtensor(&mut r, hw.0, hw.1, m);
        let wq = QParams::symmetric(1.0);
        let w = random_i8(&mut r, k.0 * k.1 * m * n);
        let b = random_bias(&mut r, n);
        let prod = ia.qparams.scale as f64 * wq.scale as f64;
        let out_q = QParams::new((prod * r.random_range(2.0..50.0)) as f32, r.random_range(-20..20), 8).unwrap();
        let st = OutputStage {
            requant: Requantizer::from_ratio(prod / out_q.scale as f64).unwrap(),
            out_q,
            activation: Activation::Identity,
        };
        let g = ConvGeometry::same(hw, k, s);
        let got = ops::conv2d_int(&ia, &w, &b, n, &g, &st).unwrap().dequantize();
        let wf: Vec<f64> = w.iter().map(|&v| v as f64 * wq.scale as f64).collect();
        let bf: Vec<f64> = b.iter().map(|&v| v as f64 * prod).collect();
        let want = ops::conv2d(&ia.dequantize(), &wf, &bf, n, &g, Activation::Identity).unwrap();
        let s_out = out_q.scale as f64;
        let (min_r, max_r) = ((-128 - out_q.zero_point) as f64 * s_out, (127 - out_q.zero_point) as f64 * s_out);
        for (a, b) in got.data.iter().zip(&want.data) {
            let clamped = b.clamp(min_r, max_r);
            assert!((a - clamped).abs() <= 0.5 * s_out + 1e-6 * s_out.max(b.abs()), "{a} vs {b}");
        }
    }
}

#[test]
fn dws_cost_ratio_matches_mac_quotient() {
    for (k, n, m, px) in [((3, 3), 64, 16, 300), ((3, 3), 1024, 512, 42), ((5, 5), 10, 3, 7)] {
        let standard = (px * k.0 * k.1 * m * n) as f64;
        let separable = (px * k.0 * k.1 * m + px * m * n) as f64;
        assert!((ops::dws_cost_ratio(k, n) - separable / standard).abs() < 1e-15);
    }
}

proptest! {
    #[test]
    fn pointwise_is_linear_in_bias(seed in any::<u64>(), shift in -1000i32..1000) {
        let mut r = rng(seed);
        let (m, n) = (r.random_range(1..6), r.random_range(1..6));
        let ia = random_qtensor(&mut r, 2, 3, m);
        let w = random_i8(&mut r, m * n);
        let b = random_bias(&mut r, n);
        let b2: Vec<i32> = b.iter().map(|v| v + shift).collect();
        let a1 = ops::pw_conv_acc(&ia, &w, &b, n).unwrap();
        let a2 = ops::pw_conv_acc(&ia, &w, &b2, n).unwrap();
        prop_assert!(a1.iter().zip(&a2).all(|(x, y)| y - x == shift));
    }

    #[test]
    fn activation_at_zero_point_contributes_nothing(seed in any::<u64>()) {
        let mut r = rng(seed);
        let q = random_qparams(&mut r);
        let ia = QTensor::new(3, 3, 2, vec![q.zero_point; 18], q).unwrap();
        let w = random_i8(&mut r, 9 * 2 * 3);
        let b = random_bias(&mut r, 3);
        let g = ConvGeometry::same((3, 3), (3, 3), (1, 1));
        let acc = ops::conv2d_acc(&ia, &w, &b, 3, &g).unwrap();
        for px in acc.chunks(3) {
            prop_assert_eq!(px, &b[..]);
        }
    }
}
