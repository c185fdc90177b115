//! Quantized encoder network: per-layer integer parameters, calibration
//! from a float model, pruning of the pointwise pool, and the integer
//! forward pass shared by the CLI and the simulator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::decoder::TWeights;
use crate::error::{Error, Result};
use crate::lfsr::{LfsrConfig, TILE_WIDTH};
use crate::model::{LayerKind, LayerSpec, ModelSpec};
use crate::ops::{self, ConvGeometry, OutputStage};
use crate::pruner::{self, CompressedWeights, PruneMode, WeightTileSet};
use crate::quant::{quantize_bias, QParams, QTensor, Requantizer};
use crate::tensor::Tensor;

/// Headroom kept between an output scale and the product of its input and
/// weight scales so every requantization ratio stays strictly below one.
const RATIO_HEADROOM: f64 = 1.0001;

#[derive(Debug, Clone, PartialEq)]
pub struct FloatLayer {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Float encoder and decoder parameters, used to seed a quantized network.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatModel {
    pub spec: ModelSpec,
    pub encoder: Vec<FloatLayer>,
    pub decoder: Vec<TWeights>,
}

fn fan_in(l: &LayerSpec) -> usize {
    match l.kind {
        LayerKind::Conv => l.kernel.0 * l.kernel.1 * l.in_channels,
        LayerKind::DwConv => l.kernel.0 * l.kernel.1,
        LayerKind::PwConv => l.in_channels,
        _ => 1,
    }
}

fn he(rng: &mut ChaCha8Rng, count: usize, fan: usize) -> Vec<f64> {
    let d = Normal::new(0.0, (2.0 / fan as f64).sqrt()).expect("positive std");
    (0..count).map(|_| d.sample(rng)).collect()
}

impl FloatModel {
    /// He-normal weights and small uniform biases from a seeded ChaCha
    /// stream.
    pub fn random(spec: &ModelSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = spec
            .encoder
            .iter()
            .map(|l| FloatLayer {
                weights: he(&mut rng, l.weight_count(), fan_in(l)),
                bias: (0..l.bias_count()).map(|_| rng.random_range(-0.01..0.01)).collect(),
            })
            .collect();
        let decoder = spec
            .decoder
            .iter()
            .map(|l| {
                let fan = l.kernel.0 * l.kernel.1 * l.in_channels / (l.stride.0 * l.stride.1);
                // decoder weights are stored as f32; keep them representable
                TWeights {
                    weights: he(&mut rng, l.weight_count(), fan.max(1)).into_iter().map(|v| v as f32 as f64).collect(),
                    bias: (0..l.bias_count()).map(|_| rng.random_range(-0.01f32..0.01) as f64).collect(),
                }
            })
            .collect();
        Self {
            spec: spec.clone(),
            encoder,
            decoder,
        }
    }

    pub fn forward_layer(l: &LayerSpec, p: &FloatLayer, x: &Tensor) -> Result<Tensor> {
        match l.kind {
            LayerKind::Conv => ops::conv2d(x, &p.weights, &p.bias, l.out_channels, &same_geometry(l), l.activation),
            LayerKind::DwConv => ops::dw_conv(x, &p.weights, &p.bias, &same_geometry(l), l.activation),
            LayerKind::PwConv => ops::pw_conv(x, &p.weights, &p.bias, l.out_channels, l.activation),
            LayerKind::AvgPool => ops::avg_pool(x, l.kernel, l.stride),
            LayerKind::MaxPool => ops::max_pool(x, l.kernel, l.stride),
            LayerKind::DwsBlock => Err(Error::Shape("composite block must be expanded".into())),
        }
    }

    /// Float encoder output of every layer.
    pub fn trace(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut out = Vec::with_capacity(self.encoder.len());
        let mut cur = x.clone();
        for (l, p) in self.spec.encoder.iter().zip(&self.encoder) {
            cur = Self::forward_layer(l, p, &cur)?;
            out.push(cur.clone());
        }
        Ok(out)
    }
}

fn same_geometry(l: &LayerSpec) -> ConvGeometry {
    ConvGeometry::same(l.in_shape, l.kernel, l.stride)
}

/// One encoder layer in integer form.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantLayer {
    pub spec: LayerSpec,
    /// Dense weights in the ops layout, zeros at pruned positions.
    pub weights: Vec<i8>,
    pub bias: Vec<i32>,
    pub input_q: QParams,
    pub weight_q: QParams,
    pub output_q: QParams,
    /// Absent for max pooling, which passes values through.
    pub requant: Option<Requantizer>,
    /// Storage form of a pruned pointwise layer.
    pub compressed: Option<CompressedWeights>,
}

impl QuantLayer {
    pub fn geometry(&self) -> Result<ConvGeometry> {
        let l = &self.spec;
        match l.kind {
            LayerKind::AvgPool | LayerKind::MaxPool => ConvGeometry::valid(l.in_shape, l.kernel, l.stride),
            _ => Ok(same_geometry(l)),
        }
    }

    pub fn stage(&self) -> Option<OutputStage> {
        self.requant.map(|requant| OutputStage {
            requant,
            out_q: self.output_q,
            activation: self.spec.activation,
        })
    }

    fn check_input(&self, ia: &QTensor) -> Result<()> {
        let l = &self.spec;
        if (ia.h, ia.w, ia.c) != (l.in_shape.0, l.in_shape.1, l.in_channels) {
            return Err(Error::Shape(format!(
                "{}: input {}x{}x{} does not match {}x{}x{}",
                l.name, ia.h, ia.w, ia.c, l.in_shape.0, l.in_shape.1, l.in_channels
            )));
        }
        if ia.qparams != self.input_q {
            return Err(Error::QParams(format!("{}: input quantization differs from calibration", l.name)));
        }
        Ok(())
    }

    /// 32-bit accumulators before requantization (not defined for max
    /// pooling).
    pub fn accumulate(&self, ia: &QTensor) -> Result<Vec<i32>> {
        self.check_input(ia)?;
        let l = &self.spec;
        match l.kind {
            LayerKind::Conv => ops::conv2d_acc(ia, &self.weights, &self.bias, l.out_channels, &self.geometry()?),
            LayerKind::DwConv => ops::dw_conv_acc(ia, &self.weights, &self.bias, &self.geometry()?),
            LayerKind::PwConv => match &self.compressed {
                Some(cw) => ops::pw_conv_compressed_acc(ia, cw, &self.bias),
                None => ops::pw_conv_acc(ia, &self.weights, &self.bias, l.out_channels),
            },
            LayerKind::AvgPool => ops::avg_pool_acc(ia, l.kernel, l.stride).map(|(a, _)| a),
            LayerKind::MaxPool | LayerKind::DwsBlock => {
                Err(Error::InvalidArgument(format!("{}: layer has no accumulators", l.name)))
            }
        }
    }

    pub fn forward(&self, ia: &QTensor) -> Result<QTensor> {
        let l = &self.spec;
        if l.kind == LayerKind::MaxPool {
            self.check_input(ia)?;
            return ops::max_pool_int(ia, l.kernel, l.stride);
        }
        let acc = self.accumulate(ia)?;
        let stage = self
            .stage()
            .ok_or_else(|| Error::QParams(format!("{}: missing requantizer", l.name)))?;
        Ok(stage.finish(l.out_shape.0, l.out_shape.1, l.out_channels, &acc))
    }

    /// Retained slots per tile (16 when dense).
    pub fn pruned_theta(&self) -> usize {
        self.compressed.as_ref().map_or(TILE_WIDTH, |c| c.theta)
    }
}

/// Quantized encoder plus float decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: ModelSpec,
    pub encoder: Vec<QuantLayer>,
    pub decoder: Vec<TWeights>,
}

fn range_of(ts: &[&Tensor]) -> (f64, f64) {
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for t in ts {
        for &v in &t.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (lo, hi)
}

fn floor_scale(q: QParams, min_scale: f64) -> QParams {
    if (q.scale as f64) >= min_scale * RATIO_HEADROOM {
        return q;
    }
    // widen the range symmetrically around the existing zero point
    QParams {
        scale: (min_scale * RATIO_HEADROOM) as f32,
        zero_point: q.zero_point,
        bits: 8,
    }
}

fn quantize_weights(w: &[f64], q: QParams) -> Vec<i8> {
    w.iter()
        .map(|&v| crate::quant::quantize_value(v, q).clamp(-127, 127) as i8)
        .collect()
}

impl Network {
    /// Per-tensor calibration over a set of float input windows.
    pub fn calibrate(fm: &FloatModel, windows: &[Tensor]) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::InvalidArgument("calibration needs at least one window".into()));
        }
        let traces: Vec<Vec<Tensor>> = windows.iter().map(|w| fm.trace(w)).collect::<Result<_>>()?;
        let (lo, hi) = range_of(&windows.iter().collect::<Vec<_>>());
        let mut in_q = QParams::asymmetric(lo, hi);
        let mut encoder = Vec::with_capacity(fm.encoder.len());
        for (k, (l, p)) in fm.spec.encoder.iter().zip(&fm.encoder).enumerate() {
            let outs: Vec<&Tensor> = traces.iter().map(|t| &t[k]).collect();
            let (lo, hi) = range_of(&outs);
            let layer = match l.kind {
                LayerKind::MaxPool => QuantLayer {
                    spec: l.clone(),
                    weights: Vec::new(),
                    bias: Vec::new(),
                    input_q: in_q,
                    weight_q: QParams::symmetric(1.0),
                    output_q: in_q,
                    requant: None,
                    compressed: None,
                },
                LayerKind::AvgPool => {
                    let area = (l.kernel.0 * l.kernel.1) as f64;
                    let out_q = floor_scale(QParams::asymmetric(lo, hi), in_q.scale as f64 / area);
                    QuantLayer {
                        spec: l.clone(),
                        weights: Vec::new(),
                        bias: Vec::new(),
                        input_q: in_q,
                        weight_q: QParams::symmetric(1.0),
                        output_q: out_q,
                        requant: Some(ops::avg_pool_requantizer(in_q, out_q, l.kernel)?),
                        compressed: None,
                    }
                }
                _ => {
                    let max_w = p.weights.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
                    let w_q = QParams::symmetric(max_w);
                    let prod = in_q.scale as f64 * w_q.scale as f64;
                    let out_q = floor_scale(QParams::asymmetric(lo, hi), prod);
                    QuantLayer {
                        spec: l.clone(),
                        weights: quantize_weights(&p.weights, w_q),
                        bias: quantize_bias(&p.bias, in_q.scale, w_q.scale),
                        input_q: in_q,
                        weight_q: w_q,
                        output_q: out_q,
                        requant: Some(Requantizer::from_ratio(prod / out_q.scale as f64)?),
                        compressed: None,
                    }
                }
            };
            in_q = layer.output_q;
            encoder.push(layer);
        }
        Ok(Self {
            spec: fm.spec.clone(),
            encoder,
            decoder: fm.decoder.clone(),
        })
    }

    pub fn input_q(&self) -> QParams {
        self.encoder[0].input_q
    }

    pub fn latent_q(&self) -> QParams {
        self.encoder.last().expect("encoder has layers").output_q
    }

    pub fn quantize_input(&self, window: &Tensor) -> Result<QTensor> {
        QTensor::from_tensor(window, self.input_q())
    }

    /// Integer encoder on a quantized window; returns the 1x1xγ latent.
    pub fn encode_q(&self, x: &QTensor) -> Result<QTensor> {
        let mut cur = x.clone();
        for l in &self.encoder {
            cur = l.forward(&cur)?;
        }
        Ok(cur)
    }

    pub fn encode(&self, window: &Tensor) -> Result<QTensor> {
        self.encode_q(&self.quantize_input(window)?)
    }

    /// Float reconstruction of a quantized latent.
    pub fn decode(&self, latent: &QTensor) -> Result<Tensor> {
        let z = latent.dequantize();
        crate::decoder::reconstruct(&z.data, &self.spec, &self.decoder)
    }

    /// Prunes every layer of the pruned pool in place. Sparsity 0 restores
    /// no weights; it only drops any compressed form.
    pub fn prune(&mut self, sparsity: u32, mode: PruneMode, cfg: &LfsrConfig) -> Result<()> {
        let theta = pruner::theta_for_sparsity(sparsity)?;
        cfg.validate()?;
        for (k, l) in self.encoder.iter_mut().enumerate() {
            if !l.spec.pruned {
                continue;
            }
            if theta == TILE_WIDTH {
                l.compressed = None;
                continue;
            }
            let set = WeightTileSet::from_matrix(k, &l.weights, l.spec.in_channels, l.spec.out_channels, theta)?;
            let masked = match mode {
                PruneMode::Stochastic => pruner::stochastic_mask(&set, cfg)?,
                PruneMode::Magnitude => pruner::magnitude_mask(&set, theta)?,
            };
            let cw = pruner::compress(&masked, mode, Some(cfg))?;
            l.weights = masked.to_matrix();
            l.compressed = Some(cw);
        }
        Ok(())
    }

    /// Prune mode and Θ of the pool, if pruned.
    pub fn pruning(&self) -> Option<(PruneMode, usize, Option<LfsrConfig>)> {
        self.encoder
            .iter()
            .find_map(|l| l.compressed.as_ref().map(|c| (c.mode, c.theta, c.lfsr)))
    }
}
