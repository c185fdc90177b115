//! Architecture registry, width-multiplier arithmetic, shape inference and
//! MAC/parameter accounting.
//!
//! Encoders are stored as a flat list of primitive layers (a depthwise
//! separable block contributes a depthwise and a pointwise layer). The
//! table rows as a designer would read them are kept alongside in
//! [`BlockRow`] form for reports.

use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::ops::{same_axis, Activation};

pub const INPUT_CHANNELS: usize = 96;
pub const WINDOW_SAMPLES: usize = 100;
pub const INPUT_ELEMENTS: usize = INPUT_CHANNELS * WINDOW_SAMPLES;
/// Pointwise layers whose output width reaches this count form the pruned
/// pool; narrower ones stay dense.
pub const PRUNE_MIN_OUT_CHANNELS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv,
    DwConv,
    PwConv,
    AvgPool,
    MaxPool,
    DwsBlock,
}

impl LayerKind {
    pub fn code(self) -> u8 {
        match self {
            LayerKind::Conv => 0,
            LayerKind::DwConv => 1,
            LayerKind::PwConv => 2,
            LayerKind::AvgPool => 3,
            LayerKind::MaxPool => 4,
            LayerKind::DwsBlock => 5,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => LayerKind::Conv,
            1 => LayerKind::DwConv,
            2 => LayerKind::PwConv,
            3 => LayerKind::AvgPool,
            4 => LayerKind::MaxPool,
            5 => LayerKind::DwsBlock,
            _ => return None,
        })
    }

    pub fn is_pool(self) -> bool {
        matches!(self, LayerKind::AvgPool | LayerKind::MaxPool)
    }
}

/// One primitive encoder layer with explicit shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_shape: (usize, usize),
    pub out_shape: (usize, usize),
    pub activation: Activation,
    /// Member of the pruned pool (pointwise layers only).
    pub pruned: bool,
}

impl LayerSpec {
    pub fn weight_count(&self) -> usize {
        let (kh, kw) = self.kernel;
        match self.kind {
            LayerKind::Conv => kh * kw * self.in_channels * self.out_channels,
            LayerKind::DwConv => kh * kw * self.in_channels,
            LayerKind::PwConv => self.in_channels * self.out_channels,
            LayerKind::AvgPool | LayerKind::MaxPool => 0,
            LayerKind::DwsBlock => kh * kw * self.in_channels + self.in_channels * self.out_channels,
        }
    }

    pub fn bias_count(&self) -> usize {
        match self.kind {
            LayerKind::Conv | LayerKind::PwConv => self.out_channels,
            LayerKind::DwConv => self.in_channels,
            LayerKind::AvgPool | LayerKind::MaxPool => 0,
            LayerKind::DwsBlock => self.in_channels + self.out_channels,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.bias_count()
    }

    pub fn macs(&self) -> u64 {
        let (oh, ow) = self.out_shape;
        let (kh, kw) = self.kernel;
        let px = (oh * ow) as u64;
        let (m, n) = (self.in_channels as u64, self.out_channels as u64);
        match self.kind {
            LayerKind::Conv => px * n * (kh * kw) as u64 * m,
            LayerKind::DwConv => px * m * (kh * kw) as u64,
            LayerKind::PwConv => px * m * n,
            // one accumulate per window element
            LayerKind::AvgPool | LayerKind::MaxPool => px * n * (kh * kw) as u64,
            LayerKind::DwsBlock => px * m * (kh * kw) as u64 + px * m * n,
        }
    }

    pub fn input_elements(&self) -> usize {
        self.in_shape.0 * self.in_shape.1 * self.in_channels
    }

    pub fn output_elements(&self) -> usize {
        self.out_shape.0 * self.out_shape.1 * self.out_channels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TKind {
    TConv,
    TDwConv,
}

/// One decoder layer; `out_shape` is the explicit target the canonical
/// transposed output is cropped to.
#[derive(Debug, Clone, PartialEq)]
pub struct TLayerSpec {
    pub name: String,
    pub kind: TKind,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_shape: (usize, usize),
    pub out_shape: (usize, usize),
    pub activation: Activation,
}

/// Number of (output, tap) pairs along one axis of a cropped transposed
/// convolution where the source index is integral and in range.
fn tconv_axis_terms(input: usize, k: usize, s: usize, out: usize) -> u64 {
    let mut n = 0u64;
    for h in 0..out {
        for i in 0..k.min(h + 1) {
            let d = h - i;
            if d % s == 0 && d / s < input {
                n += 1;
            }
        }
    }
    n
}

impl TLayerSpec {
    pub fn weight_count(&self) -> usize {
        let (kh, kw) = self.kernel;
        match self.kind {
            TKind::TConv => kh * kw * self.in_channels * self.out_channels,
            TKind::TDwConv => kh * kw * self.in_channels,
        }
    }

    pub fn bias_count(&self) -> usize {
        self.out_channels
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.bias_count()
    }

    /// Multiply-accumulates actually evaluated over the cropped output.
    pub fn macs(&self) -> u64 {
        let th = tconv_axis_terms(self.in_shape.0, self.kernel.0, self.stride.0, self.out_shape.0);
        let tw = tconv_axis_terms(self.in_shape.1, self.kernel.1, self.stride.1, self.out_shape.1);
        let ch = match self.kind {
            TKind::TConv => (self.in_channels * self.out_channels) as u64,
            TKind::TDwConv => self.in_channels as u64,
        };
        th * tw * ch
    }
}

/// A row of the architecture table (a block may expand to two layers and
/// may be repeated).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockRow {
    pub label: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub out_shape: (usize, usize, usize),
    pub repeat: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub width: f64,
    pub input: (usize, usize, usize),
    pub gamma: usize,
    pub encoder: Vec<LayerSpec>,
    pub decoder: Vec<TLayerSpec>,
    pub encoder_rows: Vec<BlockRow>,
    pub decoder_rows: Vec<BlockRow>,
}

impl ModelSpec {
    pub fn compression_ratio(&self) -> f64 {
        (self.input.0 * self.input.1 * self.input.2) as f64 / self.gamma as f64
    }

    pub fn pruned_layers(&self) -> impl Iterator<Item = (usize, &LayerSpec)> {
        self.encoder.iter().enumerate().filter(|(_, l)| l.pruned)
    }

    pub fn latent_shape(&self) -> (usize, usize, usize) {
        let last = self.encoder.last().expect("encoder has layers");
        (last.out_shape.0, last.out_shape.1, last.out_channels)
    }

    /// Human-readable architecture dump, one line per table row.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} (width {}x, latent {}, CR {})", self.name, self.width, self.gamma, fmt_num(self.compression_ratio()));
        let _ = writeln!(s, "{:<8} {:<34} {:>6} {:>6}  output", "stage", "type / stride", "M", "N");
        for (stage, rows) in [("encoder", &self.encoder_rows), ("decoder", &self.decoder_rows)] {
            for r in rows {
                let label = if r.repeat > 1 { format!("{}x {}", r.repeat, r.label) } else { r.label.clone() };
                let _ = writeln!(
                    s,
                    "{:<8} {:<34} {:>6} {:>6}  {}x{}x{}",
                    stage, label, r.in_channels, r.out_channels, r.out_shape.0, r.out_shape.1, r.out_shape.2
                );
            }
        }
        s
    }
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Channel count of a layer scaled by a width multiplier, rounded up to a
/// multiple of 16.
pub fn width_channels(n: usize, w: f64) -> usize {
    ((n as f64 * w / 16.0).ceil() as usize) * 16
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelId {
    DsCae1,
    DsCae2,
    MobileNet(f64),
}

pub const REGISTRY: [&str; 6] = [
    "DS-CAE1",
    "DS-CAE2",
    "MobileNetV1-CAE(1x)",
    "MobileNetV1-CAE(0.75x)",
    "MobileNetV1-CAE(0.5x)",
    "MobileNetV1-CAE(0.25x)",
];

pub fn parse_model(name: &str) -> Result<ModelId> {
    let key: String = name
        .chars()
        .filter(|c| !c.is_whitespace() && *c != '-' && *c != '_' && *c != '(' && *c != ')')
        .collect::<String>()
        .to_ascii_lowercase();
    let id = match key.as_str() {
        "dscae1" => ModelId::DsCae1,
        "dscae2" => ModelId::DsCae2,
        "mobilenetv1cae1x" | "mobilenetv1cae1.00x" | "mobilenetv1cae1.0x" | "mobilenetv1cae" => ModelId::MobileNet(1.0),
        "mobilenetv1cae0.75x" => ModelId::MobileNet(0.75),
        "mobilenetv1cae0.5x" | "mobilenetv1cae0.50x" => ModelId::MobileNet(0.5),
        "mobilenetv1cae0.25x" => ModelId::MobileNet(0.25),
        _ => return Err(Error::UnknownModel(name.to_string())),
    };
    Ok(id)
}

pub fn build(name: &str) -> Result<ModelSpec> {
    Ok(match parse_model(name)? {
        ModelId::DsCae1 => ds_cae(2),
        ModelId::DsCae2 => ds_cae(1),
        ModelId::MobileNet(w) => mobilenet(w),
    })
}

pub fn all_models() -> Vec<ModelSpec> {
    REGISTRY.iter().map(|n| build(n).expect("registered")).collect()
}

/// Encoder row description fed to the shape-inference builder.
enum EncRow {
    Conv { n: usize, stride: usize },
    Dws { n: usize, stride: usize, repeat: usize },
    AvgPool,
}

enum DecRow {
    Unpool,
    TConv { n: usize, stride: usize, repeat: usize },
}

struct Builder {
    shape: (usize, usize),
    ch: usize,
    encoder: Vec<LayerSpec>,
    rows: Vec<BlockRow>,
}

impl Builder {
    fn push(&mut self, name: String, kind: LayerKind, kernel: (usize, usize), stride: usize, n: usize, act: Activation) {
        let (oh, ow) = if kind.is_pool() {
            ((self.shape.0 - kernel.0) / stride + 1, (self.shape.1 - kernel.1) / stride + 1)
        } else {
            (same_axis(self.shape.0, kernel.0, stride).0, same_axis(self.shape.1, kernel.1, stride).0)
        };
        let pruned = kind == LayerKind::PwConv && n >= PRUNE_MIN_OUT_CHANNELS;
        self.encoder.push(LayerSpec {
            name,
            kind,
            kernel,
            stride: (stride, stride),
            in_channels: self.ch,
            out_channels: n,
            in_shape: self.shape,
            out_shape: (oh, ow),
            activation: act,
            pruned,
        });
        self.shape = (oh, ow);
        self.ch = n;
    }

    fn encoder(rows: &[EncRow]) -> (Vec<LayerSpec>, Vec<BlockRow>) {
        let mut b = Builder {
            shape: (INPUT_CHANNELS, WINDOW_SAMPLES),
            ch: 1,
            encoder: Vec::new(),
            rows: Vec::new(),
        };
        let mut idx = 0;
        for row in rows {
            match *row {
                EncRow::Conv { n, stride } => {
                    let m = b.ch;
                    b.push(format!("conv{idx}"), LayerKind::Conv, (3, 3), stride, n, Activation::Relu);
                    idx += 1;
                    b.rows.push(BlockRow {
                        label: format!("Conv (3x3) / s{stride}"),
                        in_channels: m,
                        out_channels: n,
                        out_shape: (b.shape.0, b.shape.1, n),
                        repeat: 1,
                    });
                }
                EncRow::Dws { n, stride, repeat } => {
                    let m = b.ch;
                    for r in 0..repeat {
                        let s = if r == 0 { stride } else { 1 };
                        let c = b.ch;
                        b.push(format!("dw{idx}"), LayerKind::DwConv, (3, 3), s, c, Activation::Relu);
                        b.push(format!("pw{idx}"), LayerKind::PwConv, (1, 1), 1, n, Activation::Relu);
                        idx += 1;
                    }
                    b.rows.push(BlockRow {
                        label: format!("Conv dws (3x3) / s{stride}"),
                        in_channels: m,
                        out_channels: n,
                        out_shape: (b.shape.0, b.shape.1, n),
                        repeat,
                    });
                }
                EncRow::AvgPool => {
                    let k = b.shape;
                    let c = b.ch;
                    b.push("avgpool".into(), LayerKind::AvgPool, k, 1, c, Activation::Identity);
                    b.rows.push(BlockRow {
                        label: format!("Avg Pool ({}x{}) / s1", k.0, k.1),
                        in_channels: c,
                        out_channels: c,
                        out_shape: (1, 1, c),
                        repeat: 1,
                    });
                }
            }
        }
        (b.encoder, b.rows)
    }
}

fn decoder(rows: &[DecRow], gamma: usize, unpool: (usize, usize)) -> (Vec<TLayerSpec>, Vec<BlockRow>) {
    let mut layers = Vec::new();
    let mut table = Vec::new();
    let mut shape = (1usize, 1usize);
    let mut ch = gamma;
    let mut idx = 0;
    for row in rows {
        match *row {
            DecRow::Unpool => {
                layers.push(TLayerSpec {
                    name: format!("tdw{idx}"),
                    kind: TKind::TDwConv,
                    kernel: unpool,
                    stride: (1, 1),
                    in_channels: ch,
                    out_channels: ch,
                    in_shape: shape,
                    out_shape: unpool,
                    activation: Activation::Relu,
                });
                idx += 1;
                shape = unpool;
                table.push(BlockRow {
                    label: format!("ConvTranspose dw ({}x{}) / s1", unpool.0, unpool.1),
                    in_channels: ch,
                    out_channels: ch,
                    out_shape: (shape.0, shape.1, ch),
                    repeat: 1,
                });
            }
            DecRow::TConv { n, stride, repeat } => {
                let m = ch;
                for _ in 0..repeat {
                    let out = (shape.0 * stride, shape.1 * stride);
                    // doubling overshoots an odd encoder width (13 -> 26 vs 25)
                    let out = (out.0.min(target_for(shape.0, stride)), out.1.min(target_for(shape.1, stride)));
                    layers.push(TLayerSpec {
                        name: format!("tconv{idx}"),
                        kind: TKind::TConv,
                        kernel: (3, 3),
                        stride: (stride, stride),
                        in_channels: ch,
                        out_channels: n,
                        in_shape: shape,
                        out_shape: out,
                        activation: Activation::Relu,
                    });
                    idx += 1;
                    shape = out;
                    ch = n;
                }
                table.push(BlockRow {
                    label: format!("ConvTranspose (3x3) / s{stride}"),
                    in_channels: m,
                    out_channels: n,
                    out_shape: (shape.0, shape.1, n),
                    repeat,
                });
            }
        }
    }
    if let Some(last) = layers.last_mut() {
        last.activation = Activation::Identity;
    }
    (layers, table)
}

/// Decoder target size along one axis: the encoder-side size that produced
/// `input` at this stride (SAME-ceil inverse along the fixed shape chain).
fn target_for(input: usize, stride: usize) -> usize {
    if stride == 1 {
        return input;
    }
    // encoder chain: 96->48->24->12->6 and 100->50->25->13->7
    const CHAINS: [[usize; 5]; 2] = [[96, 48, 24, 12, 6], [100, 50, 25, 13, 7]];
    for chain in CHAINS {
        if let Some(p) = chain.iter().position(|&v| v == input) {
            if p > 0 {
                return chain[p - 1];
            }
        }
    }
    input * stride
}

fn ds_cae(n: usize) -> ModelSpec {
    let (encoder, encoder_rows) = Builder::encoder(&[
        EncRow::Conv { n: 16, stride: 2 },
        EncRow::Dws { n: 16, stride: 2, repeat: 1 },
        EncRow::Dws { n: 64, stride: 2, repeat: 1 },
        EncRow::Dws { n: 64, stride: 1, repeat: n },
        EncRow::AvgPool,
    ]);
    let (decoder, decoder_rows) = decoder(
        &[
            DecRow::Unpool,
            DecRow::TConv { n: 64, stride: 1, repeat: n },
            DecRow::TConv { n: 16, stride: 2, repeat: 1 },
            DecRow::TConv { n: 16, stride: 2, repeat: 1 },
            DecRow::TConv { n: 1, stride: 2, repeat: 1 },
        ],
        64,
        (12, 13),
    );
    ModelSpec {
        name: format!("DS-CAE{}", if n == 2 { 1 } else { 2 }),
        width: 1.0,
        input: (INPUT_CHANNELS, WINDOW_SAMPLES, 1),
        gamma: 64,
        encoder,
        decoder,
        encoder_rows,
        decoder_rows,
    }
}

fn mobilenet(w: f64) -> ModelSpec {
    let c = |n: usize| width_channels(n, w);
    let (encoder, encoder_rows) = Builder::encoder(&[
        EncRow::Conv { n: c(32), stride: 2 },
        EncRow::Dws { n: c(64), stride: 1, repeat: 1 },
        EncRow::Dws { n: c(128), stride: 2, repeat: 1 },
        EncRow::Dws { n: c(128), stride: 1, repeat: 1 },
        EncRow::Dws { n: c(256), stride: 2, repeat: 1 },
        EncRow::Dws { n: c(256), stride: 1, repeat: 1 },
        EncRow::Dws { n: c(512), stride: 1, repeat: 1 },
        EncRow::Dws { n: c(512), stride: 1, repeat: 5 },
        EncRow::Dws { n: c(1024), stride: 2, repeat: 1 },
        EncRow::Dws { n: c(1024), stride: 1, repeat: 1 },
        EncRow::AvgPool,
    ]);
    let gamma = c(1024);
    let (decoder, decoder_rows) = decoder(
        &[
            DecRow::Unpool,
            DecRow::TConv { n: c(1024), stride: 1, repeat: 1 },
            DecRow::TConv { n: c(512), stride: 2, repeat: 1 },
            DecRow::TConv { n: c(512), stride: 1, repeat: 5 },
            DecRow::TConv { n: c(256), stride: 1, repeat: 1 },
            DecRow::TConv { n: c(256), stride: 1, repeat: 1 },
            DecRow::TConv { n: c(128), stride: 2, repeat: 1 },
            DecRow::TConv { n: c(128), stride: 1, repeat: 1 },
            DecRow::TConv { n: c(64), stride: 2, repeat: 1 },
            DecRow::TConv { n: c(32), stride: 1, repeat: 1 },
            DecRow::TConv { n: 1, stride: 2, repeat: 1 },
        ],
        gamma,
        (6, 7),
    );
    ModelSpec {
        name: format!("MobileNetV1-CAE({}x)", fmt_num(w)),
        width: w,
        input: (INPUT_CHANNELS, WINDOW_SAMPLES, 1),
        gamma,
        encoder,
        decoder,
        encoder_rows,
        decoder_rows,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Encoder,
    Decoder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpClass {
    Conv,
    Dw,
    Pw,
    Pool,
    TConv,
    TDw,
}

impl fmt::Display for OpClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OpClass::Conv => "CONV",
            OpClass::Dw => "DW",
            OpClass::Pw => "PW",
            OpClass::Pool => "Pool",
            OpClass::TConv => "TCONV",
            OpClass::TDw => "TDW",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCount {
    pub name: String,
    pub class: OpClass,
    pub macs: u64,
    pub weights: usize,
    pub biases: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpCountReport {
    pub side: Side,
    pub layers: Vec<LayerCount>,
}

impl OpCountReport {
    pub fn total_macs(&self) -> u64 {
        self.layers.iter().map(|l| l.macs).sum()
    }

    pub fn total_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights + l.biases).sum()
    }

    pub fn float_bytes(&self) -> usize {
        4 * self.total_params()
    }

    pub fn macs_of(&self, class: OpClass) -> u64 {
        self.layers.iter().filter(|l| l.class == class).map(|l| l.macs).sum()
    }

    /// Share of MACs in percent.
    pub fn share(&self, class: OpClass) -> f64 {
        100.0 * self.macs_of(class) as f64 / self.total_macs() as f64
    }

    pub fn classes(&self) -> Vec<OpClass> {
        let mut out: Vec<OpClass> = Vec::new();
        for l in &self.layers {
            if !out.contains(&l.class) {
                out.push(l.class);
            }
        }
        out
    }
}

fn encoder_class(kind: LayerKind) -> OpClass {
    match kind {
        LayerKind::Conv => OpClass::Conv,
        LayerKind::DwConv | LayerKind::DwsBlock => OpClass::Dw,
        LayerKind::PwConv => OpClass::Pw,
        LayerKind::AvgPool | LayerKind::MaxPool => OpClass::Pool,
    }
}

pub fn count_macs(spec: &ModelSpec, side: Side) -> OpCountReport {
    let layers = match side {
        Side::Encoder => spec
            .encoder
            .iter()
            .map(|l| LayerCount {
                name: l.name.clone(),
                class: encoder_class(l.kind),
                macs: l.macs(),
                weights: l.weight_count(),
                biases: l.bias_count(),
            })
            .collect(),
        Side::Decoder => spec
            .decoder
            .iter()
            .map(|l| LayerCount {
                name: l.name.clone(),
                class: match l.kind {
                    TKind::TConv => OpClass::TConv,
                    TKind::TDwConv => OpClass::TDw,
                },
                macs: l.macs(),
                weights: l.weight_count(),
                biases: l.bias_count(),
            })
            .collect(),
    };
    OpCountReport { side, layers }
}

/// Parameter accounting shares the per-layer table with [`count_macs`].
pub fn count_params(spec: &ModelSpec, side: Side) -> OpCountReport {
    count_macs(spec, side)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_channel_examples() {
        assert_eq!(width_channels(1024, 0.25), 256);
        assert_eq!(width_channels(64, 1.0), 64);
        assert_eq!(width_channels(32, 0.25), 16);
        assert_eq!(width_channels(32, 0.75), 32);
    }

    #[test]
    fn registry_names_resolve() {
        for name in REGISTRY {
            assert_eq!(build(name).unwrap().name, name);
        }
        assert!(matches!(build("ResNet-50"), Err(Error::UnknownModel(_))));
        assert_eq!(build("ds-cae1").unwrap().name, "DS-CAE1");
        assert_eq!(build("mobilenetv1-cae-0.25x").unwrap().gamma, 256);
    }

    #[test]
    fn compression_ratios() {
        let m = build("DS-CAE1").unwrap();
        assert_eq!(m.gamma, 64);
        assert_eq!(m.compression_ratio(), 150.0);
        let m = build("MobileNetV1-CAE(0.25x)").unwrap();
        assert_eq!(m.gamma, 256);
        assert_eq!(m.compression_ratio(), 37.5);
        assert_eq!(build("MobileNetV1-CAE(1x)").unwrap().gamma, 1024);
        for m in all_models() {
            assert_eq!(m.compression_ratio(), 9600.0 / m.gamma as f64);
            assert_eq!(m.latent_shape(), (1, 1, m.gamma));
        }
    }

    #[test]
    fn ds_cae1_hand_sums() {
        let m = build("DS-CAE1").unwrap();
        let r = count_macs(&m, Side::Encoder);
        assert_eq!(r.macs_of(OpClass::Conv), 345_600);
        assert_eq!(r.macs_of(OpClass::Dw), 288_576);
        assert_eq!(r.macs_of(OpClass::Pw), 1_591_296);
        assert_eq!(r.macs_of(OpClass::Pool), 9_984);
        assert_eq!(r.total_macs(), 2_235_456);
        assert_eq!(r.total_params(), 11_440);
        assert_eq!(r.float_bytes(), 45_760);
    }

    #[test]
    fn tiny_param_count() {
        let l = LayerSpec {
            name: "c".into(),
            kind: LayerKind::Conv,
            kernel: (1, 1),
            stride: (1, 1),
            in_channels: 1,
            out_channels: 1,
            in_shape: (1, 1),
            out_shape: (1, 1),
            activation: Activation::Identity,
            pruned: false,
        };
        assert_eq!(l.param_count(), 2);
    }

    #[test]
    fn dws_block_ratio_matches_mac_quotient() {
        let l = &build("DS-CAE1").unwrap().encoder;
        // dw + pw of the 16 -> 64 block against a standard 3x3 conv of the
        // same shape
        let (dw, pw) = (&l[3], &l[4]);
        let std = dw.out_shape.0 * dw.out_shape.1 * 9 * dw.in_channels * pw.out_channels;
        let ratio = (dw.macs() + pw.macs()) as f64 / std as f64;
        let formula = crate::ops::dws_cost_ratio((3, 3), pw.out_channels);
        assert!((ratio - formula).abs() < 1e-12);
    }

    #[test]
    fn pruned_pool_is_wide_pointwise_layers() {
        let m = build("DS-CAE1").unwrap();
        let pool: usize = m.pruned_layers().map(|(_, l)| l.weight_count()).sum();
        assert_eq!(pool, 9_216);
        let m = build("MobileNetV1-CAE(0.25x)").unwrap();
        let pool: usize = m.pruned_layers().map(|(_, l)| l.weight_count()).sum();
        assert_eq!(pool, 194_560);
    }
}
