//! Little-endian binary containers, each closed by a CRC-32 of everything
//! before it.
//!
//! * `RNS1` signal: 32-byte header (magic, version u16, flags u16,
//!   channels u32, sample rate u32, sample count u64, 8 reserved bytes),
//!   then f32 samples channel-major.
//! * `RCW1` weights: model name, one record per encoder layer with shapes,
//!   pruning configuration, quantization parameters and integer payloads,
//!   then the float decoder.
//! * `RCZ1` latents: model name, γ, window count, latent quantization,
//!   window geometry, then one γ-byte vector per window.
//!
//! Readers check, in order: magic, version, layout lengths, CRC, and
//! finally the semantic invariants of the payload.

use std::fs;
use std::path::Path;

use crate::decoder::TWeights;
use crate::engine::{Network, QuantLayer};
use crate::error::{Error, Result};
use crate::lfsr::LfsrConfig;
use crate::model::{self, LayerKind, TKind};
use crate::ops::Activation;
use crate::pruner::{self, CompressedWeights, PruneMode};
use crate::quant::{QParams, QTensor, Requantizer};

use super::Recording;

pub const RNS1: [u8; 4] = *b"RNS1";
pub const RCW1: [u8; 4] = *b"RCW1";
pub const RCZ1: [u8; 4] = *b"RCZ1";
pub const VERSION: u16 = 1;
pub const RNS1_HEADER: usize = 32;

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn i8(&mut self, v: i8) {
        self.buf.push(v as u8);
    }
    fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.bytes(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.bytes(&v.to_le_bytes());
    }
    fn name(&mut self, s: &str) {
        self.u16(s.len() as u16);
        self.bytes(s.as_bytes());
    }
    fn qparams(&mut self, q: QParams) {
        self.f32(q.scale);
        self.i8(q.zero_point as i8);
    }
    fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.u32(crc);
        self.buf
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Length(format!(
                "need {n} bytes at offset {}, only {} remain",
                self.pos,
                self.buf.len() - self.pos
            ))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn arr<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.arr::<1>()?[0])
    }
    fn i8(&mut self) -> Result<i8> {
        Ok(self.u8()? as i8)
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.arr()?))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.arr()?))
    }
    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.arr()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.arr()?))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.arr()?))
    }
    fn name(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Malformed("model name is not UTF-8".into()))
    }
    fn qparams(&mut self) -> Result<(f32, i8)> {
        Ok((self.f32()?, self.i8()?))
    }
}

fn check_magic(data: &[u8], expected: [u8; 4]) -> Result<()> {
    let mut found = [0u8; 4];
    let n = data.len().min(4);
    found[..n].copy_from_slice(&data[..n]);
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

/// Start of a container: magic and version, then a reader positioned after
/// them over the body (trailer excluded).
fn open(data: &[u8], magic: [u8; 4]) -> Result<Reader<'_>> {
    check_magic(data, magic)?;
    if data.len() < 10 {
        return Err(Error::Length(format!("{} bytes is shorter than any container", data.len())));
    }
    let version = u16::from_le_bytes([data[4], data[5]]);
    if version != VERSION {
        return Err(Error::Version(version));
    }
    Ok(Reader {
        buf: &data[..data.len() - 4],
        pos: 6,
    })
}

/// Layout fully consumed, then CRC.
fn close(r: Reader<'_>, data: &[u8]) -> Result<()> {
    if r.pos != r.buf.len() {
        return Err(Error::Length(format!(
            "{} trailing bytes after the declared payload",
            r.buf.len() - r.pos
        )));
    }
    let body = &data[..data.len() - 4];
    let stored = u32::from_le_bytes(data[data.len() - 4..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Crc { stored, computed });
    }
    Ok(())
}

fn qparams(raw: (f32, i8)) -> Result<QParams> {
    QParams::new(raw.0, raw.1 as i32, 8).map_err(|e| Error::Malformed(e.to_string()))
}

// ---------------------------------------------------------------------------
// RNS1

pub fn encode_recording(rec: &Recording) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(&RNS1);
    w.u16(VERSION);
    w.u16(0);
    w.u32(rec.channels as u32);
    w.u32(rec.sample_rate);
    w.u64(rec.samples as u64);
    w.bytes(&[0; 8]);
    for &v in &rec.data {
        w.f32(v);
    }
    w.finish()
}

pub fn decode_recording(data: &[u8]) -> Result<Recording> {
    let mut r = open(data, RNS1)?;
    let _flags = r.u16()?;
    let channels = r.u32()? as usize;
    let sample_rate = r.u32()?;
    let samples = r.u64()? as usize;
    r.take(8)?;
    let want = channels
        .checked_mul(samples)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(RNS1_HEADER + 4))
        .ok_or_else(|| Error::Malformed("declared size overflows".into()))?;
    if want != data.len() {
        return Err(Error::Length(format!(
            "header declares {want} bytes, file has {}",
            data.len()
        )));
    }
    let body = r.take(channels * samples * 4)?;
    let values = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    close(r, data)?;
    Recording::new(channels, sample_rate, samples, values)
}

pub fn write_recording(path: impl AsRef<Path>, rec: &Recording) -> Result<()> {
    fs::write(path, encode_recording(rec))?;
    Ok(())
}

pub fn read_recording(path: impl AsRef<Path>) -> Result<Recording> {
    decode_recording(&fs::read(path)?)
}

// ---------------------------------------------------------------------------
// RCW1

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Identity => 0,
        Activation::Relu => 1,
    }
}

fn mode_code(c: Option<&CompressedWeights>) -> u8 {
    match c.map(|c| c.mode) {
        None => 0,
        Some(PruneMode::Stochastic) => 1,
        Some(PruneMode::Magnitude) => 2,
    }
}

pub fn encode_weights(net: &Network) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(&RCW1);
    w.u16(VERSION);
    w.name(&net.spec.name);
    w.u16(net.encoder.len() as u16);
    for l in &net.encoder {
        let s = &l.spec;
        w.u8(s.kind.code());
        w.u8(s.kernel.0 as u8);
        w.u8(s.kernel.1 as u8);
        w.u8(s.stride.0 as u8);
        w.u8(s.stride.1 as u8);
        w.u32(s.in_channels as u32);
        w.u32(s.out_channels as u32);
        w.u16(s.in_shape.0 as u16);
        w.u16(s.in_shape.1 as u16);
        w.u16(s.out_shape.0 as u16);
        w.u16(s.out_shape.1 as u16);
        w.u8(activation_code(s.activation));
        let cw = l.compressed.as_ref();
        w.u8(mode_code(cw));
        w.u8(l.pruned_theta() as u8);
        let lfsr = cw.and_then(|c| c.lfsr).unwrap_or_default();
        w.u16(lfsr.taps);
        w.bytes(&lfsr.seeds);
        w.qparams(l.input_q);
        w.qparams(l.weight_q);
        w.qparams(l.output_q);
        let r = l.requant.unwrap_or(Requantizer { multiplier: 0, shift: 0 });
        w.i32(r.multiplier);
        w.u8(r.shift);
        let (values, idx): (Vec<i8>, Vec<u8>) = match cw {
            Some(c) => (c.values.clone(), pruner::pack_nibbles(&c.indices)),
            None => (l.weights.clone(), Vec::new()),
        };
        w.u32(values.len() as u32);
        w.u32(idx.len() as u32);
        w.u32(l.bias.len() as u32);
        for v in values {
            w.i8(v);
        }
        w.bytes(&idx);
        for &b in &l.bias {
            w.i32(b);
        }
    }
    w.u16(net.decoder.len() as u16);
    for (t, p) in net.spec.decoder.iter().zip(&net.decoder) {
        w.u8(match t.kind {
            TKind::TConv => 0,
            TKind::TDwConv => 1,
        });
        w.u32(p.weights.len() as u32);
        w.u32(p.bias.len() as u32);
        for &v in &p.weights {
            w.f32(v as f32);
        }
        for &v in &p.bias {
            w.f32(v as f32);
        }
    }
    w.finish()
}

struct RawLayer {
    kind: u8,
    kernel: (usize, usize),
    stride: (usize, usize),
    in_ch: usize,
    out_ch: usize,
    in_shape: (usize, usize),
    out_shape: (usize, usize),
    activation: u8,
    mode: u8,
    theta: usize,
    taps: u16,
    seeds: [u8; 4],
    input_q: (f32, i8),
    weight_q: (f32, i8),
    output_q: (f32, i8),
    multiplier: i32,
    shift: u8,
    values: Vec<i8>,
    index_bytes: Vec<u8>,
    bias: Vec<i32>,
}

fn read_layer(r: &mut Reader<'_>) -> Result<RawLayer> {
    let kind = r.u8()?;
    let kernel = (r.u8()? as usize, r.u8()? as usize);
    let stride = (r.u8()? as usize, r.u8()? as usize);
    let in_ch = r.u32()? as usize;
    let out_ch = r.u32()? as usize;
    let in_shape = (r.u16()? as usize, r.u16()? as usize);
    let out_shape = (r.u16()? as usize, r.u16()? as usize);
    let activation = r.u8()?;
    let mode = r.u8()?;
    let theta = r.u8()? as usize;
    let taps = r.u16()?;
    let seeds = r.arr::<4>()?;
    let input_q = r.qparams()?;
    let weight_q = r.qparams()?;
    let output_q = r.qparams()?;
    let multiplier = r.i32()?;
    let shift = r.u8()?;
    let nv = r.u32()? as usize;
    let ni = r.u32()? as usize;
    let nb = r.u32()? as usize;
    let values = r.take(nv)?.iter().map(|&b| b as i8).collect();
    let index_bytes = r.take(ni)?.to_vec();
    let bias = r
        .take(nb.checked_mul(4).ok_or_else(|| Error::Malformed("bias count overflows".into()))?)?
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(RawLayer {
        kind,
        kernel,
        stride,
        in_ch,
        out_ch,
        in_shape,
        out_shape,
        activation,
        mode,
        theta,
        taps,
        seeds,
        input_q,
        weight_q,
        output_q,
        multiplier,
        shift,
        values,
        index_bytes,
        bias,
    })
}

fn malformed(layer: &str, what: impl std::fmt::Display) -> Error {
    Error::Malformed(format!("{layer}: {what}"))
}

fn build_layer(spec: &model::LayerSpec, raw: RawLayer) -> Result<QuantLayer> {
    let name = &spec.name;
    let act = match raw.activation {
        0 => Activation::Identity,
        1 => Activation::Relu,
        a => return Err(malformed(name, format!("activation code {a}"))),
    };
    if LayerKind::from_code(raw.kind) != Some(spec.kind)
        || raw.kernel != spec.kernel
        || raw.stride != spec.stride
        || raw.in_ch != spec.in_channels
        || raw.out_ch != spec.out_channels
        || raw.in_shape != spec.in_shape
        || raw.out_shape != spec.out_shape
        || act != spec.activation
    {
        return Err(malformed(name, "layer geometry differs from the registered model"));
    }
    if raw.bias.len() != spec.bias_count() {
        return Err(malformed(name, format!("{} biases, expected {}", raw.bias.len(), spec.bias_count())));
    }
    let requant = match (raw.multiplier, raw.shift) {
        (0, 0) if spec.kind == LayerKind::MaxPool => None,
        (m, s) => {
            let r = Requantizer { multiplier: m, shift: s };
            if !r.is_normalized() {
                return Err(malformed(name, format!("requantizer multiplier {m} not normalized")));
            }
            Some(r)
        }
    };
    let (rows, cols) = (spec.in_channels, spec.out_channels);
    let (weights, compressed) = match raw.mode {
        0 => {
            if raw.values.len() != spec.weight_count() || !raw.index_bytes.is_empty() {
                return Err(malformed(
                    name,
                    format!("{} dense weights, expected {}", raw.values.len(), spec.weight_count()),
                ));
            }
            (raw.values, None)
        }
        1 | 2 => {
            if !spec.pruned {
                return Err(malformed(name, "layer is not in the pruned pool"));
            }
            let mode = if raw.mode == 1 { PruneMode::Stochastic } else { PruneMode::Magnitude };
            let lfsr = LfsrConfig::new(raw.taps, raw.seeds).map_err(|e| malformed(name, e))?;
            let indices = match mode {
                PruneMode::Stochastic => {
                    if !raw.index_bytes.is_empty() {
                        return Err(malformed(name, "stochastic layer carries index bytes"));
                    }
                    Vec::new()
                }
                PruneMode::Magnitude => pruner::unpack_nibbles(&raw.index_bytes, raw.values.len())?,
            };
            let cw = CompressedWeights {
                mode,
                rows,
                cols,
                theta: raw.theta,
                values: raw.values,
                indices,
                lfsr: (mode == PruneMode::Stochastic).then_some(lfsr),
            };
            let dense = cw.decompress().map_err(|e| malformed(name, e))?.to_matrix();
            (dense, Some(cw))
        }
        m => return Err(malformed(name, format!("prune mode code {m}"))),
    };
    Ok(QuantLayer {
        spec: spec.clone(),
        weights,
        bias: raw.bias,
        input_q: qparams(raw.input_q)?,
        weight_q: qparams(raw.weight_q)?,
        output_q: qparams(raw.output_q)?,
        requant,
        compressed,
    })
}

pub fn decode_weights(data: &[u8]) -> Result<Network> {
    let mut r = open(data, RCW1)?;
    let name = r.name()?;
    let n = r.u16()? as usize;
    let raw: Vec<RawLayer> = (0..n).map(|_| read_layer(&mut r)).collect::<Result<_>>()?;
    let nd = r.u16()? as usize;
    let mut dec = Vec::with_capacity(nd);
    for _ in 0..nd {
        let kind = r.u8()?;
        let nw = r.u32()? as usize;
        let nb = r.u32()? as usize;
        let mut f = |n: usize| -> Result<Vec<f64>> {
            Ok(r.take(n.checked_mul(4).ok_or_else(|| Error::Malformed("count overflows".into()))?)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect())
        };
        let weights = f(nw)?;
        let bias = f(nb)?;
        dec.push((kind, TWeights { weights, bias }));
    }
    close(r, data)?;

    let spec = model::build(&name).map_err(|_| Error::Malformed(format!("unknown model {name:?}")))?;
    if raw.len() != spec.encoder.len() || dec.len() != spec.decoder.len() {
        return Err(Error::Malformed(format!(
            "{} encoder / {} decoder records, {name} has {} / {}",
            raw.len(),
            dec.len(),
            spec.encoder.len(),
            spec.decoder.len()
        )));
    }
    let encoder: Vec<QuantLayer> = spec.encoder.iter().zip(raw).map(|(s, r)| build_layer(s, r)).collect::<Result<_>>()?;
    for pair in encoder.windows(2) {
        if pair[0].output_q != pair[1].input_q {
            return Err(malformed(&pair[1].spec.name, "input quantization does not chain from the previous layer"));
        }
    }
    let mut decoder = Vec::with_capacity(dec.len());
    for (t, (kind, p)) in spec.decoder.iter().zip(dec) {
        let want_kind = match t.kind {
            TKind::TConv => 0,
            TKind::TDwConv => 1,
        };
        if kind != want_kind || p.weights.len() != t.weight_count() || p.bias.len() != t.bias_count() {
            return Err(malformed(&t.name, "decoder record does not match the registered model"));
        }
        decoder.push(p);
    }
    Ok(Network { spec, encoder, decoder })
}

pub fn write_weights(path: impl AsRef<Path>, net: &Network) -> Result<()> {
    fs::write(path, encode_weights(net))?;
    Ok(())
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<Network> {
    decode_weights(&fs::read(path)?)
}

// ---------------------------------------------------------------------------
// RCZ1

/// Quantized latent vectors of a windowed recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Latents {
    pub model: String,
    pub gamma: usize,
    pub qparams: QParams,
    pub channels: usize,
    pub window_samples: usize,
    pub sample_rate: u32,
    /// `windows * gamma` values, window-major.
    pub data: Vec<i8>,
}

impl Latents {
    pub fn windows(&self) -> usize {
        self.data.len() / self.gamma.max(1)
    }

    pub fn window(&self, k: usize) -> QTensor {
        let v = self.data[k * self.gamma..(k + 1) * self.gamma].iter().map(|&x| x as i32).collect();
        QTensor {
            h: 1,
            w: 1,
            c: self.gamma,
            data: v,
            qparams: self.qparams,
        }
    }
}

pub fn encode_latents(z: &Latents) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(&RCZ1);
    w.u16(VERSION);
    w.name(&z.model);
    w.u32(z.gamma as u32);
    w.u32(z.windows() as u32);
    w.qparams(z.qparams);
    w.u32(z.channels as u32);
    w.u32(z.window_samples as u32);
    w.u32(z.sample_rate);
    for &v in &z.data {
        w.i8(v);
    }
    w.finish()
}

pub fn decode_latents(data: &[u8]) -> Result<Latents> {
    let mut r = open(data, RCZ1)?;
    let model = r.name()?;
    let gamma = r.u32()? as usize;
    let n = r.u32()? as usize;
    let q = r.qparams()?;
    let channels = r.u32()? as usize;
    let window_samples = r.u32()? as usize;
    let sample_rate = r.u32()?;
    let count = gamma.checked_mul(n).ok_or_else(|| Error::Malformed("latent count overflows".into()))?;
    let payload = r.take(count)?.iter().map(|&b| b as i8).collect();
    close(r, data)?;
    if gamma == 0 {
        return Err(Error::Malformed("latent size is zero".into()));
    }
    Ok(Latents {
        model,
        gamma,
        qparams: qparams(q)?,
        channels,
        window_samples,
        sample_rate,
        data: payload,
    })
}

pub fn write_latents(path: impl AsRef<Path>, z: &Latents) -> Result<()> {
    fs::write(path, encode_latents(z))?;
    Ok(())
}

pub fn read_latents(path: impl AsRef<Path>) -> Result<Latents> {
    decode_latents(&fs::read(path)?)
}
