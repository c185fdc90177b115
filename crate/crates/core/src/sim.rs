//! Functional model of the tiled PE array: work items, zero skipping,
//! per-PE load, cycle counts and activation-memory peaks.
//!
//! Each layer's reduction is cut into weight tiles of up to 16 slots:
//! pointwise tiles follow the pruner layout, a standard convolution splits
//! its `K_h * K_w * M` reduction into 16-slot chunks per output channel, a
//! depthwise channel is one 9-slot tile, and a pooling window is chunked
//! like a convolution. A work item is one (output pixel, tile) pair; items
//! are issued pixel by pixel, tile by tile, in lockstep rounds of one item
//! per PE. An item costs `ceil(theta_eff / 4)` cycles, where `theta_eff`
//! counts the tile's stored weights whose activation is non-zero; a round
//! lasts as long as its slowest PE.
//!
//! Outputs are built from the scheduled partial sums themselves (finished
//! by the layer's requantizer), so comparing them with the engine checks
//! that the tiling covers every MAC exactly once.

use crate::engine::{Network, QuantLayer};
use crate::error::{Error, Result};
use crate::lfsr::TILE_WIDTH;
use crate::model::{LayerKind, ModelSpec, INPUT_ELEMENTS};
use crate::ops::ConvGeometry;
use crate::quant::{fits_psum, QTensor};

/// Published measured latency of the dense DS-CAE1 encoder at 2 MHz, shown
/// next to the estimate for comparison only.
pub const REFERENCE_LATENCY_MS: f64 = 45.47;
/// Real-time budget: one 100-sample window at 2 kS/s.
pub const WINDOW_BUDGET_MS: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeArrayConfig {
    pub pe_count: usize,
    pub macs_per_pe: usize,
    pub rf_depth: usize,
    pub psum_bits: u32,
    pub clock_hz: f64,
    /// Fixed per-inference overhead added to the estimate.
    pub overhead_s: f64,
}

impl Default for PeArrayConfig {
    fn default() -> Self {
        Self {
            pe_count: 12,
            macs_per_pe: 4,
            rf_depth: TILE_WIDTH,
            psum_bits: crate::quant::PSUM_BITS,
            clock_hz: 2_000_000.0,
            overhead_s: 0.0,
        }
    }
}

impl PeArrayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pe_count == 0 || self.macs_per_pe == 0 {
            return Err(Error::InvalidArgument("PE array needs at least one PE and one MAC".into()));
        }
        if self.rf_depth != TILE_WIDTH {
            return Err(Error::InvalidArgument(format!(
                "register file depth must equal the tile width {TILE_WIDTH}"
            )));
        }
        if !(self.clock_hz.is_finite() && self.clock_hz > 0.0) {
            return Err(Error::InvalidArgument(format!("clock {} Hz must be positive", self.clock_hz)));
        }
        Ok(())
    }

    pub fn parallel_macs(&self) -> usize {
        self.pe_count * self.macs_per_pe
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSim {
    pub name: String,
    pub kind: LayerKind,
    pub dense_macs: u64,
    pub issued: u64,
    pub skipped: u64,
    pub items: u64,
    pub cycles: u64,
    /// Cycles of work assigned to each PE.
    pub pe_work: Vec<u64>,
    pub psum_overflows: u64,
    pub peak_psum: i64,
}

/// Spread of per-PE work.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Balance {
    pub max: u64,
    pub min: u64,
    /// max / min over PEs that received work (1.0 when none did).
    pub ratio: f64,
    pub variance: f64,
}

pub fn balance_of(work: &[u64]) -> Balance {
    let busy: Vec<u64> = work.iter().copied().filter(|&w| w > 0).collect();
    if busy.is_empty() {
        return Balance {
            max: 0,
            min: 0,
            ratio: 1.0,
            variance: 0.0,
        };
    }
    let max = *busy.iter().max().unwrap();
    let min = *busy.iter().min().unwrap();
    let mean = busy.iter().sum::<u64>() as f64 / busy.len() as f64;
    let variance = busy.iter().map(|&w| (w as f64 - mean).powi(2)).sum::<f64>() / busy.len() as f64;
    Balance {
        max,
        min,
        ratio: max as f64 / min as f64,
        variance,
    }
}

impl LayerSim {
    pub fn balance(&self) -> Balance {
        balance_of(&self.pe_work)
    }
}

/// Per-layer activation bytes and the resulting peaks.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryUse {
    pub name: String,
    pub ia: usize,
    pub oa: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryAnalysis {
    pub layers: Vec<MemoryUse>,
    /// Input window kept resident while the encoder runs.
    pub input_buffer: usize,
}

impl MemoryAnalysis {
    pub fn naive_peak(&self) -> usize {
        self.layers.iter().map(|l| l.ia + l.oa).max().unwrap_or(0)
    }

    pub fn overlap_peak(&self) -> usize {
        self.layers.iter().map(|l| l.ia.max(l.oa)).max().unwrap_or(0) + self.input_buffer
    }

    /// Saving of the overlapped layout in percent.
    pub fn reduction(&self) -> f64 {
        let n = self.naive_peak() as f64;
        100.0 * (n - self.overlap_peak() as f64) / n
    }
}

/// 8-bit activation footprint of every encoder layer.
pub fn memory_analysis(spec: &ModelSpec) -> MemoryAnalysis {
    MemoryAnalysis {
        layers: spec
            .encoder
            .iter()
            .map(|l| MemoryUse {
                name: l.name.clone(),
                ia: l.input_elements(),
                oa: l.output_elements(),
            })
            .collect(),
        input_buffer: INPUT_ELEMENTS,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub model: String,
    pub config: PeArrayConfig,
    pub layers: Vec<LayerSim>,
    pub memory: MemoryAnalysis,
}

impl SimReport {
    pub fn cycles(&self) -> u64 {
        self.layers.iter().map(|l| l.cycles).sum()
    }
    pub fn dense_macs(&self) -> u64 {
        self.layers.iter().map(|l| l.dense_macs).sum()
    }
    pub fn issued(&self) -> u64 {
        self.layers.iter().map(|l| l.issued).sum()
    }
    pub fn skipped(&self) -> u64 {
        self.layers.iter().map(|l| l.skipped).sum()
    }
    pub fn psum_overflows(&self) -> u64 {
        self.layers.iter().map(|l| l.psum_overflows).sum()
    }
    /// Cycles if every MAC unit were busy on every dense MAC.
    pub fn mac_bound_cycles(&self) -> u64 {
        mac_bound_cycles(self.dense_macs(), &self.config)
    }
    pub fn pe_work(&self) -> Vec<u64> {
        let mut w = vec![0u64; self.config.pe_count];
        for l in &self.layers {
            for (a, b) in w.iter_mut().zip(&l.pe_work) {
                *a += b;
            }
        }
        w
    }
}

pub fn mac_bound_cycles(dense_macs: u64, cfg: &PeArrayConfig) -> u64 {
    dense_macs.div_ceil(cfg.parallel_macs() as u64)
}

/// Estimated seconds for `cycles` at the configured clock, plus overhead.
pub fn latency_estimate(cycles: u64, cfg: &PeArrayConfig) -> f64 {
    cycles as f64 / cfg.clock_hz + cfg.overhead_s
}

/// One weight tile of a layer: the reduction positions it covers (as
/// offsets into the flattened reduction) and which of them hold stored
/// weights.
struct Tile {
    /// Output channel the tile accumulates into.
    out: usize,
    /// Flattened reduction index of each slot.
    slots: Vec<usize>,
    /// Stored (non-pruned) slots, as indices into `slots`.
    stored: Vec<usize>,
}

fn dense_tile(out: usize, slots: Vec<usize>) -> Tile {
    let stored = (0..slots.len()).collect();
    Tile { out, slots, stored }
}

fn chunked(out: usize, len: usize, base: impl Fn(usize) -> usize) -> Vec<Tile> {
    (0..len.div_ceil(TILE_WIDTH))
        .map(|c| dense_tile(out, (c * TILE_WIDTH..((c + 1) * TILE_WIDTH).min(len)).map(&base).collect()))
        .collect()
}

fn tiles_of(layer: &QuantLayer) -> Result<Vec<Tile>> {
    let l = &layer.spec;
    let (kh, kw) = l.kernel;
    Ok(match l.kind {
        LayerKind::PwConv => {
            let m = l.in_channels;
            let blocks = m.div_ceil(TILE_WIDTH);
            let stored: Option<Vec<Vec<u8>>> = match &layer.compressed {
                Some(cw) => Some(cw.tile_slots()?.into_iter().map(|(s, _)| s).collect()),
                None => None,
            };
            (0..l.out_channels * blocks)
                .map(|t| {
                    let (n, b) = (t / blocks, t % blocks);
                    let valid = (m - b * TILE_WIDTH).min(TILE_WIDTH);
                    let slots = (0..valid).map(|j| b * TILE_WIDTH + j).collect();
                    let stored = match &stored {
                        Some(s) => s[t].iter().map(|&j| j as usize).collect(),
                        None => (0..valid).collect(),
                    };
                    Tile { out: n, slots, stored }
                })
                .collect()
        }
        LayerKind::Conv => (0..l.out_channels)
            .flat_map(|n| chunked(n, kh * kw * l.in_channels, |r| r))
            .collect(),
        LayerKind::DwConv => (0..l.in_channels)
            .map(|c| dense_tile(c, (0..kh * kw).map(|r| r * l.in_channels + c).collect()))
            .collect(),
        LayerKind::AvgPool | LayerKind::MaxPool => (0..l.in_channels)
            .flat_map(|c| chunked(c, kh * kw, move |r| r * l.in_channels + c))
            .collect(),
        LayerKind::DwsBlock => return Err(Error::Shape("composite block must be expanded".into())),
    })
}

/// Activation (minus zero point) and weight at a flattened reduction index
/// for one output pixel; `None` for padding.
fn operand(layer: &QuantLayer, g: &ConvGeometry, ia: &QTensor, oy: usize, ox: usize, r: usize, out: usize) -> Option<(i32, i32)> {
    let l = &layer.spec;
    let m = l.in_channels;
    let (tap, c) = (r / m, r % m);
    let (i, j) = (tap / l.kernel.1, tap % l.kernel.1);
    let y = (oy * g.stride.0 + i).checked_sub(g.pad.0)?;
    let x = (ox * g.stride.1 + j).checked_sub(g.pad.1)?;
    if y >= ia.h || x >= ia.w {
        return None;
    }
    let a = ia.at(y, x, c) - ia.qparams.zero_point;
    let w = match l.kind {
        LayerKind::Conv => layer.weights[r * l.out_channels + out] as i32,
        LayerKind::PwConv => layer.weights[c * l.out_channels + out] as i32,
        LayerKind::DwConv => layer.weights[r] as i32,
        _ => 1,
    };
    Some((a, w))
}

/// Runs one layer through the engine and accounts its schedule.
pub fn simulate_layer(layer: &QuantLayer, ia: &QTensor, cfg: &PeArrayConfig) -> Result<(QTensor, LayerSim)> {
    cfg.validate()?;
    let l = &layer.spec;
    if (ia.h, ia.w, ia.c) != (l.in_shape.0, l.in_shape.1, l.in_channels) || ia.qparams != layer.input_q {
        return Err(Error::Shape(format!("{}: input does not match the layer", l.name)));
    }
    let g = layer.geometry()?;
    let tiles = tiles_of(layer)?;
    let (oh, ow) = l.out_shape;
    let is_max = l.kind == LayerKind::MaxPool;
    let n_out = l.out_channels;
    let mut running: Vec<i64> = match l.kind {
        LayerKind::Conv | LayerKind::PwConv | LayerKind::DwConv => {
            (0..oh * ow).flat_map(|_| layer.bias.iter().map(|&b| b as i64)).collect()
        }
        LayerKind::MaxPool => vec![i64::MIN; oh * ow * n_out],
        _ => vec![0; oh * ow * n_out],
    };

    let mut pe_work = vec![0u64; cfg.pe_count];
    let (mut issued, mut items, mut cycles) = (0u64, 0u64, 0u64);
    let (mut overflows, mut peak) = (0u64, 0i64);
    let mut round_max = 0u64;
    let mut k = 0usize;
    for p in 0..oh * ow {
        let (oy, ox) = (p / ow, p % ow);
        for t in &tiles {
            let mut eff = 0u64;
            let mut partial = 0i64;
            let mut best = i64::MIN;
            for &s in &t.stored {
                if let Some((a, w)) = operand(layer, &g, ia, oy, ox, t.slots[s], t.out) {
                    best = best.max(a as i64);
                    if a != 0 {
                        eff += 1;
                        partial += a as i64 * w as i64;
                    }
                }
            }
            let work = eff.div_ceil(cfg.macs_per_pe as u64);
            issued += eff;
            items += 1;
            pe_work[k % cfg.pe_count] += work;
            round_max = round_max.max(work);
            k += 1;
            if k.is_multiple_of(cfg.pe_count) {
                cycles += round_max;
                round_max = 0;
            }
            let acc = &mut running[p * n_out + t.out];
            if is_max {
                *acc = (*acc).max(best);
            } else {
                *acc += partial;
                peak = peak.max(acc.abs());
                if !fits_psum(*acc) {
                    overflows += 1;
                }
            }
        }
    }
    cycles += round_max;
    let oa = if is_max {
        let zp = ia.qparams.zero_point as i64;
        QTensor::new(oh, ow, n_out, running.iter().map(|&v| (v + zp) as i32).collect(), ia.qparams)?
    } else {
        let stage = layer
            .stage()
            .ok_or_else(|| Error::QParams(format!("{}: missing requantizer", l.name)))?;
        let acc: Vec<i32> = running.iter().map(|&v| v as i32).collect();
        stage.finish(oh, ow, n_out, &acc)
    };
    let dense_macs = l.macs();
    Ok((
        oa,
        LayerSim {
            name: l.name.clone(),
            kind: l.kind,
            dense_macs,
            issued,
            skipped: dense_macs - issued,
            items,
            cycles,
            pe_work,
            psum_overflows: overflows,
            peak_psum: peak,
        },
    ))
}

/// Simulates the whole encoder on one quantized window.
pub fn simulate(net: &Network, x: &QTensor, cfg: &PeArrayConfig) -> Result<(QTensor, SimReport)> {
    let mut cur = x.clone();
    let mut layers = Vec::with_capacity(net.encoder.len());
    for layer in &net.encoder {
        let (oa, s) = simulate_layer(layer, &cur, cfg)?;
        layers.push(s);
        cur = oa;
    }
    Ok((
        cur,
        SimReport {
            model: net.spec.name.clone(),
            config: *cfg,
            layers,
            memory: memory_analysis(&net.spec),
        },
    ))
}
