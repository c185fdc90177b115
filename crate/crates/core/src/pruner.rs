//! Balanced stochastic and magnitude pruning of pointwise weight matrices,
//! the compressed weight store, and parameter-memory accounting.
//!
//! A pointwise matrix is `M x N` (row `m` = input channel, column `n` =
//! output channel), stored row-major as `w[m * N + n]`. Tile `t` covers
//! column `t / B` and rows `16 * (t % B) .. 16 * (t % B) + 16`, where
//! `B = ceil(M / 16)`.

use crate::error::{Error, Result};
use crate::lfsr::{self, LfsrConfig, TILE_WIDTH};
use crate::model::{LayerKind, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PruneMode {
    Stochastic,
    Magnitude,
}

impl PruneMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stochastic" => Ok(PruneMode::Stochastic),
            "magnitude" => Ok(PruneMode::Magnitude),
            _ => Err(Error::InvalidArgument(format!("unknown prune mode {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PruneMode::Stochastic => "stochastic",
            PruneMode::Magnitude => "magnitude",
        }
    }
}

/// Retained slots per tile for a sparsity given in percent.
pub fn theta_for_sparsity(percent: u32) -> Result<usize> {
    match percent {
        0 => Ok(16),
        25 => Ok(12),
        50 => Ok(8),
        75 => Ok(4),
        _ => Err(Error::Sparsity(percent)),
    }
}

pub fn sparsity_for_theta(theta: usize) -> Result<u32> {
    lfsr::check_theta(theta)?;
    Ok(((TILE_WIDTH - theta) * 100 / TILE_WIDTH) as u32)
}

#[inline]
fn blocks(rows: usize) -> usize {
    rows.div_ceil(TILE_WIDTH)
}

/// Valid (non-padding) slots of tile `t`.
pub fn tile_valid(rows: usize, t: usize) -> usize {
    let b = t % blocks(rows);
    (rows - b * TILE_WIDTH).min(TILE_WIDTH)
}

/// Pointwise weights regrouped into 1x16 tiles, zero-padded past row `M`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightTileSet {
    pub layer_id: usize,
    pub rows: usize,
    pub cols: usize,
    pub theta: usize,
    pub tiles: Vec<[i8; TILE_WIDTH]>,
}

impl WeightTileSet {
    pub fn from_matrix(layer_id: usize, w: &[i8], rows: usize, cols: usize, theta: usize) -> Result<Self> {
        lfsr::check_theta(theta)?;
        if w.len() != rows * cols || rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "pointwise matrix has {} values, expected {rows}x{cols}",
                w.len()
            )));
        }
        let nb = blocks(rows);
        let mut tiles = vec![[0i8; TILE_WIDTH]; cols * nb];
        for (t, tile) in tiles.iter_mut().enumerate() {
            let (n, b) = (t / nb, t % nb);
            for (j, slot) in tile.iter_mut().enumerate() {
                let m = b * TILE_WIDTH + j;
                if m < rows {
                    *slot = w[m * cols + n];
                }
            }
        }
        Ok(Self {
            layer_id,
            rows,
            cols,
            theta,
            tiles,
        })
    }

    pub fn to_matrix(&self) -> Vec<i8> {
        let nb = blocks(self.rows);
        let mut w = vec![0i8; self.rows * self.cols];
        for (t, tile) in self.tiles.iter().enumerate() {
            let (n, b) = (t / nb, t % nb);
            for (j, &v) in tile.iter().enumerate() {
                let m = b * TILE_WIDTH + j;
                if m < self.rows {
                    w[m * self.cols + n] = v;
                }
            }
        }
        w
    }

    pub fn valid(&self, t: usize) -> usize {
        tile_valid(self.rows, t)
    }

    pub fn nonzeros(&self) -> usize {
        self.tiles.iter().flatten().filter(|&&v| v != 0).count()
    }
}

fn zero_outside(tile: &mut [i8; TILE_WIDTH], keep: &[u8]) {
    let mut m = [false; TILE_WIDTH];
    for &k in keep {
        m[k as usize] = true;
    }
    for (v, k) in tile.iter_mut().zip(m) {
        if !k {
            *v = 0;
        }
    }
}

/// Retained slots of every tile under the LFSR scheme.
pub fn stochastic_slots(cfg: &LfsrConfig, rows: usize, cols: usize, theta: usize) -> Result<Vec<Vec<u8>>> {
    (0..cols * blocks(rows))
        .map(|t| lfsr::partial_tile_indices(cfg, t, theta, tile_valid(rows, t)).map(|s| s.indices))
        .collect()
}

pub fn stochastic_mask(layer: &WeightTileSet, cfg: &LfsrConfig) -> Result<WeightTileSet> {
    cfg.validate()?;
    let slots = stochastic_slots(cfg, layer.rows, layer.cols, layer.theta)?;
    let mut out = layer.clone();
    for (tile, keep) in out.tiles.iter_mut().zip(&slots) {
        zero_outside(tile, keep);
    }
    Ok(out)
}

/// Top-`keep` slots of a tile by |w|, ties toward the lower index, returned
/// in ascending slot order.
pub fn top_slots(tile: &[i8], keep: usize) -> Vec<u8> {
    let mut order: Vec<usize> = (0..tile.len()).collect();
    order.sort_by(|&a, &b| (tile[b] as i32).abs().cmp(&(tile[a] as i32).abs()).then(a.cmp(&b)));
    let mut kept: Vec<u8> = order[..keep.min(tile.len())].iter().map(|&i| i as u8).collect();
    kept.sort_unstable();
    kept
}

/// Balanced magnitude pruning: every tile keeps its own top-Θ entries.
pub fn magnitude_mask(layer: &WeightTileSet, theta: usize) -> Result<WeightTileSet> {
    lfsr::check_theta(theta)?;
    let mut out = layer.clone();
    out.theta = theta;
    for (t, tile) in out.tiles.iter_mut().enumerate() {
        let valid = tile_valid(layer.rows, t);
        let keep = top_slots(&tile[..valid], lfsr::tile_theta(theta, valid));
        zero_outside(tile, &keep);
    }
    Ok(out)
}

/// Layer-wide magnitude pruning without per-tile balance: keeps the
/// `total` largest weights of the whole matrix. Used to show what the
/// balanced schemes avoid.
pub fn magnitude_mask_unbalanced(layer: &WeightTileSet, theta: usize) -> Result<WeightTileSet> {
    lfsr::check_theta(theta)?;
    let total: usize = (0..layer.tiles.len()).map(|t| lfsr::tile_theta(theta, layer.valid(t))).sum();
    let flat: Vec<i8> = layer.tiles.iter().flatten().copied().collect();
    let mut order: Vec<usize> = (0..flat.len()).collect();
    order.sort_by(|&a, &b| (flat[b] as i32).abs().cmp(&(flat[a] as i32).abs()).then(a.cmp(&b)));
    let mut keep = vec![false; flat.len()];
    for &i in &order[..total] {
        keep[i] = true;
    }
    let mut out = layer.clone();
    out.theta = theta;
    for (t, tile) in out.tiles.iter_mut().enumerate() {
        for (j, v) in tile.iter_mut().enumerate() {
            if !keep[t * TILE_WIDTH + j] {
                *v = 0;
            }
        }
    }
    Ok(out)
}

/// Value-only (stochastic) or value+index (magnitude) weight store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedWeights {
    pub mode: PruneMode,
    pub rows: usize,
    pub cols: usize,
    pub theta: usize,
    pub values: Vec<i8>,
    /// One 4-bit slot index per value; empty in stochastic mode.
    pub indices: Vec<u8>,
    /// Present only in stochastic mode.
    pub lfsr: Option<LfsrConfig>,
}

pub fn compress(layer: &WeightTileSet, mode: PruneMode, cfg: Option<&LfsrConfig>) -> Result<CompressedWeights> {
    lfsr::check_theta(layer.theta)?;
    let mut values = Vec::new();
    let mut indices = Vec::new();
    let slots = match mode {
        PruneMode::Stochastic => {
            let cfg = cfg.ok_or_else(|| Error::InvalidArgument("stochastic mode needs an LFSR config".into()))?;
            cfg.validate()?;
            Some(stochastic_slots(cfg, layer.rows, layer.cols, layer.theta)?)
        }
        PruneMode::Magnitude => None,
    };
    for (t, tile) in layer.tiles.iter().enumerate() {
        let valid = layer.valid(t);
        let keep = lfsr::tile_theta(layer.theta, valid);
        let nz: Vec<u8> = (0..valid as u8).filter(|&j| tile[j as usize] != 0).collect();
        match &slots {
            Some(slots) => {
                let s = &slots[t];
                if nz.iter().any(|j| !s.contains(j)) {
                    return Err(Error::Imbalance {
                        tile: t,
                        found: nz.len(),
                        expected: keep,
                    });
                }
                values.extend(s.iter().map(|&j| tile[j as usize]));
            }
            None => {
                if nz.len() > keep {
                    return Err(Error::Imbalance {
                        tile: t,
                        found: nz.len(),
                        expected: keep,
                    });
                }
                // a retained weight that quantized to zero still occupies a
                // slot; pad with the lowest free positions
                let mut s = nz;
                let mut j = 0u8;
                while s.len() < keep {
                    if tile[j as usize] == 0 && !s.contains(&j) {
                        s.push(j);
                    }
                    j += 1;
                }
                s.sort_unstable();
                values.extend(s.iter().map(|&j| tile[j as usize]));
                indices.extend(s);
            }
        }
    }
    Ok(CompressedWeights {
        mode,
        rows: layer.rows,
        cols: layer.cols,
        theta: layer.theta,
        values,
        indices,
        lfsr: if mode == PruneMode::Stochastic { cfg.copied() } else { None },
    })
}

impl CompressedWeights {
    pub fn tile_count(&self) -> usize {
        self.cols * blocks(self.rows)
    }

    /// `(slots, values)` per tile in tile order. Stochastic slots are
    /// regenerated from the LFSR config; no stored index is consulted.
    pub fn tile_slots(&self) -> Result<Vec<(Vec<u8>, Vec<i8>)>> {
        let slots: Vec<Vec<u8>> = match self.mode {
            PruneMode::Stochastic => {
                let cfg = self
                    .lfsr
                    .as_ref()
                    .ok_or_else(|| Error::Malformed("stochastic weights without LFSR config".into()))?;
                stochastic_slots(cfg, self.rows, self.cols, self.theta)?
            }
            PruneMode::Magnitude => {
                let mut out = Vec::with_capacity(self.tile_count());
                let mut pos = 0;
                for t in 0..self.tile_count() {
                    let k = lfsr::tile_theta(self.theta, tile_valid(self.rows, t));
                    let s = self
                        .indices
                        .get(pos..pos + k)
                        .ok_or_else(|| Error::Length("index stream shorter than tile layout".into()))?;
                    out.push(s.to_vec());
                    pos += k;
                }
                out
            }
        };
        let total: usize = slots.iter().map(Vec::len).sum();
        if total != self.values.len() {
            return Err(Error::Length(format!(
                "{} stored values, layout needs {total}",
                self.values.len()
            )));
        }
        let mut pos = 0;
        Ok(slots
            .into_iter()
            .map(|s| {
                let v = self.values[pos..pos + s.len()].to_vec();
                pos += s.len();
                (s, v)
            })
            .collect())
    }

    pub fn decompress(&self) -> Result<WeightTileSet> {
        let mut tiles = vec![[0i8; TILE_WIDTH]; self.tile_count()];
        for (tile, (slots, values)) in tiles.iter_mut().zip(self.tile_slots()?) {
            for (s, v) in slots.into_iter().zip(values) {
                tile[s as usize] = v;
            }
        }
        Ok(WeightTileSet {
            layer_id: 0,
            rows: self.rows,
            cols: self.cols,
            theta: self.theta,
            tiles,
        })
    }

    pub fn value_bytes(&self) -> usize {
        self.values.len()
    }

    pub fn index_bytes(&self) -> usize {
        self.indices.len().div_ceil(2)
    }

    pub fn bytes(&self) -> usize {
        self.value_bytes() + self.index_bytes()
    }
}

/// Two 4-bit indices per byte, low nibble first.
pub fn pack_nibbles(idx: &[u8]) -> Vec<u8> {
    idx.chunks(2)
        .map(|c| (c[0] & 0xF) | (c.get(1).copied().unwrap_or(0) & 0xF) << 4)
        .collect()
}

pub fn unpack_nibbles(bytes: &[u8], count: usize) -> Result<Vec<u8>> {
    if bytes.len() != count.div_ceil(2) {
        return Err(Error::Length(format!(
            "{} index bytes for {count} nibbles",
            bytes.len()
        )));
    }
    Ok((0..count)
        .map(|i| (bytes[i / 2] >> (4 * (i % 2))) & 0xF)
        .collect())
}

/// CRC-32 over the concatenated 0/1 retention masks of the pruned pool, in
/// layer order and row-major `M x N` within a layer. Trainer and engine
/// exchange this value to confirm they prune identically.
pub fn mask_checksum(spec: &ModelSpec, theta: usize, cfg: &LfsrConfig) -> Result<u32> {
    let mut h = crc32fast::Hasher::new();
    for (_, l) in spec.pruned_layers() {
        h.update(&stochastic_mask_matrix(l.in_channels, l.out_channels, theta, cfg)?);
    }
    Ok(h.finalize())
}

/// Row-major `M x N` retention mask (1 = kept).
pub fn stochastic_mask_matrix(rows: usize, cols: usize, theta: usize, cfg: &LfsrConfig) -> Result<Vec<u8>> {
    let nb = blocks(rows);
    let mut mask = vec![0u8; rows * cols];
    for (t, s) in stochastic_slots(cfg, rows, cols, theta)?.into_iter().enumerate() {
        let (n, b) = (t / nb, t % nb);
        for j in s {
            mask[(b * TILE_WIDTH + j as usize) * cols + n] = 1;
        }
    }
    Ok(mask)
}

/// Bytes of per-layer quantization metadata: multiplier (4), shift (1),
/// input and output zero points (1 + 1).
pub const LAYER_META_BYTES: usize = 7;
/// LFSR config per stochastic layer: taps (2) + four seeds.
pub const LFSR_META_BYTES: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerMemory {
    pub name: String,
    pub weights: usize,
    pub biases: usize,
    /// Member of the pruned pool (whether or not this report prunes it).
    pub pruned: bool,
    /// Weights left after pruning (all weights for dense layers).
    pub retained: usize,
    pub float_bytes: usize,
    pub quantized_bytes: usize,
    pub stochastic_bytes: usize,
    pub magnitude_bytes: usize,
    pub metadata_bytes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryReport {
    pub model: String,
    pub sparsity: u32,
    pub mode: PruneMode,
    pub layers: Vec<LayerMemory>,
}

impl MemoryReport {
    fn sum(&self, f: impl Fn(&LayerMemory) -> usize) -> usize {
        self.layers.iter().map(f).sum()
    }
    pub fn params(&self) -> usize {
        self.sum(|l| l.weights + l.biases)
    }
    pub fn float_bytes(&self) -> usize {
        self.sum(|l| l.float_bytes)
    }
    pub fn bias_bytes(&self) -> usize {
        self.sum(|l| 4 * l.biases)
    }
    pub fn quantized_bytes(&self) -> usize {
        self.sum(|l| l.quantized_bytes)
    }
    pub fn stochastic_bytes(&self) -> usize {
        self.sum(|l| l.stochastic_bytes)
    }
    pub fn magnitude_bytes(&self) -> usize {
        self.sum(|l| l.magnitude_bytes)
    }
    pub fn metadata_bytes(&self) -> usize {
        self.sum(|l| l.metadata_bytes)
    }
    /// Retained weights of the pruned pool.
    pub fn pool_nonzeros(&self) -> usize {
        self.layers.iter().filter(|l| l.pruned).map(|l| l.retained).sum()
    }
    pub fn pool_weights(&self) -> usize {
        self.layers.iter().filter(|l| l.pruned).map(|l| l.weights).sum()
    }
    /// Weight + bias bytes for the selected mode (metadata excluded).
    pub fn pruned_bytes(&self) -> usize {
        match self.mode {
            PruneMode::Stochastic => self.stochastic_bytes(),
            PruneMode::Magnitude => self.magnitude_bytes(),
        }
    }
}

pub fn memory_report(spec: &ModelSpec, sparsity: u32, mode: PruneMode) -> Result<MemoryReport> {
    let theta = theta_for_sparsity(sparsity)?;
    let layers = spec
        .encoder
        .iter()
        .filter(|l| l.param_count() > 0)
        .map(|l| {
            let (w, b) = (l.weight_count(), l.bias_count());
            let in_pool = l.pruned && l.kind == LayerKind::PwConv;
            let prune = in_pool && theta < TILE_WIDTH;
            let retained = if prune {
                let tiles = l.out_channels * blocks(l.in_channels);
                (0..tiles).map(|t| lfsr::tile_theta(theta, tile_valid(l.in_channels, t))).sum()
            } else {
                w
            };
            let base = retained + 4 * b;
            let mut meta = LAYER_META_BYTES;
            if prune && mode == PruneMode::Stochastic {
                meta += LFSR_META_BYTES;
            }
            LayerMemory {
                name: l.name.clone(),
                weights: w,
                biases: b,
                pruned: in_pool,
                retained,
                float_bytes: 4 * (w + b),
                quantized_bytes: w + 4 * b,
                stochastic_bytes: base,
                magnitude_bytes: base + if prune { retained.div_ceil(2) } else { 0 },
                metadata_bytes: meta,
            }
        })
        .collect();
    Ok(MemoryReport {
        model: spec.name.clone(),
        sparsity,
        mode,
        layers,
    })
}
