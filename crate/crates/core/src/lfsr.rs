//! 4-bit Fibonacci LFSRs and the four-lane index scheme that selects the
//! retained slots of every 1x16 weight tile.
//!
//! Lane `l` owns the slot group `{4l, 4l+1, 4l+2, 4l+3}`. Each generation
//! cycle every lane emits one slot `4l + (state mod 4)`, linearly probing
//! inside its own group past slots already emitted for this tile, then
//! advances its register once. Uniqueness and per-group balance therefore
//! hold for every seed choice.
//!
//! A lane's state at tile `t` is its seed advanced by `t * theta / 4`
//! steps, so any tile's indices can be rebuilt without replaying the
//! preceding tiles.

use crate::error::{Error, Result};

pub const LANES: usize = 4;
pub const TILE_WIDTH: usize = 16;
pub const GROUP_WIDTH: usize = TILE_WIDTH / LANES;
/// Period of a maximal-length 4-bit register.
pub const MAX_PERIOD: usize = 15;
/// Taps {4, 3}: x^4 + x^3 + 1.
pub const DEFAULT_TAPS: u16 = 0b1100;
pub const DEFAULT_SEEDS: [u8; LANES] = [1, 2, 4, 8];
pub const THETAS: [usize; 4] = [4, 8, 12, 16];

/// Feedback polynomial and per-lane seeds. `taps` has bit `k-1` set for
/// tap position `k` (1-based, as in the polynomial exponent).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LfsrConfig {
    pub taps: u16,
    pub seeds: [u8; LANES],
}

impl Default for LfsrConfig {
    fn default() -> Self {
        Self {
            taps: DEFAULT_TAPS,
            seeds: DEFAULT_SEEDS,
        }
    }
}

impl LfsrConfig {
    pub fn new(taps: u16, seeds: [u8; LANES]) -> Result<Self> {
        let cfg = Self { taps, seeds };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.taps & !0xF != 0 || self.taps & 0b1000 == 0 {
            return Err(Error::LfsrConfig(format!(
                "taps {:#06x} must lie in bits 0..4 and include tap 4",
                self.taps
            )));
        }
        if let Some(s) = self.seeds.iter().find(|&&s| s == 0 || s > 15) {
            return Err(Error::LfsrConfig(format!("seed {s} outside [1, 15]")));
        }
        let period = period(self.taps)?;
        if period != MAX_PERIOD {
            return Err(Error::LfsrConfig(format!(
                "taps {:#06x} give period {period}, not maximal length",
                self.taps
            )));
        }
        Ok(())
    }

    /// Lane state after `n` steps from its seed.
    pub fn lane_state(&self, lane: usize, n: usize) -> u8 {
        advance(self.seeds[lane], self.taps, n)
    }
}

/// One Fibonacci update: feedback is the XOR of the tapped bits, shifted in
/// at bit 0.
pub fn step(state: u8, taps: u16) -> Result<u8> {
    if state & 0xF == 0 {
        return Err(Error::LfsrLockup);
    }
    Ok(step_unchecked(state, taps))
}

#[inline]
fn step_unchecked(state: u8, taps: u16) -> u8 {
    let fb = ((state as u16 & taps).count_ones() & 1) as u8;
    ((state << 1) | fb) & 0xF
}

/// Advance a non-zero state by `n` steps (reduced modulo the period).
pub fn advance(state: u8, taps: u16, n: usize) -> u8 {
    let mut s = state;
    for _ in 0..n % MAX_PERIOD {
        s = step_unchecked(s, taps);
    }
    s
}

/// Cycle length starting from state 1.
pub fn period(taps: u16) -> Result<usize> {
    let start = 1u8;
    let mut s = step(start, taps)?;
    let mut n = 1;
    while s != start {
        if s == 0 || n > 16 {
            return Ok(0);
        }
        s = step_unchecked(s, taps);
        n += 1;
    }
    Ok(n)
}

/// Retained slot indices for one tile, in emission order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexStream {
    pub tile_id: usize,
    pub indices: Vec<u8>,
}

pub fn check_theta(theta: usize) -> Result<()> {
    if THETAS.contains(&theta) {
        Ok(())
    } else {
        Err(Error::Theta(theta))
    }
}

/// Non-zeros kept in a tile with `valid` usable slots: the full `theta` for
/// a complete tile, proportionally fewer (rounded up) for a partial one.
pub fn tile_theta(theta: usize, valid: usize) -> usize {
    (theta * valid).div_ceil(TILE_WIDTH)
}

fn emit(cfg: &LfsrConfig, base: usize, cycles: usize) -> Vec<u8> {
    let mut used = [false; TILE_WIDTH];
    let mut out = Vec::with_capacity(cycles * LANES);
    for c in 0..cycles {
        for lane in 0..LANES {
            let mut p = (cfg.lane_state(lane, base + c) as usize) % GROUP_WIDTH;
            while used[lane * GROUP_WIDTH + p] {
                p = (p + 1) % GROUP_WIDTH;
            }
            let slot = lane * GROUP_WIDTH + p;
            used[slot] = true;
            out.push(slot as u8);
        }
    }
    out
}

pub fn tile_indices(cfg: &LfsrConfig, tile_id: usize, theta: usize) -> Result<IndexStream> {
    check_theta(theta)?;
    let indices = if theta == TILE_WIDTH {
        (0..TILE_WIDTH as u8).collect()
    } else {
        emit(cfg, tile_id * theta / LANES, theta / LANES)
    };
    Ok(IndexStream { tile_id, indices })
}

/// Index stream for a tile of which only the first `valid` slots hold real
/// weights (the zero-padded tail of a matrix whose row count is not a
/// multiple of 16). The generator runs a full four cycles from the tile's
/// state and keeps the first [`tile_theta`] valid slots in emission order.
pub fn partial_tile_indices(
    cfg: &LfsrConfig,
    tile_id: usize,
    theta: usize,
    valid: usize,
) -> Result<IndexStream> {
    check_theta(theta)?;
    if valid == 0 || valid > TILE_WIDTH {
        return Err(Error::InvalidArgument(format!("valid slot count {valid} outside [1, 16]")));
    }
    if valid == TILE_WIDTH {
        return tile_indices(cfg, tile_id, theta);
    }
    let keep = tile_theta(theta, valid);
    let indices = if theta == TILE_WIDTH {
        (0..valid as u8).collect()
    } else {
        emit(cfg, tile_id * theta / LANES, LANES)
            .into_iter()
            .filter(|&s| (s as usize) < valid)
            .take(keep)
            .collect()
    };
    Ok(IndexStream { tile_id, indices })
}
