//! Recording ingestion (decimation, windowing, splits), synthetic data and
//! the binary containers.

pub mod format;
pub mod synth;

use std::f64::consts::PI;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::model::{INPUT_CHANNELS, WINDOW_SAMPLES};
use crate::tensor::Tensor;

pub use format::{read_latents, read_recording, read_weights, write_latents, write_recording, write_weights, Latents};
pub use synth::synth;

pub const RAW_RATE: u32 = 30_000;
pub const TARGET_RATE: u32 = 2_000;
pub const DECIMATION: usize = (RAW_RATE / TARGET_RATE) as usize;
pub const FIR_ORDER: usize = 20;
pub const FIR_TAPS: usize = FIR_ORDER + 1;
pub const CUTOFF_HZ: f64 = 1_000.0;

/// Multichannel recording, channel-major: sample `s` of channel `c` is
/// `data[c * samples + s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub channels: usize,
    pub sample_rate: u32,
    pub samples: usize,
    pub data: Vec<f32>,
}

impl Recording {
    pub fn new(channels: usize, sample_rate: u32, samples: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * samples {
            return Err(Error::Shape(format!(
                "{channels} channels x {samples} samples needs {} values, got {}",
                channels * samples,
                data.len()
            )));
        }
        Ok(Self {
            channels,
            sample_rate,
            samples,
            data,
        })
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.data[c * self.samples..(c + 1) * self.samples]
    }

    pub fn from_windows(windows: &[Tensor], sample_rate: u32) -> Result<Self> {
        let Some(first) = windows.first() else {
            return Self::new(INPUT_CHANNELS, sample_rate, 0, Vec::new());
        };
        let (ch, t) = (first.h, first.w);
        let samples = t * windows.len();
        let mut data = vec![0f32; ch * samples];
        for (k, w) in windows.iter().enumerate() {
            if (w.h, w.w, w.c) != (ch, t, 1) {
                return Err(Error::Shape("windows differ in shape".into()));
            }
            for c in 0..ch {
                for s in 0..t {
                    data[c * samples + k * t + s] = w.at(c, s, 0) as f32;
                }
            }
        }
        Self::new(ch, sample_rate, samples, data)
    }
}

/// Windowed-sinc low-pass taps (Hamming window), normalized to unit DC
/// gain.
pub fn fir_taps() -> [f64; FIR_TAPS] {
    let fc = CUTOFF_HZ / RAW_RATE as f64;
    let mid = FIR_ORDER as f64 / 2.0;
    let mut h = [0.0; FIR_TAPS];
    for (n, v) in h.iter_mut().enumerate() {
        let x = n as f64 - mid;
        let sinc = if x == 0.0 { 2.0 * fc } else { (2.0 * PI * fc * x).sin() / (PI * x) };
        let win = 0.54 - 0.46 * (2.0 * PI * n as f64 / FIR_ORDER as f64).cos();
        *v = sinc * win;
    }
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Magnitude response of the taps at `freq_hz` for the raw sampling rate.
pub fn fir_gain(freq_hz: f64) -> f64 {
    let w = 2.0 * PI * freq_hz / RAW_RATE as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (n, h) in fir_taps().iter().enumerate() {
        re += h * (w * n as f64).cos();
        im -= h * (w * n as f64).sin();
    }
    re.hypot(im)
}

/// Zero-phase filtering of one channel followed by keeping every 15th
/// sample. Output length is `floor(S / 15)`.
pub fn decimate_channel(x: &[f64], taps: &[f64; FIR_TAPS]) -> Vec<f64> {
    let mid = FIR_ORDER / 2;
    let len = x.len() / DECIMATION;
    (0..len)
        .map(|k| {
            let t = k * DECIMATION;
            let mut acc = 0.0;
            for (n, &h) in taps.iter().enumerate() {
                // x[t + mid - n], zero outside the record
                if let Some(i) = (t + mid).checked_sub(n) {
                    if let Some(&v) = x.get(i) {
                        acc += h * v;
                    }
                }
            }
            acc
        })
        .collect()
}

/// 30 kS/s -> 2 kS/s.
pub fn decimate(raw: &Recording) -> Result<Recording> {
    if raw.sample_rate != RAW_RATE {
        return Err(Error::SampleRate {
            found: raw.sample_rate,
            expected: RAW_RATE,
        });
    }
    if raw.samples < FIR_TAPS {
        return Err(Error::InvalidArgument(format!(
            "recording has {} samples, decimation needs at least {FIR_TAPS}",
            raw.samples
        )));
    }
    let taps = fir_taps();
    let samples = raw.samples / DECIMATION;
    let mut data = Vec::with_capacity(raw.channels * samples);
    for c in 0..raw.channels {
        let x: Vec<f64> = raw.channel(c).iter().map(|&v| v as f64).collect();
        data.extend(decimate_channel(&x, &taps).into_iter().map(|v| v as f32));
    }
    Recording::new(raw.channels, TARGET_RATE, samples, data)
}

/// Contiguous train/validation/test window ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl DatasetSplit {
    /// 80/10/10 by window count: floors go to train and validation, the
    /// remainder to test.
    pub fn new(n: usize) -> Self {
        let train = n * 8 / 10;
        let val = n / 10;
        Self {
            train: 0..train,
            val: train..train + val,
            test: train + val..n,
        }
    }
}

/// Non-overlapping 96x100 windows, each a `C x T_w x 1` tensor.
pub fn window(rec: &Recording) -> Result<(Vec<Tensor>, DatasetSplit)> {
    if rec.channels != INPUT_CHANNELS {
        return Err(Error::Shape(format!(
            "recording has {} channels, models take {INPUT_CHANNELS}",
            rec.channels
        )));
    }
    let n = rec.samples / WINDOW_SAMPLES;
    let windows = (0..n)
        .map(|k| {
            let mut data = Vec::with_capacity(INPUT_CHANNELS * WINDOW_SAMPLES);
            for c in 0..INPUT_CHANNELS {
                let ch = rec.channel(c);
                data.extend(ch[k * WINDOW_SAMPLES..(k + 1) * WINDOW_SAMPLES].iter().map(|&v| v as f64));
            }
            Tensor::from_vec(INPUT_CHANNELS, WINDOW_SAMPLES, 1, data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((windows, DatasetSplit::new(n)))
}
