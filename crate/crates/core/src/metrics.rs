//! Reconstruction metrics and their per-channel aggregation.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Sums needed by every metric, gathered in one pass.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Residual {
    pub n: usize,
    pub sum_x: f64,
    pub sum_x2: f64,
    pub sum_e2: f64,
    pub sum_abs_e: f64,
}

impl Residual {
    pub fn push(&mut self, x: f64, xhat: f64) {
        let e = x - xhat;
        self.n += 1;
        self.sum_x += x;
        self.sum_x2 += x * x;
        self.sum_e2 += e * e;
        self.sum_abs_e += e.abs();
    }

    pub fn of(x: &[f64], xhat: &[f64]) -> Result<Self> {
        if x.len() != xhat.len() {
            return Err(Error::Shape(format!("signal has {} samples, reconstruction {}", x.len(), xhat.len())));
        }
        let mut r = Self::default();
        for (&a, &b) in x.iter().zip(xhat) {
            r.push(a, b);
        }
        Ok(r)
    }

    /// `+inf` for a perfect match, `-inf` for a silent signal with error.
    pub fn sndr(&self) -> f64 {
        if self.sum_e2 == 0.0 {
            return f64::INFINITY;
        }
        10.0 * (self.sum_x2 / self.sum_e2).log10()
    }

    /// `NaN` when the signal is constant.
    pub fn r2(&self) -> f64 {
        let mean = self.sum_x / self.n as f64;
        let ss_tot = self.sum_x2 - self.n as f64 * mean * mean;
        if self.n == 0 || ss_tot <= 0.0 {
            return f64::NAN;
        }
        1.0 - self.sum_e2 / ss_tot
    }

    pub fn mae(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.sum_abs_e / self.n as f64
    }
}

/// `20 log10(||x|| / ||x - xhat||)` in dB.
pub fn sndr(x: &[f64], xhat: &[f64]) -> Result<f64> {
    Ok(Residual::of(x, xhat)?.sndr())
}

pub fn r2(x: &[f64], xhat: &[f64]) -> Result<f64> {
    // the mean is subtracted explicitly here for accuracy on offset signals
    if x.len() != xhat.len() {
        return Err(Error::Shape(format!("signal has {} samples, reconstruction {}", x.len(), xhat.len())));
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let ss_tot: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if x.is_empty() || ss_tot == 0.0 {
        return Ok(f64::NAN);
    }
    let ss_res: f64 = x.iter().zip(xhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mae(x: &[f64], xhat: &[f64]) -> Result<f64> {
    Ok(Residual::of(x, xhat)?.mae())
}

pub fn compression_ratio(input_elements: usize, gamma: usize) -> f64 {
    input_elements as f64 / gamma as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelMetrics {
    pub sndr: f64,
    pub r2: f64,
    pub mae: f64,
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    /// Values left out of the mean (infinite SNDR or undefined R2).
    pub excluded: usize,
}

fn summarize(v: impl Iterator<Item = f64>) -> Summary {
    let all: Vec<f64> = v.collect();
    let finite: Vec<f64> = all.iter().copied().filter(|x| x.is_finite()).collect();
    let excluded = all.len() - finite.len();
    if finite.is_empty() {
        // all sentinels: report the shared sign of infinity, or NaN
        let mean = match all.first() {
            Some(&f) if all.iter().all(|&x| x == f) => f,
            _ => f64::NAN,
        };
        return Summary { mean, std: 0.0, excluded };
    }
    let mean = finite.iter().sum::<f64>() / finite.len() as f64;
    let var = finite.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / finite.len() as f64;
    Summary {
        mean,
        std: var.sqrt(),
        excluded,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub channels: Vec<ChannelMetrics>,
    pub sndr: Summary,
    pub r2: Summary,
    /// Over every sample of every channel.
    pub mae: f64,
    pub windows: usize,
    /// Channel indices ranked by SNDR.
    pub best: usize,
    pub median: usize,
    pub worst: usize,
}

/// Per-channel metrics over the concatenation of all windows. Windows are
/// `C x T x 1` tensors; the channel is the row.
pub fn aggregate(windows: &[Tensor], recon: &[Tensor]) -> Result<MetricReport> {
    if windows.is_empty() {
        return Err(Error::InvalidArgument("aggregation needs at least one window".into()));
    }
    if windows.len() != recon.len() {
        return Err(Error::Shape(format!("{} windows vs {} reconstructions", windows.len(), recon.len())));
    }
    let (c, t) = (windows[0].h, windows[0].w);
    for (a, b) in windows.iter().zip(recon) {
        if a.dims() != (c, t, 1) || b.dims() != (c, t, 1) {
            return Err(Error::Shape("windows must all be C x T x 1".into()));
        }
    }
    let mut total = Residual::default();
    let mut channels = Vec::with_capacity(c);
    for ch in 0..c {
        let mut x = Vec::with_capacity(t * windows.len());
        let mut y = Vec::with_capacity(t * windows.len());
        for (a, b) in windows.iter().zip(recon) {
            x.extend_from_slice(&a.data[ch * t..(ch + 1) * t]);
            y.extend_from_slice(&b.data[ch * t..(ch + 1) * t]);
        }
        let r = Residual::of(&x, &y)?;
        total.sum_abs_e += r.sum_abs_e;
        total.n += r.n;
        channels.push(ChannelMetrics {
            sndr: r.sndr(),
            r2: r2(&x, &y)?,
            mae: r.mae(),
        });
    }
    let mut order: Vec<usize> = (0..c).collect();
    // descending SNDR, ties to the lower channel index
    order.sort_by(|&a, &b| channels[b].sndr.total_cmp(&channels[a].sndr).then(a.cmp(&b)));
    Ok(MetricReport {
        sndr: summarize(channels.iter().map(|m| m.sndr)),
        r2: summarize(channels.iter().map(|m| m.r2)),
        mae: total.mae(),
        windows: windows.len(),
        best: order[0],
        median: order[(c - 1) / 2],
        worst: order[c - 1],
        channels,
    })
}
