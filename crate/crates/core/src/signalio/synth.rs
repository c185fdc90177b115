//! Deterministic synthetic LFP-like recordings at 30 kS/s.
//!
//! Every channel mixes a shared set of slow sinusoids and shared pink-noise
//! sources with its own pink noise, all low-passed well below 1 kHz, plus a
//! small white floor. Shared sources give the channels correlated content
//! the way neighbouring electrodes pick up the same field.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{Recording, RAW_RATE};

/// Shared oscillatory sources.
pub const SINE_SOURCES: usize = 8;
pub const SINE_MIN_HZ: f64 = 2.0;
pub const SINE_MAX_HZ: f64 = 250.0;
/// Shared broadband (pink) sources.
pub const NOISE_SOURCES: usize = 4;
/// Corner of the 4-pole low-pass applied to pink noise.
pub const NOISE_CORNER_HZ: f64 = 250.0;
pub const NOISE_POLES: usize = 4;
/// White-noise floor relative to the channel's unit-scale content.
pub const WHITE_STD: f64 = 0.05;
/// Output scale in microvolts.
pub const AMPLITUDE_UV: f64 = 50.0;

/// Pink (1/f) noise via Paul Kellet's economy three-pole filter.
#[derive(Default)]
struct Pink {
    b: [f64; 3],
}

impl Pink {
    fn next(&mut self, white: f64) -> f64 {
        self.b[0] = 0.99765 * self.b[0] + white * 0.0990460;
        self.b[1] = 0.96300 * self.b[1] + white * 0.2965164;
        self.b[2] = 0.57000 * self.b[2] + white * 1.0526913;
        self.b[0] + self.b[1] + self.b[2] + white * 0.1848
    }
}

/// Cascade of identical one-pole low-pass sections.
struct Smooth {
    alpha: f64,
    y: [f64; NOISE_POLES],
}

impl Smooth {
    fn new() -> Self {
        Self {
            alpha: 1.0 - (-2.0 * PI * NOISE_CORNER_HZ / RAW_RATE as f64).exp(),
            y: [0.0; NOISE_POLES],
        }
    }

    fn next(&mut self, mut x: f64) -> f64 {
        for y in &mut self.y {
            *y += self.alpha * (x - *y);
            x = *y;
        }
        x
    }
}

struct Source {
    pink: Pink,
    smooth: Smooth,
}

impl Source {
    fn new() -> Self {
        Self {
            pink: Pink::default(),
            smooth: Smooth::new(),
        }
    }

    fn next(&mut self, white: f64) -> f64 {
        self.smooth.next(self.pink.next(white))
    }
}

/// Raw 30 kS/s recording of `channels` channels lasting `seconds`.
pub fn synth(seed: u64, channels: usize, seconds: f64) -> Recording {
    let samples = (seconds.max(0.0) * RAW_RATE as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // source parameters: frequency, phase, amplitude falling as 1/sqrt(f)
    let sines: Vec<(f64, f64, f64)> = (0..SINE_SOURCES)
        .map(|_| {
            let f = rng.random_range(SINE_MIN_HZ..SINE_MAX_HZ);
            (f, rng.random_range(0.0..2.0 * PI), (SINE_MIN_HZ / f).sqrt())
        })
        .collect();
    let mix = Normal::new(0.0, 1.0).expect("unit normal");
    let sine_mix: Vec<Vec<f64>> = (0..channels).map(|_| (0..SINE_SOURCES).map(|_| mix.sample(&mut rng)).collect()).collect();
    let noise_mix: Vec<Vec<f64>> = (0..channels).map(|_| (0..NOISE_SOURCES).map(|_| mix.sample(&mut rng)).collect()).collect();

    let mut shared: Vec<Source> = (0..NOISE_SOURCES).map(|_| Source::new()).collect();
    let mut private: Vec<Source> = (0..channels).map(|_| Source::new()).collect();
    let mut data = vec![0f32; channels * samples];
    let mut shared_now = [0.0; NOISE_SOURCES];
    let dt = 1.0 / RAW_RATE as f64;
    for s in 0..samples {
        let t = s as f64 * dt;
        for (v, src) in shared_now.iter_mut().zip(&mut shared) {
            *v = src.next(rng.sample(StandardNormal));
        }
        let sine_now: Vec<f64> = sines.iter().map(|&(f, ph, a)| a * (2.0 * PI * f * t + ph).sin()).collect();
        for c in 0..channels {
            let osc: f64 = sine_mix[c].iter().zip(&sine_now).map(|(m, v)| m * v).sum();
            let common: f64 = noise_mix[c].iter().zip(&shared_now).map(|(m, v)| m * v).sum();
            let own = private[c].next(rng.sample(StandardNormal));
            let white: f64 = rng.sample::<f64, _>(StandardNormal) * WHITE_STD;
            data[c * samples + s] = (AMPLITUDE_UV * (0.5 * osc + common + own + white)) as f32;
        }
    }
    Recording {
        channels,
        sample_rate: RAW_RATE,
        samples,
        data,
    }
}
