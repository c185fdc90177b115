//! `neurocae`: prepare recordings, build and prune quantized encoders,
//! compress and reconstruct, evaluate and simulate.

mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use neurocae::engine::{FloatModel, Network};
use neurocae::lfsr::{LfsrConfig, DEFAULT_SEEDS, DEFAULT_TAPS};
use neurocae::metrics;
use neurocae::model::{self, OpClass, Side};
use neurocae::pruner::{self, PruneMode};
use neurocae::signalio::{self, format, Latents, Recording};
use neurocae::sim::{self, PeArrayConfig};
use neurocae::tensor::Tensor;
use neurocae::Error;

use report::Report;

#[derive(Parser)]
#[command(name = "neurocae", version, about = "Neural-signal CAE compression toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct FormatArg {
    /// Report layout.
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Kv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Stochastic,
    Magnitude,
}

impl From<Mode> for PruneMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Stochastic => PruneMode::Stochastic,
            Mode::Magnitude => PruneMode::Magnitude,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Split {
    All,
    Train,
    Val,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic 30 kS/s recording (RNS1).
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 96)]
        channels: usize,
        #[arg(long, default_value_t = 10.0)]
        seconds: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        fmt: FormatArg,
    },
    /// Decimate a raw recording to 2 kS/s and trim it to whole windows.
    Prepare {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        fmt: FormatArg,
    },
    /// Build a calibrated quantized model from random float weights.
    Init {
        #[arg(long, default_value = "DS-CAE1")]
        model: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Prepared recording whose training windows drive calibration.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        fmt: FormatArg,
    },
    /// Prune the pointwise pool of a weight file.
    Prune {
        /// Weight file to prune; optional with --dump-checksum and --model.
        input: Option<PathBuf>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long, value_parser = ["0", "25", "50", "75"])]
        sparsity: Option<String>,
        #[arg(long, value_enum)]
        prune_mode: Option<Mode>,
        /// Feedback taps as a 4-bit mask (e.g. 0xc for x^4 + x^3 + 1).
        #[arg(long)]
        taps: Option<String>,
        /// Four lane seeds, comma separated (1..15).
        #[arg(long)]
        seeds: Option<String>,
        /// Print the CRC-32 of the stochastic retention masks.
        #[arg(long)]
        dump_checksum: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        fmt: FormatArg,
    },
    /// Encode a prepared recording into quantized latents (RCZ1).
    Compress {
        input: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        fmt: FormatArg,
    },
    /// Decode latents back into a recording (RNS1).
    Reconstruct {
        input: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        fmt: FormatArg,
    },
    /// Compare a recording with its reconstruction.
    Evaluate {
        reference: PathBuf,
        reconstruction: PathBuf,
        #[arg(long, value_enum, default_value_t = Split::All)]
        split: Split,
        /// Latent size used for the compression ratio line.
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        fmt: FormatArg,
    },
    /// Run the encoder through the PE-array model.
    Simulate {
        weights: PathBuf,
        /// Prepared recording; a synthetic window is used when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        window: usize,
        #[arg(long, default_value_t = 2_000_000.0)]
        clock_hz: f64,
        /// Fixed per-inference overhead in seconds.
        #[arg(long, default_value_t = 0.0)]
        overhead_s: f64,
        #[command(flatten)]
        fmt: FormatArg,
    },
    /// Architecture, operation counts and memory figures of a model.
    ModelInfo {
        model: String,
        #[arg(long, default_value_t = 2_000_000.0)]
        clock_hz: f64,
        #[command(flatten)]
        fmt: FormatArg,
    },
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    msg: String,
}

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_FORMAT: u8 = 4;
const EXIT_OTHER: u8 = 5;

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) => EXIT_IO,
            Error::UnknownModel(_) => EXIT_USAGE,
            e if e.is_format() => EXIT_FORMAT,
            _ => EXIT_OTHER,
        };
        Failure { code, msg: e.to_string() }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        msg: msg.into(),
    }
}

fn with_path(path: &Path) -> impl FnOnce(Error) -> Failure + '_ {
    move |e| {
        let mut f = Failure::from(e);
        f.msg = format!("{}: {}", path.display(), f.msg);
        f
    }
}

type Outcome = Result<(Report, Format), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok((report, fmt)) => {
            print!("{}", report.render(fmt == Format::Kv));
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Synth {
            seed,
            channels,
            seconds,
            out,
            fmt,
        } => {
            if !(seconds.is_finite() && seconds >= 0.0) {
                return Err(usage("--seconds must be a non-negative number"));
            }
            let rec = signalio::synth(seed, channels, seconds);
            format::write_recording(&out, &rec).map_err(with_path(&out))?;
            let mut r = Report::new("synth");
            r.kv("channels", rec.channels);
            r.kv("sample_rate_hz", rec.sample_rate);
            r.kv("samples", rec.samples);
            r.kv("out", out.display());
            Ok((r, fmt.format))
        }
        Command::Prepare { input, out, fmt } => {
            let raw = format::read_recording(&input).map_err(with_path(&input))?;
            let dec = signalio::decimate(&raw)?;
            let (windows, split) = signalio::window(&dec)?;
            let kept = Recording::from_windows(&windows, dec.sample_rate)?;
            format::write_recording(&out, &kept).map_err(with_path(&out))?;
            let mut r = Report::new("prepare");
            r.kv("channels", kept.channels);
            r.kv("sample_rate_hz", kept.sample_rate);
            r.kv("samples", kept.samples);
            r.kv("windows", windows.len());
            r.kv("train_windows", split.train.len());
            r.kv("val_windows", split.val.len());
            r.kv("test_windows", split.test.len());
            r.kv("out", out.display());
            Ok((r, fmt.format))
        }
        Command::Init {
            model,
            seed,
            data,
            out,
            fmt,
        } => {
            let spec = model::build(&model)?;
            let windows = match &data {
                Some(p) => {
                    let rec = format::read_recording(p).map_err(with_path(p))?;
                    let (w, split) = signalio::window(&rec)?;
                    let train = if split.train.is_empty() { 0..w.len() } else { split.train };
                    w[train].to_vec()
                }
                None => synthetic_windows(seed, 4)?,
            };
            if windows.is_empty() {
                return Err(usage("calibration data holds no complete window"));
            }
            let fm = FloatModel::random(&spec, seed);
            let net = Network::calibrate(&fm, &windows)?;
            format::write_weights(&out, &net).map_err(with_path(&out))?;
            let mut r = Report::new("init");
            r.kv("model", &spec.name);
            r.kv("calibration_windows", windows.len());
            r.kv("input_scale", net.input_q().scale);
            r.kv("input_zero_point", net.input_q().zero_point);
            r.kv("latent_scale", net.latent_q().scale);
            r.kv("latent_zero_point", net.latent_q().zero_point);
            r.kv("out", out.display());
            Ok((r, fmt.format))
        }
        Command::Prune {
            input,
            model,
            sparsity,
            prune_mode,
            taps,
            seeds,
            dump_checksum,
            out,
            fmt,
        } => prune(input, model, sparsity, prune_mode, taps, seeds, dump_checksum, out, fmt.format),
        Command::Compress {
            input,
            weights,
            out,
            fmt,
        } => {
            let net = format::read_weights(&weights).map_err(with_path(&weights))?;
            let rec = format::read_recording(&input).map_err(with_path(&input))?;
            if rec.sample_rate != signalio::TARGET_RATE {
                return Err(Error::SampleRate {
                    found: rec.sample_rate,
                    expected: signalio::TARGET_RATE,
                }
                .into());
            }
            let (windows, _) = signalio::window(&rec)?;
            let mut data = Vec::with_capacity(windows.len() * net.spec.gamma);
            for w in &windows {
                data.extend(net.encode(w)?.data.into_iter().map(|v| v as i8));
            }
            let z = Latents {
                model: net.spec.name.clone(),
                gamma: net.spec.gamma,
                qparams: net.latent_q(),
                channels: rec.channels,
                window_samples: model::WINDOW_SAMPLES,
                sample_rate: rec.sample_rate,
                data,
            };
            format::write_latents(&out, &z).map_err(with_path(&out))?;
            let mut r = Report::new("compress");
            r.kv("model", &net.spec.name);
            r.kv("windows", windows.len());
            r.kv("gamma", net.spec.gamma);
            r.kv("compression_ratio", report::num(net.spec.compression_ratio()));
            r.kv("latent_bytes", z.data.len());
            r.kv("out", out.display());
            Ok((r, fmt.format))
        }
        Command::Reconstruct {
            input,
            weights,
            out,
            fmt,
        } => {
            let net = format::read_weights(&weights).map_err(with_path(&weights))?;
            let z = format::read_latents(&input).map_err(with_path(&input))?;
            if z.model != net.spec.name || z.gamma != net.spec.gamma {
                return Err(usage(format!(
                    "latents come from {} (gamma {}), weights are {}",
                    z.model, z.gamma, net.spec.name
                )));
            }
            if z.qparams != net.latent_q() {
                return Err(usage("latent quantization differs from the weight file"));
            }
            let windows = (0..z.windows()).map(|k| net.decode(&z.window(k))).collect::<Result<Vec<_>, _>>()?;
            let rec = Recording::from_windows(&windows, z.sample_rate)?;
            format::write_recording(&out, &rec).map_err(with_path(&out))?;
            let mut r = Report::new("reconstruct");
            r.kv("model", &net.spec.name);
            r.kv("windows", windows.len());
            r.kv("channels", rec.channels);
            r.kv("samples", rec.samples);
            r.kv("out", out.display());
            Ok((r, fmt.format))
        }
        Command::Evaluate {
            reference,
            reconstruction,
            split,
            model,
            fmt,
        } => evaluate(&reference, &reconstruction, split, model, fmt.format),
        Command::Simulate {
            weights,
            input,
            window,
            clock_hz,
            overhead_s,
            fmt,
        } => simulate(&weights, input, window, clock_hz, overhead_s, fmt.format),
        Command::ModelInfo { model, clock_hz, fmt } => model_info(&model, clock_hz, fmt.format),
    }
}

/// Windows cut from a short synthetic recording.
fn synthetic_windows(seed: u64, count: usize) -> Result<Vec<Tensor>, Failure> {
    let seconds = count as f64 * model::WINDOW_SAMPLES as f64 / signalio::TARGET_RATE as f64;
    let raw = signalio::synth(seed, model::INPUT_CHANNELS, seconds);
    let (w, _) = signalio::window(&signalio::decimate(&raw)?)?;
    Ok(w)
}

fn parse_taps(s: &str) -> Result<u16, Failure> {
    let t = s.trim();
    let v = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(h) => u16::from_str_radix(h, 16),
        None => match t.strip_prefix("0b") {
            Some(b) => u16::from_str_radix(b, 2),
            None => t.parse(),
        },
    };
    v.map_err(|_| usage(format!("--taps {s:?} is not a number")))
}

fn parse_seeds(s: &str) -> Result<[u8; 4], Failure> {
    let v: Vec<u8> = s
        .split(',')
        .map(|p| p.trim().parse::<u8>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("--seeds {s:?} must be four integers")))?;
    v.try_into().map_err(|_| usage("--seeds takes exactly four values"))
}

#[allow(clippy::too_many_arguments)]
fn prune(
    input: Option<PathBuf>,
    model_name: Option<String>,
    sparsity: Option<String>,
    mode: Option<Mode>,
    taps: Option<String>,
    seeds: Option<String>,
    dump_checksum: bool,
    out: Option<PathBuf>,
    fmt: Format,
) -> Outcome {
    let sparsity: u32 = sparsity.as_deref().unwrap_or("0").parse().expect("validated by clap");
    if sparsity > 0 && mode.is_none() {
        return Err(usage("--sparsity needs --prune-mode"));
    }
    let mode = mode.map(PruneMode::from).unwrap_or(PruneMode::Stochastic);
    if mode == PruneMode::Magnitude && (taps.is_some() || seeds.is_some() || dump_checksum) {
        return Err(usage("--taps, --seeds and --dump-checksum apply to stochastic pruning only"));
    }
    let cfg = LfsrConfig {
        taps: taps.as_deref().map(parse_taps).transpose()?.unwrap_or(DEFAULT_TAPS),
        seeds: seeds.as_deref().map(parse_seeds).transpose()?.unwrap_or(DEFAULT_SEEDS),
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let theta = pruner::theta_for_sparsity(sparsity)?;

    let net = match &input {
        Some(p) => Some(format::read_weights(p).map_err(with_path(p))?),
        None => None,
    };
    let spec = match (&net, &model_name) {
        (Some(n), Some(m)) if model::build(m)?.name != n.spec.name => {
            return Err(usage(format!("--model {m} differs from the weight file's {}", n.spec.name)))
        }
        (Some(n), _) => n.spec.clone(),
        (None, Some(m)) => model::build(m)?,
        (None, None) => return Err(usage("prune needs a weight file or --model")),
    };
    if net.is_none() && !dump_checksum {
        return Err(usage("without a weight file only --dump-checksum is available"));
    }
    if net.is_some() && out.is_none() && !dump_checksum {
        return Err(usage("--out is required when pruning a weight file"));
    }

    let mut r = Report::new("prune");
    r.kv("model", &spec.name);
    r.kv("sparsity_pct", sparsity);
    r.kv("theta", theta);
    r.kv("prune_mode", mode.name());
    if mode == PruneMode::Stochastic {
        r.kv("taps", format!("{:#06x}", cfg.taps));
        r.kv("seeds", cfg.seeds.map(|s| s.to_string()).join(","));
    }
    if dump_checksum {
        r.kv("mask_checksum", format!("{:08x}", pruner::mask_checksum(&spec, theta, &cfg)?));
    }
    if let (Some(mut net), Some(out)) = (net, out) {
        net.prune(sparsity, mode, &cfg)?;
        format::write_weights(&out, &net).map_err(with_path(&out))?;
        let pool: usize = net.encoder.iter().filter(|l| l.spec.pruned).map(|l| l.spec.weight_count()).sum();
        let kept: usize = net
            .encoder
            .iter()
            .filter(|l| l.spec.pruned)
            .map(|l| l.compressed.as_ref().map_or(l.spec.weight_count(), |c| c.values.len()))
            .sum();
        r.kv("pool_weights", pool);
        r.kv("retained_weights", kept);
        r.kv("out", out.display());
    }
    Ok((r, fmt))
}

fn evaluate(reference: &Path, recon: &Path, split: Split, model_name: Option<String>, fmt: Format) -> Outcome {
    let x = format::read_recording(reference).map_err(with_path(reference))?;
    let y = format::read_recording(recon).map_err(with_path(recon))?;
    if (x.channels, x.samples) != (y.channels, y.samples) {
        return Err(usage(format!(
            "shapes differ: {}x{} vs {}x{}",
            x.channels, x.samples, y.channels, y.samples
        )));
    }
    let (xw, s) = signalio::window(&x)?;
    let (yw, _) = signalio::window(&y)?;
    let range = match split {
        Split::All => 0..xw.len(),
        Split::Train => s.train,
        Split::Val => s.val,
        Split::Test => s.test,
    };
    if range.is_empty() {
        return Err(usage("selected split holds no window"));
    }
    let m = metrics::aggregate(&xw[range.clone()], &yw[range])?;
    let mut r = Report::new("evaluate");
    r.kv("windows", m.windows);
    r.kv("channels", m.channels.len());
    r.kv("sndr_mean_db", report::num(m.sndr.mean));
    r.kv("sndr_std_db", report::num(m.sndr.std));
    r.kv("sndr_infinite_channels", m.sndr.excluded);
    r.kv("r2_mean", report::num(m.r2.mean));
    r.kv("r2_std", report::num(m.r2.std));
    r.kv("r2_undefined_channels", m.r2.excluded);
    r.kv("mae", report::num(m.mae));
    r.kv("best_channel", m.best);
    r.kv("median_channel", m.median);
    r.kv("worst_channel", m.worst);
    if let Some(name) = model_name {
        let spec = model::build(&name)?;
        r.kv("compression_ratio", report::num(metrics::compression_ratio(model::INPUT_ELEMENTS, spec.gamma)));
    }
    // published results on the original dataset, for orientation only
    r.kv("reference_sndr_db_ds_cae1", "22.61+-2.21");
    r.kv("reference_sndr_db_mobilenet_0.25x", "27.43+-2.41");
    Ok((r, fmt))
}

fn simulate(weights: &Path, input: Option<PathBuf>, window: usize, clock_hz: f64, overhead_s: f64, fmt: Format) -> Outcome {
    let net = format::read_weights(weights).map_err(with_path(weights))?;
    let windows = match &input {
        Some(p) => {
            let rec = format::read_recording(p).map_err(with_path(p))?;
            signalio::window(&rec)?.0
        }
        None => synthetic_windows(0, window + 1)?,
    };
    let w = windows
        .get(window)
        .ok_or_else(|| usage(format!("window {window} out of range ({} available)", windows.len())))?;
    let cfg = PeArrayConfig {
        clock_hz,
        overhead_s,
        ..PeArrayConfig::default()
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let (_, rep) = sim::simulate(&net, &net.quantize_input(w)?, &cfg)?;

    let mut r = Report::new("simulate");
    r.kv("model", &rep.model);
    r.kv("clock_hz", report::num(clock_hz));
    for l in &rep.layers {
        let b = l.balance();
        r.row(
            &l.name,
            &[
                ("dense_macs", l.dense_macs.to_string()),
                ("issued", l.issued.to_string()),
                ("skipped", l.skipped.to_string()),
                ("cycles", l.cycles.to_string()),
                ("balance", format!("{:.4}", b.ratio)),
                ("psum_overflows", l.psum_overflows.to_string()),
            ],
        );
    }
    let b = sim::balance_of(&rep.pe_work());
    r.kv("dense_macs", rep.dense_macs());
    r.kv("issued_macs", rep.issued());
    r.kv("skipped_macs", rep.skipped());
    r.kv("cycles", rep.cycles());
    r.kv("pe_balance_ratio", format!("{:.4}", b.ratio));
    r.kv("psum_overflows", rep.psum_overflows());
    r.kv("estimated_latency_ms", ms(sim::latency_estimate(rep.cycles(), &cfg)));
    r.kv("mac_bound_cycles", rep.mac_bound_cycles());
    r.kv("mac_bound_latency_ms", ms(sim::latency_estimate(rep.mac_bound_cycles(), &cfg)));
    r.kv("reference_measured_latency_ms", sim::REFERENCE_LATENCY_MS);
    r.kv("window_budget_ms", sim::WINDOW_BUDGET_MS);
    r.kv("memory_naive_peak_bytes", rep.memory.naive_peak());
    r.kv("memory_overlap_peak_bytes", rep.memory.overlap_peak());
    Ok((r, fmt))
}

fn model_info(name: &str, clock_hz: f64, fmt: Format) -> Outcome {
    let spec = model::build(name)?;
    let enc = model::count_macs(&spec, Side::Encoder);
    let dec = model::count_macs(&spec, Side::Decoder);
    let mem = sim::memory_analysis(&spec);
    let cfg = PeArrayConfig {
        clock_hz,
        ..PeArrayConfig::default()
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    let mut r = Report::new("model-info");
    r.preamble(spec.table());
    r.kv("model", &spec.name);
    r.kv("gamma", spec.gamma);
    r.kv("compression_ratio", report::num(spec.compression_ratio()));
    r.kv("input", format!("{}x{}x{}", spec.input.0, spec.input.1, spec.input.2));
    r.kv("encoder_macs", enc.total_macs());
    for class in [OpClass::Conv, OpClass::Dw, OpClass::Pw, OpClass::Pool] {
        let key = class.to_string().to_ascii_lowercase();
        r.kv(&format!("macs_{key}"), enc.macs_of(class));
        r.kv(&format!("share_{key}_pct"), format!("{:.2}", enc.share(class)));
    }
    r.kv("encoder_params", enc.total_params());
    r.kv("float_bytes", enc.float_bytes());
    r.kv("float_kb", report::num(enc.float_bytes() as f64 / 1000.0));
    let dense = pruner::memory_report(&spec, 0, PruneMode::Stochastic)?;
    r.kv("quantized_bytes", dense.quantized_bytes());
    r.kv("metadata_bytes", dense.metadata_bytes());
    r.kv("pruned_pool_weights", dense.pool_weights());
    for s in [25u32, 50, 75] {
        let st = pruner::memory_report(&spec, s, PruneMode::Stochastic)?;
        let mg = pruner::memory_report(&spec, s, PruneMode::Magnitude)?;
        r.kv(&format!("stochastic_bytes_{s}"), st.stochastic_bytes());
        r.kv(&format!("magnitude_bytes_{s}"), mg.magnitude_bytes());
        r.kv(&format!("stochastic_metadata_bytes_{s}"), st.metadata_bytes());
    }
    r.kv("decoder_macs", dec.total_macs());
    r.kv("decoder_params", dec.total_params());
    r.kv("memory_naive_peak_bytes", mem.naive_peak());
    r.kv("memory_overlap_peak_bytes", mem.overlap_peak());
    r.kv("memory_reduction_pct", format!("{:.2}", mem.reduction()));
    let bound = sim::mac_bound_cycles(enc.total_macs(), &cfg);
    r.kv("mac_bound_cycles", bound);
    r.kv("mac_bound_latency_ms", ms(sim::latency_estimate(bound, &cfg)));
    Ok((r, fmt))
}

/// Milliseconds with microsecond resolution.
fn ms(seconds: f64) -> String {
    format!("{:.3}", seconds * 1e3)
}
