use std::hint::black_box;
use std::time::Instant;

use super::alloc;
use super::flops::{count_flops, CostReport, Status};
use crate::fusion::{expand, fuse_fixed, fuse_squeezed, squeeze, FusedInput, SqueezeMethod};
use crate::model::{forward_with, init_weights, layer_output_shape, EmbeddingSpec, Parallelism, Shape, Topology};
use crate::rng::SeedStream;
use crate::tensor::{Axis, FeatureTensor};
use crate::{Error, Result};

pub const MIN_REPEATS: usize = 3;
pub const DEFAULT_MEMORY_BUDGET: u64 = 8 << 30;

/// Fixed CSV column order for bench reports.
pub const CSV_COLUMNS: [&str; 16] = [
    "name",
    "structure",
    "topology",
    "fusion",
    "streams",
    "feature_dim",
    "batch_seconds",
    "frames",
    "repeats",
    "mode",
    "status",
    "flops_total",
    "latency_median_ms",
    "latency_p10_ms",
    "latency_p90_ms",
    "peak_bytes",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Latency {
    pub median_ms: f64,
    pub p10_ms: f64,
    pub p90_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasureConfig {
    pub batch_seconds: f64,
    pub repeats: usize,
    pub warmups: usize,
    /// Stream count for the expanded topology.
    pub mics: usize,
    pub seed: u64,
    pub parallelism: Parallelism,
    pub memory_budget: u64,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            batch_seconds: 60.0,
            repeats: 10,
            warmups: 2,
            mics: 8,
            seed: 0,
            parallelism: Parallelism::Single,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

impl MeasureConfig {
    pub fn frames(&self) -> usize {
        (100.0 * self.batch_seconds).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats < MIN_REPEATS {
            return Err(Error::Config(format!("repeats must be at least {MIN_REPEATS}, got {}", self.repeats)));
        }
        if !(self.batch_seconds.is_finite() && self.batch_seconds > 0.0) || self.frames() == 0 {
            return Err(Error::Config(format!("batch_seconds must give at least one frame, got {}", self.batch_seconds)));
        }
        if self.mics == 0 {
            return Err(Error::Config("mics must be positive".into()));
        }
        Ok(())
    }
}

/// Linear-interpolated percentile of `sorted` (ascending), `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn streams_for(spec: &EmbeddingSpec, mics: usize) -> usize {
    match spec.topology {
        Topology::Expanded => mics,
        _ => 1,
    }
}

/// Working-set estimate: input, weights, and the two largest neighbouring
/// activations across all streams, plus GRU gate buffers.
pub fn estimate_peak_bytes(spec: &EmbeddingSpec, frames: usize, mics: usize) -> Result<u64> {
    let streams = streams_for(spec, mics) as u64;
    let mut shape = Shape { c: spec.input_channels, t: frames, f: spec.feature_dim };
    let size = |s: Shape| (s.c * s.t * s.f) as u64;
    let mut worst = 0u64;
    for layer in spec.layers()? {
        let out = layer_output_shape(&layer.kind, shape)?;
        let scratch = match layer.kind {
            crate::model::LayerKind::ConvNext { channels } => 5 * (channels * shape.t * shape.f) as u64,
            crate::model::LayerKind::Gru { hidden, .. } => 6 * (hidden * shape.f) as u64 + size(shape),
            _ => 0,
        };
        worst = worst.max(streams * (size(shape) + size(out)) + scratch);
        shape = out;
    }
    let input = streams * size(Shape { c: spec.input_channels, t: frames, f: spec.feature_dim });
    Ok(4 * (worst + input + spec.param_count()? as u64))
}

/// Seeded random input in the layout the spec's topology expects.
pub fn synthetic_input(spec: &EmbeddingSpec, frames: usize, mics: usize, seed: u64) -> Result<FusedInput> {
    let mut s = SeedStream::new(seed);
    let f = spec.feature_dim;
    let m = match spec.topology {
        Topology::Fixed => spec.input_channels - 1,
        Topology::Squeezed => 1,
        Topology::Expanded => mics,
    };
    let spectral = FeatureTensor::new(
        vec![(Axis::Channel, m), (Axis::Time, frames), (Axis::Freq, f)],
        (0..m * frames * f).map(|_| s.uniform(-10.0, 5.0) as f32).collect(),
    )?;
    let sf = FeatureTensor::new(
        vec![(Axis::Time, frames), (Axis::Freq, f)],
        (0..frames * f).map(|_| s.uniform(-1.0, 1.0) as f32).collect(),
    )?;
    match spec.topology {
        Topology::Fixed => fuse_fixed(&spectral, &sf),
        Topology::Squeezed => fuse_squeezed(&squeeze(&spectral, SqueezeMethod::FixedChannel, seed)?, &sf),
        Topology::Expanded => expand(&spectral, &sf),
    }
}

/// FLOPs plus wall-clock latency and peak allocation of `repeats` forwards.
pub fn measure(spec: &EmbeddingSpec, cfg: &MeasureConfig) -> Result<CostReport> {
    cfg.validate()?;
    let frames = cfg.frames();
    let mut report = count_flops(spec, frames, cfg.mics)?;
    report.batch_seconds = cfg.batch_seconds;
    report.repeats = cfg.repeats;
    report.mode = cfg.parallelism;
    let needed = estimate_peak_bytes(spec, frames, cfg.mics)?;
    if needed > cfg.memory_budget {
        report.status = Status::OutOfMemory { needed_bytes: needed, budget_bytes: cfg.memory_budget };
        return Ok(report);
    }
    let weights = init_weights(spec, cfg.seed)?;
    let input = synthetic_input(spec, frames, cfg.mics, cfg.seed)?;
    for _ in 0..cfg.warmups {
        black_box(forward_with(spec, &weights, &input, cfg.parallelism)?);
    }
    let baseline = alloc::reset_peak();
    let mut times = Vec::with_capacity(cfg.repeats);
    for _ in 0..cfg.repeats {
        let start = Instant::now();
        black_box(forward_with(spec, &weights, black_box(&input), cfg.parallelism)?);
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    if alloc::installed() {
        report.peak_bytes = Some(alloc::peak_bytes().saturating_sub(baseline) as u64);
    }
    times.sort_by(f64::total_cmp);
    report.latency = Some(Latency {
        median_ms: percentile(&times, 0.5),
        p10_ms: percentile(&times, 0.1),
        p90_ms: percentile(&times, 0.9),
    });
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairedComparison {
    pub pairs: usize,
    /// Pairs where `a` ran faster than `b`.
    pub a_faster: usize,
    pub median_a_ms: f64,
    pub median_b_ms: f64,
}

impl PairedComparison {
    /// `a` is faster by median and in at least `min_wins` pairs.
    pub fn a_wins(&self, min_wins: usize) -> bool {
        self.median_a_ms < self.median_b_ms && self.a_faster >= min_wins
    }
}

/// Interleaved timing of two specs on inputs of the same size; the run order
/// alternates so drift affects both sides equally.
pub fn paired_latency(a: &EmbeddingSpec, b: &EmbeddingSpec, cfg: &MeasureConfig, pairs: usize) -> Result<PairedComparison> {
    cfg.validate()?;
    let frames = cfg.frames();
    let setup = |spec: &EmbeddingSpec| -> Result<_> {
        Ok((init_weights(spec, cfg.seed)?, synthetic_input(spec, frames, cfg.mics, cfg.seed)?))
    };
    let (wa, xa) = setup(a)?;
    let (wb, xb) = setup(b)?;
    let time = |spec, w, x| -> Result<f64> {
        let start = Instant::now();
        black_box(forward_with(spec, w, black_box(x), cfg.parallelism)?);
        Ok(start.elapsed().as_secs_f64())
    };
    for _ in 0..cfg.warmups {
        time(a, &wa, &xa)?;
        time(b, &wb, &xb)?;
    }
    // Each pair times both sides `repeats` times, interleaved, and compares
    // the per-side medians; the reported medians pool every run.
    let mut all_a = Vec::with_capacity(pairs * cfg.repeats);
    let mut all_b = Vec::with_capacity(pairs * cfg.repeats);
    let mut a_faster = 0;
    for i in 0..pairs {
        let mut ta = Vec::with_capacity(cfg.repeats);
        let mut tb = Vec::with_capacity(cfg.repeats);
        for r in 0..cfg.repeats {
            if (i + r) % 2 == 0 {
                ta.push(time(a, &wa, &xa)?);
                tb.push(time(b, &wb, &xb)?);
            } else {
                tb.push(time(b, &wb, &xb)?);
                ta.push(time(a, &wa, &xa)?);
            }
        }
        ta.sort_by(f64::total_cmp);
        tb.sort_by(f64::total_cmp);
        if percentile(&ta, 0.5) < percentile(&tb, 0.5) {
            a_faster += 1;
        }
        all_a.extend(ta);
        all_b.extend(tb);
    }
    let (mut ta, mut tb) = (all_a, all_b);
    ta.sort_by(f64::total_cmp);
    tb.sort_by(f64::total_cmp);
    Ok(PairedComparison {
        pairs,
        a_faster,
        median_a_ms: percentile(&ta, 0.5) * 1e3,
        median_b_ms: percentile(&tb, 0.5) * 1e3,
    })
}

impl CostReport {
    /// Field values in [`CSV_COLUMNS`] order.
    pub fn csv_record(&self, name: &str, spec: &EmbeddingSpec) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_default();
        vec![
            name.to_string(),
            spec.structure.name().to_string(),
            spec.topology.to_string(),
            spec.channel_fusion.to_string(),
            self.streams.to_string(),
            spec.feature_dim.to_string(),
            self.batch_seconds.to_string(),
            self.frames.to_string(),
            self.repeats.to_string(),
            match self.mode {
                Parallelism::Single => "single".into(),
                Parallelism::Streams => "streams".into(),
            },
            self.status.name().to_string(),
            self.flops_total.to_string(),
            opt(self.latency.map(|l| l.median_ms)),
            opt(self.latency.map(|l| l.p10_ms)),
            opt(self.latency.map(|l| l.p90_ms)),
            self.peak_bytes.map(|b| b.to_string()).unwrap_or_default(),
        ]
    }
}
