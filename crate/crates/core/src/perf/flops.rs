//! Analytic FLOP counts.
//!
//! One multiply, add, subtract, divide, comparison or transcendental call is
//! one FLOP, so a multiply-accumulate is two. Bias terms seed accumulators and
//! cost nothing extra. Padded convolution taps are counted. Element-wise costs:
//!
//! | op          | FLOPs | breakdown                         |
//! |-------------|-------|-----------------------------------|
//! | sigmoid     | 4     | negate, exp, add, divide          |
//! | DoubleSwish | 8     | two swishes, each as sigmoid      |
//! | tanh        | 1     | one call                          |
//! | GELU        | 5     | scale, erf, add, two multiplies   |
//! | ReLU        | 1     | one comparison                    |
//! | mean of M   | M     | M−1 adds and one divide           |
//!
//! LayerNorm over C channels costs `8C + 4` per position: mean `C`,
//! squared deviations `3C`, variance scale, epsilon, sqrt and reciprocal `4`,
//! then normalise and affine `4C`.

use crate::model::{layer_output_shape, EmbeddingSpec, LayerKind, Shape, Topology, CONVNEXT_EXPANSION, CONVNEXT_KERNEL};
use crate::model::Parallelism;
use crate::{Error, Result};

use super::measure::Latency;

pub const SIGMOID: u64 = 4;
pub const DOUBLE_SWISH: u64 = 2 * SIGMOID;
pub const TANH: u64 = 1;
pub const GELU: u64 = 5;
pub const RELU: u64 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerCost {
    pub tag: &'static str,
    pub flops: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Estimated working set exceeds the configured budget; nothing was run.
    OutOfMemory { needed_bytes: u64, budget_bytes: u64 },
}

impl Status {
    pub fn name(&self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::OutOfMemory { .. } => "out_of_memory",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostReport {
    pub flops_total: u64,
    pub per_layer: Vec<LayerCost>,
    pub latency: Option<Latency>,
    pub peak_bytes: Option<u64>,
    pub batch_seconds: f64,
    pub frames: usize,
    pub streams: usize,
    pub repeats: usize,
    pub mode: Parallelism,
    pub status: Status,
}

/// Bare convolution: `2·Cin·Cout·kt·kf·T'·F'`.
pub fn conv_flops(cin: usize, cout: usize, kernel: (usize, usize), out_t: usize, out_f: usize) -> u64 {
    2 * (cin * cout * kernel.0 * kernel.1 * out_t * out_f) as u64
}

/// Channel-mixing linear map over `positions`: `2·in·out` each.
pub fn linear_flops(cin: usize, cout: usize, positions: usize) -> u64 {
    2 * (cin * cout * positions) as u64
}

fn layer_norm_flops(c: usize) -> u64 {
    8 * c as u64 + 4
}

/// FLOPs of one layer applied to `streams` streams of shape `s`.
pub fn layer_flops(kind: &LayerKind, s: Shape, streams: usize) -> Result<u64> {
    let out = layer_output_shape(kind, s)?;
    let p = (s.t * s.f) as u64;
    let m = streams as u64;
    let local = |flops: u64| m * flops;
    Ok(match *kind {
        LayerKind::Conv { cin, cout, kernel, .. } => local(
            conv_flops(cin, cout, kernel, out.t, out.f) + DOUBLE_SWISH * (cout * out.t * out.f) as u64,
        ),
        LayerKind::ConvNext { channels } => {
            let c = channels as u64;
            let e = CONVNEXT_EXPANSION as u64 * c;
            let k = (CONVNEXT_KERNEL * CONVNEXT_KERNEL) as u64;
            local(p * (2 * c * k + layer_norm_flops(channels) + 2 * c * e + GELU * e + 2 * e * c + c))
        }
        LayerKind::Linear { cin, cout } => local(linear_flops(cin, cout, s.t * s.f)),
        LayerKind::Gru { input, hidden } => {
            let (i, h) = (input as u64, hidden as u64);
            // Two sigmoid gates with their pre-activation add, candidate
            // add/multiply/tanh, then the four-op state blend.
            local(p * (6 * (i + h) * h + (2 * (1 + SIGMOID) + 2 + TANH + 4) * h))
        }
        LayerKind::Tac { channels } => {
            let (c, half) = (channels as u64, channels as u64 / 2);
            local(p * 2 * (2 * c * half + RELU * half)) + m * p * half
        }
        LayerKind::Dac { channels } => m * p * (channels as u64 / 2),
        LayerKind::Avg { channels } => m * p * channels as u64,
        LayerKind::Project { channels, freq, out } => {
            if s.f != freq || s.c != channels {
                return Err(Error::SpecMismatch("projection input shape differs from plan".into()));
            }
            local(s.t as u64 * 2 * (channels * freq * out) as u64)
        }
    })
}

/// Per-layer FLOPs of one forward pass over `frames` input frames. `mics` is
/// the stream count for the expanded topology and ignored otherwise.
pub fn count_flops(spec: &EmbeddingSpec, frames: usize, mics: usize) -> Result<CostReport> {
    if frames == 0 {
        return Err(Error::SpecMismatch("input needs at least one frame".into()));
    }
    let mut streams = match spec.topology {
        Topology::Expanded if mics == 0 => return Err(Error::SpecMismatch("expanded input needs M ≥ 1".into())),
        Topology::Expanded => mics,
        _ => 1,
    };
    let mut shape = Shape { c: spec.input_channels, t: frames, f: spec.feature_dim };
    let mut per_layer = Vec::new();
    for layer in spec.layers()? {
        let flops = layer_flops(&layer.kind, shape, streams)?;
        per_layer.push(LayerCost { tag: layer.tag, flops });
        shape = layer_output_shape(&layer.kind, shape)?;
        if matches!(layer.kind, LayerKind::Avg { .. }) {
            streams = 1;
        }
    }
    Ok(CostReport {
        flops_total: per_layer.iter().map(|l| l.flops).sum(),
        per_layer,
        latency: None,
        peak_bytes: None,
        batch_seconds: frames as f64 / 100.0,
        frames,
        streams: match spec.topology {
            Topology::Expanded => mics,
            _ => 1,
        },
        repeats: 0,
        mode: Parallelism::Single,
        status: Status::Ok,
    })
}
