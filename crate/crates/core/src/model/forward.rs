use std::thread;

use super::layers::{self, ConvNextParams, GruParams, Planes, TacParams};
use super::{EmbeddingSpec, Layer, LayerKind, Topology, WeightStore};
use crate::fusion::{FusedInput, Layout};
use crate::tensor::{Axis, FeatureTensor};
use crate::{Error, Result};

/// How per-microphone streams are scheduled inside one forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Parallelism {
    #[default]
    Single,
    /// One scoped thread per stream for stream-local layers.
    Streams,
}

pub fn forward(spec: &EmbeddingSpec, weights: &WeightStore, input: &FusedInput) -> Result<FeatureTensor> {
    forward_with(spec, weights, input, Parallelism::Single)
}

/// Run the embedding stack; output is `[T'', D]`.
pub fn forward_with(
    spec: &EmbeddingSpec,
    weights: &WeightStore,
    input: &FusedInput,
    par: Parallelism,
) -> Result<FeatureTensor> {
    let plan = spec.layers()?;
    if weights.num_layers() != plan.len() {
        return Err(Error::SpecMismatch(format!(
            "weights cover {} layers, spec has {}",
            weights.num_layers(),
            plan.len()
        )));
    }
    let mut streams = split_streams(spec, input)?;
    for (i, layer) in plan.iter().enumerate() {
        let params = weights.layer(i);
        match &layer.kind {
            LayerKind::Tac { .. } => {
                let p = TacParams {
                    a_weight: value(params, 0)?,
                    a_bias: value(params, 1)?,
                    b_weight: value(params, 2)?,
                    b_bias: value(params, 3)?,
                };
                streams = layers::tac(&streams, &p)?;
            }
            LayerKind::Dac { .. } => streams = layers::dac(&streams)?,
            LayerKind::Avg { .. } => streams = vec![layers::average(&streams)?],
            LayerKind::Project { out, .. } => {
                if streams.len() != 1 {
                    return Err(Error::SpecMismatch("streams not collapsed before projection".into()));
                }
                let y = layers::project(&streams[0], value(params, 0)?, value(params, 1)?, *out)?;
                let frames = streams[0].t;
                return FeatureTensor::new(vec![(Axis::Time, frames), (Axis::Bin, *out)], y);
            }
            _ => streams = map_streams(streams, par, |s| apply_local(layer, params, s))?,
        }
    }
    Err(Error::SpecMismatch("layer plan has no projection".into()))
}

fn split_streams(spec: &EmbeddingSpec, input: &FusedInput) -> Result<Vec<Planes>> {
    let t = input.tensor();
    let frames = input.frames();
    let fd = input.feature_dim();
    if fd != spec.feature_dim {
        return Err(Error::SpecMismatch(format!(
            "input feature dim {fd}, spec expects {}",
            spec.feature_dim
        )));
    }
    if frames == 0 {
        return Err(Error::ShapeMismatch("input has no frames".into()));
    }
    match (spec.topology, input.layout()) {
        (Topology::Fixed, Layout::Fixed { mics }) if mics + 1 == spec.input_channels => {
            Ok(vec![Planes::new(mics + 1, frames, fd, t.data().to_vec())?])
        }
        (Topology::Squeezed, Layout::Squeezed | Layout::Fixed { mics: 1 }) => {
            Ok(vec![Planes::new(2, frames, fd, t.data().to_vec())?])
        }
        (Topology::Expanded, Layout::Expanded { mics }) if mics >= 1 => {
            (0..mics).map(|m| Planes::new(2, frames, fd, t.outer(m).to_vec())).collect()
        }
        (topo, layout) => Err(Error::SpecMismatch(format!(
            "{topo} spec with {} input planes cannot take a {layout:?} input",
            spec.input_channels
        ))),
    }
}

fn map_streams<F>(streams: Vec<Planes>, par: Parallelism, f: F) -> Result<Vec<Planes>>
where
    F: Fn(&Planes) -> Result<Planes> + Sync,
{
    if par == Parallelism::Single || streams.len() < 2 {
        return streams.iter().map(&f).collect();
    }
    thread::scope(|scope| {
        let handles: Vec<_> = streams.iter().map(|s| scope.spawn(|| f(s))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("stream worker panicked"))
            .collect()
    })
}

fn value(params: &[super::Param], i: usize) -> Result<&[f32]> {
    params
        .get(i)
        .map(|p| p.values.as_slice())
        .ok_or_else(|| Error::SpecMismatch(format!("missing parameter {i}")))
}

pub(crate) fn apply_local(layer: &Layer, params: &[super::Param], x: &Planes) -> Result<Planes> {
    match layer.kind {
        LayerKind::Conv { cin, cout, kernel, stride, pad } => {
            if x.c != cin {
                return Err(Error::ShapeMismatch(format!("conv expects {cin} channels, got {}", x.c)));
            }
            let mut y = layers::conv2d(x, value(params, 0)?, value(params, 1)?, cout, kernel, stride, pad)?;
            layers::apply_double_swish(&mut y);
            Ok(y)
        }
        LayerKind::ConvNext { .. } => {
            let p = ConvNextParams {
                dw_weight: value(params, 0)?,
                dw_bias: value(params, 1)?,
                norm_weight: value(params, 2)?,
                norm_bias: value(params, 3)?,
                pw1_weight: value(params, 4)?,
                pw1_bias: value(params, 5)?,
                pw2_weight: value(params, 6)?,
                pw2_bias: value(params, 7)?,
            };
            layers::convnext_block(x, &p)
        }
        LayerKind::Linear { cout, .. } => layers::pointwise(x, value(params, 0)?, value(params, 1)?, cout),
        LayerKind::Gru { hidden, .. } => {
            let p = GruParams {
                weight_ih: value(params, 0)?,
                weight_hh: value(params, 1)?,
                bias_ih: value(params, 2)?,
                bias_hh: value(params, 3)?,
            };
            layers::gru_layer(x, &p, hidden)
        }
        _ => unreachable!("cross-stream layers are handled by the caller"),
    }
}
