//! Embedding stacks over fused multi-channel inputs.
//!
//! Every [`EmbeddingSpec`] lowers to a flat list of [`Layer`]s. The same list
//! drives weight initialisation, the forward pass and FLOP accounting, so the
//! three can never disagree about structure.

use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

mod forward;
pub mod layers;
mod weights;

pub use forward::{forward, forward_with, Parallelism};
pub(crate) use forward::apply_local;
pub use weights::{init_weights, manifest_path, parse_manifest, ManifestEntries, Param, WeightStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Structure {
    Conv2d,
    ConvNext,
    GruConv2d,
}

impl Structure {
    pub fn name(self) -> &'static str {
        match self {
            Structure::Conv2d => "conv2d",
            Structure::ConvNext => "convnext",
            Structure::GruConv2d => "gru_conv2d",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Topology {
    Fixed,
    Squeezed,
    Expanded,
}

impl Topology {
    pub fn name(self) -> &'static str {
        match self {
            Topology::Fixed => "fixed",
            Topology::Squeezed => "squeezed",
            Topology::Expanded => "expanded",
        }
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "fixed" => Topology::Fixed,
            "squeezed" => Topology::Squeezed,
            "expanded" => Topology::Expanded,
            _ => return Err(Error::Config(format!("unknown topology {s:?}"))),
        })
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ChannelFusion {
    None,
    /// Average over microphones right after the first block.
    EarlyAvg,
    /// Average right before the final projection.
    LateAvg,
    Tac,
    Dac,
}

impl ChannelFusion {
    pub fn name(self) -> &'static str {
        match self {
            ChannelFusion::None => "none",
            ChannelFusion::EarlyAvg => "early_avg",
            ChannelFusion::LateAvg => "late_avg",
            ChannelFusion::Tac => "tac",
            ChannelFusion::Dac => "dac",
        }
    }
}

impl FromStr for ChannelFusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => ChannelFusion::None,
            "early_avg" => ChannelFusion::EarlyAvg,
            "late_avg" => ChannelFusion::LateAvg,
            "tac" => ChannelFusion::Tac,
            "dac" => ChannelFusion::Dac,
            _ => return Err(Error::Config(format!("unknown channel fusion {s:?}"))),
        })
    }
}

impl fmt::Display for ChannelFusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const DEFAULT_FINAL_DIM: usize = 256;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EmbeddingSpec {
    pub structure: Structure,
    /// Output channels of the three stages.
    pub out_channels: [usize; 3],
    /// ConvNext blocks in stages two and three, or stacked GRU layers.
    pub n_blocks: usize,
    pub feature_dim: usize,
    /// Planes per stream entering the first layer: `M+1` fixed, 2 otherwise.
    pub input_channels: usize,
    pub topology: Topology,
    pub channel_fusion: ChannelFusion,
    pub final_dim: usize,
    /// Replace the first 3×1 conv with a 3×3 conv striding only along frequency.
    pub freq_subsample: bool,
}

/// Activation shape of one stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub c: usize,
    pub t: usize,
    pub f: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayerKind {
    /// Convolution followed by DoubleSwish.
    Conv {
        cin: usize,
        cout: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        pad: (usize, usize),
    },
    ConvNext { channels: usize },
    /// Per-position channel mixing, no activation.
    Linear { cin: usize, cout: usize },
    Gru { input: usize, hidden: usize },
    Tac { channels: usize },
    Dac { channels: usize },
    /// Mean over microphone streams.
    Avg { channels: usize },
    /// Flatten channel × frequency per frame and map to the final dimension.
    Project { channels: usize, freq: usize, out: usize },
}

impl LayerKind {
    /// Whether the layer mixes microphone streams.
    pub fn is_cross_stream(&self) -> bool {
        matches!(self, LayerKind::Tac { .. } | LayerKind::Dac { .. } | LayerKind::Avg { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layer {
    /// Short tag as used in structure strings (`conv`, `sub`, `next`, ...).
    pub tag: &'static str,
    pub kind: LayerKind,
}

pub const SUBSAMPLE_KERNEL: (usize, usize) = (3, 3);
pub const SUBSAMPLE_STRIDE: (usize, usize) = (2, 2);
pub const SUBSAMPLE_PAD: (usize, usize) = (1, 1);
pub const CONVNEXT_KERNEL: usize = 7;
pub const CONVNEXT_EXPANSION: usize = 4;

/// Output length of a strided window: `floor((n + 2p − k)/s) + 1`.
pub fn conv_out_len(n: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = n + 2 * pad;
    if padded < kernel || stride == 0 {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Frame count after the two stride-2 subsamplings.
pub fn output_frames(t: usize) -> usize {
    let once = |n: usize| (n.max(1) - 1) / 2 + 1;
    once(once(t))
}

impl EmbeddingSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::SpecMismatch(msg));
        if self.out_channels.contains(&0) {
            return bad(format!("output channels {:?} must be positive", self.out_channels));
        }
        if self.feature_dim == 0 || self.final_dim == 0 {
            return bad("feature and final dimensions must be positive".into());
        }
        if matches!(self.structure, Structure::ConvNext | Structure::GruConv2d) && self.n_blocks == 0 {
            return bad(format!("{} needs at least one block", self.structure.name()));
        }
        if self.freq_subsample && self.structure != Structure::Conv2d {
            return bad("frequency subsampling variant exists only for conv2d".into());
        }
        match self.topology {
            Topology::Fixed if self.input_channels < 2 => {
                return bad("fixed topology needs M+1 ≥ 2 input planes".into())
            }
            Topology::Squeezed | Topology::Expanded if self.input_channels != 2 => {
                return bad(format!(
                    "{} topology takes 2 input planes per stream, spec says {}",
                    self.topology, self.input_channels
                ))
            }
            _ => {}
        }
        match (self.topology, self.channel_fusion) {
            (Topology::Expanded, ChannelFusion::None) => {
                return bad("expanded topology needs a channel fusion method".into())
            }
            (Topology::Fixed | Topology::Squeezed, f) if f != ChannelFusion::None => {
                return bad(format!("channel fusion {f} requires the expanded topology"))
            }
            _ => {}
        }
        if matches!(self.channel_fusion, ChannelFusion::Tac | ChannelFusion::Dac) {
            for c in [self.out_channels[0], self.out_channels[1]] {
                if c % 2 != 0 {
                    return Err(Error::OddChannels(c));
                }
            }
        }
        Ok(())
    }

    fn stages(&self) -> [Vec<Layer>; 3] {
        let [c1, c2, c3] = self.out_channels;
        let cin = self.input_channels;
        let sub = |cin, cout| Layer {
            tag: "sub",
            kind: LayerKind::Conv {
                cin,
                cout,
                kernel: SUBSAMPLE_KERNEL,
                stride: SUBSAMPLE_STRIDE,
                pad: SUBSAMPLE_PAD,
            },
        };
        let next = |channels, n: usize| {
            (0..n).map(move |_| Layer { tag: "next", kind: LayerKind::ConvNext { channels } })
        };
        let first = if self.freq_subsample {
            Layer {
                tag: "sub",
                kind: LayerKind::Conv {
                    cin,
                    cout: c1,
                    kernel: (3, 3),
                    stride: (1, 2),
                    pad: (1, 1),
                },
            }
        } else {
            Layer {
                tag: "conv",
                kind: LayerKind::Conv { cin, cout: c1, kernel: (3, 1), stride: (1, 1), pad: (1, 0) },
            }
        };
        match self.structure {
            Structure::Conv2d => [vec![first], vec![sub(c1, c2)], vec![sub(c2, c3)]],
            Structure::ConvNext => [
                std::iter::once(first).chain(next(c1, 1)).collect(),
                std::iter::once(sub(c1, c2)).chain(next(c2, self.n_blocks)).collect(),
                std::iter::once(sub(c2, c3)).chain(next(c3, self.n_blocks)).collect(),
            ],
            // A single GRU reads the input planes directly; deeper stacks
            // project to the hidden size first.
            Structure::GruConv2d if self.n_blocks == 1 => [
                vec![Layer { tag: "gru", kind: LayerKind::Gru { input: cin, hidden: c1 } }],
                vec![sub(c1, c2)],
                vec![sub(c2, c3)],
            ],
            Structure::GruConv2d => [
                std::iter::once(Layer { tag: "linear", kind: LayerKind::Linear { cin, cout: c1 } })
                    .chain((0..self.n_blocks).map(|_| Layer {
                        tag: "gru",
                        kind: LayerKind::Gru { input: c1, hidden: c1 },
                    }))
                    .collect(),
                vec![sub(c1, c2)],
                vec![sub(c2, c3)],
            ],
        }
    }

    /// Lower the spec into its layer sequence, final projection included.
    pub fn layers(&self) -> Result<Vec<Layer>> {
        self.validate()?;
        let [c1, c2, c3] = self.out_channels;
        let [s1, s2, s3] = self.stages();
        let avg = |channels| Layer { tag: "avg", kind: LayerKind::Avg { channels } };
        let mut out = s1;
        match self.channel_fusion {
            ChannelFusion::None => {
                out.extend(s2);
                out.extend(s3);
            }
            ChannelFusion::EarlyAvg => {
                out.push(avg(c1));
                out.extend(s2);
                out.extend(s3);
            }
            ChannelFusion::LateAvg => {
                out.extend(s2);
                out.extend(s3);
                out.push(avg(c3));
            }
            ChannelFusion::Tac | ChannelFusion::Dac => {
                let mix = |channels| match self.channel_fusion {
                    ChannelFusion::Tac => Layer { tag: "tac", kind: LayerKind::Tac { channels } },
                    _ => Layer { tag: "dac", kind: LayerKind::Dac { channels } },
                };
                out.push(mix(c1));
                out.extend(s2);
                out.push(mix(c2));
                out.extend(s3);
                out.push(avg(c3));
            }
        }
        let freq = self.output_freq()?;
        out.push(Layer { tag: "proj", kind: LayerKind::Project { channels: c3, freq, out: self.final_dim } });
        Ok(out)
    }

    /// Frequency extent reaching the final projection.
    pub fn output_freq(&self) -> Result<usize> {
        let mut f = self.feature_dim;
        if self.freq_subsample {
            f = conv_out_len(f, 3, 2, 1).ok_or_else(|| Error::SpecMismatch("feature dim too small".into()))?;
        }
        for _ in 0..2 {
            f = conv_out_len(f, 3, 2, 1).ok_or_else(|| Error::SpecMismatch("feature dim too small".into()))?;
        }
        Ok(f)
    }

    /// Layer tags joined by commas, e.g. `conv, sub, sub`.
    pub fn structure_string(&self) -> Result<String> {
        let tags: Vec<&str> = self.layers()?.iter().filter(|l| l.tag != "proj").map(|l| l.tag).collect();
        Ok(tags.join(", "))
    }

    /// Channel extents after each of the three stages.
    pub fn stage_channels(&self) -> [usize; 3] {
        self.out_channels
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self.layers()?.iter().map(|l| weights::param_shapes(&l.kind).iter().map(|(_, d)| d.iter().product::<usize>()).sum::<usize>()).sum())
    }
}

/// Shape after applying `kind` to one stream.
pub fn layer_output_shape(kind: &LayerKind, s: Shape) -> Result<Shape> {
    let mismatch = |what: &str, want: usize| {
        Err(Error::ShapeMismatch(format!("{what}: layer expects {want} channels, input has {}", s.c)))
    };
    match *kind {
        LayerKind::Conv { cin, cout, kernel, stride, pad } => {
            if s.c != cin {
                return mismatch("conv", cin);
            }
            let t = conv_out_len(s.t, kernel.0, stride.0, pad.0);
            let f = conv_out_len(s.f, kernel.1, stride.1, pad.1);
            match (t, f) {
                (Some(t), Some(f)) => Ok(Shape { c: cout, t, f }),
                _ => Err(Error::ShapeMismatch(format!("input {}×{} smaller than kernel", s.t, s.f))),
            }
        }
        LayerKind::ConvNext { channels } | LayerKind::Tac { channels } | LayerKind::Dac { channels } | LayerKind::Avg { channels } => {
            if s.c != channels {
                return mismatch("channel op", channels);
            }
            Ok(s)
        }
        LayerKind::Linear { cin, cout } => {
            if s.c != cin {
                return mismatch("linear", cin);
            }
            Ok(Shape { c: cout, ..s })
        }
        LayerKind::Gru { input, hidden } => {
            if s.c != input {
                return mismatch("gru", input);
            }
            Ok(Shape { c: hidden, ..s })
        }
        LayerKind::Project { channels, freq, out } => {
            if s.c != channels || s.f != freq {
                return Err(Error::ShapeMismatch(format!(
                    "projection expects [{channels}, _, {freq}], got [{}, _, {}]",
                    s.c, s.f
                )));
            }
            Ok(Shape { c: out, t: s.t, f: 1 })
        }
    }
}

/// A named structure row: structure, stage channels, block count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Variant {
    pub name: &'static str,
    pub structure: Structure,
    pub out_channels: [usize; 3],
    pub n_blocks: usize,
    pub freq_subsample: bool,
}

const fn variant(name: &'static str, structure: Structure, out_channels: [usize; 3], n_blocks: usize) -> Variant {
    Variant { name, structure, out_channels, n_blocks, freq_subsample: false }
}

pub const SMALL: [usize; 3] = [16, 32, 128];
pub const LARGE: [usize; 3] = [64, 128, 184];

pub const VARIANTS: &[Variant] = &[
    variant("conv2d-S", Structure::Conv2d, SMALL, 1),
    variant("conv2d-L", Structure::Conv2d, LARGE, 1),
    Variant { name: "conv2d-Sub", structure: Structure::Conv2d, out_channels: SMALL, n_blocks: 1, freq_subsample: true },
    variant("convnext-S", Structure::ConvNext, SMALL, 1),
    variant("convnext-L", Structure::ConvNext, LARGE, 1),
    variant("convnext-D", Structure::ConvNext, SMALL, 3),
    variant("convnext-LD", Structure::ConvNext, LARGE, 3),
    variant("gru-conv2d-S", Structure::GruConv2d, SMALL, 1),
    variant("gru-conv2d-L", Structure::GruConv2d, LARGE, 1),
    variant("gru-conv2d-D", Structure::GruConv2d, [16, 64, 128], 2),
    variant("gru-conv2d-LD", Structure::GruConv2d, LARGE, 2),
    variant("gru-conv2d-L'D", Structure::GruConv2d, [32, 128, 184], 2),
];

impl Variant {
    pub fn lookup(name: &str) -> Result<Variant> {
        VARIANTS
            .iter()
            .find(|v| v.name.eq_ignore_ascii_case(name))
            .copied()
            .ok_or_else(|| {
                let known: Vec<&str> = VARIANTS.iter().map(|v| v.name).collect();
                Error::Config(format!("unknown variant {name:?}; known: {}", known.join(", ")))
            })
    }

    pub fn spec(
        &self,
        feature_dim: usize,
        topology: Topology,
        channel_fusion: ChannelFusion,
        mics: usize,
        final_dim: usize,
    ) -> EmbeddingSpec {
        EmbeddingSpec {
            structure: self.structure,
            out_channels: self.out_channels,
            n_blocks: self.n_blocks,
            feature_dim,
            input_channels: match topology {
                Topology::Fixed => mics + 1,
                _ => 2,
            },
            topology,
            channel_fusion,
            final_dim,
            freq_subsample: self.freq_subsample,
        }
    }
}
