//! Multi-channel spectral and spatial feature extraction plus a
//! channel-count-agnostic embedding front-end.
//!
//! The pipeline runs wave → STFT → log power / log filter-bank features,
//! solo-kernel convolved phase → all-pairs spatial feature, fused into one of
//! three input layouts and embedded by a small convolutional / recurrent
//! stack. [`sim`] produces delay-model scenes with known dominance labels and
//! [`perf`] counts FLOPs and measures latency for any embedding layout.

mod error;
pub mod fusion;
pub mod model;
pub mod perf;
pub mod pipeline;
pub mod rng;
pub mod runconfig;
pub mod sef;
pub mod selfcheck;
pub mod sim;
pub mod spatial;
pub mod stft;
pub mod tensor;
pub mod wav;

pub use error::{Error, Result};
pub use fusion::{FusedInput, Layout, SqueezeMethod};
pub use model::{ChannelFusion, EmbeddingSpec, Structure, Topology, WeightStore};
pub use spatial::{PhaseTensor, SoloKernel};
pub use stft::{FilterBank, Spectrogram, StftConfig};
pub use tensor::{Axis, FeatureTensor};
pub use wav::MultiChannelWave;

/// Sample rate every pipeline entry point expects.
pub const SAMPLE_RATE_HZ: u32 = 16_000;
