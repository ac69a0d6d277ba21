//! End-to-end steps shared by the command-line driver and the self-check.

use std::io::Cursor;

use crate::fusion::{expand, fuse_fixed, fuse_squeezed, project_sf, squeeze, FusedInput, Layout};
use crate::model::{forward_with, init_weights, Parallelism, Topology, WeightStore};
use crate::runconfig::{FeatureKind, RunConfig, SoloStart};
use crate::sim::{synthesize, SceneSpec};
use crate::spatial::{all_pairs_sf, extract_kernel, extract_last_kernel, rir_phase};
use crate::stft::{lfb, lps, mel_filterbank, stft, StftConfig, DEFAULT_LOG_FLOOR};
use crate::tensor::FeatureTensor;
use crate::wav::{self, MultiChannelWave, WavEncoding};
use crate::{sef, Error, Result};

/// Spectral and spatial features of `mixture`, fused per the configured topology.
pub fn extract(mixture: &MultiChannelWave, solo: &MultiChannelWave, cfg: &RunConfig) -> Result<FusedInput> {
    if solo.num_channels() != mixture.num_channels() {
        return Err(Error::ShapeMismatch(format!(
            "solo has {} channels, mixture {}",
            solo.num_channels(),
            mixture.num_channels()
        )));
    }
    cfg.embedding_spec(mixture.num_channels())?;
    let stft_cfg = StftConfig::default();
    let y = stft(mixture, &stft_cfg)?;
    let solo_spec = stft(solo, &stft_cfg)?;
    let kernel = match cfg.solo_start {
        SoloStart::Frame(n) => extract_kernel(&solo_spec, n, cfg.kernel_frames)?,
        SoloStart::Last => extract_last_kernel(&solo_spec, cfg.kernel_frames)?,
    };
    let sf = all_pairs_sf(&rir_phase(&y, &kernel)?)?;
    let (spectral, sf) = match cfg.feature {
        FeatureKind::Lps201 => (lps(&y, DEFAULT_LOG_FLOOR), sf),
        kind => {
            let fb = mel_filterbank(y.bins(), kind.dim(), y.sample_rate())?;
            (lfb(&y, &fb, DEFAULT_LOG_FLOOR)?, project_sf(&sf, &fb)?)
        }
    };
    match cfg.topology {
        Topology::Fixed => fuse_fixed(&spectral, &sf),
        Topology::Squeezed => fuse_squeezed(&squeeze(&spectral, cfg.squeeze, cfg.seed)?, &sf),
        Topology::Expanded => expand(&spectral, &sf),
    }
}

/// Microphone count implied by a fused input.
pub fn input_mics(input: &FusedInput) -> usize {
    match input.layout() {
        Layout::Fixed { mics } | Layout::Expanded { mics } => mics,
        Layout::Squeezed => 1,
    }
}

/// Embedding of a fused input with seeded or loaded weights.
pub fn embed(input: &FusedInput, cfg: &RunConfig, par: Parallelism) -> Result<FeatureTensor> {
    let spec = cfg.embedding_spec(input_mics(input))?;
    if input.feature_dim() != spec.feature_dim {
        return Err(Error::SpecMismatch(format!(
            "features have dimension {}, config says {}",
            input.feature_dim(),
            cfg.feature
        )));
    }
    let weights = match &cfg.weights {
        Some(path) => WeightStore::load(path, &spec)?,
        None => init_weights(&spec, cfg.seed)?,
    };
    forward_with(&spec, &weights, input, par)
}

/// Encoded outputs of a scene: mixture WAV, target solo WAV, mask SEF1.
pub struct SimulatedFiles {
    pub mixture_wav: Vec<u8>,
    pub solo_wav: Vec<u8>,
    pub mask_sef: Vec<u8>,
}

pub fn simulate(scene: &SceneSpec) -> Result<SimulatedFiles> {
    let s = synthesize(scene)?;
    let wav_bytes = |w: &MultiChannelWave| -> Result<Vec<u8>> {
        let mut cur = Cursor::new(Vec::new());
        wav::encode(&mut cur, w, WavEncoding::Float32)?;
        Ok(cur.into_inner())
    };
    Ok(SimulatedFiles {
        mixture_wav: wav_bytes(&s.mixture)?,
        solo_wav: wav_bytes(&s.target_solo)?,
        mask_sef: sef::encode(&s.mask.to_tensor())?,
    })
}
