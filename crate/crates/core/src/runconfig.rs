//! Run configuration: TOML file sections merged under command-line overrides.
//!
//! Precedence is flags, then file, then built-in defaults. Every combination is
//! checked by [`RawConfig::resolve`] before any work starts.
//!
//! ```toml
//! seed = 0
//!
//! [features]
//! kind = "lps201"          # lps201 | lfb80 | lfb40
//! kernel_frames = 10
//! solo_start_frame = "last" # or a frame index
//!
//! [model]
//! variant = "conv2d-S"
//! topology = "fixed"       # fixed | squeezed | expanded
//! fusion = "none"          # none | early_avg | late_avg | tac | dac
//! squeeze = "channel_avg"  # fixed_ch | random_ch | channel_avg | cca
//! final_dim = 256
//! weights = "w.sef"        # optional; seeded init otherwise
//!
//! [bench]
//! batch_seconds = 60
//! repeats = 10
//! mics = 8
//! parallel = false
//! variants = ["conv2d-S"]
//! fusions = ["tac", "dac"]
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::fusion::SqueezeMethod;
use crate::model::{ChannelFusion, EmbeddingSpec, Parallelism, Topology, Variant, DEFAULT_FINAL_DIM};
use crate::perf::{MeasureConfig, DEFAULT_MEMORY_BUDGET};
use crate::spatial::DEFAULT_KERNEL_FRAMES;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    Lps201,
    Lfb80,
    Lfb40,
}

impl FeatureKind {
    pub fn dim(self) -> usize {
        match self {
            FeatureKind::Lps201 => 201,
            FeatureKind::Lfb80 => 80,
            FeatureKind::Lfb40 => 40,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Lps201 => "lps201",
            FeatureKind::Lfb80 => "lfb80",
            FeatureKind::Lfb40 => "lfb40",
        }
    }
}

impl FromStr for FeatureKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "lps201" => FeatureKind::Lps201,
            "lfb80" => FeatureKind::Lfb80,
            "lfb40" => FeatureKind::Lfb40,
            _ => return Err(Error::Config(format!("unknown feature kind {s:?}; expected lps201, lfb80 or lfb40"))),
        })
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SoloStart {
    Frame(usize),
    /// Use the last `K` frames of the solo recording.
    Last,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum RawSoloStart {
    Frame(u64),
    Word(String),
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFeatures {
    pub kind: Option<String>,
    pub kernel_frames: Option<usize>,
    pub solo_start_frame: Option<RawSoloStart>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    pub variant: Option<String>,
    pub topology: Option<String>,
    pub fusion: Option<String>,
    pub squeeze: Option<String>,
    pub final_dim: Option<usize>,
    pub weights: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBench {
    pub batch_seconds: Option<f64>,
    pub repeats: Option<usize>,
    pub warmups: Option<usize>,
    pub mics: Option<usize>,
    pub parallel: Option<bool>,
    pub memory_budget_mb: Option<u64>,
    pub variants: Option<Vec<String>>,
    pub fusions: Option<Vec<String>>,
}

/// Partially specified configuration, as read from a file or from flags.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    #[serde(default)]
    pub features: RawFeatures,
    #[serde(default)]
    pub model: RawModel,
    #[serde(default)]
    pub bench: RawBench,
}

fn pick<T>(over: Option<T>, base: Option<T>) -> Option<T> {
    over.or(base)
}

impl RawConfig {
    pub fn from_toml(text: &str) -> Result<RawConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RawConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Fields set in `over` win.
    pub fn overlay(self, over: RawConfig) -> RawConfig {
        let (b, o) = (self, over);
        RawConfig {
            seed: pick(o.seed, b.seed),
            jobs: pick(o.jobs, b.jobs),
            features: RawFeatures {
                kind: pick(o.features.kind, b.features.kind),
                kernel_frames: pick(o.features.kernel_frames, b.features.kernel_frames),
                solo_start_frame: pick(o.features.solo_start_frame, b.features.solo_start_frame),
            },
            model: RawModel {
                variant: pick(o.model.variant, b.model.variant),
                topology: pick(o.model.topology, b.model.topology),
                fusion: pick(o.model.fusion, b.model.fusion),
                squeeze: pick(o.model.squeeze, b.model.squeeze),
                final_dim: pick(o.model.final_dim, b.model.final_dim),
                weights: pick(o.model.weights, b.model.weights),
            },
            bench: RawBench {
                batch_seconds: pick(o.bench.batch_seconds, b.bench.batch_seconds),
                repeats: pick(o.bench.repeats, b.bench.repeats),
                warmups: pick(o.bench.warmups, b.bench.warmups),
                mics: pick(o.bench.mics, b.bench.mics),
                parallel: pick(o.bench.parallel, b.bench.parallel),
                memory_budget_mb: pick(o.bench.memory_budget_mb, b.bench.memory_budget_mb),
                variants: pick(o.bench.variants, b.bench.variants),
                fusions: pick(o.bench.fusions, b.bench.fusions),
            },
        }
    }

    /// Fill defaults and validate.
    pub fn resolve(self) -> Result<RunConfig> {
        let feature = self.features.kind.as_deref().unwrap_or("lps201").parse()?;
        let kernel_frames = self.features.kernel_frames.unwrap_or(DEFAULT_KERNEL_FRAMES);
        if kernel_frames == 0 {
            return Err(Error::Config("kernel_frames must be at least 1".into()));
        }
        let solo_start = match self.features.solo_start_frame {
            None => SoloStart::Last,
            Some(RawSoloStart::Frame(n)) => SoloStart::Frame(n as usize),
            Some(RawSoloStart::Word(w)) if w == "last" => SoloStart::Last,
            Some(RawSoloStart::Word(w)) => SoloStart::Frame(
                w.parse().map_err(|_| Error::Config(format!("solo_start_frame must be an index or \"last\", got {w:?}")))?,
            ),
        };
        let variant = Variant::lookup(self.model.variant.as_deref().unwrap_or("conv2d-S"))?;
        let topology: Topology = self.model.topology.as_deref().unwrap_or("fixed").parse()?;
        let fusion: ChannelFusion = self.model.fusion.as_deref().unwrap_or(match topology {
            Topology::Expanded => "dac",
            _ => "none",
        }).parse()?;
        let squeeze: SqueezeMethod = self.model.squeeze.as_deref().unwrap_or("channel_avg").parse()?;
        let final_dim = self.model.final_dim.unwrap_or(DEFAULT_FINAL_DIM);

        let defaults = MeasureConfig::default();
        let measure = MeasureConfig {
            batch_seconds: self.bench.batch_seconds.unwrap_or(defaults.batch_seconds),
            repeats: self.bench.repeats.unwrap_or(defaults.repeats),
            warmups: self.bench.warmups.unwrap_or(defaults.warmups),
            mics: self.bench.mics.unwrap_or(defaults.mics),
            seed: self.seed.unwrap_or(0),
            parallelism: if self.bench.parallel.unwrap_or(false) { Parallelism::Streams } else { Parallelism::Single },
            memory_budget: self.bench.memory_budget_mb.map_or(DEFAULT_MEMORY_BUDGET, |mb| mb.saturating_mul(1 << 20)),
        };
        measure.validate()?;
        let bench_variants = match self.bench.variants {
            Some(v) if v.is_empty() => return Err(Error::Config("bench.variants is empty".into())),
            Some(v) => v.iter().map(|n| Variant::lookup(n)).collect::<Result<_>>()?,
            None => vec![variant],
        };
        let bench_fusions = match self.bench.fusions {
            Some(v) if v.is_empty() => return Err(Error::Config("bench.fusions is empty".into())),
            Some(v) => v.iter().map(|n| n.parse()).collect::<Result<_>>()?,
            None => vec![fusion],
        };
        let jobs = self.jobs.unwrap_or(1);
        if jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        let cfg = RunConfig {
            feature,
            kernel_frames,
            solo_start,
            variant,
            topology,
            fusion,
            squeeze,
            final_dim,
            weights: self.model.weights,
            seed: self.seed.unwrap_or(0),
            jobs,
            measure,
            bench_variants,
            bench_fusions,
        };
        cfg.embedding_spec(cfg.measure.mics)?;
        for (v, f) in cfg.bench_matrix() {
            cfg.spec_for(v, f, cfg.measure.mics)?;
        }
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub feature: FeatureKind,
    pub kernel_frames: usize,
    pub solo_start: SoloStart,
    pub variant: Variant,
    pub topology: Topology,
    pub fusion: ChannelFusion,
    pub squeeze: SqueezeMethod,
    pub final_dim: usize,
    pub weights: Option<PathBuf>,
    pub seed: u64,
    pub jobs: usize,
    pub measure: MeasureConfig,
    pub bench_variants: Vec<Variant>,
    pub bench_fusions: Vec<ChannelFusion>,
}

impl RunConfig {
    /// Spec for the configured model and `mics` microphones.
    pub fn embedding_spec(&self, mics: usize) -> Result<EmbeddingSpec> {
        self.spec_for(self.variant, self.fusion, mics)
    }

    fn spec_for(&self, variant: Variant, fusion: ChannelFusion, mics: usize) -> Result<EmbeddingSpec> {
        if mics == 0 {
            return Err(Error::SpecMismatch("need at least one microphone".into()));
        }
        let spec = variant.spec(self.feature.dim(), self.topology, fusion, mics, self.final_dim);
        spec.validate()?;
        Ok(spec)
    }

    /// Rows of a bench run: every variant crossed with every fusion method.
    pub fn bench_matrix(&self) -> Vec<(Variant, ChannelFusion)> {
        self.bench_variants
            .iter()
            .flat_map(|&v| self.bench_fusions.iter().map(move |&f| (v, f)))
            .collect()
    }

    pub fn bench_specs(&self) -> Result<Vec<(String, EmbeddingSpec)>> {
        self.bench_matrix()
            .into_iter()
            .map(|(v, f)| Ok((format!("{}/{}", v.name, f), self.spec_for(v, f, self.measure.mics)?)))
            .collect()
    }
}
