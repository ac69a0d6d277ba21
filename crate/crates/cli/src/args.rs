use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use spatialemb_core::runconfig::{RawBench, RawConfig, RawFeatures, RawModel, RawSoloStart};
use spatialemb_core::Result;

#[derive(Parser, Debug)]
#[command(name = "spatialemb", version, about = "Multi-channel spatial feature extraction and embedding")]
pub struct Cli {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Spectral + spatial features of a mixture, given a solo recording of the target.
    Extract(ExtractArgs),
    /// Embedding of a feature file.
    Embed(EmbedArgs),
    /// Synthesize a delay-model scene: mixture.wav, solo.wav and mask.sef.
    Simulate(SimulateArgs),
    /// FLOPs, latency and peak memory for the configured variant × fusion matrix.
    Bench(BenchArgs),
    /// Run the built-in checks.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long, required_unless_present = "list")]
    pub mixture: Option<PathBuf>,
    #[arg(long, required_unless_present = "list")]
    pub solo: Option<PathBuf>,
    #[arg(long, required_unless_present = "list")]
    pub out: Option<PathBuf>,
    /// Batch file with one `mixture solo out` triple per line.
    #[arg(long, conflicts_with_all = ["mixture", "solo", "out"])]
    pub list: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also embed channel-permuted copies and fail if any output differs by more than 1e-5.
    #[arg(long)]
    pub compare: bool,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Scene description (TOML).
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SelftestArgs {
    /// Run only these checks (comma separated ids).
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<u8>,
    /// Audio length per forward in the latency comparisons.
    #[arg(long, default_value_t = 1.0)]
    pub latency_batch_seconds: f64,
}

/// Overrides for every config key; any flag given wins over the file.
#[derive(Args, Debug, Default)]
#[command(next_help_heading = "Configuration")]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// lps201 | lfb80 | lfb40
    #[arg(long, global = true)]
    pub feature: Option<String>,
    #[arg(long, global = true)]
    pub kernel_frames: Option<usize>,
    /// Frame index of the solo kernel, or "last".
    #[arg(long, global = true)]
    pub solo_start_frame: Option<String>,
    #[arg(long, global = true)]
    pub variant: Option<String>,
    /// fixed | squeezed | expanded
    #[arg(long, global = true)]
    pub topology: Option<String>,
    /// none | early_avg | late_avg | tac | dac
    #[arg(long, global = true)]
    pub fusion: Option<String>,
    /// fixed_ch | random_ch | channel_avg | cca
    #[arg(long, global = true)]
    pub squeeze: Option<String>,
    #[arg(long, global = true)]
    pub final_dim: Option<usize>,
    #[arg(long, global = true)]
    pub weights: Option<PathBuf>,
    #[arg(long, global = true)]
    pub batch_seconds: Option<f64>,
    #[arg(long, global = true)]
    pub repeats: Option<usize>,
    #[arg(long, global = true)]
    pub warmups: Option<usize>,
    #[arg(long, global = true)]
    pub mics: Option<usize>,
    /// Run microphone streams on separate threads.
    #[arg(long, global = true)]
    pub parallel: bool,
    #[arg(long, global = true)]
    pub memory_budget_mb: Option<u64>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub variants: Option<Vec<String>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub fusions: Option<Vec<String>>,
}

impl ConfigArgs {
    fn as_raw(&self) -> RawConfig {
        RawConfig {
            seed: self.seed,
            jobs: self.jobs,
            features: RawFeatures {
                kind: self.feature.clone(),
                kernel_frames: self.kernel_frames,
                solo_start_frame: self.solo_start_frame.clone().map(RawSoloStart::Word),
            },
            model: RawModel {
                variant: self.variant.clone(),
                topology: self.topology.clone(),
                fusion: self.fusion.clone(),
                squeeze: self.squeeze.clone(),
                final_dim: self.final_dim,
                weights: self.weights.clone(),
            },
            bench: RawBench {
                batch_seconds: self.batch_seconds,
                repeats: self.repeats,
                warmups: self.warmups,
                mics: self.mics,
                parallel: self.parallel.then_some(true),
                memory_budget_mb: self.memory_budget_mb,
                variants: self.variants.clone(),
                fusions: self.fusions.clone(),
            },
        }
    }

    /// File settings under flag overrides, not yet resolved.
    pub fn merged(&self) -> Result<RawConfig> {
        let base = match &self.config {
            Some(path) => RawConfig::load(path)?,
            None => RawConfig::default(),
        };
        Ok(base.overlay(self.as_raw()))
    }
}
