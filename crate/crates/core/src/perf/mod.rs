//! FLOP accounting, allocation tracking and latency measurement.

pub mod alloc;
mod counted;
mod flops;
mod measure;

pub use counted::{counted_forward, CountedRun};
pub(crate) use counted::{naive_local, naive_tac};
pub use flops::{
    conv_flops, count_flops, layer_flops, linear_flops, CostReport, LayerCost, Status, DOUBLE_SWISH, GELU,
    RELU, SIGMOID, TANH,
};
pub use measure::{
    estimate_peak_bytes, measure, paired_latency, percentile, synthetic_input, Latency, MeasureConfig,
    PairedComparison, CSV_COLUMNS, DEFAULT_MEMORY_BUDGET, MIN_REPEATS,
};
