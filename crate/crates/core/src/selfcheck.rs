//! Built-in end-to-end checks with brute-force oracles, run by `selftest`.
//!
//! Each check owns its tolerance and time budget; a check passes only when its
//! assertions hold and it finishes inside the budget.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use num_complex::Complex64;

use crate::fusion::{expand, fuse_fixed, FusedInput};
use crate::model::layers::{self, Planes, TacParams};
use crate::model::{
    forward, init_weights, layer_output_shape, output_frames, ChannelFusion, EmbeddingSpec, LayerKind, Shape,
    Topology, Variant,
};
use crate::perf::{count_flops, counted_forward, paired_latency, MeasureConfig};
use crate::pipeline;
use crate::rng::SeedStream;
use crate::runconfig::RawConfig;
use crate::sim::{reference_tone_scene, sf_separation, sf_separation_with, synthesize};
use crate::spatial::{all_pairs_sf, rir_phase, wrap_phase, PhaseTensor, SoloKernel};
use crate::stft::{lfb, lps, stft, FilterBank, Spectrogram, StftConfig, DEFAULT_LOG_FLOOR};
use crate::tensor::{Axis, FeatureTensor};
use crate::wav::MultiChannelWave;
use crate::{sef, Result, SAMPLE_RATE_HZ};

pub const SF_TOL: f64 = 1e-6;
pub const PERMUTATION_TOL: f32 = 1e-5;
pub const SEPARATION_MARGIN: f64 = 0.3;
pub const PHASE_TOL: f64 = 1e-9;
pub const KERNEL_TOL: f64 = 1e-4;
pub const LFB_LPS_TOL: f32 = 1e-6;
pub const LPS_SHIFT_TOL: f64 = 1e-5;
pub const DAC_TOL: f32 = 1e-9;
pub const MIN_PAIR_WINS: usize = 8;
pub const LATENCY_PAIRS: usize = 10;
pub const MAX_COUNTED_FLOPS: u64 = 100_000;

/// Fixed-array reference rows: variant name and feature size.
pub const REFERENCE_ROWS: [(&str, usize); 14] = [
    ("conv2d-S", 201),
    ("conv2d-L", 201),
    ("convnext-S", 201),
    ("convnext-L", 201),
    ("gru-conv2d-S", 201),
    ("gru-conv2d-L", 201),
    ("convnext-D", 201),
    ("convnext-LD", 201),
    ("gru-conv2d-D", 201),
    ("gru-conv2d-LD", 201),
    ("conv2d-S", 40),
    ("conv2d-S", 80),
    ("conv2d-Sub", 201),
    ("gru-conv2d-LD", 80),
];

#[derive(Clone, Debug)]
pub struct Options {
    /// Audio length per forward in the latency comparisons.
    pub latency_batch_seconds: f64,
    pub latency_pairs: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options { latency_batch_seconds: 1.0, latency_pairs: LATENCY_PAIRS }
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {} [{}] {}: {} ({:.2}s of {}s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs()
        )
    }
}

type Check = fn(&Options) -> Result<(bool, String)>;

pub const CHECKS: [(u8, &str, u64, Check); 8] = [
    (1, "spatial feature vs brute force", 10, check_sf_brute_force),
    (2, "channel permutation invariance", 60, check_permutation),
    (3, "dominance separation on a synthetic scene", 30, check_separation),
    (4, "kernel equivalences", 60, check_kernels),
    (5, "log spectrum / filter bank consistency", 30, check_lps_lfb),
    (6, "shape contracts of every reference row", 120, check_shapes),
    (7, "efficiency orderings and FLOP counter", 300, check_efficiency),
    (8, "determinism and DAC identities", 60, check_determinism),
];

pub fn run_check(id: u8, opts: &Options) -> Option<Outcome> {
    let &(id, title, budget, check) = CHECKS.iter().find(|c| c.0 == id)?;
    let start = Instant::now();
    let result = check(opts);
    let elapsed = start.elapsed();
    let budget = Duration::from_secs(budget);
    let (passed, mut detail) = match result {
        Ok(r) => r,
        Err(e) => (false, format!("error class={} message={e}", e.class())),
    };
    let in_time = elapsed <= budget;
    if !in_time {
        detail.push_str("; over time budget");
    }
    Some(Outcome { id, title, passed: passed && in_time, detail, elapsed, budget })
}

pub fn run_all(opts: &Options) -> Vec<Outcome> {
    CHECKS.iter().filter_map(|c| run_check(c.0, opts)).collect()
}

fn permutation(n: usize, s: &mut SeedStream) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        p.swap(i, s.below(i + 1));
    }
    p
}

fn random_tensor(dims: Vec<(Axis, usize)>, lo: f64, hi: f64, s: &mut SeedStream) -> FeatureTensor {
    let n = dims.iter().map(|d| d.1).product();
    FeatureTensor::new(dims, (0..n).map(|_| s.uniform(lo, hi) as f32).collect()).expect("non-empty dims")
}

fn random_planes(c: usize, t: usize, f: usize, s: &mut SeedStream) -> Planes {
    Planes::new(c, t, f, (0..c * t * f).map(|_| s.uniform(-1.0, 1.0) as f32).collect()).expect("sized")
}

fn brute_sf(rp: &PhaseTensor, t: usize, f: usize) -> f64 {
    let m = rp.channels();
    let mut acc = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                acc += (rp.at(i, t, f) - rp.at(j, t, f)).cos();
            }
        }
    }
    acc / (m * (m - 1)) as f64
}

fn check_sf_brute_force(_: &Options) -> Result<(bool, String)> {
    let mut s = SeedStream::new(0x5f);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let (m, t, f) = (2 + s.below(7), 1 + s.below(16), 1 + s.below(16));
        let angles = (0..m * t * f).map(|_| s.uniform(-PI, PI)).collect();
        let rp = PhaseTensor::from_angles(angles, m, t, f)?;
        let sf = all_pairs_sf(&rp)?;
        for ti in 0..t {
            for fi in 0..f {
                worst = worst.max((f64::from(sf.data()[ti * f + fi]) - brute_sf(&rp, ti, fi)).abs());
            }
        }
    }
    let triple = PhaseTensor::from_angles(vec![0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0], 3, 1, 1)?;
    let v = f64::from(all_pairs_sf(&triple)?.data()[0]);
    let ok = worst <= SF_TOL && (v + 0.5).abs() <= SF_TOL;
    Ok((ok, format!("500 cases max diff {worst:.2e}; three-phase SF {v:.7}")))
}

fn permutation_forward_diff(fusion: ChannelFusion, case: u64) -> Result<f32> {
    let mut s = SeedStream::new(case);
    let (m, t, f) = (2 + s.below(5), 4 + s.below(13), 8 + s.below(17));
    let spec = Variant::lookup("conv2d-S")?.spec(f, Topology::Expanded, fusion, m, 16);
    let w = init_weights(&spec, case)?;
    let spectral = random_tensor(vec![(Axis::Channel, m), (Axis::Time, t), (Axis::Freq, f)], -4.0, 4.0, &mut s);
    let sf = random_tensor(vec![(Axis::Time, t), (Axis::Freq, f)], -1.0, 1.0, &mut s);
    let input = expand(&spectral, &sf)?;
    let order = permutation(m, &mut s);
    let a = forward(&spec, &w, &input)?;
    let b = forward(&spec, &w, &input.permute_mics(&order)?)?;
    Ok(a.max_abs_diff(&b).unwrap_or(f32::INFINITY))
}

fn check_permutation(_: &Options) -> Result<(bool, String)> {
    let mut s = SeedStream::new(0x9e);
    let mut worst_sf = 0.0f32;
    for _ in 0..100 {
        let (m, t, f) = (2 + s.below(7), 1 + s.below(16), 1 + s.below(16));
        let rp = PhaseTensor::from_angles((0..m * t * f).map(|_| s.uniform(-PI, PI)).collect(), m, t, f)?;
        let order = permutation(m, &mut s);
        let d = all_pairs_sf(&rp)?.max_abs_diff(&all_pairs_sf(&rp.permute_channels(&order)?)?);
        worst_sf = worst_sf.max(d.unwrap_or(f32::INFINITY));
    }
    let mut ok = worst_sf <= PERMUTATION_TOL;
    let mut detail = format!("sf {worst_sf:.1e}");
    for fusion in [ChannelFusion::Dac, ChannelFusion::Tac, ChannelFusion::EarlyAvg, ChannelFusion::LateAvg] {
        let mut worst = 0.0f32;
        for case in 0..100 {
            worst = worst.max(permutation_forward_diff(fusion, 1000 * fusion as u64 + case)?);
        }
        ok &= worst <= PERMUTATION_TOL;
        let _ = write!(detail, ", {fusion} {worst:.1e}");
    }
    Ok((ok, format!("max diff over 100 cases each: {detail}")))
}

fn check_separation(_: &Options) -> Result<(bool, String)> {
    let scene = synthesize(&reference_tone_scene(7))?;
    let k = crate::spatial::DEFAULT_KERNEL_FRAMES;
    let own = sf_separation(&scene, 0, k)?;
    let swapped = sf_separation_with(&scene, &scene.images[1], 0, k)?;
    let ok = own.margin() >= SEPARATION_MARGIN && swapped.mean_sf_interferer > swapped.mean_sf_target;
    Ok((
        ok,
        format!(
            "target kernel: target {:.3} vs interferer {:.3} (margin {:.3}); interferer kernel: target {:.3} vs interferer {:.3}",
            own.mean_sf_target, own.mean_sf_interferer, own.margin(), swapped.mean_sf_target, swapped.mean_sf_interferer
        ),
    ))
}

fn random_spectrogram(m: usize, t: usize, win: usize, s: &mut SeedStream) -> Result<Spectrogram> {
    let bins = win / 2 + 1;
    let coeffs = (0..m * t * bins).map(|_| Complex64::new(s.uniform(-1.0, 1.0), s.uniform(-1.0, 1.0))).collect();
    Spectrogram::from_coeffs(coeffs, m, t, win, win / 2, SAMPLE_RATE_HZ)
}

fn phase_diff(a: &PhaseTensor, b: &PhaseTensor) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| wrap_phase(x - y).abs()).fold(0.0, f64::max)
}

fn max_diff(fast: &[f32], naive: &[f64]) -> f64 {
    fast.iter().zip(naive).map(|(a, b)| (f64::from(*a) - b).abs()).fold(0.0, f64::max)
}

fn check_kernels(_: &Options) -> Result<(bool, String)> {
    let mut s = SeedStream::new(0x4b);
    let mut unit_worst = 0.0f64;
    let mut scale_worst = 0.0f64;
    for _ in 0..20 {
        let (m, t, win) = (1 + s.below(6), 1 + s.below(20), 2 * (1 + s.below(16)));
        let y = random_spectrogram(m, t, win, &mut s)?;
        let bins = y.bins();
        let unit = SoloKernel::from_frames(vec![Complex64::new(1.0, 0.0); m * bins], m, 1, bins)?;
        unit_worst = unit_worst.max(phase_diff(&rir_phase(&y, &unit)?, &PhaseTensor::of_spectrogram(&y)));
        let k = 1 + s.below(10);
        let r = SoloKernel::from_frames(
            (0..m * k * bins).map(|_| Complex64::new(s.uniform(-1.0, 1.0), s.uniform(-1.0, 1.0))).collect(),
            m,
            k,
            bins,
        )?;
        let base = rir_phase(&y, &r)?;
        for alpha in [1e-3, 0.5, 3.0, 1e4] {
            scale_worst = scale_worst.max(phase_diff(&rir_phase(&y, &r.scaled(alpha))?, &base));
        }
    }

    // Fast layers against the naive loops, on fresh random inputs per layer.
    let mut layer_worst = 0.0f64;
    let mut covered = Vec::new();
    let small = |name: &str, f: usize, topo, fusion, ch: [usize; 3]| -> Result<EmbeddingSpec> {
        let mut spec = Variant::lookup(name)?.spec(f, topo, fusion, 3, 8);
        spec.out_channels = ch;
        Ok(spec)
    };
    let specs = [
        small("conv2d-S", 11, Topology::Fixed, ChannelFusion::None, [3, 5, 4])?,
        small("conv2d-Sub", 12, Topology::Fixed, ChannelFusion::None, [3, 5, 4])?,
        small("convnext-D", 9, Topology::Fixed, ChannelFusion::None, [4, 6, 3])?,
        small("gru-conv2d-S", 7, Topology::Fixed, ChannelFusion::None, [5, 4, 3])?,
        small("gru-conv2d-D", 7, Topology::Fixed, ChannelFusion::None, [6, 4, 3])?,
        small("conv2d-S", 10, Topology::Expanded, ChannelFusion::Tac, [4, 6, 3])?,
    ];
    for (i, spec) in specs.iter().enumerate() {
        let w = init_weights(spec, 40 + i as u64)?;
        let mut shape = Shape { c: spec.input_channels, t: 9, f: spec.feature_dim };
        for (li, layer) in spec.layers()?.iter().enumerate() {
            let params = w.layer(li);
            match &layer.kind {
                LayerKind::Tac { channels } => {
                    let streams: Vec<Planes> = (0..3).map(|_| random_planes(shape.c, shape.t, shape.f, &mut s)).collect();
                    let p = TacParams {
                        a_weight: &params[0].values,
                        a_bias: &params[1].values,
                        b_weight: &params[2].values,
                        b_bias: &params[3].values,
                    };
                    let fast: Vec<f32> = layers::tac(&streams, &p)?.into_iter().flat_map(|p| p.data).collect();
                    layer_worst = layer_worst.max(max_diff(&fast, &crate::perf::naive_tac(&streams, params, *channels)));
                    covered.push("tac");
                }
                LayerKind::Conv { .. } | LayerKind::ConvNext { .. } | LayerKind::Gru { .. } | LayerKind::Linear { .. } => {
                    let x = random_planes(shape.c, shape.t, shape.f, &mut s);
                    let fast = crate::model::apply_local(layer, params, &x)?;
                    let (naive, _) = crate::perf::naive_local(&layer.kind, params, &x);
                    layer_worst = layer_worst.max(max_diff(&fast.data, &naive));
                    covered.push(layer.tag);
                }
                _ => {}
            }
            shape = layer_output_shape(&layer.kind, shape)?;
        }
    }
    covered.sort_unstable();
    covered.dedup();
    let ok = unit_worst <= PHASE_TOL && scale_worst <= PHASE_TOL && layer_worst <= KERNEL_TOL;
    Ok((
        ok,
        format!(
            "unit kernel {unit_worst:.1e}, kernel scaling {scale_worst:.1e}, layers [{}] vs naive {layer_worst:.1e}",
            covered.join(", ")
        ),
    ))
}

fn noise_wave(m: usize, n: usize, s: &mut SeedStream) -> Result<MultiChannelWave> {
    MultiChannelWave::new(SAMPLE_RATE_HZ, (0..m).map(|_| (0..n).map(|_| s.uniform(-0.5, 0.5)).collect()).collect())
}

fn check_lps_lfb(_: &Options) -> Result<(bool, String)> {
    let mut s = SeedStream::new(0x1f);
    let cfg = StftConfig::default();
    let mut id_worst = 0.0f32;
    let mut shift_worst = 0.0f64;
    for _ in 0..5 {
        let wave = noise_wave(1 + s.below(4), 1600 + s.below(4000), &mut s)?;
        let y = stft(&wave, &cfg)?;
        let a = lps(&y, DEFAULT_LOG_FLOOR);
        let b = lfb(&y, &FilterBank::identity(y.bins()), DEFAULT_LOG_FLOOR)?;
        id_worst = id_worst.max(a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max));
        for alpha in [0.25, 3.0] {
            let scaled = lps(&stft(&wave.scaled(alpha), &cfg)?, DEFAULT_LOG_FLOOR);
            let want = 2.0 * alpha.ln();
            for (x, y) in scaled.data().iter().zip(a.data()) {
                shift_worst = shift_worst.max((f64::from(*x) - f64::from(*y) - want).abs());
            }
        }
    }
    let ok = id_worst <= LFB_LPS_TOL && shift_worst <= LPS_SHIFT_TOL;
    Ok((ok, format!("identity filter bank {id_worst:.1e}, scaling shift error {shift_worst:.1e}")))
}

fn check_shapes(_: &Options) -> Result<(bool, String)> {
    let mut s = SeedStream::new(0x66);
    let mut failures = Vec::new();
    for (name, fd) in REFERENCE_ROWS {
        let variant = Variant::lookup(name)?;
        let spec = variant.spec(fd, Topology::Fixed, ChannelFusion::None, 8, crate::model::DEFAULT_FINAL_DIM);
        let w = init_weights(&spec, 1)?;
        // Channel extents through the plan, consecutive repeats collapsed.
        let mut shape = Shape { c: 9, t: 16, f: fd };
        let mut chans = Vec::new();
        for layer in spec.layers()? {
            if matches!(layer.kind, LayerKind::Project { .. }) {
                break;
            }
            shape = layer_output_shape(&layer.kind, shape)?;
            if chans.last() != Some(&shape.c) {
                chans.push(shape.c);
            }
        }
        if chans != variant.out_channels {
            failures.push(format!("{name}/{fd}: channels {chans:?}"));
        }
        for t in [1, 2, 5, 37] {
            let spectral = random_tensor(vec![(Axis::Channel, 8), (Axis::Time, t), (Axis::Freq, fd)], -5.0, 5.0, &mut s);
            let sf = random_tensor(vec![(Axis::Time, t), (Axis::Freq, fd)], -1.0, 1.0, &mut s);
            let input: FusedInput = fuse_fixed(&spectral, &sf)?;
            let y = forward(&spec, &w, &input)?;
            let want = ((t - 1) / 2 + 1 - 1) / 2 + 1;
            if y.dims() != [(Axis::Time, want), (Axis::Bin, spec.final_dim)] || want != output_frames(t) || !y.is_finite() {
                failures.push(format!("{name}/{fd} T={t}: {}", crate::tensor::fmt_dims(y.dims())));
            }
        }
    }
    Ok((
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} rows map [9, T, F] to [T'', 256] with the listed channel triples", REFERENCE_ROWS.len())
        } else {
            failures.join("; ")
        },
    ))
}

fn check_efficiency(opts: &Options) -> Result<(bool, String)> {
    let expanded = |f| Variant::lookup("conv2d-S").map(|v| v.spec(201, Topology::Expanded, f, 8, 256));
    let (dac, tac) = (expanded(ChannelFusion::Dac)?, expanded(ChannelFusion::Tac)?);
    let fd = count_flops(&dac, 6000, 8)?.flops_total;
    let ft = count_flops(&tac, 6000, 8)?.flops_total;
    let mut ok = fd < ft;
    let mut detail = format!("60 s FLOPs dac {:.1} G < tac {:.1} G", fd as f64 / 1e9, ft as f64 / 1e9);

    let cfg = MeasureConfig { batch_seconds: opts.latency_batch_seconds, repeats: 3, mics: 8, ..Default::default() };
    let d = paired_latency(&dac, &tac, &cfg, opts.latency_pairs)?;
    ok &= d.a_wins(MIN_PAIR_WINS);
    let _ = write!(
        detail,
        "; dac {:.1} ms vs tac {:.1} ms, faster in {}/{}",
        d.median_a_ms, d.median_b_ms, d.a_faster, d.pairs
    );
    let fixed = |name| Variant::lookup(name).map(|v| v.spec(201, Topology::Fixed, ChannelFusion::None, 8, 256));
    let c = paired_latency(&fixed("conv2d-S")?, &fixed("convnext-L")?, &cfg, opts.latency_pairs)?;
    ok &= c.a_wins(MIN_PAIR_WINS);
    let _ = write!(
        detail,
        "; conv2d-S {:.1} ms vs convnext-L {:.1} ms, faster in {}/{}",
        c.median_a_ms, c.median_b_ms, c.a_faster, c.pairs
    );

    let mut matched = 0;
    let mut s = SeedStream::new(0x77);
    for (name, topo, fusion) in [
        ("conv2d-S", Topology::Fixed, ChannelFusion::None),
        ("conv2d-Sub", Topology::Fixed, ChannelFusion::None),
        ("convnext-S", Topology::Fixed, ChannelFusion::None),
        ("gru-conv2d-D", Topology::Fixed, ChannelFusion::None),
        ("conv2d-S", Topology::Expanded, ChannelFusion::Tac),
        ("conv2d-S", Topology::Expanded, ChannelFusion::Dac),
        ("conv2d-S", Topology::Expanded, ChannelFusion::EarlyAvg),
        ("gru-conv2d-S", Topology::Expanded, ChannelFusion::LateAvg),
    ] {
        let mut spec = Variant::lookup(name)?.spec(8, topo, fusion, 2, 4);
        spec.out_channels = [2, 4, 2];
        let report = count_flops(&spec, 6, 2)?;
        if report.flops_total > MAX_COUNTED_FLOPS {
            continue;
        }
        let w = init_weights(&spec, 2)?;
        let spectral = random_tensor(vec![(Axis::Channel, 2), (Axis::Time, 6), (Axis::Freq, 8)], -1.0, 1.0, &mut s);
        let sf = random_tensor(vec![(Axis::Time, 6), (Axis::Freq, 8)], -1.0, 1.0, &mut s);
        let input = if topo == Topology::Expanded { expand(&spectral, &sf)? } else { fuse_fixed(&spectral, &sf)? };
        let run = counted_forward(&spec, &w, &input)?;
        let analytic: Vec<u64> = report.per_layer.iter().map(|l| l.flops).collect();
        if run.per_layer == analytic {
            matched += 1;
        } else {
            ok = false;
            let _ = write!(detail, "; {name}/{fusion} counted {:?} vs analytic {analytic:?}", run.per_layer);
        }
    }
    ok &= matched == 8;
    let _ = write!(detail, "; analytic count exact on {matched}/8 small configs");
    Ok((ok, detail))
}

fn check_determinism(_: &Options) -> Result<(bool, String)> {
    let scene = reference_tone_scene(11);
    let a = pipeline::simulate(&scene)?;
    let b = pipeline::simulate(&scene)?;
    let sim_same = a.mixture_wav == b.mixture_wav && a.solo_wav == b.solo_wav && a.mask_sef == b.mask_sef;

    let synth = synthesize(&scene)?;
    let mut pipe_same = true;
    for text in ["", "[model]\ntopology = \"expanded\"\nfusion = \"dac\"\n[features]\nkind = \"lfb80\"\n"] {
        let cfg = RawConfig::from_toml(text)?.resolve()?;
        let run = || -> Result<(Vec<u8>, Vec<u8>)> {
            let fused = pipeline::extract(&synth.mixture, &synth.target_solo, &cfg)?;
            let emb = pipeline::embed(&fused, &cfg, crate::model::Parallelism::Single)?;
            Ok((sef::encode(fused.tensor())?, sef::encode(&emb)?))
        };
        pipe_same &= run()? == run()?;
    }

    let mut s = SeedStream::new(0xdac);
    let mut idem = 0.0f32;
    let mut identity = true;
    for _ in 0..20 {
        let (m, c, t, f) = (1 + s.below(6), 2 * (1 + s.below(4)), 1 + s.below(6), 1 + s.below(6));
        let streams: Vec<Planes> = (0..m).map(|_| random_planes(c, t, f, &mut s)).collect();
        let once = layers::dac(&streams)?;
        let twice = layers::dac(&once)?;
        for (x, y) in once.iter().zip(&twice) {
            idem = idem.max(x.max_abs_diff(y));
        }
        let single = layers::dac(&streams[..1])?;
        identity &= single[0].data.iter().zip(&streams[0].data).all(|(a, b)| a.to_bits() == b.to_bits());
    }
    let ok = sim_same && pipe_same && idem <= DAC_TOL && identity;
    Ok((
        ok,
        format!(
            "simulate reruns identical: {sim_same}; extract+embed reruns identical: {pipe_same}; dac idempotence {idem:.1e}; dac at M=1 exact: {identity}"
        ),
    ))
}
