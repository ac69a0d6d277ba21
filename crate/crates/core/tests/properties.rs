//! Property tests for the invariants each module promises.

use std::f64::consts::PI;
use std::io::Cursor;

use num_complex::Complex64;
use proptest::prelude::*;
use spatialemb_core::fusion::{expand, fuse_fixed, squeeze, SqueezeMethod};
use spatialemb_core::model::layers::{dac, Planes};
use spatialemb_core::model::{
    forward, forward_with, init_weights, output_frames, ChannelFusion, Parallelism, Topology, Variant,
};
use spatialemb_core::perf::{count_flops, counted_forward};
use spatialemb_core::rng::SeedStream;
use spatialemb_core::sim::{synthesize, Role, SceneSpec, SignalKind, SourceSpec};
use spatialemb_core::spatial::{all_pairs_sf, PhaseTensor};
use spatialemb_core::stft::{lfb, lps, mel_filterbank, stft, StftConfig, DEFAULT_LOG_FLOOR};
use spatialemb_core::wav::{self, MultiChannelWave, WavEncoding};
use spatialemb_core::{sef, Axis, FeatureTensor, SAMPLE_RATE_HZ};

fn tensor(dims: Vec<(Axis, usize)>, seed: u64, lo: f64, hi: f64) -> FeatureTensor {
    let mut s = SeedStream::new(seed);
    let n = dims.iter().map(|d| d.1).product();
    FeatureTensor::new(dims, (0..n).map(|_| s.uniform(lo, hi) as f32).collect()).unwrap()
}

fn phases(m: usize, t: usize, f: usize, seed: u64) -> PhaseTensor {
    let mut s = SeedStream::new(seed);
    PhaseTensor::from_angles((0..m * t * f).map(|_| s.uniform(-PI, PI)).collect(), m, t, f).unwrap()
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut s = SeedStream::new(seed);
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        p.swap(i, s.below(i + 1));
    }
    p
}

fn noise(m: usize, n: usize, seed: u64) -> MultiChannelWave {
    let mut s = SeedStream::new(seed);
    MultiChannelWave::new(SAMPLE_RATE_HZ, (0..m).map(|_| (0..n).map(|_| s.uniform(-0.5, 0.5)).collect()).collect())
        .unwrap()
}

const AXES: [Axis; 5] = [Axis::Channel, Axis::Time, Axis::Freq, Axis::Bin, Axis::FeatChannel];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn sef_round_trip_is_bit_exact(
        dims in prop::collection::vec((0usize..5, 1usize..32), 1..=4),
        seed in any::<u64>(),
    ) {
        let dims: Vec<(Axis, usize)> = dims.into_iter().map(|(a, n)| (AXES[a], n)).collect();
        let mut s = SeedStream::new(seed);
        let n = dims.iter().map(|d| d.1).product();
        // Raw bit patterns, NaN payloads included.
        let data = (0..n).map(|_| f32::from_bits(s.next_u64() as u32)).collect();
        let t = FeatureTensor::new(dims, data).unwrap();
        let back = sef::decode(&sef::encode(&t).unwrap()).unwrap();
        prop_assert!(back.bit_eq(&t));
    }
}

#[test]
fn sef_round_trip_at_a_million_elements() {
    let t = tensor(vec![(Axis::Channel, 10), (Axis::Time, 1000), (Axis::Freq, 100)], 3, -1.0, 1.0);
    assert!(sef::decode(&sef::encode(&t).unwrap()).unwrap().bit_eq(&t));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn wav_channel_select_matches_full_read(seed in any::<u64>(), n in 1usize..600, float in any::<bool>()) {
        let mut s = SeedStream::new(seed);
        let chans: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..n).map(|_| (s.uniform(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) / 32768.0).collect())
            .collect();
        let w = MultiChannelWave::new(SAMPLE_RATE_HZ, chans).unwrap();
        let enc = if float { WavEncoding::Float32 } else { WavEncoding::Pcm16 };
        let mut cur = Cursor::new(Vec::new());
        wav::encode(&mut cur, &w, enc).unwrap();
        let bytes = cur.into_inner();
        let all = wav::decode(Cursor::new(&bytes), None).unwrap();
        prop_assert_eq!(all.num_channels(), 8);
        for m in 0..8 {
            let one = wav::decode(Cursor::new(&bytes), Some(m)).unwrap();
            prop_assert_eq!(one.channel(0), all.channel(m));
            prop_assert_eq!(all.channel(m), w.channel(m));
        }
    }

    #[test]
    fn lps_shifts_by_twice_log_alpha(seed in any::<u64>(), alpha in 0.01f64..100.0) {
        let w = noise(2, 1200, seed);
        let cfg = StftConfig::default();
        let base = lps(&stft(&w, &cfg).unwrap(), DEFAULT_LOG_FLOOR);
        let scaled = lps(&stft(&w.scaled(alpha), &cfg).unwrap(), DEFAULT_LOG_FLOOR);
        let shift = 2.0 * alpha.ln();
        for (a, b) in scaled.data().iter().zip(base.data()) {
            // Bins at the floor do not shift; noise never gets there.
            prop_assert!((f64::from(*a) - f64::from(*b) - shift).abs() <= 1e-5 * (1.0 + shift.abs()));
        }
    }

    #[test]
    fn sf_is_permutation_and_global_phase_invariant(
        m in 2usize..=8, t in 1usize..=16, f in 1usize..=16, seed in any::<u64>(), offset in -10.0f64..10.0,
    ) {
        let rp = phases(m, t, f, seed);
        let sf = all_pairs_sf(&rp).unwrap();
        let perm = all_pairs_sf(&rp.permute_channels(&shuffled(m, seed ^ 1)).unwrap()).unwrap();
        prop_assert!(sf.max_abs_diff(&perm).unwrap() <= 1e-6);
        let shifted = PhaseTensor::from_angles(rp.values().iter().map(|a| a + offset).collect(), m, t, f).unwrap();
        prop_assert!(sf.max_abs_diff(&all_pairs_sf(&shifted).unwrap()).unwrap() <= 1e-6);
        prop_assert!(sf.data().iter().all(|v| (-1.0 - 1e-6..=1.0 + 1e-6).contains(&f64::from(*v))));
    }

    #[test]
    fn symmetric_squeezes_ignore_channel_order(m in 1usize..=6, t in 1usize..=8, f in 1usize..=12, seed in any::<u64>()) {
        let x = tensor(vec![(Axis::Channel, m), (Axis::Time, t), (Axis::Freq, f)], seed, -5.0, 5.0);
        let order = shuffled(m, seed ^ 7);
        let mut data = Vec::new();
        for &c in &order {
            data.extend_from_slice(x.outer(c));
        }
        let px = FeatureTensor::new(x.dims().to_vec(), data).unwrap();
        for method in [SqueezeMethod::ChannelAverage, SqueezeMethod::CrossChannelAttention] {
            let a = squeeze(&x, method, 0).unwrap();
            let b = squeeze(&px, method, 0).unwrap();
            prop_assert!(a.max_abs_diff(&b).unwrap() <= 1e-6, "{method}");
        }
        // fixed_ch picks whichever channel ends up first.
        let fixed = squeeze(&px, SqueezeMethod::FixedChannel, 0).unwrap();
        prop_assert_eq!(fixed.data(), x.outer(order[0]));
    }

    #[test]
    fn expanded_planes_carry_sf_verbatim(m in 1usize..=6, t in 1usize..=8, f in 1usize..=12, seed in any::<u64>()) {
        let x = tensor(vec![(Axis::Channel, m), (Axis::Time, t), (Axis::Freq, f)], seed, -5.0, 5.0);
        let sf = tensor(vec![(Axis::Time, t), (Axis::Freq, f)], seed ^ 3, -1.0, 1.0);
        let e = expand(&x, &sf).unwrap();
        for mic in 0..m {
            let planes = e.tensor().outer(mic);
            prop_assert_eq!(&planes[..t * f], x.outer(mic));
            prop_assert!(planes[t * f..].iter().zip(sf.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn dac_is_idempotent(m in 1usize..=6, c in 1usize..=4, t in 1usize..=6, f in 1usize..=6, seed in any::<u64>()) {
        let mut s = SeedStream::new(seed);
        let streams: Vec<Planes> = (0..m)
            .map(|_| Planes::new(2 * c, t, f, (0..2 * c * t * f).map(|_| s.uniform(-3.0, 3.0) as f32).collect()).unwrap())
            .collect();
        let once = dac(&streams).unwrap();
        let twice = dac(&once).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!(a.max_abs_diff(b) <= 1e-9);
        }
        if m == 1 {
            prop_assert_eq!(&once[0], &streams[0]);
        }
    }
}

#[test]
fn lfb_is_finite_on_silence() {
    let silent = MultiChannelWave::new(SAMPLE_RATE_HZ, vec![vec![0.0; 4000]; 3]).unwrap();
    let y = stft(&silent, &StftConfig::default()).unwrap();
    for dim in [40, 80] {
        let fb = mel_filterbank(y.bins(), dim, SAMPLE_RATE_HZ).unwrap();
        assert!(lfb(&y, &fb, DEFAULT_LOG_FLOOR).unwrap().is_finite());
    }
    assert!(lps(&y, DEFAULT_LOG_FLOOR).is_finite());
}

#[test]
fn stft_matches_brute_force_dft() {
    let cfg = StftConfig::default();
    for seed in 0..100u64 {
        let w = noise(1, 400 + (seed as usize % 7) * 160, seed);
        let y = stft(&w, &cfg).unwrap();
        let t = y.frames() - 1;
        let seg = &w.channel(0)[t * 160..t * 160 + 400];
        let win: Vec<f64> = (0..400).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / 400.0).cos()).collect();
        for k in (0..201).step_by(if seed % 10 == 0 { 1 } else { 17 }) {
            let z: Complex64 = (0..400)
                .map(|n| Complex64::from_polar(seg[n] * win[n], -2.0 * PI * (k * n) as f64 / 400.0))
                .sum();
            assert!((z - y.at(0, t, k)).norm() <= 1e-4, "seed {seed} bin {k}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forward_is_deterministic_and_shape_correct(
        vi in 0usize..6, m in 1usize..=4, t in 1usize..=20, seed in any::<u64>(), fi in 0usize..5,
    ) {
        let name = ["conv2d-S", "conv2d-Sub", "convnext-S", "convnext-D", "gru-conv2d-S", "gru-conv2d-D"][vi];
        let fusion = [ChannelFusion::Dac, ChannelFusion::Tac, ChannelFusion::EarlyAvg, ChannelFusion::LateAvg, ChannelFusion::Dac][fi];
        let mut spec = Variant::lookup(name).unwrap().spec(12, Topology::Expanded, fusion, m, 8);
        spec.out_channels = [4, 6, 4];
        let w = init_weights(&spec, seed).unwrap();
        let x = tensor(vec![(Axis::Channel, m), (Axis::Time, t), (Axis::Freq, 12)], seed, -3.0, 3.0);
        let sf = tensor(vec![(Axis::Time, t), (Axis::Freq, 12)], seed ^ 5, -1.0, 1.0);
        let input = expand(&x, &sf).unwrap();
        let a = forward(&spec, &w, &input).unwrap();
        let b = forward(&spec, &w, &input).unwrap();
        prop_assert!(a.bit_eq(&b));
        let p = forward_with(&spec, &w, &input, Parallelism::Streams).unwrap();
        prop_assert!(a.max_abs_diff(&p).unwrap() <= 1e-6);
        prop_assert_eq!(a.dims(), &[(Axis::Time, output_frames(t)), (Axis::Bin, 8)][..]);
        let permuted = forward(&spec, &w, &input.permute_mics(&shuffled(m, seed)).unwrap()).unwrap();
        prop_assert!(a.max_abs_diff(&permuted).unwrap() <= 1e-5);
    }

    #[test]
    fn analytic_flops_equal_counted(vi in 0usize..6, m in 1usize..=3, t in 1usize..=6, fi in 0usize..5, fixed in any::<bool>()) {
        let name = ["conv2d-S", "conv2d-Sub", "convnext-S", "convnext-D", "gru-conv2d-S", "gru-conv2d-D"][vi];
        let (topo, fusion) = if fixed {
            (Topology::Fixed, ChannelFusion::None)
        } else {
            (Topology::Expanded, [ChannelFusion::Dac, ChannelFusion::Tac, ChannelFusion::EarlyAvg, ChannelFusion::LateAvg, ChannelFusion::Dac][fi])
        };
        let mut spec = Variant::lookup(name).unwrap().spec(8, topo, fusion, m, 4);
        spec.out_channels = [2, 4, 2];
        let report = count_flops(&spec, t, m).unwrap();
        prop_assume!(report.flops_total <= 100_000);
        let x = tensor(vec![(Axis::Channel, m), (Axis::Time, t), (Axis::Freq, 8)], 1, -1.0, 1.0);
        let sf = tensor(vec![(Axis::Time, t), (Axis::Freq, 8)], 2, -1.0, 1.0);
        let input = if fixed { fuse_fixed(&x, &sf).unwrap() } else { expand(&x, &sf).unwrap() };
        let run = counted_forward(&spec, &init_weights(&spec, 0).unwrap(), &input).unwrap();
        prop_assert_eq!(run.total, report.flops_total);
        prop_assert_eq!(report.per_layer.iter().map(|l| l.flops).sum::<u64>(), report.flops_total);
    }

    #[test]
    fn dac_costs_less_than_tac(m in 1usize..=8, t in 1usize..=400, f in 8usize..=201) {
        let spec = |fu| Variant::lookup("conv2d-S").unwrap().spec(f, Topology::Expanded, fu, m, 16);
        let d = count_flops(&spec(ChannelFusion::Dac), t, m).unwrap().flops_total;
        let tc = count_flops(&spec(ChannelFusion::Tac), t, m).unwrap().flops_total;
        prop_assert!(d < tc);
    }

    #[test]
    fn scenes_are_reproducible_and_additive(seed in any::<u64>(), channels in 1usize..=4, snr in -10.0f64..10.0) {
        let src = |role, snr_db, delays: Vec<f64>| SourceSpec {
            role,
            delays,
            amplitude: 1.0,
            snr_db,
            signal: SignalKind::Noise,
            tones: Vec::new(),
        };
        let scene = SceneSpec {
            channels,
            duration_s: 0.5,
            seed,
            sources: vec![
                src(Role::Target, None, (0..channels).map(|c| c as f64 * 0.7).collect()),
                src(Role::Interferer, Some(snr), (0..channels).map(|c| c as f64 * -1.3).collect()),
            ],
        };
        let a = synthesize(&scene).unwrap();
        let b = synthesize(&scene).unwrap();
        prop_assert_eq!(&a.mixture, &b.mixture);
        for c in 0..channels {
            for (i, &v) in a.mixture.channel(c).iter().enumerate() {
                let sum: f64 = a.images.iter().map(|im| im.channel(c)[i]).sum();
                prop_assert!((v - sum).abs() <= 1e-9);
            }
        }
    }
}
