//! Combining spectral and spatial planes into embedding inputs.

use std::fmt;
use std::str::FromStr;

use crate::rng::SeedStream;
use crate::stft::FilterBank;
use crate::tensor::{Axis, FeatureTensor};
use crate::{Error, Result};

/// Input layout consumed by the embedding stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// `[M+1, T, F]`: every spectral channel plus the spatial plane.
    Fixed { mics: usize },
    /// `[2, T, F]`: one squeezed spectral plane plus the spatial plane.
    Squeezed,
    /// `[M, 2, T, F]`: each spectral channel paired with a copy of the spatial plane.
    Expanded { mics: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusedInput {
    layout: Layout,
    data: FeatureTensor,
}

impl FusedInput {
    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn tensor(&self) -> &FeatureTensor {
        &self.data
    }

    pub fn into_tensor(self) -> FeatureTensor {
        self.data
    }

    pub fn frames(&self) -> usize {
        let d = self.data.dims();
        d[d.len() - 2].1
    }

    pub fn feature_dim(&self) -> usize {
        let d = self.data.dims();
        d[d.len() - 1].1
    }

    /// Recover the layout from a container's axis labels.
    pub fn from_tensor(data: FeatureTensor) -> Result<Self> {
        let axes: Vec<Axis> = data.dims().iter().map(|d| d.0).collect();
        let layout = match axes.as_slice() {
            [Axis::Channel, Axis::FeatChannel, Axis::Time, Axis::Freq | Axis::Bin] => {
                if data.extent(1) != 2 {
                    return Err(Error::ShapeMismatch(format!(
                        "expanded input needs 2 feature planes, found {}",
                        data.extent(1)
                    )));
                }
                Layout::Expanded { mics: data.extent(0) }
            }
            [Axis::Channel, Axis::Time, Axis::Freq | Axis::Bin] => {
                if data.extent(0) < 2 {
                    return Err(Error::ShapeMismatch("fused input needs at least 2 planes".into()));
                }
                // A two-plane input is ambiguous between Fixed{1} and Squeezed;
                // both feed the stack identically.
                Layout::Fixed { mics: data.extent(0) - 1 }
            }
            _ => {
                return Err(Error::ShapeMismatch(format!(
                    "unrecognised fused layout {}",
                    crate::tensor::fmt_dims(data.dims())
                )))
            }
        };
        Ok(FusedInput { layout, data })
    }

    /// Treat a two-plane input as squeezed.
    pub fn as_squeezed(self) -> Result<Self> {
        match self.layout {
            Layout::Squeezed | Layout::Fixed { mics: 1 } => {
                Ok(FusedInput { layout: Layout::Squeezed, data: self.data })
            }
            other => Err(Error::SpecMismatch(format!("{other:?} input is not two-plane"))),
        }
    }

    /// Reorder microphones. Fixed layouts keep the spatial plane last.
    pub fn permute_mics(&self, order: &[usize]) -> Result<FusedInput> {
        let (mics, tail) = match self.layout {
            Layout::Fixed { mics } => (mics, true),
            Layout::Expanded { mics } => (mics, false),
            Layout::Squeezed => return Ok(self.clone()),
        };
        crate::spatial::check_permutation(order, mics)?;
        let mut data = Vec::with_capacity(self.data.len());
        for &m in order {
            data.extend_from_slice(self.data.outer(m));
        }
        if tail {
            data.extend_from_slice(self.data.outer(mics));
        }
        Ok(FusedInput {
            layout: self.layout,
            data: FeatureTensor::new(self.data.dims().to_vec(), data)?,
        })
    }
}

fn spectral_dims(spectral: &FeatureTensor) -> Result<(usize, usize, usize, Axis)> {
    match spectral.dims() {
        [(Axis::Channel, m), (Axis::Time, t), (fa @ (Axis::Freq | Axis::Bin), f)] => Ok((*m, *t, *f, *fa)),
        d => Err(Error::ShapeMismatch(format!(
            "spectral feature must be [channel, time, freq|bin], got {}",
            crate::tensor::fmt_dims(d)
        ))),
    }
}

fn sf_dims(sf: &FeatureTensor) -> Result<(usize, usize)> {
    match sf.dims() {
        [(Axis::Time, t), (Axis::Freq | Axis::Bin, f)] => Ok((*t, *f)),
        d => Err(Error::ShapeMismatch(format!(
            "spatial feature must be [time, freq|bin], got {}",
            crate::tensor::fmt_dims(d)
        ))),
    }
}

fn check_pair(spectral: &FeatureTensor, sf: &FeatureTensor) -> Result<(usize, usize, usize, Axis)> {
    let (m, t, f, fa) = spectral_dims(spectral)?;
    let (st, sfd) = sf_dims(sf)?;
    if (t, f) != (st, sfd) {
        return Err(Error::ShapeMismatch(format!(
            "spectral [{m}, {t}, {f}] vs spatial [{st}, {sfd}]"
        )));
    }
    Ok((m, t, f, fa))
}

/// `[M+1, T, F]` with the spatial plane last.
pub fn fuse_fixed(spectral: &FeatureTensor, sf: &FeatureTensor) -> Result<FusedInput> {
    let (m, t, f, fa) = check_pair(spectral, sf)?;
    let mut data = Vec::with_capacity((m + 1) * t * f);
    data.extend_from_slice(spectral.data());
    data.extend_from_slice(sf.data());
    Ok(FusedInput {
        layout: Layout::Fixed { mics: m },
        data: FeatureTensor::new(vec![(Axis::Channel, m + 1), (Axis::Time, t), (fa, f)], data)?,
    })
}

/// `[2, T, F]` from an already squeezed spectral plane.
pub fn fuse_squeezed(squeezed: &FeatureTensor, sf: &FeatureTensor) -> Result<FusedInput> {
    let (t, f) = sf_dims(squeezed)?;
    let fa = squeezed.dims()[1].0;
    if (t, f) != sf_dims(sf)? {
        return Err(Error::ShapeMismatch("squeezed and spatial planes differ".into()));
    }
    let mut data = Vec::with_capacity(2 * t * f);
    data.extend_from_slice(squeezed.data());
    data.extend_from_slice(sf.data());
    Ok(FusedInput {
        layout: Layout::Squeezed,
        data: FeatureTensor::new(vec![(Axis::Channel, 2), (Axis::Time, t), (fa, f)], data)?,
    })
}

/// `[M, 2, T, F]`: plane 0 is channel `m`'s spectral feature, plane 1 a copy of `sf`.
pub fn expand(spectral: &FeatureTensor, sf: &FeatureTensor) -> Result<FusedInput> {
    let (m, t, f, fa) = check_pair(spectral, sf)?;
    let mut data = Vec::with_capacity(m * 2 * t * f);
    for ch in 0..m {
        data.extend_from_slice(spectral.outer(ch));
        data.extend_from_slice(sf.data());
    }
    Ok(FusedInput {
        layout: Layout::Expanded { mics: m },
        data: FeatureTensor::new(
            vec![(Axis::Channel, m), (Axis::FeatChannel, 2), (Axis::Time, t), (fa, f)],
            data,
        )?,
    })
}

/// Apply the filter bank to the spatial plane. No logarithm: the plane can be negative.
pub fn project_sf(sf: &FeatureTensor, fb: &FilterBank) -> Result<FeatureTensor> {
    let (t, f) = sf_dims(sf)?;
    if f != fb.bins_in() {
        return Err(Error::ShapeMismatch(format!(
            "filter bank expects {} bins, spatial feature has {f}",
            fb.bins_in()
        )));
    }
    let mut row = vec![0.0; f];
    let mut out = vec![0.0; fb.bins_out()];
    let mut data = Vec::with_capacity(t * fb.bins_out());
    for frame in sf.data().chunks_exact(f) {
        for (r, &v) in row.iter_mut().zip(frame) {
            *r = f64::from(v);
        }
        fb.apply_row(&row, &mut out);
        data.extend(out.iter().map(|&v| v as f32));
    }
    FeatureTensor::new(vec![(Axis::Time, t), (Axis::Bin, fb.bins_out())], data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SqueezeMethod {
    /// Reference (first) channel.
    FixedChannel,
    /// One channel drawn from the seeded stream.
    RandomChannel,
    /// Element-wise mean over channels.
    ChannelAverage,
    /// Per-frame attention over channel vectors.
    CrossChannelAttention,
}

impl SqueezeMethod {
    pub const ALL: [SqueezeMethod; 4] = [
        SqueezeMethod::FixedChannel,
        SqueezeMethod::RandomChannel,
        SqueezeMethod::ChannelAverage,
        SqueezeMethod::CrossChannelAttention,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SqueezeMethod::FixedChannel => "fixed_ch",
            SqueezeMethod::RandomChannel => "random_ch",
            SqueezeMethod::ChannelAverage => "channel_avg",
            SqueezeMethod::CrossChannelAttention => "cca",
        }
    }
}

impl fmt::Display for SqueezeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SqueezeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SqueezeMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown squeeze method {s:?}")))
    }
}

/// Collapse `[M, T, F]` to `[T, F]`.
pub fn squeeze(spectral: &FeatureTensor, method: SqueezeMethod, seed: u64) -> Result<FeatureTensor> {
    let (m, t, f, fa) = spectral_dims(spectral)?;
    if m == 0 {
        return Err(Error::BadShape("no channels to squeeze".into()));
    }
    let dims = vec![(Axis::Time, t), (fa, f)];
    let data = match method {
        SqueezeMethod::FixedChannel => spectral.outer(0).to_vec(),
        SqueezeMethod::RandomChannel => {
            let pick = SeedStream::new(seed).below(m);
            spectral.outer(pick).to_vec()
        }
        SqueezeMethod::ChannelAverage => {
            let mut acc = vec![0.0f64; t * f];
            for ch in 0..m {
                for (a, &v) in acc.iter_mut().zip(spectral.outer(ch)) {
                    *a += f64::from(v);
                }
            }
            acc.iter().map(|&a| (a / m as f64) as f32).collect()
        }
        SqueezeMethod::CrossChannelAttention => cross_channel_attention(spectral, m, t, f),
    };
    FeatureTensor::new(dims, data)
}

/// Query is the channel-mean vector, keys and values the channel vectors,
/// scores scaled by `1/sqrt(F)`; identity projections.
fn cross_channel_attention(x: &FeatureTensor, m: usize, t: usize, f: usize) -> Vec<f32> {
    let scale = 1.0 / (f as f64).sqrt();
    let mut out = Vec::with_capacity(t * f);
    let mut query = vec![0.0f64; f];
    let mut scores = vec![0.0f64; m];
    let row = |ch: usize, tt: usize| &x.outer(ch)[tt * f..(tt + 1) * f];
    for tt in 0..t {
        query.iter_mut().for_each(|q| *q = 0.0);
        for ch in 0..m {
            for (q, &v) in query.iter_mut().zip(row(ch, tt)) {
                *q += f64::from(v);
            }
        }
        query.iter_mut().for_each(|q| *q /= m as f64);
        for (ch, s) in scores.iter_mut().enumerate() {
            *s = row(ch, tt).iter().zip(&query).map(|(&v, q)| f64::from(v) * q).sum::<f64>() * scale;
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for s in scores.iter_mut() {
            *s = (*s - max).exp();
            denom += *s;
        }
        let base = out.len();
        out.resize(base + f, 0.0f32);
        let mut acc = vec![0.0f64; f];
        for (ch, &s) in scores.iter().enumerate() {
            let w = s / denom;
            for (a, &v) in acc.iter_mut().zip(row(ch, tt)) {
                *a += w * f64::from(v);
            }
        }
        for (o, a) in out[base..].iter_mut().zip(acc) {
            *o = a as f32;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(m: usize, t: usize, f: usize, salt: u32) -> FeatureTensor {
        let data = (0..m * t * f)
            .map(|i| (((i as u32).wrapping_mul(2654435761).wrapping_add(salt) % 1000) as f32) / 100.0 - 5.0)
            .collect();
        FeatureTensor::new(vec![(Axis::Channel, m), (Axis::Time, t), (Axis::Freq, f)], data).unwrap()
    }

    fn plane(t: usize, f: usize, v: f32) -> FeatureTensor {
        FeatureTensor::new(vec![(Axis::Time, t), (Axis::Freq, f)], vec![v; t * f]).unwrap()
    }

    #[test]
    fn fixed_fusion_appends_spatial_plane() {
        let x = tensor(8, 10, 201, 0);
        let sf = plane(10, 201, 0.5);
        let fused = fuse_fixed(&x, &sf).unwrap();
        assert_eq!(fused.tensor().shape(), vec![9, 10, 201]);
        assert_eq!(fused.layout(), Layout::Fixed { mics: 8 });
        assert_eq!(fused.tensor().outer(8), sf.data());
        assert_eq!(fused.tensor().outer(3), x.outer(3));
        let one = fuse_fixed(&tensor(1, 4, 6, 0), &plane(4, 6, 0.0)).unwrap();
        assert_eq!(one.tensor().shape(), vec![2, 4, 6]);
    }

    #[test]
    fn fixed_fusion_rejects_mismatched_frames() {
        let err = fuse_fixed(&tensor(2, 10, 5, 0), &plane(9, 5, 0.0)).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
    }

    #[test]
    fn expansion_copies_spatial_plane() {
        let x = tensor(8, 6, 7, 1);
        let sf = plane(6, 7, -0.25);
        let e = expand(&x, &sf).unwrap();
        assert_eq!(e.tensor().shape(), vec![8, 2, 6, 7]);
        for m in 0..8 {
            let block = e.tensor().outer(m);
            assert_eq!(&block[..42], x.outer(m));
            assert_eq!(&block[42..], sf.data());
        }
    }

    #[test]
    fn single_mic_expansion_matches_fixed() {
        let x = tensor(1, 3, 4, 2);
        let sf = plane(3, 4, 0.1);
        assert_eq!(expand(&x, &sf).unwrap().tensor().data(), fuse_fixed(&x, &sf).unwrap().tensor().data());
    }

    #[test]
    fn projection_of_ones_is_ones() {
        let fb = crate::stft::mel_filterbank(201, 80, 16000).unwrap();
        let p = project_sf(&plane(3, 201, 1.0), &fb).unwrap();
        assert_eq!(p.dims(), &[(Axis::Time, 3), (Axis::Bin, 80)]);
        assert!(p.data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
        let same = project_sf(&plane(2, 5, 0.3), &FilterBank::identity(5)).unwrap();
        assert!(same.data().iter().all(|&v| v == 0.3));
    }

    #[test]
    fn projection_matches_naive_product() {
        let fb = crate::stft::mel_filterbank(201, 40, 16000).unwrap();
        let sf = FeatureTensor::new(
            vec![(Axis::Time, 4), (Axis::Freq, 201)],
            (0..804).map(|i| ((i * 37 % 200) as f32 / 100.0) - 1.0).collect(),
        )
        .unwrap();
        let p = project_sf(&sf, &fb).unwrap();
        for t in 0..4 {
            for j in 0..40 {
                let mut s = 0.0f64;
                for f in 0..201 {
                    s += f64::from(sf.data()[t * 201 + f]) * fb.weight(f, j);
                }
                assert!((p.data()[t * 40 + j] as f64 - s).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn single_channel_squeeze_is_identity() {
        let x = tensor(1, 5, 6, 3);
        for method in SqueezeMethod::ALL {
            assert_eq!(squeeze(&x, method, 9).unwrap().data(), x.data(), "{method}");
        }
    }

    #[test]
    fn average_of_identical_channels_is_the_channel() {
        let one = tensor(1, 4, 5, 4);
        let mut data = Vec::new();
        for _ in 0..3 {
            data.extend_from_slice(one.data());
        }
        let x = FeatureTensor::new(vec![(Axis::Channel, 3), (Axis::Time, 4), (Axis::Freq, 5)], data).unwrap();
        assert_eq!(squeeze(&x, SqueezeMethod::ChannelAverage, 0).unwrap().data(), one.data());
    }

    #[test]
    fn random_channel_is_seed_deterministic() {
        let x = tensor(6, 3, 4, 5);
        let a = squeeze(&x, SqueezeMethod::RandomChannel, 77).unwrap();
        let b = squeeze(&x, SqueezeMethod::RandomChannel, 77).unwrap();
        assert_eq!(a, b);
        let pick = SeedStream::new(77).below(6);
        assert_eq!(a.data(), x.outer(pick));
    }

    #[test]
    fn attention_matches_naive_loop() {
        let x = tensor(3, 4, 6, 6);
        let got = squeeze(&x, SqueezeMethod::CrossChannelAttention, 0).unwrap();
        let v = |m: usize, t: usize, f: usize| f64::from(x.data()[(m * 4 + t) * 6 + f]);
        for t in 0..4 {
            let q: Vec<f64> = (0..6).map(|f| (0..3).map(|m| v(m, t, f)).sum::<f64>() / 3.0).collect();
            let s: Vec<f64> = (0..3)
                .map(|m| (0..6).map(|f| q[f] * v(m, t, f)).sum::<f64>() / 6f64.sqrt())
                .collect();
            let e: Vec<f64> = s.iter().map(|x| x.exp()).collect();
            let z: f64 = e.iter().sum();
            for f in 0..6 {
                let want: f64 = (0..3).map(|m| e[m] / z * v(m, t, f)).sum();
                assert!((f64::from(got.data()[t * 6 + f]) - want).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn layout_is_recovered_from_axes() {
        let x = tensor(4, 3, 5, 0);
        let sf = plane(3, 5, 0.0);
        let fixed = fuse_fixed(&x, &sf).unwrap();
        assert_eq!(FusedInput::from_tensor(fixed.tensor().clone()).unwrap().layout(), Layout::Fixed { mics: 4 });
        let e = expand(&x, &sf).unwrap();
        assert_eq!(FusedInput::from_tensor(e.tensor().clone()).unwrap().layout(), Layout::Expanded { mics: 4 });
    }

    #[test]
    fn mic_permutation_keeps_spatial_plane_last() {
        let x = tensor(3, 2, 2, 0);
        let fused = fuse_fixed(&x, &plane(2, 2, 0.7)).unwrap();
        let p = fused.permute_mics(&[2, 0, 1]).unwrap();
        assert_eq!(p.tensor().outer(0), x.outer(2));
        assert_eq!(p.tensor().outer(3), fused.tensor().outer(3));
    }
}
