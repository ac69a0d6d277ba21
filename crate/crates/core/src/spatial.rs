//! Solo-kernel convolved phase and interchannel spatial features.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::stft::Spectrogram;
use crate::tensor::{Axis, FeatureTensor};
use crate::{Error, Result};

pub const DEFAULT_KERNEL_FRAMES: usize = 10;

/// `K` frames of a solo recording's STFT, `[M, K, F]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoloKernel {
    frames: Vec<Complex64>,
    channels: usize,
    len: usize,
    bins: usize,
}

impl SoloKernel {
    pub fn from_frames(frames: Vec<Complex64>, channels: usize, len: usize, bins: usize) -> Result<Self> {
        if channels == 0 || len == 0 || bins == 0 {
            return Err(Error::BadShape("kernel needs M, K, F ≥ 1".into()));
        }
        if frames.len() != channels * len * bins {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a [{channels}, {len}, {bins}] kernel",
                frames.len()
            )));
        }
        Ok(SoloKernel { frames, channels, len, bins })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Kernel length `K` in frames.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> &[Complex64] {
        &self.frames
    }

    #[inline]
    pub fn at(&self, m: usize, k: usize, f: usize) -> Complex64 {
        self.frames[(m * self.len + k) * self.bins + f]
    }

    pub fn scaled(&self, alpha: f64) -> SoloKernel {
        SoloKernel { frames: self.frames.iter().map(|z| z * alpha).collect(), ..self.clone() }
    }
}

pub fn extract_kernel(solo: &Spectrogram, start_frame: usize, k: usize) -> Result<SoloKernel> {
    if k == 0 {
        return Err(Error::OutOfRange("kernel length must be at least one frame".into()));
    }
    let part = solo.frame_range(start_frame, k)?;
    SoloKernel::from_frames(part.coeffs().to_vec(), part.channels(), k, part.bins())
}

/// Kernel from the last `k` frames of a solo region.
pub fn extract_last_kernel(solo: &Spectrogram, k: usize) -> Result<SoloKernel> {
    if k > solo.frames() {
        return Err(Error::OutOfRange(format!(
            "solo region has {} frames, kernel needs {k}",
            solo.frames()
        )));
    }
    extract_kernel(solo, solo.frames() - k, k)
}

/// Phase values `[M, T, F]` in `(−π, π]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseTensor {
    values: Vec<f64>,
    channels: usize,
    frames: usize,
    bins: usize,
}

impl PhaseTensor {
    pub fn new(values: Vec<f64>, channels: usize, frames: usize, bins: usize) -> Result<Self> {
        if values.len() != channels * frames * bins {
            return Err(Error::ShapeMismatch(format!(
                "{} phases for [{channels}, {frames}, {bins}]",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|&&v| !(v > -PI && v <= PI)) {
            return Err(Error::OutOfRange(format!("phase {v} outside (−π, π]")));
        }
        Ok(PhaseTensor { values, channels, frames, bins })
    }

    /// Wrap arbitrary angles into `(−π, π]`.
    pub fn from_angles(angles: Vec<f64>, channels: usize, frames: usize, bins: usize) -> Result<Self> {
        Self::new(angles.into_iter().map(wrap_phase).collect(), channels, frames, bins)
    }

    /// Raw phase of every STFT coefficient.
    pub fn of_spectrogram(y: &Spectrogram) -> PhaseTensor {
        PhaseTensor {
            values: y.coeffs().iter().map(|&z| phase(z)).collect(),
            channels: y.channels(),
            frames: y.frames(),
            bins: y.bins(),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, m: usize, t: usize, f: usize) -> f64 {
        self.values[(m * self.frames + t) * self.bins + f]
    }

    fn plane(&self, m: usize) -> &[f64] {
        let n = self.frames * self.bins;
        &self.values[m * n..(m + 1) * n]
    }

    /// Reorder channels: output channel `i` is input channel `order[i]`.
    pub fn permute_channels(&self, order: &[usize]) -> Result<PhaseTensor> {
        check_permutation(order, self.channels)?;
        let values = order.iter().flat_map(|&m| self.plane(m).iter().copied()).collect();
        Ok(PhaseTensor { values, channels: self.channels, frames: self.frames, bins: self.bins })
    }
}

pub(crate) fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(Error::ShapeMismatch(format!("permutation of length {} for {n} channels", order.len())));
    }
    for &i in order {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::BadChannelIndex { index: i, channels: n });
        }
    }
    Ok(())
}

/// Angle of `z` in `(−π, π]`, with `phase(0) = 0`.
#[inline]
pub fn phase(z: Complex64) -> f64 {
    if z.re == 0.0 && z.im == 0.0 {
        return 0.0;
    }
    wrap_phase(z.im.atan2(z.re))
}

#[inline]
pub fn wrap_phase(a: f64) -> f64 {
    let mut a = a.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// `RP[m,t,f] = ∠ Σ_k Y[m,t−k,f] · conj(R[m,k,f])`, with `Y` zero before frame 0.
pub fn rir_phase(y: &Spectrogram, r: &SoloKernel) -> Result<PhaseTensor> {
    if y.channels() != r.channels() || y.bins() != r.bins() {
        return Err(Error::ShapeMismatch(format!(
            "spectrogram [{}, _, {}] vs kernel [{}, _, {}]",
            y.channels(),
            y.bins(),
            r.channels(),
            r.bins()
        )));
    }
    let (m_n, t_n, f_n, k_n) = (y.channels(), y.frames(), y.bins(), r.len());
    let mut values = vec![0.0; m_n * t_n * f_n];
    let mut acc = vec![Complex64::default(); f_n];
    for m in 0..m_n {
        for t in 0..t_n {
            acc.iter_mut().for_each(|a| *a = Complex64::default());
            for k in 0..k_n.min(t + 1) {
                let yrow = &y.coeffs()[y.index(m, t - k, 0)..][..f_n];
                let rrow = &r.frames()[(m * k_n + k) * f_n..][..f_n];
                for ((a, yv), rv) in acc.iter_mut().zip(yrow).zip(rrow) {
                    *a += yv * rv.conj();
                }
            }
            let out = &mut values[(m * t_n + t) * f_n..][..f_n];
            for (o, &a) in out.iter_mut().zip(&acc) {
                *o = phase(a);
            }
        }
    }
    Ok(PhaseTensor { values, channels: m_n, frames: t_n, bins: f_n })
}

/// `SF[t,f] = cos(RP[m1,t,f] − RP[m2,t,f])`, shape `[T, F]`.
pub fn pairwise_sf(rp: &PhaseTensor, m1: usize, m2: usize) -> Result<FeatureTensor> {
    for m in [m1, m2] {
        if m >= rp.channels {
            return Err(Error::BadChannelIndex { index: m, channels: rp.channels });
        }
    }
    if m1 == m2 {
        return Err(Error::BadChannelIndex { index: m2, channels: rp.channels });
    }
    let data = rp
        .plane(m1)
        .iter()
        .zip(rp.plane(m2))
        .map(|(a, b)| (a - b).cos() as f32)
        .collect();
    FeatureTensor::new(vec![(Axis::Time, rp.frames), (Axis::Freq, rp.bins)], data)
}

/// Mean of `cos(RP_i − RP_j)` over all ordered pairs `i ≠ j`, shape `[T, F]`.
///
/// Uses `Σ_{i≠j} cos(a_i − a_j) = |Σ_i e^{j a_i}|² − M`.
pub fn all_pairs_sf(rp: &PhaseTensor) -> Result<FeatureTensor> {
    let m_n = rp.channels;
    if m_n < 2 {
        return Err(Error::NeedTwoChannels(m_n));
    }
    let n = rp.frames * rp.bins;
    let mut sum = vec![Complex64::default(); n];
    for m in 0..m_n {
        for (s, &a) in sum.iter_mut().zip(rp.plane(m)) {
            let (sin, cos) = a.sin_cos();
            s.re += cos;
            s.im += sin;
        }
    }
    let pairs = (m_n * (m_n - 1)) as f64;
    let data = sum
        .iter()
        .map(|s| ((s.norm_sqr() - m_n as f64) / pairs).clamp(-1.0, 1.0) as f32)
        .collect();
    FeatureTensor::new(vec![(Axis::Time, rp.frames), (Axis::Freq, rp.bins)], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_from(values: Vec<Complex64>, m: usize, t: usize, f: usize) -> Spectrogram {
        assert_eq!(values.len(), m * t * f);
        // win_len chosen so that win/2 + 1 == f
        Spectrogram::from_coeffs(values, m, t, 2 * (f - 1), f - 1, 16000).unwrap()
    }

    fn pseudo(i: usize) -> f64 {
        ((i as f64 * 12.9898).sin() * 43758.5453).fract()
    }

    fn random_spec(m: usize, t: usize, f: usize, salt: usize) -> Spectrogram {
        let v = (0..m * t * f)
            .map(|i| Complex64::new(pseudo(2 * i + salt), pseudo(2 * i + 1 + salt)))
            .collect();
        spec_from(v, m, t, f)
    }

    #[test]
    fn kernel_default_covers_a_tenth_of_a_second() {
        // 10 frames at a 10 ms hop
        assert_eq!(DEFAULT_KERNEL_FRAMES as f64 * 0.010, 0.1);
    }

    #[test]
    fn single_frame_kernel_is_first_frame() {
        let y = random_spec(2, 5, 3, 0);
        let k = extract_kernel(&y, 0, 1).unwrap();
        for m in 0..2 {
            for f in 0..3 {
                assert_eq!(k.at(m, 0, f), y.at(m, 0, f));
            }
        }
    }

    #[test]
    fn kernel_past_end_is_out_of_range() {
        let y = random_spec(1, 5, 3, 0);
        assert!(matches!(extract_kernel(&y, 3, 3), Err(Error::OutOfRange(_))));
        assert!(matches!(extract_kernel(&y, 0, 0), Err(Error::OutOfRange(_))));
        let last = extract_last_kernel(&y, 2).unwrap();
        assert_eq!(last.at(0, 1, 2), y.at(0, 4, 2));
    }

    #[test]
    fn unit_kernel_gives_raw_phase() {
        let y = random_spec(3, 6, 4, 7);
        let r = SoloKernel::from_frames(vec![Complex64::new(1.0, 0.0); 3 * 4], 3, 1, 4).unwrap();
        let rp = rir_phase(&y, &r).unwrap();
        let raw = PhaseTensor::of_spectrogram(&y);
        for (a, b) in rp.values().iter().zip(raw.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn self_conjugation_gives_zero_phase() {
        let y = random_spec(2, 1, 5, 3);
        let r = SoloKernel::from_frames(y.coeffs().to_vec(), 2, 1, 5).unwrap();
        let rp = rir_phase(&y, &r).unwrap();
        assert!(rp.values().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn convolved_phase_matches_naive_loop() {
        let y = random_spec(2, 20, 5, 11);
        let kspec = random_spec(2, 3, 5, 999);
        let r = SoloKernel::from_frames(kspec.coeffs().to_vec(), 2, 3, 5).unwrap();
        let rp = rir_phase(&y, &r).unwrap();
        for m in 0..2 {
            for t in 0..20 {
                for f in 0..5 {
                    let mut re = 0.0;
                    let mut im = 0.0;
                    for k in 0..3 {
                        if t < k {
                            continue;
                        }
                        let a = y.at(m, t - k, f);
                        let b = r.at(m, k, f);
                        re += a.re * b.re + a.im * b.im;
                        im += a.im * b.re - a.re * b.im;
                    }
                    let want = im.atan2(re);
                    let got = rp.at(m, t, f);
                    let d = (got - want).abs();
                    assert!(d < 1e-6 || (2.0 * PI - d).abs() < 1e-6, "m{m} t{t} f{f}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn mismatched_kernel_is_rejected() {
        let y = random_spec(2, 4, 3, 0);
        let r = SoloKernel::from_frames(vec![Complex64::default(); 3], 1, 1, 3).unwrap();
        assert!(matches!(rir_phase(&y, &r), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn zero_bins_have_zero_phase() {
        let y = spec_from(vec![Complex64::default(); 4], 2, 1, 2);
        let r = SoloKernel::from_frames(vec![Complex64::new(1.0, 1.0); 4], 2, 1, 2).unwrap();
        assert!(rir_phase(&y, &r).unwrap().values().iter().all(|&v| v == 0.0));
    }

    fn phases(per_channel: &[f64], t: usize, f: usize) -> PhaseTensor {
        let m = per_channel.len();
        let v = per_channel.iter().flat_map(|&p| std::iter::repeat_n(p, t * f)).collect();
        PhaseTensor::from_angles(v, m, t, f).unwrap()
    }

    #[test]
    fn pairwise_reference_values() {
        let same = phases(&[0.4, 0.4], 2, 3);
        assert!(pairwise_sf(&same, 0, 1).unwrap().data().iter().all(|&v| v == 1.0));
        let opposite = phases(&[PI, 0.0], 2, 3);
        assert!(pairwise_sf(&opposite, 0, 1).unwrap().data().iter().all(|&v| (v + 1.0).abs() < 1e-6));
        let third = phases(&[PI / 3.0, 0.0], 2, 3);
        assert!(pairwise_sf(&third, 1, 0).unwrap().data().iter().all(|&v| (v - 0.5).abs() < 1e-6));
    }

    #[test]
    fn pairwise_rejects_bad_indices() {
        let p = phases(&[0.0, 0.0], 1, 1);
        assert!(matches!(pairwise_sf(&p, 0, 0), Err(Error::BadChannelIndex { .. })));
        assert!(matches!(pairwise_sf(&p, 0, 2), Err(Error::BadChannelIndex { index: 2, .. })));
    }

    #[test]
    fn all_pairs_two_channels_equals_pairwise() {
        let v: Vec<f64> = (0..2 * 4 * 5).map(|i| pseudo(i) * 6.0 - 3.0).collect();
        let p = PhaseTensor::from_angles(v, 2, 4, 5).unwrap();
        let a = all_pairs_sf(&p).unwrap();
        let b = pairwise_sf(&p, 0, 1).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-6);
    }

    #[test]
    fn all_pairs_three_way_split_is_minus_half() {
        let p = phases(&[0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0], 1, 1);
        let sf = all_pairs_sf(&p).unwrap();
        assert!((sf.data()[0] + 0.5).abs() < 1e-6);
    }

    #[test]
    fn all_pairs_identical_channels_is_one() {
        let p = phases(&[1.0; 5], 3, 2);
        assert!(all_pairs_sf(&p).unwrap().data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn all_pairs_needs_two_channels() {
        let p = phases(&[0.0], 1, 1);
        assert!(matches!(all_pairs_sf(&p), Err(Error::NeedTwoChannels(1))));
    }

    #[test]
    fn phase_range_is_half_open() {
        assert_eq!(phase(Complex64::new(-1.0, -0.0)), PI);
        assert_eq!(phase(Complex64::new(-1.0, 0.0)), PI);
        assert!(PhaseTensor::new(vec![-PI], 1, 1, 1).is_err());
    }

    #[test]
    fn permutation_checks_indices() {
        let p = phases(&[0.0, 1.0, 2.0], 1, 1);
        assert!(p.permute_channels(&[0, 0, 1]).is_err());
        assert_eq!(p.permute_channels(&[2, 0, 1]).unwrap().at(0, 0, 0), 2.0);
    }
}
