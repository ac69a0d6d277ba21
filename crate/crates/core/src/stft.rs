//! Multi-channel STFT, log power spectrum and mel filter-bank features.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::tensor::{Axis, FeatureTensor};
use crate::wav::MultiChannelWave;
use crate::{Error, Result};

pub const DEFAULT_LOG_FLOOR: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StftConfig {
    pub win_len_ms: f64,
    pub hop_ms: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig { win_len_ms: 25.0, hop_ms: 10.0 }
    }
}

impl StftConfig {
    pub fn win_len_samples(&self, sample_rate: u32) -> usize {
        (self.win_len_ms * f64::from(sample_rate) / 1000.0).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.hop_ms * f64::from(sample_rate) / 1000.0).round() as usize
    }
}

/// Complex STFT coefficients laid out `[M, T, F]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    coeffs: Vec<Complex64>,
    channels: usize,
    frames: usize,
    bins: usize,
    win_len: usize,
    hop: usize,
    sample_rate: u32,
}

impl Spectrogram {
    /// Wrap precomputed coefficients. `bins` must equal `win_len / 2 + 1`.
    pub fn from_coeffs(
        coeffs: Vec<Complex64>,
        channels: usize,
        frames: usize,
        win_len: usize,
        hop: usize,
        sample_rate: u32,
    ) -> Result<Self> {
        let bins = win_len / 2 + 1;
        if channels == 0 || frames == 0 {
            return Err(Error::BadShape("spectrogram needs M ≥ 1 and T ≥ 1".into()));
        }
        if coeffs.len() != channels * frames * bins {
            return Err(Error::ShapeMismatch(format!(
                "{} coefficients for [{channels}, {frames}, {bins}]",
                coeffs.len()
            )));
        }
        Ok(Spectrogram { coeffs, channels, frames, bins, win_len, hop, sample_rate })
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

    pub fn win_len(&self) -> usize {
        self.win_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    #[inline]
    pub fn index(&self, m: usize, t: usize, f: usize) -> usize {
        (m * self.frames + t) * self.bins + f
    }

    #[inline]
    pub fn at(&self, m: usize, t: usize, f: usize) -> Complex64 {
        self.coeffs[self.index(m, t, f)]
    }

    /// Frames `[start, start + len)` of every channel.
    pub fn frame_range(&self, start: usize, len: usize) -> Result<Spectrogram> {
        if len == 0 || start.checked_add(len).is_none_or(|end| end > self.frames) {
            return Err(Error::OutOfRange(format!(
                "frames {start}..{} of a {}-frame spectrogram",
                start.saturating_add(len),
                self.frames
            )));
        }
        let mut coeffs = Vec::with_capacity(self.channels * len * self.bins);
        for m in 0..self.channels {
            let a = self.index(m, start, 0);
            coeffs.extend_from_slice(&self.coeffs[a..a + len * self.bins]);
        }
        Ok(Spectrogram {
            coeffs,
            channels: self.channels,
            frames: len,
            bins: self.bins,
            win_len: self.win_len,
            hop: self.hop,
            sample_rate: self.sample_rate,
        })
    }
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

pub fn stft(wave: &MultiChannelWave, cfg: &StftConfig) -> Result<Spectrogram> {
    wave.require_pipeline_rate()?;
    let sr = wave.sample_rate();
    let win = cfg.win_len_samples(sr);
    let hop = cfg.hop_samples(sr);
    if win < 2 || hop == 0 {
        return Err(Error::BadShape(format!("window {win} / hop {hop} samples")));
    }
    let n = wave.num_samples();
    if n < win {
        return Err(Error::TooShort { samples: n, window: win });
    }
    let frames = (n - win) / hop + 1;
    let bins = win / 2 + 1;
    let window = hann(win);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(win);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::default(); win];
    let mut coeffs = Vec::with_capacity(wave.num_channels() * frames * bins);
    for ch in wave.channels() {
        for t in 0..frames {
            let seg = &ch[t * hop..t * hop + win];
            for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&window) {
                *b = Complex64::new(x * w, 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            coeffs.extend_from_slice(&buf[..bins]);
        }
    }
    Ok(Spectrogram {
        coeffs,
        channels: wave.num_channels(),
        frames,
        bins,
        win_len: win,
        hop,
        sample_rate: sr,
    })
}

/// Log power spectrum `ln(max(|Y|², floor))`, shape `[M, T, F]`.
pub fn lps(spec: &Spectrogram, floor_eps: f64) -> FeatureTensor {
    let data = spec
        .coeffs
        .iter()
        .map(|y| y.norm_sqr().max(floor_eps).ln() as f32)
        .collect();
    FeatureTensor::new(
        vec![(Axis::Channel, spec.channels), (Axis::Time, spec.frames), (Axis::Freq, spec.bins)],
        data,
    )
    .expect("lps shape matches spectrogram")
}

/// Filter matrix `[F, F']`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    weights: Vec<f64>,
    bins_in: usize,
    bins_out: usize,
}

impl FilterBank {
    pub fn from_weights(bins_in: usize, bins_out: usize, weights: Vec<f64>) -> Result<Self> {
        if bins_in == 0 || bins_out == 0 || weights.len() != bins_in * bins_out {
            return Err(Error::BadShape(format!(
                "{} weights for a [{bins_in}, {bins_out}] filter bank",
                weights.len()
            )));
        }
        Ok(FilterBank { weights, bins_in, bins_out })
    }

    pub fn identity(bins: usize) -> Self {
        let mut weights = vec![0.0; bins * bins];
        for i in 0..bins {
            weights[i * bins + i] = 1.0;
        }
        FilterBank { weights, bins_in: bins, bins_out: bins }
    }

    pub fn bins_in(&self) -> usize {
        self.bins_in
    }

    pub fn bins_out(&self) -> usize {
        self.bins_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn weight(&self, f: usize, j: usize) -> f64 {
        self.weights[f * self.bins_out + j]
    }

    /// `out[j] = Σ_f row[f] · W[f, j]`.
    pub fn apply_row(&self, row: &[f64], out: &mut [f64]) {
        debug_assert_eq!(row.len(), self.bins_in);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (f, &x) in row.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let w = &self.weights[f * self.bins_out..(f + 1) * self.bins_out];
            for (o, &wj) in out.iter_mut().zip(w) {
                *o += x * wj;
            }
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters spanning 0 Hz..Nyquist, each column summing to one.
///
/// A filter narrower than the bin spacing can miss every bin centre; such a
/// filter takes unit weight on the bin nearest its centre frequency.
pub fn mel_filterbank(bins_in: usize, bins_out: usize, sample_rate: u32) -> Result<FilterBank> {
    if bins_in < 2 || bins_out == 0 || bins_out >= bins_in || sample_rate == 0 {
        return Err(Error::BadShape(format!(
            "mel filter bank with F={bins_in}, F'={bins_out}"
        )));
    }
    let nyquist = f64::from(sample_rate) / 2.0;
    let bin_hz = nyquist / (bins_in - 1) as f64;
    let mel_max = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..bins_out + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (bins_out + 1) as f64))
        .collect();

    let mut weights = vec![0.0; bins_in * bins_out];
    for j in 0..bins_out {
        let (lo, mid, hi) = (edges[j], edges[j + 1], edges[j + 2]);
        let mut sum = 0.0;
        for f in 0..bins_in {
            let hz = f as f64 * bin_hz;
            let w = if hz > lo && hz < mid {
                (hz - lo) / (mid - lo)
            } else if hz >= mid && hz < hi {
                (hi - hz) / (hi - mid)
            } else {
                0.0
            };
            weights[f * bins_out + j] = w;
            sum += w;
        }
        if sum > 0.0 {
            for f in 0..bins_in {
                weights[f * bins_out + j] /= sum;
            }
        } else {
            let nearest = ((mid / bin_hz).round() as usize).min(bins_in - 1);
            weights[nearest * bins_out + j] = 1.0;
        }
    }
    Ok(FilterBank { weights, bins_in, bins_out })
}

/// Log filter-bank feature `ln(max(|Y|² · FB, floor))`, shape `[M, T, F']`.
pub fn lfb(spec: &Spectrogram, fb: &FilterBank, floor_eps: f64) -> Result<FeatureTensor> {
    if fb.bins_in != spec.bins {
        return Err(Error::ShapeMismatch(format!(
            "filter bank expects {} bins, spectrogram has {}",
            fb.bins_in, spec.bins
        )));
    }
    let mut power = vec![0.0; spec.bins];
    let mut out = vec![0.0; fb.bins_out];
    let mut data = Vec::with_capacity(spec.channels * spec.frames * fb.bins_out);
    for frame in spec.coeffs.chunks_exact(spec.bins) {
        for (p, y) in power.iter_mut().zip(frame) {
            *p = y.norm_sqr();
        }
        fb.apply_row(&power, &mut out);
        data.extend(out.iter().map(|&v| v.max(floor_eps).ln() as f32));
    }
    FeatureTensor::new(
        vec![(Axis::Channel, spec.channels), (Axis::Time, spec.frames), (Axis::Bin, fb.bins_out)],
        data,
    )
}
