//! RIFF/WAVE ingestion (PCM16 or IEEE float32) and output.

use std::fs::File;
use std::io::{BufReader, Read, Seek};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::{Error, Result, SAMPLE_RATE_HZ};

pub const MAX_CHANNELS: usize = 64;

/// `M` equal-length channels of time-domain samples.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiChannelWave {
    sample_rate: u32,
    channels: Vec<Vec<f64>>,
}

impl MultiChannelWave {
    pub fn new(sample_rate: u32, channels: Vec<Vec<f64>>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::BadShape("sample rate must be positive".into()));
        }
        if channels.is_empty() {
            return Err(Error::BadShape("wave needs at least one channel".into()));
        }
        let n = channels[0].len();
        if let Some(bad) = channels.iter().position(|c| c.len() != n) {
            return Err(Error::ShapeMismatch(format!(
                "channel {bad} has {} samples, channel 0 has {n}",
                channels[bad].len()
            )));
        }
        Ok(MultiChannelWave { sample_rate, channels })
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn num_samples(&self) -> usize {
        self.channels[0].len()
    }

    pub fn channel(&self, m: usize) -> &[f64] {
        &self.channels[m]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn scaled(&self, alpha: f64) -> MultiChannelWave {
        let channels = self
            .channels
            .iter()
            .map(|c| c.iter().map(|&x| x * alpha).collect())
            .collect();
        MultiChannelWave { sample_rate: self.sample_rate, channels }
    }

    /// Keep the listed channels, in the listed order.
    pub fn select(&self, order: &[usize]) -> Result<MultiChannelWave> {
        let channels = order
            .iter()
            .map(|&m| {
                self.channels.get(m).cloned().ok_or(Error::BadChannelIndex {
                    index: m,
                    channels: self.channels.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MultiChannelWave::new(self.sample_rate, channels)
    }

    pub fn require_pipeline_rate(&self) -> Result<()> {
        if self.sample_rate != SAMPLE_RATE_HZ {
            return Err(Error::SampleRateMismatch {
                found: self.sample_rate,
                expected: SAMPLE_RATE_HZ,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<MultiChannelWave> {
    decode(open(path.as_ref())?, None)
}

/// Read a single channel as a mono wave.
pub fn read_wav_channel(path: impl AsRef<Path>, channel: usize) -> Result<MultiChannelWave> {
    decode(open(path.as_ref())?, Some(channel))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path)?;
    if f.metadata()?.len() == 0 {
        return Err(Error::EmptyFile);
    }
    Ok(BufReader::new(f))
}

/// Decode a WAV stream. With `channel = Some(m)` only channel `m` is kept.
pub fn decode<R: Read>(reader: R, channel: Option<usize>) -> Result<MultiChannelWave> {
    let mut reader = WavReader::new(reader).map_err(map_hound)?;
    let spec = reader.spec();
    let m = spec.channels as usize;
    if m == 0 || m > MAX_CHANNELS {
        return Err(Error::UnsupportedEncoding(format!(
            "{m} channels, supported range is 1..={MAX_CHANNELS}"
        )));
    }
    let scale = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => Some(1.0 / 32768.0),
        (SampleFormat::Float, 32) => None,
        (fmt, bits) => {
            return Err(Error::UnsupportedEncoding(format!("{fmt:?} with {bits} bits per sample")))
        }
    };
    if spec.sample_rate != SAMPLE_RATE_HZ {
        return Err(Error::SampleRateMismatch { found: spec.sample_rate, expected: SAMPLE_RATE_HZ });
    }
    if let Some(c) = channel {
        if c >= m {
            return Err(Error::BadChannelIndex { index: c, channels: m });
        }
    }

    let frames = reader.duration() as usize;
    if frames == 0 {
        return Err(Error::EmptyFile);
    }
    // The header length is untrusted; cap the up-front reservation.
    let reserve = frames.min(1 << 22);
    let kept = if channel.is_some() { 1 } else { m };
    let mut channels: Vec<Vec<f64>> = (0..kept).map(|_| Vec::with_capacity(reserve)).collect();

    let mut push = |i: usize, v: f64| match channel {
        Some(c) if i % m == c => channels[0].push(v),
        Some(_) => {}
        None => channels[i % m].push(v),
    };
    match scale {
        Some(s) => {
            for (i, x) in reader.samples::<i16>().enumerate() {
                push(i, f64::from(x.map_err(map_hound)?) * s);
            }
        }
        None => {
            for (i, x) in reader.samples::<f32>().enumerate() {
                let x = x.map_err(map_hound)?;
                if !x.is_finite() {
                    return Err(Error::Malformed(format!("non-finite sample at index {i}")));
                }
                push(i, f64::from(x));
            }
        }
    }
    let n = channels[0].len();
    if n == 0 {
        return Err(Error::EmptyFile);
    }
    if channels.iter().any(|c| c.len() != n) {
        return Err(Error::Malformed("data chunk ends mid-frame".into()));
    }
    MultiChannelWave::new(spec.sample_rate, channels)
}

pub fn write_wav(path: impl AsRef<Path>, wave: &MultiChannelWave, encoding: WavEncoding) -> Result<()> {
    let f = File::create(path)?;
    encode(std::io::BufWriter::new(f), wave, encoding)
}

pub fn encode<W: std::io::Write + Seek>(
    writer: W,
    wave: &MultiChannelWave,
    encoding: WavEncoding,
) -> Result<()> {
    let m = wave.num_channels();
    if m > MAX_CHANNELS {
        return Err(Error::UnsupportedEncoding(format!("{m} channels")));
    }
    let (bits, fmt) = match encoding {
        WavEncoding::Pcm16 => (16, SampleFormat::Int),
        WavEncoding::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: m as u16,
        sample_rate: wave.sample_rate(),
        bits_per_sample: bits,
        sample_format: fmt,
    };
    let mut w = WavWriter::new(writer, spec).map_err(map_hound)?;
    for n in 0..wave.num_samples() {
        for c in wave.channels() {
            let x = c[n];
            match encoding {
                WavEncoding::Pcm16 => {
                    let q = (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    w.write_sample(q).map_err(map_hound)?;
                }
                WavEncoding::Float32 => w.write_sample(x as f32).map_err(map_hound)?,
            }
        }
    }
    w.finalize().map_err(map_hound)?;
    Ok(())
}

fn map_hound(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::Malformed("unexpected end of WAV data".into())
        }
        hound::Error::IoError(e) => Error::Io(e),
        hound::Error::Unsupported => Error::UnsupportedEncoding("unsupported WAV variant".into()),
        hound::Error::InvalidSampleFormat => {
            Error::UnsupportedEncoding("invalid sample format".into())
        }
        hound::Error::FormatError(msg) => Error::Malformed(msg.to_string()),
        other => Error::Malformed(other.to_string()),
    }
}
