use std::fmt;

use crate::{Error, Result};

/// Role of one tensor axis. The discriminant is the on-disk axis code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Axis {
    Channel = 0,
    FeatChannel = 1,
    Time = 2,
    Freq = 3,
    Bin = 4,
}

impl Axis {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Axis> {
        Some(match code {
            0 => Axis::Channel,
            1 => Axis::FeatChannel,
            2 => Axis::Time,
            3 => Axis::Freq,
            4 => Axis::Bin,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::Channel => "channel",
            Axis::FeatChannel => "feat_channel",
            Axis::Time => "time",
            Axis::Freq => "freq",
            Axis::Bin => "bin",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Row-major f32 array with named axes.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor {
    dims: Vec<(Axis, usize)>,
    data: Vec<f32>,
}

impl FeatureTensor {
    pub fn new(dims: Vec<(Axis, usize)>, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::BadShape("tensor needs at least one dimension".into()));
        }
        let count = element_count(&dims)
            .ok_or_else(|| Error::DimOverflow("extent product overflows".into()))?;
        if count != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "dims {} describe {count} elements, data has {}",
                fmt_dims(&dims),
                data.len()
            )));
        }
        Ok(FeatureTensor { dims, data })
    }

    pub fn zeros(dims: Vec<(Axis, usize)>) -> Result<Self> {
        let count = element_count(&dims)
            .ok_or_else(|| Error::DimOverflow("extent product overflows".into()))?;
        Self::new(dims, vec![0.0; count])
    }

    pub fn dims(&self) -> &[(Axis, usize)] {
        &self.dims
    }

    pub fn shape(&self) -> Vec<usize> {
        self.dims.iter().map(|&(_, n)| n).collect()
    }

    pub fn extent(&self, axis: usize) -> usize {
        self.dims[axis].1
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Replace the axis labels without touching the data; extents must agree.
    pub fn relabel(mut self, axes: &[Axis]) -> Result<Self> {
        if axes.len() != self.dims.len() {
            return Err(Error::ShapeMismatch(format!(
                "relabel with {} axes on a {}-d tensor",
                axes.len(),
                self.dims.len()
            )));
        }
        for (d, &a) in self.dims.iter_mut().zip(axes) {
            d.0 = a;
        }
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::Malformed(format!("non-finite element at flat index {i}"))),
        }
    }

    /// Bitwise equality, NaN payloads included.
    pub fn bit_eq(&self, other: &FeatureTensor) -> bool {
        self.dims == other.dims
            && self.data.len() == other.data.len()
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn max_abs_diff(&self, other: &FeatureTensor) -> Option<f32> {
        if self.shape() != other.shape() {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f32::max),
        )
    }

    /// Contiguous slice along the leading axis.
    pub fn outer(&self, index: usize) -> &[f32] {
        let inner = self.data.len() / self.dims[0].1.max(1);
        &self.data[index * inner..(index + 1) * inner]
    }
}

pub(crate) fn element_count(dims: &[(Axis, usize)]) -> Option<usize> {
    dims.iter().try_fold(1usize, |acc, &(_, n)| acc.checked_mul(n))
}

pub(crate) fn fmt_dims(dims: &[(Axis, usize)]) -> String {
    let parts: Vec<String> = dims.iter().map(|(a, n)| format!("({a},{n})")).collect();
    format!("[{}]", parts.join(","))
}
