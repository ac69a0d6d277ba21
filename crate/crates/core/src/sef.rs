//! `SEF1` feature container.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "SEF1"            4 bytes magic
//! dtype             u8   (0 = f32)
//! ndim              u8   (1..=8)
//! reserved          u16  (0)
//! ndim × { axis u8, extent u64 }
//! payload           row-major in listed dim order
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::tensor::{element_count, Axis, FeatureTensor};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SEF1";
pub const DTYPE_F32: u8 = 0;
pub const MAX_NDIM: usize = 8;

const FIXED_HEADER: usize = 8;
const DIM_RECORD: usize = 9;

pub fn encode(t: &FeatureTensor) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(header_len(t.ndim()) + 4 * t.len());
    encode_into(t, &mut out)?;
    Ok(out)
}

pub fn encode_into(t: &FeatureTensor, out: &mut Vec<u8>) -> Result<()> {
    if t.ndim() > MAX_NDIM {
        return Err(Error::DimOverflow(format!("ndim {} exceeds {MAX_NDIM}", t.ndim())));
    }
    out.extend_from_slice(MAGIC);
    out.push(DTYPE_F32);
    out.push(t.ndim() as u8);
    out.extend_from_slice(&0u16.to_le_bytes());
    for &(axis, extent) in t.dims() {
        out.push(axis.code());
        out.extend_from_slice(&(extent as u64).to_le_bytes());
    }
    out.reserve(4 * t.len());
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

/// Decode a buffer holding exactly one container.
pub fn decode(bytes: &[u8]) -> Result<FeatureTensor> {
    let (t, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(Error::Malformed(format!(
            "{} trailing bytes after payload",
            bytes.len() - used
        )));
    }
    Ok(t)
}

/// Decode one container from the front of `bytes`, returning it together with
/// the number of bytes consumed.
pub fn decode_prefix(bytes: &[u8]) -> Result<(FeatureTensor, usize)> {
    if bytes.len() < 4 {
        if !MAGIC.starts_with(bytes) {
            return Err(Error::BadMagic);
        }
        return Err(truncated(FIXED_HEADER, bytes.len()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < FIXED_HEADER {
        return Err(truncated(FIXED_HEADER, bytes.len()));
    }
    let dtype = bytes[4];
    if dtype != DTYPE_F32 {
        return Err(Error::Malformed(format!("unknown dtype code {dtype}")));
    }
    let ndim = bytes[5] as usize;
    if ndim == 0 {
        return Err(Error::Malformed("ndim is zero".into()));
    }
    if ndim > MAX_NDIM {
        return Err(Error::DimOverflow(format!("ndim {ndim} exceeds {MAX_NDIM}")));
    }
    let reserved = u16::from_le_bytes([bytes[6], bytes[7]]);
    if reserved != 0 {
        return Err(Error::Malformed(format!("reserved field is {reserved}, expected 0")));
    }
    let header = header_len(ndim);
    if bytes.len() < header {
        return Err(truncated(header, bytes.len()));
    }

    let mut dims = Vec::with_capacity(ndim);
    for rec in bytes[FIXED_HEADER..header].chunks_exact(DIM_RECORD) {
        let axis = Axis::from_code(rec[0])
            .ok_or_else(|| Error::Malformed(format!("unknown axis code {}", rec[0])))?;
        let extent = u64::from_le_bytes(rec[1..9].try_into().expect("8-byte extent"));
        let extent = usize::try_from(extent)
            .map_err(|_| Error::DimOverflow(format!("extent {extent} exceeds address space")))?;
        dims.push((axis, extent));
    }

    let count = element_count(&dims)
        .ok_or_else(|| Error::DimOverflow("extent product overflows".into()))?;
    let payload = count
        .checked_mul(4)
        .ok_or_else(|| Error::DimOverflow("payload size overflows".into()))?;
    let total = header
        .checked_add(payload)
        .ok_or_else(|| Error::DimOverflow("container size overflows".into()))?;
    if bytes.len() < total {
        return Err(truncated(total, bytes.len()));
    }

    let data = bytes[header..total]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((FeatureTensor::new(dims, data)?, total))
}

pub fn write_feature(path: impl AsRef<Path>, t: &FeatureTensor) -> Result<()> {
    let bytes = encode(t)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.flush()?;
    Ok(())
}

pub fn read_feature(path: impl AsRef<Path>) -> Result<FeatureTensor> {
    decode(&fs::read(path)?)
}

fn header_len(ndim: usize) -> usize {
    FIXED_HEADER + DIM_RECORD * ndim
}

fn truncated(needed: usize, available: usize) -> Error {
    Error::TruncatedPayload { needed: needed as u64, available: available as u64 }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureTensor {
        let dims = vec![(Axis::Channel, 9), (Axis::Time, 100), (Axis::Freq, 201)];
        let data = (0..9 * 100 * 201).map(|i| (i as f32 * 0.37).sin()).collect();
        FeatureTensor::new(dims, data).unwrap()
    }

    #[test]
    fn round_trips_feature_shaped_tensor() {
        let t = sample();
        let back = decode(&encode(&t).unwrap()).unwrap();
        assert!(back.bit_eq(&t));
    }

    #[test]
    fn header_layout_is_fixed() {
        let t = FeatureTensor::new(vec![(Axis::Time, 2), (Axis::Bin, 1)], vec![1.0, -2.0]).unwrap();
        let b = encode(&t).unwrap();
        assert_eq!(&b[..8], b"SEF1\x00\x02\x00\x00");
        assert_eq!(b[8], 2);
        assert_eq!(&b[9..17], &2u64.to_le_bytes());
        assert_eq!(b[17], 4);
        assert_eq!(&b[18..26], &1u64.to_le_bytes());
        assert_eq!(&b[26..30], &1.0f32.to_le_bytes());
        assert_eq!(b.len(), 34);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let mut b = encode(&sample()).unwrap();
        b[0] = b'X';
        assert!(matches!(decode(&b), Err(Error::BadMagic)));
    }

    #[test]
    fn empty_input_is_truncated() {
        assert!(matches!(decode(&[]), Err(Error::TruncatedPayload { .. })));
    }

    #[test]
    fn short_payload_is_truncated() {
        let b = encode(&sample()).unwrap();
        assert!(matches!(decode(&b[..b.len() - 1]), Err(Error::TruncatedPayload { .. })));
    }

    #[test]
    fn huge_extents_overflow() {
        let mut b = b"SEF1\x00\x02\x00\x00".to_vec();
        for _ in 0..2 {
            b.push(2);
            b.extend_from_slice(&u64::MAX.to_le_bytes());
        }
        assert!(matches!(decode(&b), Err(Error::DimOverflow(_))));
    }

    #[test]
    fn too_many_dims_overflow() {
        let b = b"SEF1\x00\x09\x00\x00".to_vec();
        assert!(matches!(decode(&b), Err(Error::DimOverflow(_))));
    }

    #[test]
    fn trailing_bytes_are_malformed() {
        let mut b = encode(&sample()).unwrap();
        b.push(0);
        assert!(matches!(decode(&b), Err(Error::Malformed(_))));
        let (_, used) = decode_prefix(&b).unwrap();
        assert_eq!(used, b.len() - 1);
    }

    #[test]
    fn unknown_axis_code_is_malformed() {
        let mut b = encode(&sample()).unwrap();
        b[8] = 9;
        assert!(matches!(decode(&b), Err(Error::Malformed(_))));
    }
}
