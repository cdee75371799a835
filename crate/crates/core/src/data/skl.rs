//! SKL: a little-endian container for labelled skeleton sequences.
//!
//! ```text
//! header   "SKL1" | u16 version | u8 skeleton | u8 reserved (0) | u32 classes | u32 samples
//! sample   u32 label | u32 C | u32 T | u32 V | C·T·V × f32, index (c·T + t)·V + v
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::hypergraph::SkeletonId;
use crate::io::write_atomic;
use crate::tensor::Tensor;

use super::{Dataset, SkeletonSample};

pub const SKL_MAGIC: [u8; 4] = *b"SKL1";
pub const SKL_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;
pub const SAMPLE_HEADER_LEN: usize = 16;

fn to_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::input(format!("{what} = {n} does not fit in 32 bits")))
}

/// Serializes a dataset. Values are stored as `f32`; a value that
/// overflows `f32` is an input error.
pub fn encode_skl(d: &Dataset) -> Result<Vec<u8>> {
    d.validate()?;
    let body: usize = d.samples.iter().map(|s| SAMPLE_HEADER_LEN + 4 * s.data.len()).sum();
    let mut out = Vec::with_capacity(HEADER_LEN + body);
    out.extend_from_slice(&SKL_MAGIC);
    out.extend_from_slice(&SKL_VERSION.to_le_bytes());
    out.push(d.skeleton.code());
    out.push(0);
    out.extend_from_slice(&to_u32(d.num_classes, "class count")?.to_le_bytes());
    out.extend_from_slice(&to_u32(d.samples.len(), "sample count")?.to_le_bytes());
    for (i, s) in d.samples.iter().enumerate() {
        let (c, t, v) = s.data.dims3()?;
        for n in [s.label, c, t, v] {
            out.extend_from_slice(&to_u32(n, "sample extent")?.to_le_bytes());
        }
        for &x in s.data.data() {
            let f = x as f32;
            if !f.is_finite() {
                return Err(Error::input(format!("sample {i}: value {x} is not representable as f32")));
            }
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.pos,
                format!("truncated {what}: need {n} bytes, {} left", self.buf.len() - self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

/// Parses an SKL byte buffer. Any malformed input yields a format error
/// naming the byte offset; no partial dataset is returned.
pub fn decode_skl(buf: &[u8]) -> Result<Dataset> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4, "magic")? != SKL_MAGIC {
        return Err(Error::format(0, "bad magic, not an SKL file"));
    }
    let version = u16::from_le_bytes(r.take(2, "version")?.try_into().expect("2 bytes"));
    if version != SKL_VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let code = r.take(1, "skeleton id")?[0];
    let skeleton = SkeletonId::from_code(code).ok_or_else(|| Error::format(6, format!("unknown skeleton id {code}")))?;
    if r.take(1, "reserved byte")?[0] != 0 {
        return Err(Error::format(7, "reserved byte must be zero"));
    }
    let num_classes = r.u32("class count")? as usize;
    let count = r.u32("sample count")? as usize;
    let expected_joints = skeleton.definition().map(|d| d.num_joints());
    let mut samples = Vec::with_capacity(count.min(r.remaining() / SAMPLE_HEADER_LEN));
    let mut joints = expected_joints;
    for i in 0..count {
        let start = r.pos;
        let label = r.u32("sample label")? as usize;
        let c = r.u32("channel count")? as usize;
        let t = r.u32("frame count")? as usize;
        let v = r.u32("joint count")? as usize;
        if label >= num_classes {
            return Err(Error::format(start, format!("sample {i}: label {label} outside {num_classes} classes")));
        }
        if c == 0 || t == 0 || v == 0 {
            return Err(Error::format(start + 4, format!("sample {i}: empty extent {c}×{t}×{v}")));
        }
        match joints {
            Some(j) if j != v => {
                return Err(Error::format(start + 12, format!("sample {i}: {v} joints, expected {j}")));
            }
            _ => joints = Some(v),
        }
        let n = c
            .checked_mul(t)
            .and_then(|x| x.checked_mul(v))
            .filter(|n| n.checked_mul(4).is_some_and(|b| b <= r.remaining()))
            .ok_or_else(|| Error::format(r.pos, format!("sample {i}: {c}×{t}×{v} values exceed the file")))?;
        let bytes = r.take(4 * n, "sample values")?;
        let mut data = Vec::with_capacity(n);
        for (k, chunk) in bytes.chunks_exact(4).enumerate() {
            let f = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            if !f.is_finite() {
                return Err(Error::format(r.pos - 4 * n + 4 * k, format!("sample {i}: non-finite value")));
            }
            data.push(f64::from(f));
        }
        samples.push(SkeletonSample {
            label,
            data: Tensor::new(&[c, t, v], data)?,
        });
    }
    if r.remaining() != 0 {
        return Err(Error::format(r.pos, format!("{} trailing bytes", r.remaining())));
    }
    Ok(Dataset {
        skeleton,
        num_classes,
        samples,
    })
}

pub fn read_skl(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_skl(&bytes)
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_skl(path: impl AsRef<Path>, d: &Dataset) -> Result<()> {
    write_atomic(path.as_ref(), &encode_skl(d)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_sample() -> Dataset {
        let data = Tensor::new(&[3, 2, 2], (0..12).map(|i| i as f64 * 0.5 - 1.0).collect()).unwrap();
        Dataset::new(SkeletonId::Custom, 2, vec![SkeletonSample::new(1, data).unwrap()]).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode_skl(&one_sample()).unwrap();
        assert_eq!(&bytes[..8], &[0x53, 0x4B, 0x4C, 0x31, 1, 0, 0, 0]);
        assert_eq!(&bytes[8..16], &[2, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&bytes[16..32], &[1, 0, 0, 0, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(bytes.len(), 32 + 48);
        assert_eq!(&bytes[32..36], &(-1.0f32).to_le_bytes());
    }

    #[test]
    fn round_trips() {
        let d = one_sample();
        assert_eq!(decode_skl(&encode_skl(&d).unwrap()).unwrap(), d);
        let empty = Dataset::new(SkeletonId::Ntu25, 60, vec![]).unwrap();
        let bytes = encode_skl(&empty).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(decode_skl(&bytes).unwrap(), empty);
    }

    #[test]
    fn corrupt_inputs() {
        let good = encode_skl(&one_sample()).unwrap();
        let offset = |b: &[u8]| match decode_skl(b) {
            Err(Error::Format { offset, .. }) => offset,
            other => panic!("expected format error, got {other:?}"),
        };
        let mut bad = good.clone();
        bad[0] = b'X';
        assert_eq!(offset(&bad), 0);
        let mut bad = good.clone();
        bad[4] = 2;
        assert_eq!(offset(&bad), 4);
        let mut bad = good.clone();
        bad[6] = 9;
        assert_eq!(offset(&bad), 6);
        let mut bad = good.clone();
        bad[7] = 1;
        assert_eq!(offset(&bad), 7);
        assert_eq!(offset(&good[..good.len() - 1]), 32);
        assert_eq!(offset(&good[..3]), 0);
        assert_eq!(offset(&[]), 0);
        let mut long = good.clone();
        long.push(0);
        assert_eq!(offset(&long), good.len());
        let mut bad = good.clone();
        bad[16] = 5; // label 5 of 2 classes
        assert_eq!(offset(&bad), 16);
        let mut bad = good.clone();
        bad[32..36].copy_from_slice(&f32::NAN.to_le_bytes());
        assert_eq!(offset(&bad), 32);
    }

    #[test]
    fn huge_extent_does_not_allocate() {
        let mut bytes = encode_skl(&one_sample()).unwrap();
        bytes[20..24].copy_from_slice(&u32::MAX.to_le_bytes());
        bytes[24..28].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(decode_skl(&bytes), Err(Error::Format { .. })));
    }

    #[test]
    fn overflowing_values_are_rejected_on_encode() {
        let data = Tensor::new(&[1, 1, 1], vec![1e300]).unwrap();
        let d = Dataset::new(SkeletonId::Custom, 2, vec![SkeletonSample::new(0, data).unwrap()]).unwrap();
        assert!(matches!(encode_skl(&d), Err(Error::Input(_))));
    }

    #[test]
    fn wrong_joint_count_for_builtin() {
        let mut d = one_sample();
        d.skeleton = SkeletonId::Ntu25;
        assert!(encode_skl(&d).is_err());
    }
}
