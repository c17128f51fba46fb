//! Binary parameter snapshots.
//!
//! Layout: the header line `GGFCKPT v1\n`, then one record per parameter,
//! `name \t rank \t dim ... \t` followed by the row-major little-endian `f32`
//! values, and finally the CRC32 of everything after the header as a
//! little-endian `u32`.

use std::io::{self, Write};

use thiserror::Error;

use super::Tensor;

pub const HEADER: &[u8] = b"GGFCKPT v1\n";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad header)")]
    BadHeader,
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CheckpointError {
    /// Damaged files, as opposed to I/O failures.
    pub fn is_corrupt(&self) -> bool {
        !matches!(self, CheckpointError::Io(_))
    }
}

/// Serializes named tensors.
pub fn encode(params: &[(String, Tensor<f32>)]) -> Vec<u8> {
    let mut payload = Vec::new();
    for (name, t) in params {
        assert!(
            !name.contains(['\t', '\n']),
            "parameter names cannot contain tabs or newlines"
        );
        payload.extend_from_slice(name.as_bytes());
        payload.push(b'\t');
        payload.extend_from_slice(t.rank().to_string().as_bytes());
        payload.push(b'\t');
        for d in t.shape() {
            payload.extend_from_slice(d.to_string().as_bytes());
            payload.push(b'\t');
        }
        for x in t.data() {
            payload.extend_from_slice(&x.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&payload);
    let mut out = Vec::with_capacity(HEADER.len() + payload.len() + 4);
    out.extend_from_slice(HEADER);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn write_to<W: Write>(w: &mut W, params: &[(String, Tensor<f32>)]) -> io::Result<()> {
    w.write_all(&encode(params))
}

/// Parses a checkpoint, verifying the header and checksum first.
pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Tensor<f32>)>, CheckpointError> {
    if bytes.len() < HEADER.len() {
        return Err(if HEADER.starts_with(bytes) {
            CheckpointError::Truncated
        } else {
            CheckpointError::BadHeader
        });
    }
    if &bytes[..HEADER.len()] != HEADER {
        return Err(CheckpointError::BadHeader);
    }
    let body = &bytes[HEADER.len()..];
    if body.len() < 4 {
        return Err(CheckpointError::Truncated);
    }
    let (payload, tail) = body.split_at(body.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(CheckpointError::CrcMismatch { stored, computed });
    }

    let mut cur = Cursor { buf: payload, pos: 0 };
    let mut out = Vec::new();
    while !cur.done() {
        let name = cur.field()?.to_string();
        let rank: usize = cur.number()?;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.number()?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| CheckpointError::Malformed(format!("{name}: shape overflow")))?;
        let raw = cur.take(n.checked_mul(4).ok_or(CheckpointError::Truncated)?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        out.push((name, t));
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn done(&self) -> bool {
        self.pos >= self.buf.len()
    }

    fn field(&mut self) -> Result<&'a str, CheckpointError> {
        let rest = &self.buf[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\t')
            .ok_or(CheckpointError::Truncated)?;
        self.pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| CheckpointError::Malformed("non-UTF-8 field".into()))
    }

    fn number(&mut self) -> Result<usize, CheckpointError> {
        let f = self.field()?;
        f.parse()
            .map_err(|_| CheckpointError::Malformed(format!("expected a number, got {f:?}")))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Truncated);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<(String, Tensor<f32>)> {
        vec![
            (
                "gen.l0.w".into(),
                Tensor::new(vec![2, 3], vec![1.0, -2.0, 0.5, 3.25, 0.0, -0.0]).unwrap(),
            ),
            ("gen.l0.b".into(), Tensor::new(vec![3], vec![0.1, 0.2, 0.3]).unwrap()),
            ("s".into(), Tensor::scalar(7.0)),
        ]
    }

    #[test]
    fn round_trip_is_exact() {
        let bytes = encode(&sample());
        assert!(bytes.starts_with(b"GGFCKPT v1\n"));
        let back = decode(&bytes).unwrap();
        assert_eq!(back, sample());
    }

    #[test]
    fn record_layout() {
        let bytes = encode(&[("w".into(), Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap())]);
        let mut expected = HEADER.to_vec();
        expected.extend_from_slice(b"w\t2\t1\t2\t");
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&2.0f32.to_le_bytes());
        let crc = crc32fast::hash(&expected[HEADER.len()..]);
        expected.extend_from_slice(&crc.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn damage_is_detected() {
        let bytes = encode(&sample());
        for cut in [0, 5, HEADER.len(), bytes.len() / 2, bytes.len() - 1] {
            let err = decode(&bytes[..cut]).unwrap_err();
            assert!(err.is_corrupt(), "cut {cut}: {err}");
        }
        let mut flipped = bytes.clone();
        flipped[HEADER.len() + 3] ^= 1;
        assert!(matches!(decode(&flipped), Err(CheckpointError::CrcMismatch { .. })));
        assert!(matches!(decode(b"hello world!!"), Err(CheckpointError::BadHeader)));
    }
}
