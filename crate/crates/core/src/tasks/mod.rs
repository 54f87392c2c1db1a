//! Benchmark workloads: pie-shaped headers and binarised MNIST, both as
//! balanced one-vs-all batches.

pub mod header;
pub mod mnist;

use std::io::{Read, Write};

pub use header::{make_header_batch, render_header, HeaderSpec};
pub use mnist::{binarize, load_mnist, make_onevsall_batch, MnistDataset, MnistSplits, Split};

use crate::error::{check_len, Error, Result};
use crate::optimizer::positive_labels;
use crate::substrate::InputPattern;

/// Input patterns with their training targets and raw class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    pub patterns: Vec<InputPattern>,
    pub targets: Vec<f64>,
    pub labels: Vec<i64>,
}

impl LabeledBatch {
    pub fn new(patterns: Vec<InputPattern>, targets: Vec<f64>, labels: Vec<i64>) -> Result<Self> {
        check_len("LabeledBatch targets", patterns.len(), targets.len())?;
        check_len("LabeledBatch labels", patterns.len(), labels.len())?;
        if let Some(first) = patterns.first() {
            let side = first.side();
            if let Some(p) = patterns.iter().find(|p| p.side() != side) {
                return Err(Error::Shape {
                    context: "LabeledBatch patterns",
                    expected: side,
                    actual: p.side(),
                });
            }
        }
        Ok(Self {
            patterns,
            targets,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn positives(&self) -> usize {
        positive_labels(&self.targets)
            .iter()
            .filter(|&&p| p)
            .count()
    }

    /// Binary container:
    ///
    /// ```text
    /// "LBAT"          4 bytes
    /// version         u32 LE (1)
    /// N               u64 LE
    /// d               u32 LE
    /// patterns        N * ceil(d*d / 8) bytes, row-major bits, MSB first
    /// targets         N * f64 LE
    /// ```
    ///
    /// Class labels are not stored; reading yields 1 for positives, 0 otherwise.
    pub fn write_container<W: Write>(&self, mut w: W) -> Result<()> {
        let side = self.patterns.first().map_or(0, InputPattern::side);
        w.write_all(CONTAINER_MAGIC)?;
        w.write_all(&CONTAINER_VERSION.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&(side as u32).to_le_bytes())?;
        let bytes_per = (side * side).div_ceil(8);
        for p in &self.patterns {
            let mut packed = vec![0u8; bytes_per];
            for (i, &on) in p.pixels().iter().enumerate() {
                if on {
                    packed[i / 8] |= 0x80 >> (i % 8);
                }
            }
            w.write_all(&packed)?;
        }
        for t in &self.targets {
            w.write_all(&t.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_container<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != CONTAINER_MAGIC {
            return Err(Error::Format("not a batch container (bad magic)".into()));
        }
        let version = read_u32_le(&mut r)?;
        if version != CONTAINER_VERSION {
            return Err(Error::Format(format!(
                "unsupported container version {version}"
            )));
        }
        let mut n8 = [0u8; 8];
        r.read_exact(&mut n8).map_err(truncated)?;
        let n = u64::from_le_bytes(n8) as usize;
        let side = read_u32_le(&mut r)? as usize;
        let bytes_per = (side * side).div_ceil(8);
        let mut patterns = Vec::with_capacity(n);
        let mut packed = vec![0u8; bytes_per];
        for _ in 0..n {
            r.read_exact(&mut packed).map_err(truncated)?;
            let pixels = (0..side * side)
                .map(|i| packed[i / 8] & (0x80 >> (i % 8)) != 0)
                .collect();
            patterns.push(InputPattern::new(side, pixels)?);
        }
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(truncated)?;
            targets.push(f64::from_le_bytes(b));
        }
        let labels = positive_labels(&targets)
            .iter()
            .map(|&p| i64::from(p))
            .collect();
        Self::new(patterns, targets, labels)
    }
}

const CONTAINER_MAGIC: &[u8; 4] = b"LBAT";
const CONTAINER_VERSION: u32 = 1;

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated file".into())
    } else {
        Error::Io(e)
    }
}

fn read_u32_le<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trip() {
        let batch = make_header_batch(3, 9, 2, 10, 4, (0.0, 1.0)).unwrap();
        let mut buf = Vec::new();
        batch.write_container(&mut buf).unwrap();
        let bytes_per = (81usize).div_ceil(8);
        assert_eq!(buf.len(), 4 + 4 + 8 + 4 + 10 * bytes_per + 10 * 8);
        let back = LabeledBatch::read_container(buf.as_slice()).unwrap();
        assert_eq!(back.patterns, batch.patterns);
        assert_eq!(back.targets, batch.targets);
        assert_eq!(back.positives(), 5);
    }

    #[test]
    fn container_rejects_garbage() {
        assert!(matches!(
            LabeledBatch::read_container(&b"NOPE0000"[..]),
            Err(Error::Format(_))
        ));
        let batch = make_header_batch(3, 9, 2, 4, 4, (0.0, 1.0)).unwrap();
        let mut buf = Vec::new();
        batch.write_container(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(
            LabeledBatch::read_container(buf.as_slice()),
            Err(Error::Format(_))
        ));
    }
}
