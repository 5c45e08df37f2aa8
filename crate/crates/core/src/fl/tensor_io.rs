//! Flat binary tensors for swapping in external datasets.
//!
//! Layout, all little-endian: the magic `MTFT`, a `u8` dtype tag (0 = f32,
//! 1 = u32), a `u32` rank, one `u64` per dimension, then the row-major body.
//! A dataset is a rank-2 f32 feature tensor plus a rank-1 u32 label tensor.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::model::Dataset;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MTFT";

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    U32(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    fn numel(dims: &[usize]) -> Option<usize> {
        dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        let (tag, len) = match &self.data {
            TensorData::F32(v) => (0u8, v.len()),
            TensorData::U32(v) => (1u8, v.len()),
        };
        if Self::numel(&self.dims) != Some(len) {
            return Err(Error::Format(format!("dims {:?} do not match {len} elements", self.dims)));
        }
        let mut buf = Vec::with_capacity(9 + 8 * self.dims.len() + 4 * len);
        buf.extend_from_slice(MAGIC);
        buf.push(tag);
        buf.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
            TensorData::U32(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut input: impl Read) -> Result<Tensor> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Format("missing MTFT magic".into()));
        }
        let tag = cur.take(1)?[0];
        let rank = u32::from_le_bytes(cur.array()?) as usize;
        let dims = (0..rank)
            .map(|_| usize::try_from(u64::from_le_bytes(cur.array()?)).map_err(|_| Error::Format("dimension overflow".into())))
            .collect::<Result<Vec<_>>>()?;
        let n = Self::numel(&dims).ok_or_else(|| Error::Format("element count overflow".into()))?;
        if bytes.len() - cur.pos != 4 * n {
            return Err(Error::Format(format!("body holds {} bytes, dims need {}", bytes.len() - cur.pos, 4 * n)));
        }
        let body = bytes[cur.pos..].chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]);
        let data = match tag {
            0 => TensorData::F32(body.map(f32::from_le_bytes).collect()),
            1 => TensorData::U32(body.map(u32::from_le_bytes).collect()),
            t => return Err(Error::Format(format!("unknown dtype tag {t}"))),
        };
        Ok(Tensor { dims, data })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("truncated header".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("take returns N bytes"))
    }
}

/// Writes `data` as `<stem>.x.mtft` and `<stem>.y.mtft`. Features are
/// narrowed to f32.
pub fn save_dataset(data: &Dataset, dir: &Path, stem: &str) -> Result<()> {
    let x = Tensor { dims: vec![data.len(), data.dim], data: TensorData::F32(data.x.iter().map(|&v| v as f32).collect()) };
    let y = Tensor { dims: vec![data.len()], data: TensorData::U32(data.y.iter().map(|&v| v as u32).collect()) };
    x.write_to(fs::File::create(dir.join(format!("{stem}.x.mtft")))?)?;
    y.write_to(fs::File::create(dir.join(format!("{stem}.y.mtft")))?)?;
    Ok(())
}

/// Reads a dataset written by [`save_dataset`], checking labels against
/// `classes`.
pub fn load_dataset(dir: &Path, stem: &str, classes: usize) -> Result<Dataset> {
    let x = Tensor::read_from(fs::File::open(dir.join(format!("{stem}.x.mtft")))?)?;
    let y = Tensor::read_from(fs::File::open(dir.join(format!("{stem}.y.mtft")))?)?;
    let (TensorData::F32(xv), [n, dim]) = (x.data, x.dims.as_slice()) else {
        return Err(Error::Format("features must be a rank-2 f32 tensor".into()));
    };
    let (TensorData::U32(yv), [m]) = (y.data, y.dims.as_slice()) else {
        return Err(Error::Format("labels must be a rank-1 u32 tensor".into()));
    };
    if n != m {
        return Err(Error::Format(format!("{n} feature rows but {m} labels")));
    }
    if let Some(bad) = yv.iter().find(|&&c| c as usize >= classes) {
        return Err(Error::Format(format!("label {bad} out of range for {classes} classes")));
    }
    Ok(Dataset { dim: *dim, x: xv.into_iter().map(f64::from).collect(), y: yv.into_iter().map(|c| c as usize).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_round_trip() {
        let t = Tensor { dims: vec![2, 3], data: TensorData::F32(vec![1.0, -2.5, 3.0, 0.0, 1e-3, 7.0]) };
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"MTFT");
        assert_eq!(buf.len(), 4 + 1 + 4 + 16 + 24);
        assert_eq!(Tensor::read_from(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn rejects_corrupt_input() {
        let t = Tensor { dims: vec![3], data: TensorData::U32(vec![1, 2, 3]) };
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        assert!(Tensor::read_from(&buf[..buf.len() - 1]).is_err());
        assert!(Tensor::read_from(&buf[..7]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(Tensor::read_from(bad.as_slice()).is_err());
        let mismatched = Tensor { dims: vec![4], data: TensorData::U32(vec![1]) };
        assert!(mismatched.write_to(Vec::new()).is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = Dataset { dim: 2, x: vec![0.5, -1.0, 2.0, 0.25], y: vec![1, 0] };
        save_dataset(&d, dir.path(), "val").unwrap();
        assert_eq!(load_dataset(dir.path(), "val", 2).unwrap(), d);
        assert!(load_dataset(dir.path(), "val", 1).is_err());
    }
}
