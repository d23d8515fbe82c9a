//! Binary checkpoint format.
//!
//! ```text
//! magic      8 bytes  "SENNCKPT"
//! version    u32
//! meta_len   u32, then meta_len bytes of UTF-8 `key=value` lines
//! n_records  u32
//! record     name_len u32, name bytes, rank u32, rank × u64 dims,
//!            product(dims) × f64
//! ```
//!
//! Every integer and float is little-endian.

use std::io::{Read, Write};

use super::params::ParamStore;
use super::NnError;
use crate::autodiff::Tensor;

pub const MAGIC: &[u8; 8] = b"SENNCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub metadata: Vec<(String, String)>,
    pub records: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore) -> Self {
        Self {
            metadata: Vec::new(),
            records: store
                .iter()
                .map(|p| (p.name.clone(), p.value.clone()))
                .collect(),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn record(&self, name: &str) -> Option<&Tensor> {
        self.records.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Copies matching records into `store`. Every parameter must be present
    /// with the same shape; extra records are ignored.
    pub fn load_into(&self, store: &mut ParamStore) -> Result<(), NnError> {
        for p in store.iter_mut() {
            let t = self
                .record(&p.name)
                .ok_or_else(|| NnError::MissingRecord(p.name.clone()))?;
            if t.shape() != p.value.shape() {
                return Err(NnError::ParamShape {
                    name: p.name.clone(),
                    expected: p.value.shape().to_vec(),
                    got: t.shape().to_vec(),
                });
            }
            p.value = t.clone();
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), NnError> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        let mut meta = String::new();
        for (k, v) in &self.metadata {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(NnError::Format(format!("metadata entry {k:?} not encodable")));
            }
            meta.push_str(k);
            meta.push('=');
            meta.push_str(v);
            meta.push('\n');
        }
        write_u32(&mut w, meta.len())?;
        w.write_all(meta.as_bytes())?;
        write_u32(&mut w, self.records.len())?;
        for (name, t) in &self.records {
            write_u32(&mut w, name.len())?;
            w.write_all(name.as_bytes())?;
            write_u32(&mut w, t.rank())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, NnError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NnError::Format("not a checkpoint file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(NnError::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let meta_len = read_u32(&mut r)? as usize;
        let mut meta = vec![0u8; meta_len];
        r.read_exact(&mut meta)?;
        let meta = String::from_utf8(meta)
            .map_err(|_| NnError::Format("metadata is not UTF-8".into()))?;
        let metadata = meta
            .lines()
            .map(|line| {
                line.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| NnError::Format(format!("bad metadata line {line:?}")))
            })
            .collect::<Result<_, _>>()?;

        let n = read_u32(&mut r)? as usize;
        let mut records = Vec::with_capacity(n);
        for _ in 0..n {
            let len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| NnError::Format("record name is not UTF-8".into()))?;
            let rank = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let count: usize = shape.iter().product();
            let mut data = Vec::with_capacity(count);
            for _ in 0..count {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            records.push((name, Tensor::new(shape, data)?));
        }
        Ok(Self { metadata, records })
    }
}

fn write_u32<W: Write>(w: &mut W, v: usize) -> Result<(), NnError> {
    let v = u32::try_from(v).map_err(|_| NnError::Format("length exceeds u32".into()))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
