//! Binary checkpoint container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic    8 bytes  "SAHGCKPT"
//! version  u32      1
//! meta     u32 length + UTF-8 JSON {"role": .., "config": NetworkConfig}
//! count    u32
//! entry*   u32 name length, name bytes, u32 rank, u64 extents[rank],
//!          f64 values[product(extents)]
//! ```
//!
//! Entry names are the construction paths of the layers, e.g.
//! `stack0.hg.up.bn1.gamma`; running moments are included.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;
use super::hourglass::{HourglassNet, Role};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SAHGCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    role: Role,
    config: NetworkConfig,
}

pub fn encode_checkpoint<T: Scalar>(net: &HourglassNet<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let meta = serde_json::to_vec(&Meta { role: net.role(), config: net.config().clone() }).expect("meta serializes");
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(net.store().len() as u32).to_le_bytes());
    for (_, name, t) in net.store().iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.values() {
            out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or("truncated")?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> std::result::Result<HourglassNet<T>, String> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err("bad magic".into());
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let meta_len = r.u32()? as usize;
    let meta: Meta = serde_json::from_slice(r.take(meta_len)?).map_err(|e| format!("metadata: {e}"))?;
    let mut rng = RngStream::new(0);
    let mut net = match meta.role {
        Role::Generator => super::build_generator(&meta.config, &mut rng),
        Role::Discriminator => super::build_discriminator(&meta.config, &mut rng),
    }
    .map_err(|e| e.to_string())?;
    let count = r.u32()? as usize;
    if count != net.store().len() {
        return Err(format!("{count} entries, network has {}", net.store().len()));
    }
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?).map_err(|e| e.to_string())?.to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
        let id = net.store().find(&name).ok_or_else(|| format!("unknown entry {name}"))?;
        if net.store().get(id).shape() != shape.as_slice() {
            return Err(format!("entry {name} has shape {shape:?}, expected {:?}", net.store().get(id).shape()));
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(8).ok_or("overflow")?)?;
        let dst = net.store_mut().get_mut(id).values_mut();
        for (d, chunk) in dst.iter_mut().zip(raw.chunks_exact(8)) {
            *d = T::of(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
    }
    if r.pos != bytes.len() {
        return Err("trailing bytes".into());
    }
    Ok(net)
}

pub fn save_checkpoint<T: Scalar>(path: &Path, net: &HourglassNet<T>) -> Result<()> {
    fs::write(path, encode_checkpoint(net)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<HourglassNet<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|detail| Error::Format { what: "checkpoint", path: path.to_path_buf(), detail })
}
