//! Binary checkpoint format: magic `FFTGANCK`, `u32` version, `u64` entry
//! count, then per entry a `u32` name length, UTF-8 name, `u32` rank, `u64`
//! extents and little-endian `f64` values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::optim::Adam;
use crate::layers::Conv2d;
use crate::norms::SnState;
use crate::tensor::ParamSet;

pub const MAGIC: &[u8; 8] = b"FFTGANCK";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Named arrays in a deterministic (sorted) order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub entries: BTreeMap<String, Entry>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| bad("truncated file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl Checkpoint {
    pub fn insert(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<f64>) {
        self.entries.insert(
            name.into(),
            Entry {
                shape: shape.to_vec(),
                data,
            },
        );
    }

    pub fn insert_scalar(&mut self, name: impl Into<String>, v: f64) {
        self.insert(name, &[1], vec![v]);
    }

    pub fn get(&self, name: &str) -> Result<&Entry> {
        self.entries
            .get(name)
            .ok_or_else(|| bad(format!("missing entry {name:?}")))
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let e = self.get(name)?;
        e.data.first().copied().ok_or_else(|| bad(format!("empty entry {name:?}")))
    }

    pub fn store_params(&mut self, params: &ParamSet) {
        for p in params.iter() {
            self.insert(p.name(), &p.shape(), p.tensor().to_vec());
        }
    }

    /// Overwrites every parameter in `params` from its same-named entry.
    pub fn restore_params(&self, params: &ParamSet) -> Result<()> {
        for p in params.iter() {
            let e = self.get(p.name())?;
            if e.shape != p.shape() {
                return Err(bad(format!("{}: stored shape {:?}, model expects {:?}", p.name(), e.shape, p.shape())));
            }
            p.set_data(e.data.clone())?;
        }
        Ok(())
    }

    pub fn store_spectral(&mut self, convs: &[&Conv2d]) {
        for sn in convs.iter().filter_map(|c| c.spectral()) {
            let st = sn.state();
            self.insert(format!("{}.sn_u", st.owner), &[st.u.len()], st.u.clone());
            self.insert(format!("{}.sn_v", st.owner), &[st.v.len()], st.v.clone());
            self.insert_scalar(format!("{}.sn_sigma", st.owner), st.sigma);
        }
    }

    pub fn restore_spectral(&self, convs: &[&Conv2d]) -> Result<()> {
        for sn in convs.iter().filter_map(|c| c.spectral()) {
            let owner = sn.state().owner;
            let u = self.get(&format!("{owner}.sn_u"))?.data.clone();
            let v = self.get(&format!("{owner}.sn_v"))?.data.clone();
            let sigma = self.scalar(&format!("{owner}.sn_sigma"))?;
            let old = sn.state();
            if u.len() != old.u.len() || v.len() != old.v.len() {
                return Err(bad(format!("{owner}: power-iteration vector size mismatch")));
            }
            sn.set_state(SnState { owner, u, v, sigma });
        }
        Ok(())
    }

    pub fn store_adam(&mut self, prefix: &str, adam: &Adam) {
        self.insert_scalar(format!("adam.{prefix}.t"), adam.step as f64);
        for (name, (m, v)) in &adam.moments {
            self.insert(format!("adam.{prefix}.m.{name}"), &[m.len()], m.clone());
            self.insert(format!("adam.{prefix}.v.{name}"), &[v.len()], v.clone());
        }
    }

    pub fn restore_adam(&self, prefix: &str, adam: &mut Adam) -> Result<()> {
        adam.step = self.scalar(&format!("adam.{prefix}.t"))? as u64;
        adam.moments.clear();
        let m_prefix = format!("adam.{prefix}.m.");
        for (key, m) in self.entries.range(m_prefix.clone()..) {
            let Some(name) = key.strip_prefix(&m_prefix) else { break };
            let v = self.get(&format!("adam.{prefix}.v.{name}"))?;
            adam.moments.insert(name.to_string(), (m.data.clone(), v.data.clone()));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for (name, e) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
            for &d in &e.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &e.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let count = r.u64()?;
        let mut ck = Checkpoint::default();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| bad("entry name is not UTF-8"))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape: Vec<usize> = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<_>>()?;
            let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| bad("extent overflow"))?;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| bad("extent overflow"))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            ck.entries.insert(name, Entry { shape, data });
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}
