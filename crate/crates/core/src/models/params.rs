use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tensor::{Matrix, RngStream};

const MAGIC: &[u8; 4] = b"DLPS";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Named, shaped parameters stored in one flat vector, with a gradient slot
/// per value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
    values: Vec<f64>,
    grads: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct JsonEntry {
    name: String,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `name` with the given row-major values; returns its offset.
    pub fn add(&mut self, name: &str, rows: usize, cols: usize, values: Vec<f64>) -> Result<usize> {
        if rows == 0 || cols == 0 {
            return Err(invalid(format!("parameter {name} has an empty shape")));
        }
        if values.len() != rows * cols {
            return Err(invalid(format!("parameter {name}: {} values for shape {rows}x{cols}", values.len())));
        }
        if self.index.contains_key(name) {
            return Err(invalid(format!("duplicate parameter name {name}")));
        }
        let offset = self.values.len();
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            rows,
            cols,
            offset,
        });
        self.values.extend(values);
        self.grads.resize(self.values.len(), 0.0);
        Ok(offset)
    }

    /// Registers `name` with entries drawn from `U[-bound, bound]`.
    pub fn add_uniform(&mut self, name: &str, rows: usize, cols: usize, bound: f64, rng: &mut RngStream) -> Result<usize> {
        let vals = (0..rows * cols).map(|_| rng.uniform_range(-bound, bound)).collect();
        self.add(name, rows, cols, vals)
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.index.get(name).map(|&i| &self.entries[i])
    }

    fn require(&self, name: &str) -> Result<&ParamEntry> {
        self.entry(name).ok_or_else(|| invalid(format!("unknown parameter {name}")))
    }

    pub fn matrix(&self, name: &str) -> Result<Matrix> {
        let e = self.require(name)?;
        Matrix::from_vec(e.rows, e.cols, self.values[e.offset..e.offset + e.len()].to_vec())
    }

    pub fn set(&mut self, name: &str, m: &Matrix) -> Result<()> {
        let e = self.require(name)?.clone();
        if m.shape() != (e.rows, e.cols) {
            return Err(invalid(format!(
                "parameter {name} has shape {}x{}, got {}x{}",
                e.rows,
                e.cols,
                m.rows(),
                m.cols()
            )));
        }
        self.values[e.offset..e.offset + e.len()].copy_from_slice(m.data());
        Ok(())
    }

    /// Zeroes every parameter whose name is not accepted by `keep`.
    pub fn zero_except(&mut self, keep: impl Fn(&str) -> bool) {
        for e in &self.entries {
            if !keep(&e.name) {
                self.values[e.offset..e.offset + e.len()].iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut [f64] {
        &mut self.grads
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Replaces all values, keeping names and shapes.
    pub fn load_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(invalid(format!("expected {} values, got {}", self.values.len(), values.len())));
        }
        self.values.copy_from_slice(values);
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.values.len() * 8 + self.entries.len() * 32);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.extend_from_slice(&(e.rows as u32).to_le_bytes());
            out.extend_from_slice(&(e.cols as u32).to_le_bytes());
            for v in &self.values[e.offset..e.offset + e.len()] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Parse("not a parameter file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Parse(format!("unsupported parameter file version {version}")));
        }
        let count = r.u32()?;
        let mut store = Self::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Parse("parameter name is not UTF-8".into()))?
                .to_string();
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let payload = r.take(rows.checked_mul(cols).and_then(|c| c.checked_mul(8)).ok_or_else(|| {
                Error::Parse(format!("parameter {name} shape overflows"))
            })?)?;
            let vals = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            store.add(&name, rows, cols, vals).map_err(|e| Error::Parse(e.to_string()))?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Parse("trailing bytes after parameter payload".into()));
        }
        Ok(store)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let entries: Vec<JsonEntry> = self
            .entries
            .iter()
            .map(|e| JsonEntry {
                name: e.name.clone(),
                rows: e.rows,
                cols: e.cols,
                values: self.values[e.offset..e.offset + e.len()].to_vec(),
            })
            .collect();
        serde_json::json!({ "format": "dimlift-params", "version": VERSION, "entries": entries })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let entries: Vec<JsonEntry> = serde_json::from_value(v.get("entries").cloned().unwrap_or_default())
            .map_err(|e| Error::Parse(format!("parameter JSON: {e}")))?;
        let mut store = Self::new();
        for e in entries {
            store.add(&e.name, e.rows, e.cols, e.values)?;
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::cli::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Parse("parameter file truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", 2, 3, vec![1.0, -2.0, 3.5, 0.0, 1e-300, f64::MAX]).unwrap();
        s.add("b", 1, 1, vec![-0.25]).unwrap();
        s
    }

    #[test]
    fn binary_round_trip() {
        let s = sample();
        let bytes = s.to_bytes();
        assert_eq!(&bytes[..4], b"DLPS");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let back = ParamStore::from_bytes(&bytes).unwrap();
        assert_eq!(back, s);
        assert!(ParamStore::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(ParamStore::from_bytes(&bad).is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = sample();
        assert_eq!(ParamStore::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn names_unique_and_shapes_checked() {
        let mut s = sample();
        assert!(s.add("w", 1, 1, vec![0.0]).is_err());
        assert!(s.add("z", 2, 2, vec![0.0]).is_err());
        assert!(s.set("b", &Matrix::zeros(2, 1)).is_err());
        s.set("b", &Matrix::filled(1, 1, 4.0)).unwrap();
        assert_eq!(s.matrix("b").unwrap()[(0, 0)], 4.0);
        assert_eq!(s.len(), s.grads().len());
    }
}
