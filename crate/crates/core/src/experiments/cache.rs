//! Dataset cache files.
//!
//! Layout: magic `DLDS`, a little-endian `u32` version, a `u64` header length,
//! the JSON header, a `u64` value count and that many little-endian `f64`s.
//! Each item is written as its input object(s) followed by its target; an
//! object is `[kind, rows, cols, data..]` (graphs add `[d, x..]`).

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::consistent::SizedObject;
use crate::error::{Error, Result};
use crate::experiments::task::{generate, Item, Pool, TaskSpec};
use crate::models::Example;
use crate::tensor::Matrix;

const MAGIC: &[u8; 4] = b"DLDS";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheHeader {
    pub task: TaskSpec,
    pub pool: Pool,
    pub n: usize,
    pub count: usize,
}

fn parse_err(msg: &str) -> Error {
    Error::Parse(format!("dataset cache: {msg}"))
}

fn put_matrix(out: &mut Vec<f64>, m: &Matrix) {
    out.push(m.rows() as f64);
    out.push(m.cols() as f64);
    out.extend_from_slice(m.data());
}

fn put_object(out: &mut Vec<f64>, x: &SizedObject) {
    match x {
        SizedObject::Set(m) => {
            out.push(0.0);
            put_matrix(out, m);
        }
        SizedObject::GraphSignal { adj, x } => {
            out.push(1.0);
            put_matrix(out, adj);
            put_matrix(out, x);
        }
        SizedObject::PointCloud(m) => {
            out.push(2.0);
            put_matrix(out, m);
        }
        SizedObject::Vector(v) => {
            out.push(3.0);
            put_matrix(out, &Matrix::column(v));
        }
    }
}

struct Reader<'a> {
    v: &'a [f64],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, k: usize) -> Result<&[f64]> {
        if self.pos + k > self.v.len() {
            return Err(parse_err("truncated payload"));
        }
        let s = &self.v[self.pos..self.pos + k];
        self.pos += k;
        Ok(s)
    }

    fn usize(&mut self) -> Result<usize> {
        let x = self.take(1)?[0];
        if x < 0.0 || x.fract() != 0.0 || x > 1e12 {
            return Err(parse_err("bad count"));
        }
        Ok(x as usize)
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let r = self.usize()?;
        let c = self.usize()?;
        let data = self.take(r * c)?.to_vec();
        Matrix::from_vec(r, c, data)
    }

    fn object(&mut self) -> Result<SizedObject> {
        match self.usize()? {
            0 => Ok(SizedObject::Set(self.matrix()?)),
            1 => {
                let adj = self.matrix()?;
                let x = self.matrix()?;
                Ok(SizedObject::GraphSignal { adj, x })
            }
            2 => Ok(SizedObject::PointCloud(self.matrix()?)),
            3 => Ok(SizedObject::Vector(self.matrix()?.into_vec())),
            _ => Err(parse_err("unknown object kind")),
        }
    }
}

pub fn encode(header: &CacheHeader, items: &[Item]) -> Result<Vec<u8>> {
    let mut vals = Vec::new();
    for it in items {
        match it {
            Item::Single(ex) => {
                vals.push(0.0);
                put_object(&mut vals, &ex.input);
                put_matrix(&mut vals, &ex.target);
            }
            Item::Pair { a, b, target } => {
                vals.push(1.0);
                put_object(&mut vals, a);
                put_object(&mut vals, b);
                vals.push(*target);
            }
        }
    }
    let h = serde_json::to_vec(header).map_err(|e| parse_err(&e.to_string()))?;
    let mut out = Vec::with_capacity(24 + h.len() + 8 * vals.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(h.len() as u64).to_le_bytes());
    out.extend_from_slice(&h);
    out.extend_from_slice(&(vals.len() as u64).to_le_bytes());
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn u64_at(b: &[u8], pos: usize) -> Result<u64> {
    b.get(pos..pos + 8)
        .map(|s| u64::from_le_bytes(s.try_into().expect("8 bytes")))
        .ok_or_else(|| parse_err("truncated"))
}

pub fn decode(bytes: &[u8]) -> Result<(CacheHeader, Vec<Item>)> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(parse_err("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(parse_err(&format!("unsupported version {version}")));
    }
    let hl = u64_at(bytes, 8)? as usize;
    let hend = 16usize.checked_add(hl).filter(|&e| e <= bytes.len()).ok_or_else(|| parse_err("truncated header"))?;
    let header: CacheHeader = serde_json::from_slice(&bytes[16..hend]).map_err(|e| parse_err(&e.to_string()))?;
    let count = u64_at(bytes, hend)? as usize;
    let body = &bytes[hend + 8..];
    if body.len() != count.saturating_mul(8) {
        return Err(parse_err("payload length mismatch"));
    }
    let vals: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let mut r = Reader { v: &vals, pos: 0 };
    let mut items = Vec::new();
    while r.pos < vals.len() {
        let item = match r.usize()? {
            0 => {
                let input = r.object()?;
                let target = r.matrix()?;
                Item::Single(Example { input, target })
            }
            1 => {
                let a = r.object()?;
                let b = r.object()?;
                let target = r.take(1)?[0];
                Item::Pair { a, b, target }
            }
            _ => return Err(parse_err("unknown item kind")),
        };
        items.push(item);
    }
    Ok((header, items))
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn cache_path(dir: &Path, header: &CacheHeader) -> PathBuf {
    let pool = match header.pool {
        Pool::Train => "train",
        Pool::Eval => "eval",
    };
    dir.join(format!(
        "{}-seed{}-{pool}-n{}-c{}.dlds",
        header.task.task.name(),
        header.task.seed,
        header.n,
        header.count
    ))
}

/// Loads the dataset from `dir` when a cache file with a matching header
/// exists; otherwise generates it and writes the cache. Unreadable or stale
/// files are regenerated.
pub fn load_or_generate(dir: &Path, spec: &TaskSpec, pool: Pool, n: usize, count: usize) -> Result<Vec<Item>> {
    let header = CacheHeader {
        task: spec.clone(),
        pool,
        n,
        count,
    };
    let path = cache_path(dir, &header);
    if let Ok(bytes) = std::fs::read(&path) {
        if let Ok((h, items)) = decode(&bytes) {
            if h == header {
                return Ok(items);
            }
        }
    }
    let items = generate(spec, pool, n, count)?;
    write_atomic(&path, &encode(&header, &items)?)?;
    Ok(items)
}
