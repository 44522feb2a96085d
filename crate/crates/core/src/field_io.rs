//! Binary container for [`ValueField`] plus a JSON metadata sidecar.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic      4 bytes   b"HJVF"
//! version    u32       1
//! axes       u32       d
//! per axis   f64 lo, f64 hi, u64 n
//! stamps     u64       m
//! times      m x f64
//! slices     m x prod(n) x f64, row-major with the last axis fastest
//! ```
//!
//! The sidecar sits next to the container as `<path>.json`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ValueField};

pub const MAGIC: &[u8; 4] = b"HJVF";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    /// What the field holds, e.g. `"safety"` or `"performance"`.
    pub kind: String,
    pub config_hash: String,
    pub grid: GridSpec,
    pub time_count: usize,
    pub t_first: f64,
    pub t_last: f64,
    pub layout: String,
    /// Flat indices of nodes whose values are not backed by a safe state.
    #[serde(default)]
    pub unreliable_nodes: Vec<usize>,
    #[serde(default)]
    pub solve_seconds: f64,
}

impl FieldMeta {
    pub fn describe(field: &ValueField, kind: &str, config_hash: &str) -> Self {
        Self {
            kind: kind.to_string(),
            config_hash: config_hash.to_string(),
            grid: field.grid().clone(),
            time_count: field.times().len(),
            t_first: field.t_first(),
            t_last: field.t_last(),
            layout: "row-major, axis order (x1, x2, ...), last axis fastest; f64 little-endian"
                .to_string(),
            unreliable_nodes: Vec::new(),
            solve_seconds: 0.0,
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn encode(field: &ValueField) -> Vec<u8> {
    let g = field.grid();
    let mut buf = Vec::with_capacity(16 + 24 * g.dim() + 8 * field.times().len() * (g.len() + 1));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    for i in 0..g.dim() {
        buf.extend_from_slice(&g.lo()[i].to_le_bytes());
        buf.extend_from_slice(&g.hi()[i].to_le_bytes());
        buf.extend_from_slice(&(g.n()[i] as u64).to_le_bytes());
    }
    buf.extend_from_slice(&(field.times().len() as u64).to_le_bytes());
    for t in field.times() {
        buf.extend_from_slice(&t.to_le_bytes());
    }
    for s in field.slices() {
        for v in s {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Format(format!("truncated container at byte {}", self.pos)))?;
        self.pos = end;
        Ok(chunk.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        self.take::<4>().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64> {
        self.take::<8>().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64> {
        self.take::<8>().map(f64::from_le_bytes)
    }
}

pub fn decode(bytes: &[u8]) -> Result<ValueField> {
    let mut c = Cursor { bytes, pos: 0 };
    if &c.take::<4>()? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let d = c.u32()? as usize;
    if d == 0 || d > 16 {
        return Err(Error::Format(format!("implausible axis count {d}")));
    }
    let (mut lo, mut hi, mut n) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..d {
        lo.push(c.f64()?);
        hi.push(c.f64()?);
        n.push(c.u64()? as usize);
    }
    let grid = GridSpec::new(lo, hi, n).map_err(|e| Error::Format(e.to_string()))?;
    let m = c.u64()? as usize;
    let expected = 8usize
        .checked_mul(m)
        .and_then(|b| b.checked_mul(grid.len() + 1))
        .ok_or_else(|| Error::Format("payload size overflows".into()))?;
    if bytes.len() - c.pos != expected {
        return Err(Error::Format(format!(
            "payload is {} bytes, header implies {expected}",
            bytes.len() - c.pos
        )));
    }
    let times = (0..m).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let mut slices = Vec::with_capacity(m);
    for _ in 0..m {
        slices.push((0..grid.len()).map(|_| c.f64()).collect::<Result<Vec<_>>>()?);
    }
    ValueField::new(grid, times, slices)
}

pub fn write_field(path: &Path, field: &ValueField, meta: &FieldMeta) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode(field))?;
    w.flush()?;
    let side = BufWriter::new(File::create(sidecar_path(path))?);
    serde_json::to_writer_pretty(side, meta)?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<(ValueField, FieldMeta)> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let field = decode(&bytes)?;
    let meta: FieldMeta = serde_json::from_reader(BufReader::new(File::open(sidecar_path(path))?))?;
    if meta.grid != *field.grid() || meta.time_count != field.times().len() {
        return Err(Error::Format(format!(
            "sidecar {} does not describe the container",
            sidecar_path(path).display()
        )));
    }
    Ok((field, meta))
}
