//! Binary parameter container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "ISIGNNCK"
//! version    u32      FORMAT_VERSION
//! count      u32      number of entries
//! per entry:
//!   name_len u32, name (UTF-8)
//!   rank     u32, dims u64 × rank
//!   payload  f64 × Π dims, row-major
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::tape::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"ISIGNNCK";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_tensors<W: Write>(mut w: W, entries: &[(String, Tensor)]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (name, t) in entries {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&2u32.to_le_bytes())?;
        w.write_all(&(t.nrows() as u64).to_le_bytes())?;
        w.write_all(&(t.ncols() as u64).to_le_bytes())?;
        for v in t.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| Error::Checkpoint(format!("truncated header: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| Error::Checkpoint(format!("truncated dims: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

/// Reads every entry; tensors of rank 0 or 1 come back as single rows.
pub fn read_tensors<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("file too short for magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|e| Error::Checkpoint(format!("truncated name: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("name is not UTF-8".into()))?;
        let rank = read_u32(&mut r)? as usize;
        let dims = (0..rank).map(|_| read_u64(&mut r)).collect::<Result<Vec<_>>>()?;
        let (rows, cols) = match dims.as_slice() {
            [] => (1, 1),
            [n] => (1, *n as usize),
            [a, b] => (*a as usize, *b as usize),
            _ => return Err(Error::Checkpoint(format!("`{name}` has rank {rank} > 2"))),
        };
        let mut data = Vec::with_capacity(rows * cols);
        let mut buf = [0u8; 8];
        for _ in 0..rows * cols {
            r.read_exact(&mut buf)
                .map_err(|e| Error::Checkpoint(format!("truncated payload of `{name}`: {e}")))?;
            data.push(f64::from_le_bytes(buf));
        }
        let t = Array2::from_shape_vec((rows, cols), data).expect("sizes agree");
        out.push((name, t));
    }
    Ok(out)
}

pub fn save(path: &Path, entries: &[(String, Tensor)]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_tensors(std::io::BufWriter::new(f), entries)
}

pub fn load(path: &Path) -> Result<BTreeMap<String, Tensor>> {
    let f = std::fs::File::open(path)?;
    Ok(read_tensors(std::io::BufReader::new(f))?.into_iter().collect())
}
