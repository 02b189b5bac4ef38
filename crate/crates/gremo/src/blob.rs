//! Binary container for named f32 tensors.
//!
//! Layout: magic "GMW1", then per tensor a u32 name length, the UTF-8 name,
//! a u32 rank, u32 extents, and the values as little-endian f32 in row-major
//! order. Values are widened to f64 on read.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::io::{ErrorKind, Read};
use std::path::Path;

pub(crate) const MAGIC: &[u8; 4] = b"GMW1";

const MAX_NAME_LEN: u32 = 4096;
const MAX_RANK: u32 = 8;

pub(crate) fn write_tensors(path: &Path, entries: &[(String, &Tensor)]) -> Result<()> {
    let mut buf: Vec<u8> = Vec::with_capacity(64);
    buf.extend_from_slice(MAGIC);
    for (name, tensor) in entries {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
        for &d in tensor.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in tensor.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_tensors(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = std::io::BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::ModelFormat(format!("{}: too short for a weights blob", path.display())))?;
    if &magic != MAGIC {
        return Err(Error::ModelFormat(format!(
            "{}: bad magic {:?}, expected {:?}",
            path.display(),
            magic,
            MAGIC
        )));
    }
    let truncated = || {
        Error::WeightsMismatch(format!(
            "{}: blob is truncated mid-tensor",
            path.display()
        ))
    };
    let mut entries = Vec::new();
    loop {
        // a clean EOF is only valid at a tensor boundary
        let mut len_bytes = [0u8; 4];
        match r.read_exact(&mut len_bytes) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(Error::io(path, e)),
        }
        let name_len = u32::from_le_bytes(len_bytes);
        if name_len == 0 || name_len > MAX_NAME_LEN {
            return Err(Error::WeightsMismatch(format!(
                "{}: implausible tensor name length {name_len}",
                path.display()
            )));
        }
        let mut name_bytes = vec![0u8; name_len as usize];
        r.read_exact(&mut name_bytes).map_err(|_| truncated())?;
        let name = String::from_utf8(name_bytes).map_err(|_| {
            Error::WeightsMismatch(format!("{}: tensor name is not UTF-8", path.display()))
        })?;
        let rank = read_u32(&mut r).map_err(|_| truncated())?;
        if rank > MAX_RANK {
            return Err(Error::WeightsMismatch(format!(
                "{}: implausible tensor rank {rank}",
                path.display()
            )));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        let mut count: usize = 1;
        for _ in 0..rank {
            let d = read_u32(&mut r).map_err(|_| truncated())? as usize;
            count = count.checked_mul(d).ok_or_else(|| {
                Error::WeightsMismatch(format!("{}: extents overflow", path.display()))
            })?;
            shape.push(d);
        }
        let mut data = Vec::with_capacity(count);
        let mut vb = [0u8; 4];
        for _ in 0..count {
            r.read_exact(&mut vb).map_err(|_| truncated())?;
            data.push(f32::from_le_bytes(vb) as f64);
        }
        entries.push((name, Tensor::new(shape, data)?));
    }
    Ok(entries)
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
