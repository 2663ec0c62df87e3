//! Little-endian binary checkpoint format.
//!
//! Layout:
//! ```text
//! magic   : 8 bytes  b"SPGNCKPT"
//! version : u32      (currently 1)
//! count   : u32      number of parameters
//! entry   : repeated count times
//!   name_len : u16
//!   name     : utf-8 bytes
//!   ndim     : u8
//!   dims     : ndim x u32
//!   data     : product(dims) x f32
//! ```
//! Round trips are byte-exact.

use super::optim::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"SPGNCKPT";
const VERSION: u32 = 1;

pub fn save(store: &ParamStore<f32>, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_u32::<LittleEndian>(VERSION).map_err(io_err)?;
    w.write_u32::<LittleEndian>(store.len() as u32).map_err(io_err)?;
    for e in store.entries() {
        let name = e.name.as_bytes();
        w.write_u16::<LittleEndian>(name.len() as u16).map_err(io_err)?;
        w.write_all(name).map_err(io_err)?;
        w.write_u8(e.value.shape().len() as u8).map_err(io_err)?;
        for &d in e.value.shape() {
            w.write_u32::<LittleEndian>(d as u32).map_err(io_err)?;
        }
        for &v in e.value.data() {
            w.write_f32::<LittleEndian>(v).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn load(path: &Path) -> Result<ParamStore<f32>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let fmt = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));
    let io_err = |_| Error::Format(format!("{}: truncated checkpoint", path.display()));

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(fmt("bad magic, not a checkpoint file"));
    }
    let version = r.read_u32::<LittleEndian>().map_err(io_err)?;
    if version != VERSION {
        return Err(fmt(&format!("unsupported checkpoint version {version}, expected {VERSION}")));
    }
    let count = r.read_u32::<LittleEndian>().map_err(io_err)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = r.read_u16::<LittleEndian>().map_err(io_err)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(io_err)?;
        let name = String::from_utf8(name).map_err(|_| fmt("parameter name is not utf-8"))?;
        let ndim = r.read_u8().map_err(io_err)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.read_u32::<LittleEndian>().map_err(io_err)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(r.read_f32::<LittleEndian>().map_err(io_err)?);
        }
        store.add(&name, Tensor::from_vec(&shape, data)?);
    }
    // Trailing bytes mean the file does not match its declared contents.
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::io(path.display().to_string(), e))? != 0 {
        return Err(fmt("trailing bytes after final parameter"));
    }
    Ok(store)
}
