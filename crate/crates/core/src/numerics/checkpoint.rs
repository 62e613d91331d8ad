//! Checkpoint container: magic `GLCK`, a u32 version, then named tensors
//! as (name length, UTF-8 name, rows, cols, little-endian f32 payload)
//! until end of file. Optimizer moments ride along under `adam.m.<name>`
//! and `adam.v.<name>`, with the step counter in a 1x1 `adam.step` entry.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::tensor::Tensor2;

pub const MAGIC: &[u8; 4] = b"GLCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes; not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    BadVersion { found: u32, expected: u32 },
    #[error("tensor name is not valid UTF-8")]
    BadName,
    #[error("truncated checkpoint while reading {0}")]
    Truncated(String),
    #[error("checkpoint is missing required tensor {0}")]
    MissingTensor(String),
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    entries: &[(String, Tensor2<f32>)],
) -> Result<(), CheckpointError> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for (name, t) in entries {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rows() as u32).to_le_bytes())?;
        w.write_all(&(t.cols() as u32).to_le_bytes())?;
        for &x in t.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<(String, Tensor2<f32>)>, CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| CheckpointError::Truncated("magic".into()))?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut r, "version")?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion {
            found: version,
            expected: VERSION,
        });
    }
    let mut entries = Vec::new();
    loop {
        let mut len_buf = [0u8; 4];
        match r.read_exact(&mut len_buf) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let name_len = u32::from_le_bytes(len_buf) as usize;
        let mut name_buf = vec![0u8; name_len];
        r.read_exact(&mut name_buf)
            .map_err(|_| CheckpointError::Truncated("name".into()))?;
        let name = String::from_utf8(name_buf).map_err(|_| CheckpointError::BadName)?;
        let rows = read_u32(&mut r, &name)? as usize;
        let cols = read_u32(&mut r, &name)? as usize;
        let mut data = vec![0f32; rows * cols];
        let mut buf = [0u8; 4];
        for x in data.iter_mut() {
            r.read_exact(&mut buf)
                .map_err(|_| CheckpointError::Truncated(name.clone()))?;
            *x = f32::from_le_bytes(buf);
        }
        entries.push((name, Tensor2::from_vec(rows, cols, data)));
    }
    Ok(entries)
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32, CheckpointError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| CheckpointError::Truncated(what.into()))?;
    Ok(u32::from_le_bytes(buf))
}

pub fn save_to_path(
    path: &Path,
    entries: &[(String, Tensor2<f32>)],
) -> Result<(), CheckpointError> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_checkpoint(&mut w, entries)?;
    w.flush()?;
    Ok(())
}

pub fn load_from_path(path: &Path) -> Result<Vec<(String, Tensor2<f32>)>, CheckpointError> {
    let file = File::open(path)?;
    read_checkpoint(BufReader::new(file))
}
