//! Binary checkpoint layout (all integers little-endian `u64` unless noted):
//!
//! ```text
//! "REDRCKPT" | version: u32
//! config_len | config JSON bytes
//! vocab_len  | vocab JSON bytes
//! tensors
//! repeated: name_len | name | trainable: u8 | ndims | dims… | f64 values…
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::autodiff::ParamStore;
use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::model::config::TrainConfig;
use crate::model::redr::Redr;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"REDRCKPT";
const VERSION: u32 = 1;

fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_bytes(w: &mut impl Write, b: &[u8]) -> Result<()> {
    put_u64(w, b.len() as u64)?;
    w.write_all(b)?;
    Ok(())
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| Error::Checkpoint("truncated file".into()))?;
    Ok(u64::from_le_bytes(b))
}

fn get_len(r: &mut impl Read, limit: u64, what: &str) -> Result<usize> {
    let n = get_u64(r)?;
    if n > limit {
        return Err(Error::Checkpoint(format!("implausible {what} length {n}")));
    }
    Ok(n as usize)
}

fn get_bytes(r: &mut impl Read, what: &str) -> Result<Vec<u8>> {
    let n = get_len(r, 1 << 32, what)?;
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)
        .map_err(|_| Error::Checkpoint(format!("truncated {what}")))?;
    Ok(b)
}

pub fn write_checkpoint(w: &mut impl Write, model: &Redr) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    put_bytes(w, &serde_json::to_vec(&model.config)?)?;
    put_bytes(w, &serde_json::to_vec(&model.vocab)?)?;
    put_u64(w, model.store.len() as u64)?;
    for (_, p) in model.store.iter() {
        put_bytes(w, p.name.as_bytes())?;
        w.write_all(&[p.trainable as u8])?;
        put_u64(w, p.value.shape().len() as u64)?;
        for &d in p.value.shape() {
            put_u64(w, d as u64)?;
        }
        for v in p.value.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Redr> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let mut ver = [0u8; 4];
    r.read_exact(&mut ver)
        .map_err(|_| Error::Checkpoint("truncated header".into()))?;
    let ver = u32::from_le_bytes(ver);
    if ver != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {ver}")));
    }
    let config: TrainConfig = serde_json::from_slice(&get_bytes(r, "config")?)?;
    let vocab: Vocabulary = serde_json::from_slice(&get_bytes(r, "vocabulary")?)?;
    let count = get_len(r, 1 << 20, "tensor count")?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name = String::from_utf8(get_bytes(r, "tensor name")?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)
            .map_err(|_| Error::Checkpoint("truncated tensor".into()))?;
        let ndims = get_len(r, 8, "rank")?;
        let dims = (0..ndims)
            .map(|_| get_len(r, 1 << 32, "dimension"))
            .collect::<Result<Vec<_>>>()?;
        let len: usize = dims.iter().product();
        let mut raw = vec![0u8; len * 8];
        r.read_exact(&mut raw)
            .map_err(|_| Error::Checkpoint(format!("truncated values of `{name}`")))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let id = store.add(name, Tensor::new(dims, data)?)?;
        store.set_trainable(id, flag[0] != 0);
    }
    Redr::with_store(config, vocab, store)
}

pub fn save(path: impl AsRef<Path>, model: &Redr) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Redr> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    read_checkpoint(&mut r)
}
