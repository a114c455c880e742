//! Versioned binary checkpoint.
//!
//! ```text
//! magic    8 bytes  "S2VTCKPT"
//! version  u32      1
//! F E H V  u32 × 4
//! vocab    V × (u32 byte length, UTF-8 bytes), id order
//! params   f64 × N, every block in declaration order, row-major
//! ```
//!
//! All integers and reals are little-endian. Saving then loading is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ModelDims, S2VTModel, S2VTParams, Vocabulary, PAD};
use crate::error::{Result, S2vtError};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"S2VTCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

const KIND: &str = "checkpoint";

pub fn write_checkpoint<W: Write>(model: &S2VTModel, mut w: W) -> Result<()> {
    model.validate()?;
    let d = model.dims();
    w.write_all(CHECKPOINT_MAGIC)?;
    for v in [
        CHECKPOINT_VERSION,
        to_u32(d.frame_dim)?,
        to_u32(d.embed_dim)?,
        to_u32(d.hidden_dim)?,
        to_u32(model.vocab_size())?,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for t in model.vocab.tokens() {
        w.write_all(&to_u32(t.len())?.to_le_bytes())?;
        w.write_all(t.as_bytes())?;
    }
    for block in model.params.blocks() {
        for x in block {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<S2VTModel> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| S2vtError::format(KIND, "truncated header"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(S2vtError::format(KIND, "bad magic"));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(S2vtError::format(KIND, format!("unsupported version {version}")));
    }
    let dims = ModelDims {
        frame_dim: read_u32(&mut r)? as usize,
        embed_dim: read_u32(&mut r)? as usize,
        hidden_dim: read_u32(&mut r)? as usize,
    };
    dims.validate()
        .map_err(|e| S2vtError::format(KIND, e.to_string()))?;
    let vocab_size = read_u32(&mut r)? as usize;

    let mut tokens = Vec::with_capacity(vocab_size.min(1 << 20));
    for _ in 0..vocab_size {
        let len = read_u32(&mut r)? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)
            .map_err(|_| S2vtError::format(KIND, "truncated vocabulary"))?;
        tokens.push(
            String::from_utf8(buf).map_err(|_| S2vtError::format(KIND, "token is not UTF-8"))?,
        );
    }
    let vocab = Vocabulary::from_tokens(tokens).map_err(|e| S2vtError::format(KIND, e.to_string()))?;

    let mut params = S2VTParams::zeros(dims, vocab_size);
    let mut buf = [0u8; 8];
    for block in params.blocks_mut() {
        for x in block.iter_mut() {
            r.read_exact(&mut buf)
                .map_err(|_| S2vtError::format(KIND, "truncated parameters"))?;
            *x = f64::from_le_bytes(buf);
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(S2vtError::format(KIND, "trailing bytes after parameters"));
    }
    if !params.is_finite() {
        return Err(S2vtError::format(KIND, "non-finite parameter"));
    }
    if params.word_embed.col(PAD).iter().any(|&x| x != 0.0) {
        return Err(S2vtError::format(KIND, "<pad> embedding is not zero"));
    }
    Ok(S2VTModel { params, vocab })
}

pub fn save_checkpoint(model: &S2VTModel, path: &Path) -> Result<()> {
    write_checkpoint(model, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: &Path) -> Result<S2VTModel> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| S2vtError::format(KIND, "truncated header"))?;
    Ok(u32::from_le_bytes(b))
}

fn to_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| S2vtError::invalid(format!("{n} does not fit in u32")))
}
