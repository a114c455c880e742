//! On-disk corpus formats.
//!
//! Feature file, little-endian:
//!
//! ```text
//! magic    4 bytes  "S2VF"
//! version  u32      1
//! count    u32
//! per sample: u32 id length, UTF-8 id, u32 n_frames, u32 F, n_frames × F f32
//! ```
//!
//! Caption file: `id<TAB>caption` per line, an id may repeat. Split file:
//! `id<TAB>train|val|test` per line.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Corpus, RawCorpus, RawSample, Split};
use crate::error::{Result, S2vtError};
use crate::numerics::Vector;

pub const FEATURE_MAGIC: &[u8; 4] = b"S2VF";
pub const FEATURE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEntry {
    pub id: String,
    pub frames: Vec<Vector>,
}

/// Frames are stored as f32; values that are not exactly representable are rounded.
pub fn write_features(path: &Path, entries: &[FeatureEntry]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&FEATURE_VERSION.to_le_bytes())?;
    w.write_all(&to_u32(entries.len())?.to_le_bytes())?;
    for e in entries {
        let dim = e.frames.first().map_or(0, Vec::len);
        if e.frames.iter().any(|f| f.len() != dim) {
            return Err(S2vtError::invalid(format!("sample {} has ragged frames", e.id)));
        }
        w.write_all(&to_u32(e.id.len())?.to_le_bytes())?;
        w.write_all(e.id.as_bytes())?;
        w.write_all(&to_u32(e.frames.len())?.to_le_bytes())?;
        w.write_all(&to_u32(dim)?.to_le_bytes())?;
        for x in e.frames.iter().flatten() {
            w.write_all(&(*x as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureEntry>> {
    const KIND: &str = "feature file";
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| S2vtError::format(KIND, "truncated header"))?;
    if &magic != FEATURE_MAGIC {
        return Err(S2vtError::format(KIND, "bad magic"));
    }
    let version = read_u32(&mut r, KIND)?;
    if version != FEATURE_VERSION {
        return Err(S2vtError::format(KIND, format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r, KIND)? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    let mut seen = HashMap::new();
    for _ in 0..count {
        let len = read_u32(&mut r, KIND)? as usize;
        let mut id = vec![0u8; len];
        r.read_exact(&mut id)
            .map_err(|_| S2vtError::format(KIND, "truncated id"))?;
        let id = String::from_utf8(id).map_err(|_| S2vtError::format(KIND, "id is not UTF-8"))?;
        if seen.insert(id.clone(), ()).is_some() {
            return Err(S2vtError::format(KIND, format!("duplicate id {id:?}")));
        }
        let n_frames = read_u32(&mut r, KIND)? as usize;
        let dim = read_u32(&mut r, KIND)? as usize;
        let mut frames = Vec::with_capacity(n_frames.min(1 << 16));
        let mut buf = [0u8; 4];
        for _ in 0..n_frames {
            let mut frame = Vec::with_capacity(dim);
            for _ in 0..dim {
                r.read_exact(&mut buf)
                    .map_err(|_| S2vtError::format(KIND, "truncated frame data"))?;
                let x = f32::from_le_bytes(buf);
                if !x.is_finite() {
                    return Err(S2vtError::format(KIND, format!("non-finite feature in {id:?}")));
                }
                frame.push(f64::from(x));
            }
            frames.push(frame);
        }
        out.push(FeatureEntry { id, frames });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(S2vtError::format(KIND, "trailing bytes"));
    }
    Ok(out)
}

pub fn write_captions(path: &Path, captions: &[(String, String)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (id, caption) in captions {
        check_field(id, "id")?;
        check_field(caption, "caption")?;
        writeln!(w, "{id}\t{caption}")?;
    }
    w.flush()?;
    Ok(())
}

/// Lines in file order; blank lines are skipped.
pub fn read_captions(path: &Path) -> Result<Vec<(String, String)>> {
    read_tsv(path, "caption file")
}

pub fn write_splits(path: &Path, splits: &[(String, Split)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (id, split) in splits {
        check_field(id, "id")?;
        writeln!(w, "{id}\t{split}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_splits(path: &Path) -> Result<HashMap<String, Split>> {
    let mut out = HashMap::new();
    for (i, (id, name)) in read_tsv(path, "split file")?.into_iter().enumerate() {
        let split: Split = name
            .trim()
            .parse()
            .map_err(|e| S2vtError::format("split file", format!("line {}: {e}", i + 1)))?;
        if let Some(prev) = out.insert(id.clone(), split) {
            if prev != split {
                return Err(S2vtError::format("split file", format!("{id:?} listed in {prev} and {split}")));
            }
        }
    }
    Ok(out)
}

/// Joins features, captions and an optional split file (everything is train
/// without one). Samples follow caption-file order.
pub fn load_corpus(features: &Path, captions: &Path, splits: Option<&Path>) -> Result<RawCorpus> {
    let features: HashMap<String, Vec<Vector>> = read_features(features)?
        .into_iter()
        .map(|e| (e.id, e.frames))
        .collect();
    let splits = splits.map(read_splits).transpose()?;
    let mut corpus = RawCorpus::default();
    for (id, caption) in read_captions(captions)? {
        let frames = features
            .get(&id)
            .ok_or_else(|| S2vtError::invalid(format!("no features for sample {id:?}")))?;
        let split = match &splits {
            Some(map) => *map
                .get(&id)
                .ok_or_else(|| S2vtError::invalid(format!("sample {id:?} missing from split file")))?,
            None => Split::Train,
        };
        corpus.push(
            split,
            RawSample {
                id,
                frames: frames.clone(),
                caption,
            },
        );
    }
    Ok(corpus)
}

/// Writes `features.bin`, `captions.tsv` and `split.tsv` into `dir`.
/// Videos appear once in the feature and split files, in first-seen order.
pub fn write_corpus(dir: &Path, corpus: &Corpus) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    let mut splits = Vec::new();
    let mut captions = Vec::new();
    let mut seen = HashMap::new();
    for (split, s) in corpus.iter() {
        captions.push((s.id.clone(), s.caption.clone()));
        if seen.insert(s.id.as_str(), ()).is_none() {
            entries.push(FeatureEntry {
                id: s.id.clone(),
                frames: s.frames.clone(),
            });
            splits.push((s.id.clone(), split));
        }
    }
    write_features(&dir.join("features.bin"), &entries)?;
    write_captions(&dir.join("captions.tsv"), &captions)?;
    write_splits(&dir.join("split.tsv"), &splits)
}

fn read_tsv(path: &Path, kind: &'static str) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, rest) = line
            .split_once('\t')
            .ok_or_else(|| S2vtError::format(kind, format!("line {}: expected id<TAB>value", i + 1)))?;
        if id.is_empty() {
            return Err(S2vtError::format(kind, format!("line {}: empty id", i + 1)));
        }
        out.push((id.to_string(), rest.to_string()));
    }
    Ok(out)
}

fn check_field(s: &str, what: &str) -> Result<()> {
    if s.contains(['\t', '\n', '\r']) {
        return Err(S2vtError::invalid(format!("{what} {s:?} contains a tab or newline")));
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R, kind: &'static str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| S2vtError::format(kind, "truncated"))?;
    Ok(u32::from_le_bytes(b))
}

fn to_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| S2vtError::invalid(format!("{n} does not fit in u32")))
}
