//! Corpus ingestion: text preprocessing, vocabulary, frame subsampling and
//! train/val/test splits.

mod files;
mod synthetic;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

pub use files::{
    load_corpus, read_captions, read_features, read_splits, write_captions, write_corpus, write_features,
    write_splits, FeatureEntry, FEATURE_MAGIC, FEATURE_VERSION,
};
pub use synthetic::{generate_synthetic, render_events, synthetic_prototypes, SyntheticConfig, SyntheticManifest};

use crate::error::{Result, S2vtError};
use crate::model::{TokenId, Vocabulary};
use crate::numerics::Vector;

/// Lowercases, drops every character that is neither alphanumeric nor
/// whitespace, and splits on whitespace.
pub fn tokenize(raw: &str) -> Vec<String> {
    let cleaned: String = raw
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// Words seen at least `min_count` times get ids from 4 upward, most frequent
/// first, ties in alphabetical order.
pub fn build_vocab<S: AsRef<str>>(captions: &[S], min_count: usize) -> Result<Vocabulary> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for c in captions {
        for w in tokenize(c.as_ref()) {
            *counts.entry(w).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(_, n)| *n >= min_count.max(1))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocabulary::with_words(kept.into_iter().map(|(w, _)| w))
}

/// Keeps frames `0, k, 2k, …`.
pub fn subsample_frames<T: Clone>(frames: &[T], stride: usize) -> Result<Vec<T>> {
    if stride == 0 {
        return Err(S2vtError::invalid("subsampling stride must be at least 1"));
    }
    Ok(frames.iter().step_by(stride).cloned().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = S2vtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(S2vtError::invalid(format!("unknown split {other:?}"))),
        }
    }
}

/// A video paired with one caption, before tokens are assigned ids.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    pub id: String,
    pub frames: Vec<Vector>,
    pub caption: String,
}

/// One video–sentence pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub frames: Vec<Vector>,
    pub caption: String,
    /// Token ids ending in `<EOS>`.
    pub tokens: Vec<TokenId>,
}

impl Sample {
    pub fn encode(raw: RawSample, vocab: &Vocabulary) -> Result<Self> {
        if raw.frames.is_empty() {
            return Err(S2vtError::invalid(format!("sample {} has no frames", raw.id)));
        }
        let words = tokenize(&raw.caption);
        if words.is_empty() {
            return Err(S2vtError::invalid(format!("sample {} has an empty caption", raw.id)));
        }
        Ok(Sample {
            tokens: vocab.encode_target(&words),
            id: raw.id,
            frames: raw.frames,
            caption: raw.caption,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawCorpus {
    pub train: Vec<RawSample>,
    pub val: Vec<RawSample>,
    pub test: Vec<RawSample>,
}

impl RawCorpus {
    pub fn push(&mut self, split: Split, sample: RawSample) {
        match split {
            Split::Train => self.train.push(sample),
            Split::Val => self.val.push(sample),
            Split::Test => self.test.push(sample),
        }
    }

    /// Builds the vocabulary from the train split and encodes every split.
    pub fn into_corpus(self, min_count: usize) -> Result<Corpus> {
        if self.train.is_empty() {
            return Err(S2vtError::invalid("train split is empty"));
        }
        let captions: Vec<&str> = self.train.iter().map(|s| s.caption.as_str()).collect();
        let vocab = build_vocab(&captions, min_count)?;
        self.into_corpus_with(vocab)
    }

    /// Encodes every split against an existing vocabulary.
    pub fn into_corpus_with(self, vocab: Vocabulary) -> Result<Corpus> {
        let enc = |v: Vec<RawSample>| -> Result<Vec<Sample>> {
            v.into_iter().map(|s| Sample::encode(s, &vocab)).collect()
        };
        let corpus = Corpus {
            train: enc(self.train)?,
            val: enc(self.val)?,
            test: enc(self.test)?,
            vocab: vocab.clone(),
        };
        corpus.check_disjoint()?;
        Ok(corpus)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> &[Sample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// Every sample with its split, train first.
    pub fn iter(&self) -> impl Iterator<Item = (Split, &Sample)> {
        self.train
            .iter()
            .map(|s| (Split::Train, s))
            .chain(self.val.iter().map(|s| (Split::Val, s)))
            .chain(self.test.iter().map(|s| (Split::Test, s)))
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_disjoint(&self) -> Result<()> {
        let mut seen: HashMap<&str, Split> = HashMap::new();
        for (split, s) in self.iter() {
            if let Some(prev) = seen.insert(&s.id, split) {
                if prev != split {
                    return Err(S2vtError::invalid(format!(
                        "sample {} appears in both {prev} and {split}",
                        s.id
                    )));
                }
            }
        }
        Ok(())
    }
}
