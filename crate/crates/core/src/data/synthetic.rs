//! Order-sensitive synthetic corpus.
//!
//! Each video is a sequence of events. An event contributes a run of noisy
//! copies of that event's prototype vector, and the caption spells out the
//! events in order: `first e3 then e1 then e4`. Consecutive events differ, so
//! the run boundaries are visible in the frames.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{RawCorpus, RawSample, Split};
use crate::data::Corpus;
use crate::error::{Result, S2vtError};
use crate::numerics::{l2_norm, Rng, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_event_types: usize,
    /// Inclusive range.
    pub events_per_video: (usize, usize),
    /// Inclusive range.
    pub frames_per_event: (usize, usize),
    pub feature_dim: usize,
    pub noise_std: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_event_types: 5,
            events_per_video: (2, 4),
            frames_per_event: (2, 3),
            feature_dim: 16,
            noise_std: 0.1,
            n_samples: 500,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_event_types", self.n_event_types),
            ("events_per_video min", self.events_per_video.0),
            ("frames_per_event min", self.frames_per_event.0),
            ("feature_dim", self.feature_dim),
            ("n_samples", self.n_samples),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(S2vtError::invalid(format!("{name} must be positive")));
            }
        }
        if self.events_per_video.0 > self.events_per_video.1 || self.frames_per_event.0 > self.frames_per_event.1 {
            return Err(S2vtError::invalid("count range has min > max"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(S2vtError::invalid("noise_std must be finite and non-negative"));
        }
        if self.n_event_types == 1 && self.events_per_video.0 > 1 {
            return Err(S2vtError::invalid(
                "one event type cannot fill a video of several distinct consecutive events; no caption is possible",
            ));
        }
        if self.feature_dim == 1 && self.n_event_types > 2 {
            return Err(S2vtError::invalid("feature_dim 1 admits at most two distinct unit prototypes"));
        }
        Ok(())
    }
}

/// Counts recorded while generating, for cross-checking corpus statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticManifest {
    pub seed: u64,
    pub samples: usize,
    pub sentences: usize,
    pub tokens: usize,
    pub vocab: usize,
    pub total_frames: usize,
    pub mean_frames: f64,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Event names are `e1`, `e2`, … for event indices 0, 1, ….
pub fn render_events(events: &[usize]) -> String {
    let mut out = String::new();
    for (i, e) in events.iter().enumerate() {
        out.push_str(if i == 0 { "first" } else { " then" });
        out.push_str(&format!(" e{}", e + 1));
    }
    out
}

/// Unit-norm prototypes, one per event type, all rounded to f32.
pub fn synthetic_prototypes(config: &SyntheticConfig) -> Result<Vec<Vector>> {
    config.validate()?;
    let mut rng = Rng::new(config.seed);
    draw_prototypes(config, &mut rng)
}

fn draw_prototypes(config: &SyntheticConfig, rng: &mut Rng) -> Result<Vec<Vector>> {
    let mut protos: Vec<Vector> = Vec::with_capacity(config.n_event_types);
    while protos.len() < config.n_event_types {
        let raw: Vector = (0..config.feature_dim).map(|_| rng.normal()).collect();
        let norm = l2_norm(&raw);
        if norm < 1e-6 {
            continue;
        }
        let p: Vector = raw.iter().map(|x| f32_round(x / norm)).collect();
        if protos.iter().all(|q| q != &p) {
            protos.push(p);
        }
    }
    Ok(protos)
}

fn f32_round(x: f64) -> f64 {
    f64::from(x as f32)
}

fn draw_range(rng: &mut Rng, (lo, hi): (usize, usize)) -> usize {
    lo + rng.below((hi - lo + 1) as u64) as usize
}

/// Draws the corpus and its bookkeeping. Sample ids are `vid00000`, … in
/// generation order; the split assignment is a seeded permutation with
/// ⌊0.8n⌋ train, ⌊0.1n⌋ val and the rest test.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<(Corpus, SyntheticManifest)> {
    config.validate()?;
    let mut rng = Rng::new(config.seed);
    let protos = draw_prototypes(config, &mut rng)?;

    let mut samples = Vec::with_capacity(config.n_samples);
    let mut tokens = 0;
    let mut total_frames = 0;
    let mut words = BTreeSet::new();
    for i in 0..config.n_samples {
        let n_events = draw_range(&mut rng, config.events_per_video);
        let mut events: Vec<usize> = Vec::with_capacity(n_events);
        for _ in 0..n_events {
            let e = match events.last() {
                None => rng.below(config.n_event_types as u64) as usize,
                Some(&prev) => {
                    let j = rng.below(config.n_event_types as u64 - 1) as usize;
                    if j >= prev {
                        j + 1
                    } else {
                        j
                    }
                }
            };
            events.push(e);
        }
        let mut frames = Vec::new();
        for &e in &events {
            for _ in 0..draw_range(&mut rng, config.frames_per_event) {
                let frame: Vector = protos[e]
                    .iter()
                    .map(|&p| f32_round(p + config.noise_std * rng.normal()))
                    .collect();
                frames.push(frame);
            }
        }
        tokens += 2 * events.len();
        total_frames += frames.len();
        words.insert("first".to_string());
        if events.len() > 1 {
            words.insert("then".to_string());
        }
        words.extend(events.iter().map(|e| format!("e{}", e + 1)));
        samples.push(RawSample {
            id: format!("vid{i:05}"),
            frames,
            caption: render_events(&events),
        });
    }

    let n = config.n_samples;
    let n_train = n * 8 / 10;
    let n_val = n / 10;
    let mut assignment = vec![Split::Test; n];
    for (rank, idx) in rng.permutation(n).into_iter().enumerate() {
        assignment[idx] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    if n_train == 0 {
        // Too few samples for the 80% share to round up to one; keep one train sample.
        assignment[0] = Split::Train;
    }
    let mut raw = RawCorpus::default();
    for (s, split) in samples.into_iter().zip(assignment) {
        raw.push(split, s);
    }
    let corpus = raw.into_corpus(1)?;
    let manifest = SyntheticManifest {
        seed: config.seed,
        samples: n,
        sentences: n,
        tokens,
        vocab: words.len(),
        total_frames,
        mean_frames: total_frames as f64 / n as f64,
        train: corpus.train.len(),
        val: corpus.val.len(),
        test: corpus.test.len(),
    };
    Ok((corpus, manifest))
}
