//! Caption scoring, novelty against the training captions, and corpus
//! statistics.

mod levenshtein;
mod meteor;
mod stem;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use levenshtein::{levenshtein, levenshtein_str};
pub use meteor::{align, align_classes, count_chunks, meteor, meteor_single, score_from_counts, Alignment, MeteorParams};
pub use stem::stem;

use crate::data::{tokenize, Corpus, Sample};
use crate::error::{Result, S2vtError};

/// Largest edit distance tracked by the novelty histogram.
pub const NOVELTY_MAX_K: usize = 3;

/// Fraction of predictions within word-level edit distance `k` of some
/// training caption, for `k = 0..=3` (cumulative).
pub fn novelty_histogram<P: AsRef<str>, T: AsRef<str>>(predictions: &[Vec<P>], train: &[Vec<T>]) -> Result<[f64; 4]> {
    if predictions.is_empty() || train.is_empty() {
        return Err(S2vtError::invalid("novelty needs predictions and training captions"));
    }
    let train: Vec<Vec<&str>> = train.iter().map(|c| c.iter().map(AsRef::as_ref).collect()).collect();
    let mut counts = [0usize; NOVELTY_MAX_K + 1];
    for p in predictions {
        let p: Vec<&str> = p.iter().map(AsRef::as_ref).collect();
        let best = train.iter().map(|t| levenshtein(&p, t)).min().unwrap_or(usize::MAX);
        for (k, c) in counts.iter_mut().enumerate() {
            if best <= k {
                *c += 1;
            }
        }
    }
    Ok(counts.map(|c| c as f64 / predictions.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sentences: usize,
    pub tokens: usize,
    pub vocab: usize,
    /// Distinct sample ids.
    pub samples: usize,
    /// Mean frames per distinct sample, when frames are known.
    pub mean_frames: Option<f64>,
}

/// Statistics over captions keyed by sample id, without frames.
pub fn caption_stats(captions: &[(String, String)]) -> Result<CorpusStats> {
    if captions.is_empty() {
        return Err(S2vtError::invalid("no captions"));
    }
    let mut words = BTreeSet::new();
    let mut ids = BTreeSet::new();
    let mut tokens = 0;
    for (id, c) in captions {
        let t = tokenize(c);
        tokens += t.len();
        words.extend(t);
        ids.insert(id.as_str());
    }
    Ok(CorpusStats {
        sentences: captions.len(),
        tokens,
        vocab: words.len(),
        samples: ids.len(),
        mean_frames: None,
    })
}

pub fn sample_stats<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Result<CorpusStats> {
    let mut captions = Vec::new();
    let mut frames: HashMap<&str, usize> = HashMap::new();
    for s in samples {
        captions.push((s.id.clone(), s.caption.clone()));
        frames.insert(&s.id, s.frames.len());
    }
    let mut stats = caption_stats(&captions)?;
    stats.mean_frames = Some(frames.values().sum::<usize>() as f64 / frames.len() as f64);
    Ok(stats)
}

/// Statistics over every split.
pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats> {
    sample_stats(corpus.iter().map(|(_, s)| s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub id: String,
    pub hypothesis: String,
    pub meteor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean of the per-sample scores.
    pub meteor: f64,
    pub per_sample: Vec<SampleScore>,
    /// Cumulative fractions for edit distance 0..=3, when training captions are given.
    pub novelty: Option<[f64; 4]>,
    /// Statistics of the reference captions.
    pub stats: CorpusStats,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "meteor\t{:.6}", self.meteor);
        let _ = writeln!(out, "samples\t{}", self.per_sample.len());
        if let Some(n) = self.novelty {
            for (k, f) in n.iter().enumerate() {
                let _ = writeln!(out, "novelty_le_{k}\t{f:.6}");
            }
        }
        let s = &self.stats;
        let _ = writeln!(out, "ref_sentences\t{}", s.sentences);
        let _ = writeln!(out, "ref_tokens\t{}", s.tokens);
        let _ = writeln!(out, "ref_vocab\t{}", s.vocab);
        let _ = writeln!(out, "ref_samples\t{}", s.samples);
        for p in &self.per_sample {
            let _ = writeln!(out, "{}\t{:.6}\t{}", p.id, p.meteor, p.hypothesis);
        }
        out
    }
}

/// Scores each hypothesis against every reference with the same id.
/// A hypothesis without references is an error.
pub fn evaluate(
    hypotheses: &[(String, String)],
    references: &[(String, String)],
    train_captions: Option<&[String]>,
    params: &MeteorParams,
) -> Result<EvalReport> {
    params.validate()?;
    if hypotheses.is_empty() {
        return Err(S2vtError::invalid("no hypotheses to evaluate"));
    }
    let mut refs: BTreeMap<&str, Vec<Vec<String>>> = BTreeMap::new();
    for (id, c) in references {
        refs.entry(id).or_default().push(tokenize(c));
    }
    let mut per_sample = Vec::with_capacity(hypotheses.len());
    let mut predictions = Vec::with_capacity(hypotheses.len());
    for (id, h) in hypotheses {
        let r = refs
            .get(id.as_str())
            .ok_or_else(|| S2vtError::invalid(format!("no reference for sample {id:?}")))?;
        let toks = tokenize(h);
        per_sample.push(SampleScore {
            id: id.clone(),
            hypothesis: h.clone(),
            meteor: meteor(&toks, r, params)?,
        });
        predictions.push(toks);
    }
    let novelty = match train_captions {
        Some(train) => {
            let train: Vec<Vec<String>> = train.iter().map(|c| tokenize(c)).collect();
            Some(novelty_histogram(&predictions, &train)?)
        }
        None => None,
    };
    Ok(EvalReport {
        meteor: per_sample.iter().map(|s| s.meteor).sum::<f64>() / per_sample.len() as f64,
        per_sample,
        novelty,
        stats: caption_stats(references)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, RawCorpus, RawSample, Split, SyntheticConfig};

    fn words(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn novelty_subset_and_monotone() {
        let train = vec![words("a man runs"), words("a dog sleeps")];
        let h = novelty_histogram(&train, &train).unwrap();
        assert_eq!(h, [1.0; 4]);
        let preds = vec![words("a woman runs"), words("cats"), words("a dog sleeps")];
        let h = novelty_histogram(&preds, &train).unwrap();
        assert!(h.windows(2).all(|w| w[0] <= w[1]));
        assert!(novelty_histogram::<String, String>(&[], &train).is_err());
    }

    #[test]
    fn novelty_matches_pairwise_oracle() {
        let train = vec![words("a man is cooking"), words("a dog runs"), words("someone slices an onion")];
        let preds = vec![
            words("a man is cooking"),
            words("a woman is cooking"),
            words("a cat runs fast"),
            words("the bird sings loudly today"),
        ];
        // Hand-computed minimum distances: 0, 1, 2, 5.
        let mins: Vec<usize> = preds
            .iter()
            .map(|p| train.iter().map(|t| levenshtein(p, t)).min().unwrap())
            .collect();
        assert_eq!(mins, vec![0, 1, 2, 5]);
        let expect: Vec<f64> = (0..4)
            .map(|k| mins.iter().filter(|&&d| d <= k).count() as f64 / 4.0)
            .collect();
        assert_eq!(novelty_histogram(&preds, &train).unwrap().to_vec(), expect);
        assert_eq!(expect, vec![0.25, 0.5, 0.75, 0.75]);
    }

    #[test]
    fn stats_examples() {
        let s = caption_stats(&[("v".into(), "a b".into())]).unwrap();
        assert_eq!((s.sentences, s.tokens, s.vocab, s.samples), (1, 2, 2, 1));
        let s = caption_stats(&[("v".into(), "a b".into()), ("v".into(), "a b".into())]).unwrap();
        assert_eq!((s.sentences, s.tokens, s.vocab, s.samples), (2, 4, 2, 1));
        assert!(caption_stats(&[]).is_err());

        let mut rc = RawCorpus::default();
        rc.push(Split::Train, RawSample { id: "v".into(), frames: vec![vec![0.0]; 3], caption: "a b".into() });
        rc.push(Split::Train, RawSample { id: "v".into(), frames: vec![vec![0.0]; 3], caption: "a c".into() });
        rc.push(Split::Test, RawSample { id: "w".into(), frames: vec![vec![0.0]; 6], caption: "d".into() });
        let s = corpus_stats(&rc.into_corpus(1).unwrap()).unwrap();
        assert_eq!((s.sentences, s.tokens, s.vocab, s.samples), (3, 5, 4, 2));
        assert_eq!(s.mean_frames, Some(4.5));
    }

    #[test]
    fn synthetic_stats_match_bookkeeping() {
        let (corpus, m) = generate_synthetic(&SyntheticConfig { n_samples: 100, seed: 5, ..Default::default() }).unwrap();
        let s = corpus_stats(&corpus).unwrap();
        assert_eq!((s.sentences, s.tokens, s.vocab, s.samples), (m.sentences, m.tokens, m.vocab, m.samples));
        assert_eq!(s.mean_frames, Some(m.mean_frames));
    }

    #[test]
    fn evaluate_identical_sentences() {
        let refs: Vec<(String, String)> = vec![
            ("v1".into(), "A man is cooking.".into()),
            ("v2".into(), "dogs run".into()),
            ("v2".into(), "a dog runs".into()),
        ];
        let hyps = vec![("v1".to_string(), "a man is cooking".to_string()), ("v2".into(), "dogs run".into())];
        let report = evaluate(&hyps, &refs, None, &MeteorParams::default()).unwrap();
        let expect = ((1.0 - 0.5 / 64.0) + (1.0 - 0.5 / 8.0)) / 2.0;
        assert!((report.meteor - expect).abs() < 1e-15);
        assert!(report.novelty.is_none());
        let back: EvalReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
        assert!(report.to_text().starts_with("meteor\t"));

        let missing = vec![("v9".to_string(), "x".to_string())];
        assert!(evaluate(&missing, &refs, None, &MeteorParams::default()).unwrap_err().is_validation());
    }
}
