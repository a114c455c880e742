//! Unigram-alignment caption score with exact and stem matching
//! ("METEOR-lite": no synonym or paraphrase stages).
//!
//! Two tokens are compatible when they are equal or, with stemming enabled,
//! have equal stems. The alignment maximizes the number of matched pairs (each
//! token used at most once) and, among those, minimizes the number of chunks:
//! maximal runs of pairs that are adjacent in both hypothesis and reference.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::stem::stem;
use crate::error::{Result, S2vtError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeteorParams {
    /// Weight of precision in the harmonic mean.
    pub alpha_f: f64,
    pub beta_pen: f64,
    pub gamma_pen: f64,
    /// Enables the stem stage; exact matching is always on.
    pub stem: bool,
}

impl Default for MeteorParams {
    fn default() -> Self {
        MeteorParams {
            alpha_f: 0.9,
            beta_pen: 3.0,
            gamma_pen: 0.5,
            stem: true,
        }
    }
}

impl MeteorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_f > 0.0 && self.alpha_f < 1.0) {
            return Err(S2vtError::invalid("alpha_f must lie in (0, 1)"));
        }
        if !(self.beta_pen > 0.0 && self.beta_pen.is_finite()) {
            return Err(S2vtError::invalid("beta_pen must be positive"));
        }
        if !(0.0..=1.0).contains(&self.gamma_pen) {
            return Err(S2vtError::invalid("gamma_pen must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    /// `(hyp index, ref index)` pairs in hypothesis order.
    pub pairs: Vec<(usize, usize)>,
    pub matches: usize,
    pub chunks: usize,
}

/// Chunks of an alignment given in hypothesis order.
pub fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    pairs
        .iter()
        .enumerate()
        .filter(|&(k, &(i, j))| k == 0 || pairs[k - 1] != (i.wrapping_sub(1), j.wrapping_sub(1)))
        .count()
}

/// Memo entries allowed before the exact search gives way to a greedy
/// left-to-right alignment. Only long runs of one repeated word on both
/// sides get near it.
const SEARCH_BUDGET: usize = 1 << 18;

pub fn align<H: AsRef<str>, R: AsRef<str>>(hyp: &[H], reference: &[R], params: &MeteorParams) -> Alignment {
    let key = |t: &str| if params.stem { stem(t) } else { t.to_string() };
    let mut classes: HashMap<String, usize> = HashMap::new();
    let mut class_of = |t: &str| {
        let n = classes.len();
        *classes.entry(key(t)).or_insert(n)
    };
    let hc: Vec<usize> = hyp.iter().map(|t| class_of(t.as_ref())).collect();
    let rc: Vec<usize> = reference.iter().map(|t| class_of(t.as_ref())).collect();
    align_classes(&hc, &rc)
}

/// Alignment over pre-computed compatibility classes.
pub fn align_classes(hc: &[usize], rc: &[usize]) -> Alignment {
    let n_classes = hc.iter().chain(rc).max().map_or(0, |m| m + 1);
    let mut target = vec![0usize; n_classes];
    {
        let mut ch = vec![0usize; n_classes];
        let mut cr = vec![0usize; n_classes];
        hc.iter().for_each(|&c| ch[c] += 1);
        rc.iter().for_each(|&c| cr[c] += 1);
        for c in 0..n_classes {
            target[c] = ch[c].min(cr[c]);
        }
    }
    // remaining[i]: hypothesis tokens of hc[i]'s class at positions i and later.
    let mut remaining = vec![0usize; hc.len()];
    let mut seen = vec![0usize; n_classes];
    for i in (0..hc.len()).rev() {
        seen[hc[i]] += 1;
        remaining[i] = seen[hc[i]];
    }

    let pairs = if rc.len() <= 128 {
        let mut search = Search {
            hc,
            rc,
            target: &target,
            remaining: &remaining,
            memo: HashMap::new(),
        };
        match search.best(0, 0, NONE) {
            Some(_) => search.trace(),
            None => greedy(hc, rc, &target),
        }
    } else {
        greedy(hc, rc, &target)
    };
    Alignment {
        matches: pairs.len(),
        chunks: count_chunks(&pairs),
        pairs,
    }
}

const NONE: usize = usize::MAX;
const SKIP: usize = usize::MAX;

struct Search<'a> {
    hc: &'a [usize],
    rc: &'a [usize],
    target: &'a [usize],
    remaining: &'a [usize],
    /// (hyp position, used reference mask, previous reference index) →
    /// (most continuations achievable, reference index chosen or SKIP).
    memo: HashMap<(usize, u128, usize), (u32, usize)>,
}

impl Search<'_> {
    fn matched(&self, class: usize, used: u128) -> usize {
        self.rc
            .iter()
            .enumerate()
            .filter(|&(j, &c)| c == class && used & (1u128 << j) != 0)
            .count()
    }

    /// Every path matches exactly `target[c]` tokens of each class, so only
    /// continuations are optimized. `None` means the budget ran out.
    fn best(&mut self, i: usize, used: u128, prev: usize) -> Option<u32> {
        if i == self.hc.len() {
            return Some(0);
        }
        if let Some(&(v, _)) = self.memo.get(&(i, used, prev)) {
            return Some(v);
        }
        if self.memo.len() >= SEARCH_BUDGET {
            return None;
        }
        let class = self.hc[i];
        let needed = self.target[class] - self.matched(class, used);
        let mut best: Option<(u32, usize)> = None;
        if needed > 0 {
            for j in 0..self.rc.len() {
                if self.rc[j] != class || used & (1u128 << j) != 0 {
                    continue;
                }
                let cont = u32::from(prev != NONE && prev + 1 == j);
                let v = cont + self.best(i + 1, used | (1u128 << j), j)?;
                if best.is_none_or(|(b, _)| v > b) {
                    best = Some((v, j));
                }
            }
        }
        if self.remaining[i] > needed {
            let v = self.best(i + 1, used, NONE)?;
            if best.is_none_or(|(b, _)| v > b) {
                best = Some((v, SKIP));
            }
        }
        let best = best.expect("a match or a skip is always available");
        self.memo.insert((i, used, prev), best);
        Some(best.0)
    }

    fn trace(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        let (mut used, mut prev) = (0u128, NONE);
        for i in 0..self.hc.len() {
            let (_, choice) = self.memo[&(i, used, prev)];
            if choice == SKIP {
                prev = NONE;
            } else {
                pairs.push((i, choice));
                used |= 1u128 << choice;
                prev = choice;
            }
        }
        pairs
    }
}

/// Left-to-right fallback that still reaches the maximum match count:
/// extend the current chunk when possible, otherwise take the first free
/// compatible reference token.
fn greedy(hc: &[usize], rc: &[usize], target: &[usize]) -> Vec<(usize, usize)> {
    let mut used = vec![false; rc.len()];
    let mut matched = vec![0usize; target.len()];
    let mut pairs = Vec::new();
    let mut prev = NONE;
    for (i, &c) in hc.iter().enumerate() {
        if matched[c] == target[c] {
            prev = NONE;
            continue;
        }
        let next = prev.wrapping_add(1);
        let j = if prev != NONE && next < rc.len() && rc[next] == c && !used[next] {
            next
        } else {
            (0..rc.len())
                .find(|&j| rc[j] == c && !used[j])
                .expect("target bounded by reference count")
        };
        used[j] = true;
        matched[c] += 1;
        pairs.push((i, j));
        prev = j;
    }
    pairs
}

/// Score against a single reference.
pub fn meteor_single<H: AsRef<str>, R: AsRef<str>>(hyp: &[H], reference: &[R], params: &MeteorParams) -> f64 {
    if hyp.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let a = align(hyp, reference, params);
    score_from_counts(a.matches, a.chunks, hyp.len(), reference.len(), params)
}

/// `F·(1 − penalty)` from alignment counts.
pub fn score_from_counts(matches: usize, chunks: usize, hyp_len: usize, ref_len: usize, params: &MeteorParams) -> f64 {
    if matches == 0 {
        return 0.0;
    }
    let m = matches as f64;
    let p = m / hyp_len as f64;
    let r = m / ref_len as f64;
    let f = p * r / (params.alpha_f * p + (1.0 - params.alpha_f) * r);
    let penalty = params.gamma_pen * (chunks as f64 / m).powf(params.beta_pen);
    f * (1.0 - penalty)
}

/// Best score over all references.
pub fn meteor<H: AsRef<str>, R: AsRef<str>>(hyp: &[H], references: &[Vec<R>], params: &MeteorParams) -> Result<f64> {
    params.validate()?;
    if references.is_empty() {
        return Err(S2vtError::invalid("meteor needs at least one reference"));
    }
    Ok(references
        .iter()
        .map(|r| meteor_single(hyp, r, params))
        .fold(0.0, f64::max))
}
