//! Greedy decoding and two-model fusion.

use serde::{Deserialize, Serialize};

use crate::error::{Result, S2vtError};
use crate::eval::{meteor, MeteorParams};
use crate::model::{encode, step_distribution, DecoderState, S2VTModel, TokenId, BOS, EOS, PAD, UNK};
use crate::numerics::{argmax_where, Vector};

pub const DEFAULT_MAX_LEN: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub max_len: usize,
    /// Weight of the first model in fused decoding.
    pub alpha: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            max_len: DEFAULT_MAX_LEN,
            alpha: 0.5,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_len == 0 {
            return Err(S2vtError::invalid("max_len must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(S2vtError::invalid("alpha must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Tokens a decoder may emit: every word plus `<EOS>`.
fn emittable(id: TokenId) -> bool {
    !matches!(id, PAD | BOS | UNK)
}

fn pick(dist: &[f64]) -> TokenId {
    argmax_where(dist, emittable).unwrap_or(EOS)
}

/// Encodes every frame, then emits the most probable token (lowest id on
/// ties) until `<EOS>` or `max_len` tokens. `<EOS>` is not included.
pub fn greedy_decode(model: &S2VTModel, frames: &[Vector], config: &DecodeConfig) -> Result<Vec<TokenId>> {
    config.validate()?;
    let mut state = encode(model, frames)?;
    let mut prev = BOS;
    let mut out = Vec::new();
    while out.len() < config.max_len {
        let (dist, next) = step_distribution(model, &state, prev)?;
        let token = pick(&dist);
        if token == EOS {
            break;
        }
        out.push(token);
        state = next;
        prev = token;
    }
    Ok(out)
}

/// Runs both models in lockstep and emits the argmax of
/// `alpha·p_a + (1 − alpha)·p_b`, feeding the chosen token to both.
pub fn fused_decode(
    model_a: &S2VTModel,
    model_b: &S2VTModel,
    frames_a: &[Vector],
    frames_b: &[Vector],
    config: &DecodeConfig,
) -> Result<Vec<TokenId>> {
    config.validate()?;
    if model_a.vocab != model_b.vocab {
        return Err(S2vtError::VocabularyMismatch(format!(
            "models have {} and {} tokens or differ in token order",
            model_a.vocab_size(),
            model_b.vocab_size()
        )));
    }
    let mut sa = encode(model_a, frames_a)?;
    let mut sb = encode(model_b, frames_b)?;
    let mut prev = BOS;
    let mut out = Vec::new();
    while out.len() < config.max_len {
        let (dist, na, nb) = fused_step(model_a, model_b, &sa, &sb, prev, config.alpha)?;
        let token = pick(&dist);
        if token == EOS {
            break;
        }
        out.push(token);
        sa = na;
        sb = nb;
        prev = token;
    }
    Ok(out)
}

/// One fused decode step: the mixed distribution and both successor states.
pub fn fused_step(
    model_a: &S2VTModel,
    model_b: &S2VTModel,
    state_a: &DecoderState,
    state_b: &DecoderState,
    prev: TokenId,
    alpha: f64,
) -> Result<(Vector, DecoderState, DecoderState)> {
    let (pa, na) = step_distribution(model_a, state_a, prev)?;
    let (pb, nb) = step_distribution(model_b, state_b, prev)?;
    let mixed = if alpha == 1.0 {
        pa
    } else if alpha == 0.0 {
        pb
    } else {
        pa.iter().zip(&pb).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect()
    };
    Ok((mixed, na, nb))
}

/// A validation item for alpha tuning: both feature streams and the references.
#[derive(Debug, Clone)]
pub struct FusionExample {
    pub frames_a: Vec<Vector>,
    pub frames_b: Vec<Vector>,
    pub references: Vec<Vec<String>>,
}

/// Scores `alpha ∈ {0.0, 0.1, …, 1.0}` by mean METEOR on `examples` and
/// returns the best alpha (the smallest on ties) with every grid score.
pub fn tune_alpha(
    model_a: &S2VTModel,
    model_b: &S2VTModel,
    examples: &[FusionExample],
    config: &DecodeConfig,
    params: &MeteorParams,
) -> Result<(f64, Vec<(f64, f64)>)> {
    if examples.is_empty() {
        return Err(S2vtError::invalid("no validation examples for alpha tuning"));
    }
    let mut scores = Vec::with_capacity(11);
    for i in 0..=10 {
        let alpha = i as f64 / 10.0;
        let cfg = DecodeConfig { alpha, ..*config };
        let mut total = 0.0;
        for ex in examples {
            let ids = fused_decode(model_a, model_b, &ex.frames_a, &ex.frames_b, &cfg)?;
            let hyp: Vec<&str> = ids.iter().filter_map(|&id| model_a.vocab.token(id)).collect();
            total += meteor(&hyp, &ex.references, params)?;
        }
        scores.push((alpha, total / examples.len() as f64));
    }
    let best = scores
        .iter()
        .fold(scores[0], |best, &s| if s.1 > best.1 { s } else { best });
    Ok((best.0, scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelDims, Vocabulary};
    use crate::numerics::Rng;

    fn model(seed: u64) -> S2VTModel {
        let dims = ModelDims {
            frame_dim: 4,
            embed_dim: 3,
            hidden_dim: 5,
        };
        let vocab = Vocabulary::with_words(["a", "b", "c", "d"]).unwrap();
        let mut m = S2VTModel::new(dims, vocab, &mut Rng::new(seed)).unwrap();
        let mut rng = Rng::new(seed + 100);
        for b in m.params.blocks_mut() {
            b.iter_mut().for_each(|x| *x = rng.uniform(-1.0, 1.0));
        }
        crate::model::zero_column(&mut m.params.word_embed, PAD);
        m
    }

    fn frames(seed: u64, n: usize, width: usize) -> Vec<Vector> {
        let mut rng = Rng::new(seed);
        (0..n).map(|_| (0..width).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect()
    }

    /// Output weights that make `token` dominate regardless of the hidden state.
    fn favour(m: &mut S2VTModel, token: TokenId) {
        // Saturated gates keep every layer-2 output clearly positive.
        m.params.output.fill(0.0);
        m.params.lstm2.b_o.fill(50.0);
        m.params.lstm2.b_i.fill(50.0);
        m.params.lstm2.b_g.fill(50.0);
        for c in 0..m.dims().hidden_dim {
            m.params.output.set(token, c, 100.0);
        }
    }

    #[test]
    fn eos_model_gives_empty_caption() {
        let mut m = model(1);
        favour(&mut m, EOS);
        assert!(greedy_decode(&m, &frames(1, 3, 4), &DecodeConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn max_len_caps_output() {
        let mut m = model(2);
        favour(&mut m, 5);
        let cfg = DecodeConfig {
            max_len: 3,
            ..Default::default()
        };
        assert_eq!(greedy_decode(&m, &frames(2, 2, 4), &cfg).unwrap(), vec![5, 5, 5]);
    }

    #[test]
    fn reserved_tokens_never_emitted() {
        let mut m = model(3);
        favour(&mut m, UNK);
        let out = greedy_decode(&m, &frames(3, 2, 4), &DecodeConfig::default()).unwrap();
        assert!(out.iter().all(|&t| !Vocabulary::is_reserved(t)));
        for seed in 0..20 {
            let m = model(seed);
            let out = greedy_decode(&m, &frames(seed, 5, 4), &DecodeConfig::default()).unwrap();
            assert!(out.iter().all(|&t| !Vocabulary::is_reserved(t)));
            assert!(out.len() <= DEFAULT_MAX_LEN);
        }
    }

    #[test]
    fn greedy_follows_step_argmax() {
        let m = model(4);
        let f = frames(4, 4, 4);
        let out = greedy_decode(&m, &f, &DecodeConfig::default()).unwrap();
        let mut state = encode(&m, &f).unwrap();
        let mut prev = BOS;
        for &t in &out {
            let (dist, next) = step_distribution(&m, &state, prev).unwrap();
            let best = (0..dist.len())
                .filter(|&i| emittable(i))
                .max_by(|&a, &b| dist[a].partial_cmp(&dist[b]).unwrap().then(b.cmp(&a)))
                .unwrap();
            assert_eq!(t, best);
            state = next;
            prev = t;
        }
    }

    #[test]
    fn fusion_degenerates() {
        for seed in 0..10 {
            let (a, b) = (model(seed), model(seed + 50));
            let fa = frames(seed, 3, 4);
            let fb = frames(seed + 7, 5, 4);
            let cfg = |alpha| DecodeConfig { alpha, ..Default::default() };
            let ga = greedy_decode(&a, &fa, &cfg(0.5)).unwrap();
            let gb = greedy_decode(&b, &fb, &cfg(0.5)).unwrap();
            assert_eq!(fused_decode(&a, &b, &fa, &fb, &cfg(1.0)).unwrap(), ga);
            assert_eq!(fused_decode(&a, &b, &fa, &fb, &cfg(0.0)).unwrap(), gb);
            for alpha in [0.25, 0.5, 0.75] {
                assert_eq!(fused_decode(&a, &a, &fa, &fa, &cfg(alpha)).unwrap(), ga);
            }
        }
    }

    #[test]
    fn fused_distribution_is_normalized() {
        let (a, b) = (model(5), model(6));
        let sa = encode(&a, &frames(1, 2, 4)).unwrap();
        let sb = encode(&b, &frames(2, 3, 4)).unwrap();
        for alpha in [0.0, 0.3, 0.5, 1.0] {
            let (d, _, _) = fused_step(&a, &b, &sa, &sb, BOS, alpha).unwrap();
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn fusion_allows_different_feature_widths() {
        let a = model(7);
        let dims = ModelDims {
            frame_dim: 9,
            ..a.dims()
        };
        let b = S2VTModel::new(dims, a.vocab.clone(), &mut Rng::new(8)).unwrap();
        assert!(fused_decode(&a, &b, &frames(1, 3, 4), &frames(2, 6, 9), &DecodeConfig::default()).is_ok());
    }

    #[test]
    fn errors() {
        let a = model(9);
        assert!(greedy_decode(&a, &[], &DecodeConfig::default()).unwrap_err().is_validation());
        let bad = DecodeConfig { max_len: 0, ..Default::default() };
        assert!(greedy_decode(&a, &frames(1, 2, 4), &bad).is_err());
        let bad = DecodeConfig { alpha: 1.5, ..Default::default() };
        assert!(fused_decode(&a, &a, &frames(1, 2, 4), &frames(1, 2, 4), &bad).is_err());

        let other = Vocabulary::with_words(["a", "b", "d", "c"]).unwrap();
        let b = S2VTModel::new(a.dims(), other, &mut Rng::new(1)).unwrap();
        let err = fused_decode(&a, &b, &frames(1, 2, 4), &frames(1, 2, 4), &DecodeConfig::default()).unwrap_err();
        assert!(matches!(err, S2vtError::VocabularyMismatch(_)));
    }

    #[test]
    fn tune_alpha_scans_grid() {
        let (a, b) = (model(10), model(11));
        let examples: Vec<FusionExample> = (0..3)
            .map(|i| FusionExample {
                frames_a: frames(i, 3, 4),
                frames_b: frames(i + 10, 3, 4),
                references: vec![vec!["a".into(), "b".into()]],
            })
            .collect();
        let (best, grid) = tune_alpha(&a, &b, &examples, &DecodeConfig::default(), &MeteorParams::default()).unwrap();
        assert_eq!(grid.len(), 11);
        assert_eq!(grid[10].0, 1.0);
        let top = grid.iter().map(|g| g.1).fold(f64::MIN, f64::max);
        assert_eq!(grid.iter().find(|g| g.1 == top).unwrap().0, best);
    }
}
