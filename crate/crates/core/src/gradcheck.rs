//! Central finite-difference checks of the analytic gradients.
//!
//! Relative error is `|a − n| / max(|a|, |n|, REL_ERROR_FLOOR)`. The floor
//! keeps entries whose true gradient is essentially zero from turning
//! round-off into a huge ratio; below it the check is an absolute one.
//! A central difference at ε = 1e-5 carries round-off of about
//! `f64::EPSILON · |loss| / ε`, roughly 2e-10 for the losses near 10 seen
//! here, so an absolute tolerance of 1e-9 (floor × 1e-4) still leaves a
//! fivefold margin while staying far below any real gradient error.

use crate::error::Result;
use crate::model::{backward, forward, zero_column, ModelDims, S2VTModel, S2VTParams, Vocabulary, EOS, PAD};
use crate::numerics::{Rng, Vector};

pub const FD_EPSILON: f64 = 1e-5;
pub const REL_ERROR_FLOOR: f64 = 1e-5;
/// Weight scale for randomly drawn check models. Larger than the training
/// init so that every block has gradients well above the floor.
pub const CHECK_INIT_SCALE: f64 = 0.5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
}

/// Shape of a randomized check problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckProblem {
    pub dims: ModelDims,
    pub vocab_size: usize,
    pub n_frames: usize,
    /// Target length including `<EOS>`.
    pub target_len: usize,
}

impl Default for CheckProblem {
    fn default() -> Self {
        CheckProblem {
            dims: ModelDims {
                frame_dim: 6,
                embed_dim: 4,
                hidden_dim: 5,
            },
            vocab_size: 12,
            n_frames: 3,
            target_len: 4,
        }
    }
}

/// Compares `backward` against central differences of `forward` for every
/// trainable entry. The `<pad>` embedding column is frozen and skipped.
pub fn check_model(model: &S2VTModel, frames: &[Vector], target: &[usize], eps: f64) -> Result<Vec<BlockCheck>> {
    let trace = forward(model, frames, target, None)?;
    let grads = backward(model, &trace)?;
    compare_gradients(model, frames, target, &grads, eps)
}

/// Compares a given gradient against central differences of `forward`.
pub fn compare_gradients(
    model: &S2VTModel,
    frames: &[Vector],
    target: &[usize],
    grads: &S2VTParams,
    eps: f64,
) -> Result<Vec<BlockCheck>> {
    let names = S2VTParams::block_names();
    let vocab_size = model.vocab_size();
    let mut probe = model.clone();
    let mut out = Vec::with_capacity(names.len());

    for (bi, (name, analytic)) in names.into_iter().zip(grads.blocks()).enumerate() {
        let mut worst: f64 = 0.0;
        for (k, &a) in analytic.iter().enumerate() {
            // word_embed is E × V row-major; column PAD is entry k with k % V == PAD.
            if bi == 1 && k % vocab_size == PAD {
                continue;
            }
            let orig = probe.params.blocks()[bi][k];
            probe.params.blocks_mut()[bi][k] = orig + eps;
            let plus = forward(&probe, frames, target, None)?.loss;
            probe.params.blocks_mut()[bi][k] = orig - eps;
            let minus = forward(&probe, frames, target, None)?.loss;
            probe.params.blocks_mut()[bi][k] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(a, numeric));
        }
        out.push(BlockCheck {
            name,
            entries: analytic.len(),
            max_rel_error: worst,
        });
    }
    Ok(out)
}

/// Draws a model, frames and target for `problem` from `seed`.
pub fn random_problem(problem: &CheckProblem, seed: u64) -> Result<(S2VTModel, Vec<Vector>, Vec<usize>)> {
    let mut rng = Rng::new(seed);
    let n_words = problem.vocab_size.saturating_sub(4);
    if n_words == 0 || problem.target_len == 0 {
        return Err(crate::S2vtError::invalid("check problem needs a word and a target"));
    }
    let vocab = Vocabulary::with_words((0..n_words).map(|i| format!("w{i}")))?;
    let mut model = S2VTModel::zeros(problem.dims, vocab)?;
    for b in model.params.blocks_mut() {
        b.iter_mut()
            .for_each(|w| *w = rng.uniform(-CHECK_INIT_SCALE, CHECK_INIT_SCALE));
    }
    zero_column(&mut model.params.word_embed, PAD);
    let frames = (0..problem.n_frames)
        .map(|_| (0..problem.dims.frame_dim).map(|_| rng.uniform(-1.0, 1.0)).collect())
        .collect();
    let mut target: Vec<usize> = (1..problem.target_len)
        .map(|_| 4 + rng.below(n_words as u64) as usize)
        .collect();
    target.push(EOS);
    Ok((model, frames, target))
}

/// Runs `check_model` on a fresh random problem.
pub fn check_random(problem: &CheckProblem, seed: u64) -> Result<Vec<BlockCheck>> {
    let (model, frames, target) = random_problem(problem, seed)?;
    check_model(&model, &frames, &target, FD_EPSILON)
}
