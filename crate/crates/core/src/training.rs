//! Mini-batch maximum-likelihood training.

use std::borrow::Cow;
use std::ops::ControlFlow;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Result, S2vtError};
use crate::model::{backward, forward_inputs, zero_column, Dropout, S2VTModel, S2VTParams, StepInputs, PAD, T_MAX};
use crate::numerics::{Rng, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn default_learning_rate(self) -> f64 {
        match self {
            OptimizerKind::Sgd => 0.01,
            OptimizerKind::Adam => 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub clip_norm: Option<f64>,
    pub dropout: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub t_max: usize,
    /// Present each training sample's frames in a fresh random order every epoch.
    pub shuffle_frames: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            learning_rate: OptimizerKind::Adam.default_learning_rate(),
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            clip_norm: Some(5.0),
            dropout: None,
            epochs: 10,
            batch_size: 8,
            seed: 0,
            t_max: T_MAX,
            shuffle_frames: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| x > 0.0 && x <= 1.0;
        if !in_unit(self.learning_rate) {
            return Err(S2vtError::invalid("learning_rate must lie in (0, 1]"));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(S2vtError::invalid(format!("{name} must lie in (0, 1)")));
            }
        }
        if !(self.adam_epsilon > 0.0 && self.adam_epsilon.is_finite()) {
            return Err(S2vtError::invalid("adam_epsilon must be positive"));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(S2vtError::invalid("clip_norm must be positive"));
            }
        }
        if let Some(d) = self.dropout {
            if !(d > 0.0 && d < 1.0) {
                return Err(S2vtError::invalid("dropout rate must lie in (0, 1)"));
            }
        }
        if self.batch_size == 0 {
            return Err(S2vtError::invalid("batch_size must be at least 1"));
        }
        if self.t_max < 2 {
            return Err(S2vtError::invalid("t_max must be at least 2"));
        }
        Ok(())
    }
}

/// Adam moments and step count; both moments stay `None` for SGD.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerState {
    pub step: u64,
    pub first_moment: Option<S2VTParams>,
    pub second_moment: Option<S2VTParams>,
}

/// Rescales `grads` to `clip_norm` when the global L2 norm exceeds it.
/// Returns the norm before clipping.
pub fn clip_gradients(grads: &mut S2VTParams, clip_norm: f64) -> Result<f64> {
    if clip_norm.is_nan() || clip_norm <= 0.0 {
        return Err(S2vtError::invalid("clip_norm must be positive"));
    }
    let norm = grads.norm_squared().sqrt();
    if norm > clip_norm {
        grads.scale(clip_norm / norm);
    }
    Ok(norm)
}

fn check_shapes(params: &S2VTParams, grads: &S2VTParams) -> Result<()> {
    if !params.same_shape(grads) {
        return Err(S2vtError::invalid("gradient shapes do not match the model"));
    }
    Ok(())
}

pub fn sgd_update(params: &mut S2VTParams, grads: &S2VTParams, learning_rate: f64) -> Result<()> {
    check_shapes(params, grads)?;
    for (p, g) in params.blocks_mut().into_iter().zip(grads.blocks()) {
        p.iter_mut().zip(g).for_each(|(p, g)| *p -= learning_rate * g);
    }
    zero_column(&mut params.word_embed, PAD);
    Ok(())
}

pub fn adam_update(
    params: &mut S2VTParams,
    grads: &S2VTParams,
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<()> {
    check_shapes(params, grads)?;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let zeros = || S2VTParams::zeros(params.dims(), params.vocab_size());
    let m = state.first_moment.get_or_insert_with(zeros);
    let v = state.second_moment.get_or_insert_with(zeros);
    if !m.same_shape(params) || !v.same_shape(params) {
        return Err(S2vtError::invalid("optimizer state does not match the model"));
    }
    state.step += 1;
    let t = i32::try_from(state.step).unwrap_or(i32::MAX);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = config.learning_rate;
    let eps = config.adam_epsilon;
    for (((p, g), m), v) in params
        .blocks_mut()
        .into_iter()
        .zip(grads.blocks())
        .zip(m.blocks_mut())
        .zip(v.blocks_mut())
    {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    zero_column(&mut params.word_embed, PAD);
    zero_column(&mut m.word_embed, PAD);
    zero_column(&mut v.word_embed, PAD);
    Ok(())
}

/// Applies one optimizer step of the configured kind.
pub fn apply_update(
    params: &mut S2VTParams,
    grads: &S2VTParams,
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<()> {
    match config.optimizer {
        OptimizerKind::Sgd => {
            sgd_update(params, grads, config.learning_rate)?;
            state.step += 1;
            Ok(())
        }
        OptimizerKind::Adam => adam_update(params, grads, state, config),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub mean_token_loss: f64,
    pub elapsed_seconds: f64,
}

impl EpochStats {
    /// `epoch<TAB>mean_token_loss<TAB>elapsed_seconds`.
    pub fn log_line(&self) -> String {
        format!("{}\t{:.6}\t{:.3}", self.epoch, self.mean_token_loss, self.elapsed_seconds)
    }
}

/// Summed loss, token count and gradient of one sample.
pub fn sample_gradient(
    model: &S2VTModel,
    sample: &Sample,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<(f64, usize, S2VTParams)> {
    let frames: Cow<'_, [Vector]> = if config.shuffle_frames {
        let mut f = sample.frames.clone();
        rng.shuffle(&mut f);
        Cow::Owned(f)
    } else {
        Cow::Borrowed(&sample.frames)
    };
    let inputs = StepInputs::new(&frames, &sample.tokens, Some(config.t_max))?;
    let dropout = config.dropout.map(|rate| Dropout { rate, rng: &mut *rng });
    let trace = forward_inputs(model, &inputs, dropout)?;
    let grads = backward(model, &trace)?;
    Ok((trace.loss, trace.token_count(), grads))
}

/// Trains in place and returns the mean per-token loss of every epoch.
pub fn train(model: &mut S2VTModel, samples: &[Sample], config: &TrainConfig) -> Result<Vec<f64>> {
    train_with_log(model, samples, config, |_| {})
}

/// `train` that reports each finished epoch to `on_epoch`.
pub fn train_with_log(
    model: &mut S2VTModel,
    samples: &[Sample],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<Vec<f64>> {
    train_until(model, samples, config, |stats, _| {
        on_epoch(stats);
        ControlFlow::Continue(())
    })
}

/// Trains for at most `config.epochs` epochs, stopping early when `after_epoch`
/// breaks. The callback sees the model as it stands after each epoch.
///
/// Randomness is drawn from one generator seeded with `config.seed`: per
/// epoch a permutation of the samples, then for each sample in visiting order
/// a forked generator that drives its dropout masks and frame shuffling.
pub fn train_until(
    model: &mut S2VTModel,
    samples: &[Sample],
    config: &TrainConfig,
    mut after_epoch: impl FnMut(&EpochStats, &S2VTModel) -> ControlFlow<()>,
) -> Result<Vec<f64>> {
    config.validate()?;
    model.validate()?;
    if config.epochs == 0 {
        return Ok(Vec::new());
    }
    if samples.is_empty() {
        return Err(S2vtError::invalid("no training samples"));
    }
    for s in samples {
        // Surface bad samples before the first update.
        StepInputs::new(&s.frames, &s.tokens, Some(config.t_max))?;
        if let Some(&bad) = s.tokens.iter().find(|&&t| t >= model.vocab_size()) {
            return Err(S2vtError::invalid(format!("sample {} has token id {bad} outside the vocabulary", s.id)));
        }
        if let Some(f) = s.frames.iter().find(|f| f.len() != model.dims().frame_dim) {
            return Err(S2vtError::DimensionMismatch {
                context: "frame feature width",
                expected: model.dims().frame_dim,
                actual: f.len(),
            });
        }
    }

    let start = Instant::now();
    let mut rng = Rng::new(config.seed);
    let mut state = OptimizerState::default();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let order = rng.permutation(samples.len());
        let mut epoch_loss = 0.0;
        let mut epoch_tokens = 0usize;
        for batch in order.chunks(config.batch_size) {
            let mut grads = S2VTParams::zeros(model.dims(), model.vocab_size());
            let mut batch_loss = 0.0;
            for &idx in batch {
                let mut sample_rng = rng.fork();
                let (loss, tokens, g) = sample_gradient(model, &samples[idx], config, &mut sample_rng)?;
                batch_loss += loss;
                epoch_tokens += tokens;
                grads.add_assign(&g);
            }
            if !batch_loss.is_finite() {
                return Err(S2vtError::Diverged { epoch, loss: batch_loss });
            }
            epoch_loss += batch_loss;
            grads.scale(1.0 / batch.len() as f64);
            if let Some(c) = config.clip_norm {
                clip_gradients(&mut grads, c)?;
            }
            apply_update(&mut model.params, &grads, &mut state, config)?;
            if !model.params.is_finite() {
                return Err(S2vtError::Diverged { epoch, loss: f64::NAN });
            }
        }
        let mean = epoch_loss / epoch_tokens as f64;
        history.push(mean);
        let stats = EpochStats {
            epoch,
            mean_token_loss: mean,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        };
        if after_epoch(&stats, model).is_break() {
            break;
        }
    }
    Ok(history)
}

/// Mean per-token loss without dropout, frames in their given order.
pub fn evaluate_loss(model: &S2VTModel, samples: &[Sample], t_max: usize) -> Result<f64> {
    let mut loss = 0.0;
    let mut tokens = 0;
    for s in samples {
        let inputs = StepInputs::new(&s.frames, &s.tokens, Some(t_max))?;
        let trace = forward_inputs(model, &inputs, None)?;
        loss += trace.loss;
        tokens += trace.token_count();
    }
    if tokens == 0 {
        return Err(S2vtError::invalid("no samples to evaluate"));
    }
    Ok(loss / tokens as f64)
}
