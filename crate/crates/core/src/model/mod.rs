//! The stacked two-layer captioner.
//!
//! One unrolled sequence has `n` encode steps followed by `m` decode steps.
//!
//! ```text
//!            encode step t ≤ n               decode step n + k
//! layer 1    W_fe · x_t                      zeros(E)
//! layer 2    [W_we[<pad>] ; h1_t]            [W_we[y_{k-1}] ; h1_t]   (y_0 = <BOS>)
//! output     none                            softmax(W_y · h2_t)
//! ```
//!
//! The `<pad>` column of `W_we` is held at zero, so the encode-step word input
//! and the "null padded" word are the same vector. Loss is the negative log
//! likelihood of the target tokens over decode steps only.

mod checkpoint;
mod vocab;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use vocab::{TokenId, Vocabulary, BOS, EOS, PAD, RESERVED_TOKENS, UNK};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, S2vtError};
use crate::lstm::{self, LstmParams, LstmState, StepCache, LSTM_BLOCK_NAMES};
use crate::numerics::{softmax, Matrix, Rng, Vector};

/// Training-time unroll cap on frames plus words.
pub const T_MAX: usize = 80;

/// Half-width of the uniform weight initialization.
pub const INIT_SCALE: f64 = 0.05;

/// Feature, embedding and hidden widths. Vocabulary size lives with the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelDims {
    pub frame_dim: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            frame_dim: 16,
            embed_dim: 32,
            hidden_dim: 64,
        }
    }
}

impl ModelDims {
    /// 500-wide embeddings and 1000 hidden units per layer.
    pub fn full_scale(frame_dim: usize) -> Self {
        ModelDims {
            frame_dim,
            embed_dim: 500,
            hidden_dim: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_dim == 0 || self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(S2vtError::invalid("model dimensions must be positive"));
        }
        Ok(())
    }
}

/// Every trainable block. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct S2VTParams {
    /// `E × F`
    pub frame_embed: Matrix,
    /// `E × V`, one column per token; column `<pad>` stays zero.
    pub word_embed: Matrix,
    /// input `E`, hidden `H`
    pub lstm1: LstmParams,
    /// input `E + H`, hidden `H`
    pub lstm2: LstmParams,
    /// `V × H`
    pub output: Matrix,
}

impl S2VTParams {
    pub fn zeros(dims: ModelDims, vocab_size: usize) -> Self {
        let ModelDims {
            frame_dim: f,
            embed_dim: e,
            hidden_dim: h,
        } = dims;
        S2VTParams {
            frame_embed: Matrix::zeros(e, f),
            word_embed: Matrix::zeros(e, vocab_size),
            lstm1: LstmParams::zeros(e, h),
            lstm2: LstmParams::zeros(e + h, h),
            output: Matrix::zeros(vocab_size, h),
        }
    }

    /// Weights uniform in `[-INIT_SCALE, INIT_SCALE)`, biases zero, drawn in
    /// block order.
    pub fn init(dims: ModelDims, vocab_size: usize, rng: &mut Rng) -> Self {
        let ModelDims {
            frame_dim: f,
            embed_dim: e,
            hidden_dim: h,
        } = dims;
        let s = INIT_SCALE;
        let frame_embed = Matrix::uniform(e, f, -s, s, rng);
        let mut word_embed = Matrix::uniform(e, vocab_size, -s, s, rng);
        zero_column(&mut word_embed, PAD);
        S2VTParams {
            frame_embed,
            word_embed,
            lstm1: LstmParams::uniform(e, h, s, rng),
            lstm2: LstmParams::uniform(e + h, h, s, rng),
            output: Matrix::uniform(vocab_size, h, -s, s, rng),
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            frame_dim: self.frame_embed.cols(),
            embed_dim: self.frame_embed.rows(),
            hidden_dim: self.lstm1.hidden_dim(),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.output.rows()
    }

    /// Blocks in declaration order: embeddings, layer 1, layer 2, output.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![self.frame_embed.data(), self.word_embed.data()];
        v.extend(self.lstm1.blocks());
        v.extend(self.lstm2.blocks());
        v.push(self.output.data());
        v
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![self.frame_embed.data_mut(), self.word_embed.data_mut()];
        v.extend(self.lstm1.blocks_mut());
        v.extend(self.lstm2.blocks_mut());
        v.push(self.output.data_mut());
        v
    }

    pub fn block_names() -> Vec<String> {
        let mut names = vec!["frame_embed".to_string(), "word_embed".to_string()];
        for layer in ["lstm1", "lstm2"] {
            names.extend(LSTM_BLOCK_NAMES.iter().map(|b| format!("{layer}.{b}")));
        }
        names.push("output".to_string());
        names
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    /// Squared global L2 norm over all blocks.
    pub fn norm_squared(&self) -> f64 {
        self.blocks().iter().flat_map(|b| b.iter()).map(|x| x * x).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for b in self.blocks_mut() {
            b.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// `self += other`, block by block.
    pub fn add_assign(&mut self, other: &S2VTParams) {
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn same_shape(&self, other: &S2VTParams) -> bool {
        let (a, b) = (self.blocks(), other.blocks());
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.len() == y.len())
            && self.dims() == other.dims()
    }

    /// Hash of every parameter bit, used to detect traces from other weights.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.blocks() {
            h = (h ^ b.len() as u64).wrapping_mul(0x0100_0000_01b3);
            for x in b {
                h = (h ^ x.to_bits()).wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    pub fn validate(&self) -> Result<()> {
        let ModelDims {
            frame_dim: f,
            embed_dim: e,
            hidden_dim: h,
        } = self.dims();
        let v = self.vocab_size();
        check_dim("word embedding rows", e, self.word_embed.rows())?;
        check_dim("word embedding cols", v, self.word_embed.cols())?;
        check_dim("frame embedding cols", f, self.frame_embed.cols())?;
        self.lstm1.validate()?;
        self.lstm2.validate()?;
        check_dim("layer 1 input", e, self.lstm1.input_dim())?;
        check_dim("layer 2 input", e + h, self.lstm2.input_dim())?;
        check_dim("layer 2 hidden", h, self.lstm2.hidden_dim())?;
        check_dim("output cols", h, self.output.cols())?;
        if !self.is_finite() {
            return Err(S2vtError::invalid("non-finite parameter"));
        }
        Ok(())
    }
}

pub(crate) fn zero_column(m: &mut Matrix, col: usize) {
    for r in 0..m.rows() {
        m.set(r, col, 0.0);
    }
}

/// Parameters plus vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct S2VTModel {
    pub params: S2VTParams,
    pub vocab: Vocabulary,
}

impl S2VTModel {
    pub fn new(dims: ModelDims, vocab: Vocabulary, rng: &mut Rng) -> Result<Self> {
        dims.validate()?;
        let params = S2VTParams::init(dims, vocab.len(), rng);
        Ok(S2VTModel { params, vocab })
    }

    pub fn zeros(dims: ModelDims, vocab: Vocabulary) -> Result<Self> {
        dims.validate()?;
        let params = S2VTParams::zeros(dims, vocab.len());
        Ok(S2VTModel { params, vocab })
    }

    pub fn dims(&self) -> ModelDims {
        self.params.dims()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        check_dim("vocabulary size", self.vocab.len(), self.params.vocab_size())
    }
}

/// Frame/word split of one unrolled sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeLayout {
    /// Encode steps actually unrolled.
    pub n_frames: usize,
    /// Decode steps, `<EOS>` included.
    pub n_words: usize,
    /// Frames dropped from the end to respect the cap.
    pub truncated: usize,
}

impl TimeLayout {
    pub fn total(&self) -> usize {
        self.n_frames + self.n_words
    }

    pub fn is_encode(&self, t: usize) -> bool {
        t < self.n_frames
    }
}

/// Fits `n_frames + n_words` under `t_max` by dropping the latest frames.
pub fn build_layout(n_frames: usize, n_words: usize, t_max: usize) -> Result<TimeLayout> {
    if n_words == 0 {
        return Err(S2vtError::invalid("a sentence needs at least <EOS>"));
    }
    if n_frames == 0 {
        return Err(S2vtError::invalid("a video needs at least one frame"));
    }
    if t_max < n_words + 1 {
        return Err(S2vtError::invalid(format!(
            "unroll cap {t_max} cannot hold {n_words} words and a frame"
        )));
    }
    let kept = n_frames.min(t_max - n_words);
    Ok(TimeLayout {
        n_frames: kept,
        n_words,
        truncated: n_frames - kept,
    })
}

/// Per-step input streams of one unrolled sequence.
///
/// Every step carries a frame slot and a word slot; encode steps read only
/// the frame slot and decode steps only the word slot. Whatever sits in the
/// unread slot has no effect on the loss or its gradient.
#[derive(Debug, Clone)]
pub struct StepInputs {
    pub layout: TimeLayout,
    pub frames: Vec<Vector>,
    pub words: Vec<TokenId>,
    pub targets: Vec<TokenId>,
}

impl StepInputs {
    /// Lays out `frames` and a teacher-forced `target` (ending in `<EOS>`).
    /// `t_max = None` keeps every frame.
    pub fn new(frames: &[Vector], target: &[TokenId], t_max: Option<usize>) -> Result<Self> {
        if frames.is_empty() {
            return Err(S2vtError::invalid("empty frame sequence"));
        }
        let layout = match t_max {
            Some(cap) => build_layout(frames.len(), target.len(), cap)?,
            None => build_layout(frames.len(), target.len(), frames.len() + target.len())?,
        };
        let width = frames[0].len();
        let mut step_frames: Vec<Vector> = frames[..layout.n_frames].to_vec();
        step_frames.resize(layout.total(), vec![0.0; width]);
        let mut words = vec![PAD; layout.n_frames];
        words.push(BOS);
        words.extend_from_slice(&target[..target.len() - 1]);
        Ok(StepInputs {
            layout,
            frames: step_frames,
            words,
            targets: target.to_vec(),
        })
    }
}

/// Inverted-dropout masks for one time step. Entries are `0` or `1/(1-rate)`.
#[derive(Debug, Clone)]
pub struct DropMasks {
    pub frame_input: Vector,
    pub word_input: Vector,
    pub layer1_output: Vector,
    pub layer2_output: Vector,
}

impl DropMasks {
    fn draw(dims: ModelDims, rate: f64, rng: &mut Rng) -> Self {
        let keep = 1.0 / (1.0 - rate);
        let mut mask = |n: usize| -> Vector {
            (0..n)
                .map(|_| if rng.uniform01() < rate { 0.0 } else { keep })
                .collect()
        };
        DropMasks {
            frame_input: mask(dims.embed_dim),
            word_input: mask(dims.embed_dim),
            layer1_output: mask(dims.hidden_dim),
            layer2_output: mask(dims.hidden_dim),
        }
    }
}

/// Dropout on the inputs and outputs of both layers.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut Rng,
}

/// Recurrent state of both layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub layer1: LstmState,
    pub layer2: LstmState,
}

impl DecoderState {
    pub fn zeros(hidden_dim: usize) -> Self {
        DecoderState {
            layer1: LstmState::zeros(hidden_dim),
            layer2: LstmState::zeros(hidden_dim),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub layer1: StepCache,
    pub layer2: StepCache,
    pub masks: Option<DropMasks>,
    /// Raw frame features (encode steps only).
    pub frame: Option<Vector>,
    /// Word fed to layer 2 (decode steps only).
    pub word: Option<TokenId>,
    /// Layer 2 output after dropout (decode steps only).
    pub readout: Option<Vector>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub layout: TimeLayout,
    pub steps: Vec<StepRecord>,
    /// One distribution per decode step.
    pub probs: Vec<Vector>,
    pub targets: Vec<TokenId>,
    /// Summed negative log-likelihood over decode steps.
    pub loss: f64,
    /// 0 on encode steps, 1 on decode steps.
    pub loss_mask: Vec<f64>,
    fingerprint: u64,
}

impl ForwardTrace {
    pub fn token_count(&self) -> usize {
        self.targets.len()
    }

    pub fn mean_token_loss(&self) -> f64 {
        self.loss / self.targets.len() as f64
    }
}

fn validate_target(target: &[TokenId], vocab_size: usize) -> Result<()> {
    match target.last() {
        None => return Err(S2vtError::invalid("empty target")),
        Some(&EOS) => {}
        Some(_) => return Err(S2vtError::invalid("target must end with <EOS>")),
    }
    for &id in &target[..target.len() - 1] {
        if id >= vocab_size {
            return Err(S2vtError::invalid(format!("token id {id} outside vocabulary")));
        }
        if matches!(id, PAD | BOS | EOS) {
            return Err(S2vtError::invalid(format!(
                "reserved token {} inside target",
                RESERVED_TOKENS[id]
            )));
        }
    }
    Ok(())
}

fn validate_frames(frames: &[Vector], frame_dim: usize) -> Result<()> {
    if frames.is_empty() {
        return Err(S2vtError::invalid("empty frame sequence"));
    }
    for f in frames {
        check_dim("frame feature width", frame_dim, f.len())?;
    }
    Ok(())
}

/// Teacher-forced forward pass with every frame kept.
pub fn forward(
    model: &S2VTModel,
    frames: &[Vector],
    target: &[TokenId],
    dropout: Option<Dropout<'_>>,
) -> Result<ForwardTrace> {
    validate_frames(frames, model.dims().frame_dim)?;
    validate_target(target, model.vocab_size())?;
    let inputs = StepInputs::new(frames, target, None)?;
    forward_inputs(model, &inputs, dropout)
}

/// Forward pass over explicit step inputs.
pub fn forward_inputs(
    model: &S2VTModel,
    inputs: &StepInputs,
    mut dropout: Option<Dropout<'_>>,
) -> Result<ForwardTrace> {
    let dims = model.dims();
    let layout = inputs.layout;
    let total = layout.total();
    check_dim("frame slots", total, inputs.frames.len())?;
    check_dim("word slots", total, inputs.words.len())?;
    check_dim("targets", layout.n_words, inputs.targets.len())?;
    validate_target(&inputs.targets, model.vocab_size())?;
    validate_frames(&inputs.frames[..layout.n_frames], dims.frame_dim)?;
    for &w in &inputs.words[layout.n_frames..] {
        if w >= model.vocab_size() {
            return Err(S2vtError::invalid(format!("token id {w} outside vocabulary")));
        }
    }
    if let Some(d) = &dropout {
        if !(0.0..1.0).contains(&d.rate) {
            return Err(S2vtError::invalid("dropout rate must lie in [0, 1)"));
        }
    }

    let p = &model.params;
    let mut state = DecoderState::zeros(dims.hidden_dim);
    let mut steps = Vec::with_capacity(total);
    let mut probs = Vec::with_capacity(layout.n_words);
    let mut loss = 0.0;
    let mut loss_mask = Vec::with_capacity(total);

    for t in 0..total {
        let masks = dropout
            .as_mut()
            .map(|d| DropMasks::draw(dims, d.rate, d.rng));
        let encode = layout.is_encode(t);
        let (frame, word) = if encode {
            (Some(&inputs.frames[t][..]), PAD)
        } else {
            (None, inputs.words[t])
        };
        let (next, c1, c2) = advance(p, frame, word, &state, masks.as_ref());
        state = next;

        let mut record = StepRecord {
            layer1: c1,
            layer2: c2,
            masks,
            frame: frame.map(<[f64]>::to_vec),
            word: (!encode).then_some(word),
            readout: None,
        };
        if encode {
            loss_mask.push(0.0);
        } else {
            let k = t - layout.n_frames;
            let readout = apply_mask(&state.layer2.h, record.masks.as_ref().map(|m| &m.layer2_output[..]));
            let dist = project(p, &readout)?;
            loss -= dist[inputs.targets[k]].ln();
            probs.push(dist);
            record.readout = Some(readout);
            loss_mask.push(1.0);
        }
        steps.push(record);
    }

    Ok(ForwardTrace {
        layout,
        steps,
        probs,
        targets: inputs.targets.clone(),
        loss,
        loss_mask,
        fingerprint: p.fingerprint(),
    })
}

fn apply_mask(v: &[f64], mask: Option<&[f64]>) -> Vector {
    match mask {
        Some(m) => v.iter().zip(m).map(|(a, b)| a * b).collect(),
        None => v.to_vec(),
    }
}

fn project(p: &S2VTParams, readout: &[f64]) -> Result<Vector> {
    let mut logits = vec![0.0; p.vocab_size()];
    p.output.matvec_acc(readout, &mut logits);
    softmax(&logits)
}

/// One time step through both layers. `frame = None` means a decode step
/// (zero input to layer 1).
fn advance(
    p: &S2VTParams,
    frame: Option<&[f64]>,
    word: TokenId,
    state: &DecoderState,
    masks: Option<&DropMasks>,
) -> (DecoderState, StepCache, StepCache) {
    let e = p.frame_embed.rows();
    let mut x1 = vec![0.0; e];
    if let Some(f) = frame {
        p.frame_embed.matvec_acc(f, &mut x1);
        if let Some(m) = masks {
            x1.iter_mut().zip(&m.frame_input).for_each(|(x, k)| *x *= k);
        }
    }
    let (s1, c1) = lstm::step(&p.lstm1, &x1, &state.layer1);

    let mut x2 = Vec::with_capacity(e + s1.h.len());
    x2.extend((0..e).map(|r| p.word_embed.get(r, word)));
    x2.extend_from_slice(&s1.h);
    if let Some(m) = masks {
        x2[..e].iter_mut().zip(&m.word_input).for_each(|(x, k)| *x *= k);
        x2[e..].iter_mut().zip(&m.layer1_output).for_each(|(x, k)| *x *= k);
    }
    let (s2, c2) = lstm::step(&p.lstm2, &x2, &state.layer2);
    (
        DecoderState {
            layer1: s1,
            layer2: s2,
        },
        c1,
        c2,
    )
}

/// Exact gradient of `trace.loss` with respect to every parameter.
pub fn backward(model: &S2VTModel, trace: &ForwardTrace) -> Result<S2VTParams> {
    let p = &model.params;
    if trace.fingerprint != p.fingerprint() {
        return Err(S2vtError::invalid("trace was produced by different parameters"));
    }
    let dims = model.dims();
    let (e, h) = (dims.embed_dim, dims.hidden_dim);
    let layout = trace.layout;
    check_dim("trace steps", layout.total(), trace.steps.len())?;

    let mut grads = S2VTParams::zeros(dims, model.vocab_size());
    let (mut dh1, mut dc1) = (vec![0.0; h], vec![0.0; h]);
    let (mut dh2, mut dc2) = (vec![0.0; h], vec![0.0; h]);

    for t in (0..layout.total()).rev() {
        let step = &trace.steps[t];
        let masks = step.masks.as_ref();

        if !layout.is_encode(t) {
            let k = t - layout.n_frames;
            let mut dlogits = trace.probs[k].clone();
            dlogits[trace.targets[k]] -= 1.0;
            let readout = step
                .readout
                .as_ref()
                .ok_or_else(|| S2vtError::invalid("decode step without readout"))?;
            grads.output.outer_acc(&dlogits, readout);
            let mut dz = vec![0.0; h];
            p.output.transpose_matvec_acc(&dlogits, &mut dz);
            if let Some(m) = masks {
                dz.iter_mut().zip(&m.layer2_output).for_each(|(d, k)| *d *= k);
            }
            dh2.iter_mut().zip(&dz).for_each(|(a, b)| *a += b);
        }

        let (mut dx2, dh2_prev, dc2_prev) =
            lstm::step_backward_acc(&p.lstm2, &step.layer2, &dh2, &dc2, &mut grads.lstm2);
        if let Some(m) = masks {
            dx2[..e].iter_mut().zip(&m.word_input).for_each(|(x, k)| *x *= k);
            dx2[e..].iter_mut().zip(&m.layer1_output).for_each(|(x, k)| *x *= k);
        }
        if let Some(word) = step.word {
            if word != PAD {
                for (r, d) in dx2[..e].iter().enumerate() {
                    let cur = grads.word_embed.get(r, word);
                    grads.word_embed.set(r, word, cur + d);
                }
            }
        }
        dh1.iter_mut().zip(&dx2[e..]).for_each(|(a, b)| *a += b);

        let (mut dx1, dh1_prev, dc1_prev) =
            lstm::step_backward_acc(&p.lstm1, &step.layer1, &dh1, &dc1, &mut grads.lstm1);
        if let Some(frame) = &step.frame {
            if let Some(m) = masks {
                dx1.iter_mut().zip(&m.frame_input).for_each(|(x, k)| *x *= k);
            }
            grads.frame_embed.outer_acc(&dx1, frame);
        }

        dh1 = dh1_prev;
        dc1 = dc1_prev;
        dh2 = dh2_prev;
        dc2 = dc2_prev;
    }
    zero_column(&mut grads.word_embed, PAD);
    Ok(grads)
}

/// Runs the encode phase over every frame, starting from zero state.
pub fn encode(model: &S2VTModel, frames: &[Vector]) -> Result<DecoderState> {
    let dims = model.dims();
    validate_frames(frames, dims.frame_dim)?;
    let mut state = DecoderState::zeros(dims.hidden_dim);
    for f in frames {
        state = advance(&model.params, Some(f), PAD, &state, None).0;
    }
    Ok(state)
}

/// Advances both layers by one decode step fed `prev_token` and returns the
/// next-word distribution together with the new state.
pub fn step_distribution(
    model: &S2VTModel,
    state: &DecoderState,
    prev_token: TokenId,
) -> Result<(Vector, DecoderState)> {
    let h = model.dims().hidden_dim;
    if prev_token >= model.vocab_size() {
        return Err(S2vtError::invalid(format!(
            "token id {prev_token} outside vocabulary of {}",
            model.vocab_size()
        )));
    }
    for s in [&state.layer1, &state.layer2] {
        check_dim("state h", h, s.h.len())?;
        check_dim("state c", h, s.c.len())?;
    }
    let (next, _, _) = advance(&model.params, None, prev_token, state, None);
    let dist = project(&model.params, &next.layer2.h)?;
    Ok((dist, next))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(n_words: usize) -> Vocabulary {
        Vocabulary::with_words((0..n_words).map(|i| format!("w{i}"))).unwrap()
    }

    fn small_model(seed: u64) -> S2VTModel {
        let dims = ModelDims {
            frame_dim: 6,
            embed_dim: 4,
            hidden_dim: 5,
        };
        let mut rng = Rng::new(seed);
        let mut m = S2VTModel::new(dims, vocab(8), &mut rng).unwrap();
        // Larger weights than the default init so gradients are not tiny.
        for b in m.params.blocks_mut() {
            b.iter_mut().for_each(|w| *w = rng.uniform(-0.5, 0.5));
        }
        zero_column(&mut m.params.word_embed, PAD);
        m
    }

    fn frames(n: usize, f: usize, rng: &mut Rng) -> Vec<Vector> {
        (0..n).map(|_| (0..f).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect()
    }

    #[test]
    fn layout_examples() {
        let l = build_layout(70, 10, 80).unwrap();
        assert_eq!((l.n_frames, l.total(), l.truncated), (70, 80, 0));
        let l = build_layout(100, 30, 80).unwrap();
        assert_eq!((l.n_frames, l.total(), l.truncated), (50, 80, 50));
        let l = build_layout(5, 4, 80).unwrap();
        assert_eq!(l.total(), 9);
        assert!(build_layout(5, 80, 80).is_err());
        assert!(build_layout(5, 0, 80).is_err());
        assert!(build_layout(0, 3, 80).is_err());
    }

    #[test]
    fn step_inputs_follow_layout() {
        let mut rng = Rng::new(1);
        let fr = frames(3, 2, &mut rng);
        let s = StepInputs::new(&fr, &[5, 6, EOS], None).unwrap();
        assert_eq!(s.words, vec![PAD, PAD, PAD, BOS, 5, 6]);
        assert_eq!(s.frames.len(), 6);
        assert_eq!(s.frames[4], vec![0.0, 0.0]);
        let capped = StepInputs::new(&fr, &[5, 6, EOS], Some(4)).unwrap();
        assert_eq!(capped.layout.n_frames, 1);
        assert_eq!(capped.frames[0], fr[0]);
    }

    #[test]
    fn minimal_sentence_has_one_decode_step() {
        let m = small_model(3);
        let mut rng = Rng::new(4);
        let fr = frames(4, 6, &mut rng);
        let tr = forward(&m, &fr, &[EOS], None).unwrap();
        assert_eq!(tr.probs.len(), 1);
        assert!((tr.loss + tr.probs[0][EOS].ln()).abs() < 1e-15);
        assert_eq!(tr.loss_mask, vec![0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = S2VTModel::zeros(ModelDims::default(), vocab(8)).unwrap();
        let mut rng = Rng::new(5);
        let fr = frames(3, 16, &mut rng);
        let target = [4, 5, 6, EOS];
        let tr = forward(&m, &fr, &target, None).unwrap();
        let v = m.vocab_size() as f64;
        for p in &tr.probs {
            assert!(p.iter().all(|&x| (x - 1.0 / v).abs() < 1e-15));
        }
        assert!((tr.loss - 4.0 * v.ln()).abs() < 1e-12);
    }

    #[test]
    fn forward_rejects_bad_inputs() {
        let m = small_model(6);
        let mut rng = Rng::new(6);
        let fr = frames(2, 6, &mut rng);
        assert!(forward(&m, &[], &[EOS], None).is_err());
        assert!(forward(&m, &fr, &[], None).is_err());
        assert!(forward(&m, &fr, &[4, 5], None).is_err());
        assert!(forward(&m, &fr, &[4, BOS, EOS], None).is_err());
        assert!(forward(&m, &fr, &[PAD, EOS], None).is_err());
        assert!(forward(&m, &fr, &[4, 99, EOS], None).is_err());
        assert!(forward(&m, &frames(2, 5, &mut rng), &[EOS], None).is_err());
        // <unk> is an ordinary target word.
        assert!(forward(&m, &fr, &[UNK, EOS], None).is_ok());
    }

    #[test]
    fn backward_rejects_stale_trace() {
        let mut m = small_model(7);
        let mut rng = Rng::new(7);
        let tr = forward(&m, &frames(2, 6, &mut rng), &[4, EOS], None).unwrap();
        m.params.output.data_mut()[0] += 1e-3;
        assert!(backward(&m, &tr).is_err());
    }

    #[test]
    fn loss_factorizes_over_decode_steps() {
        let m = small_model(8);
        let mut rng = Rng::new(8);
        let target = [4, 7, 5, 9, EOS];
        let tr = forward(&m, &frames(5, 6, &mut rng), &target, None).unwrap();
        let product: f64 = tr.probs.iter().zip(&target).map(|(p, &y)| p[y]).product();
        let lhs = (-tr.loss).exp();
        assert!(((lhs - product) / product).abs() < 1e-9);
    }

    #[test]
    fn incremental_decoding_matches_teacher_forcing() {
        let m = small_model(9);
        let mut rng = Rng::new(9);
        let fr = frames(4, 6, &mut rng);
        let target = [6, 4, 8, EOS];
        let tr = forward(&m, &fr, &target, None).unwrap();
        let mut state = encode(&m, &fr).unwrap();
        let mut prev = BOS;
        for (k, &y) in target.iter().enumerate() {
            let (dist, next) = step_distribution(&m, &state, prev).unwrap();
            for (a, b) in dist.iter().zip(&tr.probs[k]) {
                assert!((a - b).abs() < 1e-12);
            }
            state = next;
            prev = y;
        }
    }

    #[test]
    fn step_distribution_is_pure_and_normalized() {
        let m = small_model(10);
        let mut rng = Rng::new(10);
        let state = encode(&m, &frames(3, 6, &mut rng)).unwrap();
        let (a, sa) = step_distribution(&m, &state, 5).unwrap();
        let (b, sb) = step_distribution(&m, &state, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(step_distribution(&m, &state, 12).is_err());
    }

    #[test]
    fn pad_gradient_is_zero() {
        let m = small_model(11);
        let mut rng = Rng::new(11);
        let tr = forward(&m, &frames(3, 6, &mut rng), &[4, 5, EOS], None).unwrap();
        let g = backward(&m, &tr).unwrap();
        assert!(g.word_embed.col(PAD).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unread_slots_do_not_matter() {
        let m = small_model(12);
        let mut rng = Rng::new(12);
        let fr = frames(4, 6, &mut rng);
        let base = StepInputs::new(&fr, &[4, 5, 6, EOS], None).unwrap();
        let tr = forward_inputs(&m, &base, None).unwrap();
        let g = backward(&m, &tr).unwrap();

        let mut noisy = base.clone();
        for t in 0..noisy.layout.total() {
            if noisy.layout.is_encode(t) {
                noisy.words[t] = 4 + rng.below(8) as usize;
            } else {
                noisy.frames[t] = (0..6).map(|_| rng.uniform(-9.0, 9.0)).collect();
            }
        }
        let tr2 = forward_inputs(&m, &noisy, None).unwrap();
        let g2 = backward(&m, &tr2).unwrap();
        assert_eq!(tr.loss.to_bits(), tr2.loss.to_bits());
        assert_eq!(g, g2);
    }

    #[test]
    fn block_names_match_blocks() {
        let m = small_model(13);
        assert_eq!(S2VTParams::block_names().len(), m.params.blocks().len());
        assert_eq!(m.params.blocks().len(), 27);
    }

    #[test]
    fn init_keeps_pad_zero_and_small_weights() {
        let mut rng = Rng::new(14);
        let m = S2VTModel::new(ModelDims::default(), vocab(10), &mut rng).unwrap();
        assert!(m.params.word_embed.col(PAD).iter().all(|&x| x == 0.0));
        assert!(m.params.lstm1.b_f.iter().all(|&x| x == 0.0));
        assert!(m
            .params
            .blocks()
            .iter()
            .all(|b| b.iter().all(|x| x.abs() <= INIT_SCALE)));
        m.validate().unwrap();
    }
}
