//! One LSTM layer without peepholes:
//!
//! ```text
//! i_t = σ(W_xi x_t + W_hi h_{t-1} + b_i)
//! f_t = σ(W_xf x_t + W_hf h_{t-1} + b_f)
//! o_t = σ(W_xo x_t + W_ho h_{t-1} + b_o)
//! g_t = tanh(W_xg x_t + W_hg h_{t-1} + b_g)
//! c_t = f_t ⊙ c_{t-1} + i_t ⊙ g_t
//! h_t = o_t ⊙ tanh(c_t)
//! ```
//!
//! Gradients come back in an [`LstmParams`] so optimizers can walk parameters
//! and gradients side by side.

use crate::error::{check_dim, Result};
use crate::numerics::{sigmoid_scalar, Matrix, Rng, Vector};

/// Field names in declaration (and checkpoint) order.
pub const LSTM_BLOCK_NAMES: [&str; 12] = [
    "w_xi", "w_xf", "w_xo", "w_xg", "w_hi", "w_hf", "w_ho", "w_hg", "b_i", "b_f", "b_o", "b_g",
];

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_xi: Matrix,
    pub w_xf: Matrix,
    pub w_xo: Matrix,
    pub w_xg: Matrix,
    pub w_hi: Matrix,
    pub w_hf: Matrix,
    pub w_ho: Matrix,
    pub w_hg: Matrix,
    pub b_i: Vector,
    pub b_f: Vector,
    pub b_o: Vector,
    pub b_g: Vector,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let wx = || Matrix::zeros(hidden_dim, input_dim);
        let wh = || Matrix::zeros(hidden_dim, hidden_dim);
        LstmParams {
            w_xi: wx(),
            w_xf: wx(),
            w_xo: wx(),
            w_xg: wx(),
            w_hi: wh(),
            w_hf: wh(),
            w_ho: wh(),
            w_hg: wh(),
            b_i: vec![0.0; hidden_dim],
            b_f: vec![0.0; hidden_dim],
            b_o: vec![0.0; hidden_dim],
            b_g: vec![0.0; hidden_dim],
        }
    }

    /// Weights uniform in `[-scale, scale)`, biases zero. Draw order follows
    /// [`LSTM_BLOCK_NAMES`].
    pub fn uniform(input_dim: usize, hidden_dim: usize, scale: f64, rng: &mut Rng) -> Self {
        let mut p = LstmParams::zeros(input_dim, hidden_dim);
        for block in p.weight_blocks_mut() {
            block.iter_mut().for_each(|w| *w = rng.uniform(-scale, scale));
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_xi.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_xi.rows()
    }

    pub fn blocks(&self) -> [&[f64]; 12] {
        [
            self.w_xi.data(),
            self.w_xf.data(),
            self.w_xo.data(),
            self.w_xg.data(),
            self.w_hi.data(),
            self.w_hf.data(),
            self.w_ho.data(),
            self.w_hg.data(),
            &self.b_i,
            &self.b_f,
            &self.b_o,
            &self.b_g,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 12] {
        [
            self.w_xi.data_mut(),
            self.w_xf.data_mut(),
            self.w_xo.data_mut(),
            self.w_xg.data_mut(),
            self.w_hi.data_mut(),
            self.w_hf.data_mut(),
            self.w_ho.data_mut(),
            self.w_hg.data_mut(),
            &mut self.b_i,
            &mut self.b_f,
            &mut self.b_o,
            &mut self.b_g,
        ]
    }

    fn weight_blocks_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.w_xi.data_mut(),
            self.w_xf.data_mut(),
            self.w_xo.data_mut(),
            self.w_xg.data_mut(),
            self.w_hi.data_mut(),
            self.w_hf.data_mut(),
            self.w_ho.data_mut(),
            self.w_hg.data_mut(),
        ]
    }

    /// Checks that every block agrees with one `(input, hidden)` pair.
    pub fn validate(&self) -> Result<()> {
        let (h, x) = (self.hidden_dim(), self.input_dim());
        for m in [&self.w_xi, &self.w_xf, &self.w_xo, &self.w_xg] {
            check_dim("lstm input weight rows", h, m.rows())?;
            check_dim("lstm input weight cols", x, m.cols())?;
        }
        for m in [&self.w_hi, &self.w_hf, &self.w_ho, &self.w_hg] {
            check_dim("lstm recurrent weight rows", h, m.rows())?;
            check_dim("lstm recurrent weight cols", h, m.cols())?;
        }
        for b in [&self.b_i, &self.b_f, &self.b_o, &self.b_g] {
            check_dim("lstm bias length", h, b.len())?;
        }
        Ok(())
    }
}

/// Recurrent state `(h, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vector,
    pub c: Vector,
}

impl LstmState {
    pub fn zeros(hidden_dim: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden_dim],
            c: vec![0.0; hidden_dim],
        }
    }
}

/// Intermediates of one forward step, consumed by the backward step.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub x: Vector,
    pub h_prev: Vector,
    pub c_prev: Vector,
    pub i: Vector,
    pub f: Vector,
    pub o: Vector,
    pub g: Vector,
    pub c: Vector,
    pub tanh_c: Vector,
}

/// Output of [`lstm_step_backward`].
#[derive(Debug, Clone)]
pub struct StepGrads {
    pub params: LstmParams,
    pub dx: Vector,
    pub dh_prev: Vector,
    pub dc_prev: Vector,
}

pub fn lstm_step(params: &LstmParams, x: &[f64], prev: &LstmState) -> Result<(LstmState, StepCache)> {
    check_dim("lstm step input", params.input_dim(), x.len())?;
    check_dim("lstm previous h", params.hidden_dim(), prev.h.len())?;
    check_dim("lstm previous c", params.hidden_dim(), prev.c.len())?;
    Ok(step(params, x, prev))
}

pub(crate) fn step(params: &LstmParams, x: &[f64], prev: &LstmState) -> (LstmState, StepCache) {
    let gate = |wx: &Matrix, wh: &Matrix, b: &[f64]| {
        let mut a = b.to_vec();
        wx.matvec_acc(x, &mut a);
        wh.matvec_acc(&prev.h, &mut a);
        a
    };
    let mut i = gate(&params.w_xi, &params.w_hi, &params.b_i);
    let mut f = gate(&params.w_xf, &params.w_hf, &params.b_f);
    let mut o = gate(&params.w_xo, &params.w_ho, &params.b_o);
    let mut g = gate(&params.w_xg, &params.w_hg, &params.b_g);
    for v in [&mut i, &mut f, &mut o] {
        v.iter_mut().for_each(|a| *a = sigmoid_scalar(*a));
    }
    g.iter_mut().for_each(|a| *a = a.tanh());

    let c: Vector = (0..f.len())
        .map(|k| f[k] * prev.c[k] + i[k] * g[k])
        .collect();
    let tanh_c: Vector = c.iter().map(|v| v.tanh()).collect();
    let h: Vector = o.iter().zip(&tanh_c).map(|(o, t)| o * t).collect();

    let state = LstmState { h, c: c.clone() };
    let cache = StepCache {
        x: x.to_vec(),
        h_prev: prev.h.clone(),
        c_prev: prev.c.clone(),
        i,
        f,
        o,
        g,
        c,
        tanh_c,
    };
    (state, cache)
}

pub fn lstm_step_backward(
    params: &LstmParams,
    cache: &StepCache,
    dh: &[f64],
    dc: &[f64],
) -> Result<StepGrads> {
    let h = params.hidden_dim();
    check_dim("cache input", params.input_dim(), cache.x.len())?;
    for v in [&cache.h_prev, &cache.c_prev, &cache.i, &cache.f, &cache.o, &cache.g, &cache.c] {
        check_dim("cache hidden", h, v.len())?;
    }
    check_dim("upstream dh", h, dh.len())?;
    check_dim("upstream dc", h, dc.len())?;
    let mut grads = LstmParams::zeros(params.input_dim(), h);
    let (dx, dh_prev, dc_prev) = step_backward_acc(params, cache, dh, dc, &mut grads);
    Ok(StepGrads {
        params: grads,
        dx,
        dh_prev,
        dc_prev,
    })
}

/// Backward step that adds parameter gradients into `grads` and returns
/// `(dx, dh_prev, dc_prev)`.
pub(crate) fn step_backward_acc(
    params: &LstmParams,
    cache: &StepCache,
    dh: &[f64],
    dc: &[f64],
    grads: &mut LstmParams,
) -> (Vector, Vector, Vector) {
    let n = params.hidden_dim();
    let mut da_i = vec![0.0; n];
    let mut da_f = vec![0.0; n];
    let mut da_o = vec![0.0; n];
    let mut da_g = vec![0.0; n];
    let mut dc_prev = vec![0.0; n];
    for k in 0..n {
        let (i, f, o, g, t) = (cache.i[k], cache.f[k], cache.o[k], cache.g[k], cache.tanh_c[k]);
        let dct = dc[k] + dh[k] * o * (1.0 - t * t);
        da_o[k] = dh[k] * t * o * (1.0 - o);
        da_i[k] = dct * g * i * (1.0 - i);
        da_f[k] = dct * cache.c_prev[k] * f * (1.0 - f);
        da_g[k] = dct * i * (1.0 - g * g);
        dc_prev[k] = dct * f;
    }

    let mut dx = vec![0.0; params.input_dim()];
    let mut dh_prev = vec![0.0; n];
    let gates = [
        (&da_i, &params.w_xi, &params.w_hi),
        (&da_f, &params.w_xf, &params.w_hf),
        (&da_o, &params.w_xo, &params.w_ho),
        (&da_g, &params.w_xg, &params.w_hg),
    ];
    for (da, wx, wh) in gates {
        wx.transpose_matvec_acc(da, &mut dx);
        wh.transpose_matvec_acc(da, &mut dh_prev);
    }

    grads.w_xi.outer_acc(&da_i, &cache.x);
    grads.w_xf.outer_acc(&da_f, &cache.x);
    grads.w_xo.outer_acc(&da_o, &cache.x);
    grads.w_xg.outer_acc(&da_g, &cache.x);
    grads.w_hi.outer_acc(&da_i, &cache.h_prev);
    grads.w_hf.outer_acc(&da_f, &cache.h_prev);
    grads.w_ho.outer_acc(&da_o, &cache.h_prev);
    grads.w_hg.outer_acc(&da_g, &cache.h_prev);
    for (b, da) in [
        (&mut grads.b_i, &da_i),
        (&mut grads.b_f, &da_f),
        (&mut grads.b_o, &da_o),
        (&mut grads.b_g, &da_g),
    ] {
        b.iter_mut().zip(da.iter()).for_each(|(b, d)| *b += d);
    }
    (dx, dh_prev, dc_prev)
}
