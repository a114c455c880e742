//! Dense row-major linear algebra, nonlinearities and the seeded generator.
//!
//! Everything runs in `f64`. The finite-difference suites need the headroom,
//! and at desk scale the cost is negligible.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::error::{check_dim, Result, S2vtError};

pub type Vector = Vec<f64>;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim("matrix data length", rows * cols, data.len())?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim("matrix row length", cols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Entries drawn uniformly from `[lo, hi)` in row-major order.
    pub fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.uniform(lo, hi)).collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vector {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `out += self · v`. Shapes are the caller's responsibility.
    pub(crate) fn matvec_acc(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *o += dot(row, v);
        }
    }

    /// `out += selfᵀ · d`.
    pub(crate) fn transpose_matvec_acc(&self, d: &[f64], out: &mut [f64]) {
        debug_assert_eq!(d.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (&di, row) in d.iter().zip(self.data.chunks_exact(self.cols.max(1))) {
            if di != 0.0 {
                axpy(di, row, out);
            }
        }
    }

    /// `self += a ⊗ b`.
    pub(crate) fn outer_acc(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        let cols = self.cols.max(1);
        for (&ai, row) in a.iter().zip(self.data.chunks_exact_mut(cols)) {
            if ai != 0.0 {
                axpy(ai, b, row);
            }
        }
    }
}

/// Matrix-vector product.
pub fn matvec(m: &Matrix, v: &[f64]) -> Result<Vector> {
    check_dim("matvec input", m.cols, v.len())?;
    let mut out = vec![0.0; m.rows];
    m.matvec_acc(v, &mut out);
    Ok(out)
}

/// Summed in four interleaved lanes so the compiler can vectorize.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha · x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(v: &[f64]) -> Vector {
    v.iter().map(|&x| sigmoid_scalar(x)).collect()
}

pub fn tanh(v: &[f64]) -> Vector {
    v.iter().map(|x| x.tanh()).collect()
}

/// Softmax with max subtraction. Adding a constant to every logit leaves the
/// result unchanged up to rounding.
pub fn softmax(logits: &[f64]) -> Result<Vector> {
    if logits.is_empty() {
        return Err(S2vtError::invalid("softmax of an empty vector"));
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(S2vtError::invalid("softmax of non-finite logits"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vector = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= sum);
    Ok(out)
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Index of the largest entry; ties go to the lowest index. Entries for which
/// `allowed` returns false are skipped.
pub fn argmax_where(v: &[f64], allowed: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in v.iter().enumerate() {
        if !allowed(i) {
            continue;
        }
        match best {
            Some((_, b)) if x <= b => {}
            _ => best = Some((i, x)),
        }
    }
    best.map(|(i, _)| i)
}

/// Seeded generator: SplitMix64 with documented derivations.
///
/// * `uniform01`: top 53 bits of the next output scaled by 2⁻⁵³, in `[0, 1)`.
/// * `below(n)`: rejection of outputs under `2⁶⁴ mod n`, then `x mod n`.
/// * `permutation(n)`: Fisher–Yates from the last index down, `j = below(i + 1)`.
/// * `normal`: Box–Muller cosine branch, `u1 = 1 − uniform01`, `u2 = uniform01`.
///
/// Any language reproducing these rules reproduces every draw bit for bit.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: SplitMix64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            inner: SplitMix64::from_seed(seed.to_le_bytes()),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform01()
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "Rng::below requires n > 0");
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % n;
            }
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i as u64 + 1) as usize;
            p.swap(i, j);
        }
        p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform01();
        let u2 = self.uniform01();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Child generator seeded from the next draw.
    pub fn fork(&mut self) -> Rng {
        Rng::new(self.next_u64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_examples() {
        assert_eq!(
            matvec(&Matrix::identity(3), &[1.0, 2.0, 3.0]).unwrap(),
            vec![1.0, 2.0, 3.0]
        );
        assert_eq!(
            matvec(&Matrix::zeros(2, 3), &[4.0, -1.0, 9.0]).unwrap(),
            vec![0.0, 0.0]
        );
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(matvec(&m, &[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
    }

    #[test]
    fn matvec_rejects_mismatch() {
        let err = matvec(&Matrix::zeros(2, 3), &[1.0, 2.0]).unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Matrix::from_vec(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn nonlinearity_examples() {
        assert_eq!(sigmoid(&[0.0]), vec![0.5]);
        assert_eq!(tanh(&[0.0]), vec![0.0]);
        let s = sigmoid(&[1000.0, -1000.0]);
        assert!((s[0] - 1.0).abs() < 1e-12);
        assert!(s[1] >= 0.0 && s[1] < 1e-12);
        assert!(s.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn softmax_examples() {
        let c = 3.7;
        let p = softmax(&[c, c, c, c]).unwrap();
        assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        assert_eq!(softmax(&[-12.0]).unwrap(), vec![1.0]);
        let p = softmax(&[1f64.ln(), 3f64.ln()]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15);
        assert!((p[1] - 0.75).abs() < 1e-15);
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax_where(&[0.1, 0.4, 0.4, 0.1], |_| true), Some(1));
        assert_eq!(argmax_where(&[0.9, 0.4, 0.4], |i| i != 0), Some(1));
        assert_eq!(argmax_where(&[0.9], |_| false), None);
    }

    #[test]
    fn splitmix_reference_vector() {
        // Published SplitMix64 outputs for seed 1234567.
        let mut rng = Rng::new(1_234_567);
        let expected = [
            6457827717110365317u64,
            3203168211198807973,
            9817491932198370423,
            4593380528125082431,
            16408922859458223821,
        ];
        for e in expected {
            assert_eq!(rng.next_u64(), e);
        }
    }

    #[test]
    fn permutation_examples() {
        let mut rng = Rng::new(3);
        assert_eq!(rng.permutation(1), vec![0]);
        assert!(rng.permutation(0).is_empty());
        let mut p = rng.permutation(5);
        p.sort_unstable();
        assert_eq!(p, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn replay_first_thousand_draws() {
        let mut a = Rng::new(99);
        let mut b = Rng::new(99);
        for _ in 0..1000 {
            assert_eq!(a.uniform(-1.0, 1.0).to_bits(), b.uniform(-1.0, 1.0).to_bits());
        }
    }

    #[test]
    fn uniform_stays_in_range() {
        let mut rng = Rng::new(5);
        for _ in 0..10_000 {
            let x = rng.uniform(-0.05, 0.05);
            assert!((-0.05..0.05).contains(&x));
        }
    }

    #[test]
    fn normal_has_unit_moments() {
        let mut rng = Rng::new(11);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.02);
    }

    mod props {
        use super::*;
        use proptest::prelude::{any, prop, prop_assert, prop_assert_eq, proptest};

        proptest! {
            #[test]
            fn softmax_normalizes(logits in prop::collection::vec(-50.0f64..50.0, 1..40)) {
                let p = softmax(&logits).unwrap();
                let sum: f64 = p.iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
                prop_assert!(p.iter().all(|&x| x > 0.0));
            }

            #[test]
            fn softmax_shift_invariant(
                logits in prop::collection::vec(-50.0f64..50.0, 1..40),
                c in -20.0f64..20.0,
            ) {
                let p = softmax(&logits).unwrap();
                let shifted: Vec<f64> = logits.iter().map(|x| x + c).collect();
                let q = softmax(&shifted).unwrap();
                for (a, b) in p.iter().zip(&q) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }

            #[test]
            fn matvec_distributes(
                seed in any::<u64>(),
                rows in 1usize..8,
                cols in 1usize..8,
            ) {
                let mut rng = Rng::new(seed);
                let m = Matrix::uniform(rows, cols, -1.0, 1.0, &mut rng);
                let u: Vec<f64> = (0..cols).map(|_| rng.uniform(-1.0, 1.0)).collect();
                let v: Vec<f64> = (0..cols).map(|_| rng.uniform(-1.0, 1.0)).collect();
                let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
                let lhs = matvec(&m, &sum).unwrap();
                let mu = matvec(&m, &u).unwrap();
                let mv = matvec(&m, &v).unwrap();
                for i in 0..rows {
                    prop_assert!((lhs[i] - (mu[i] + mv[i])).abs() < 1e-12);
                }
            }

            #[test]
            fn permutation_is_bijection(seed in any::<u64>(), n in 0usize..200) {
                let mut p = Rng::new(seed).permutation(n);
                p.sort_unstable();
                prop_assert_eq!(p, (0..n).collect::<Vec<_>>());
            }
        }
    }
}
