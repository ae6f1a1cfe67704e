//! Small fixed-capacity state vectors and matrices.
//!
//! The shipped systems have at most two components, so states live on the
//! stack and are `Copy`.

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

/// Largest supported system dimension.
pub const MAX_N: usize = 2;

/// A point in state space, `u ∈ R^n` with `n ≤ MAX_N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    len: usize,
    c: [f64; MAX_N],
}

impl State {
    pub fn zeros(n: usize) -> Self {
        assert!((1..=MAX_N).contains(&n), "state dimension {n} unsupported");
        State { len: n, c: [0.0; MAX_N] }
    }

    pub fn scalar(x: f64) -> Self {
        State { len: 1, c: [x, 0.0] }
    }

    pub fn pair(a: f64, b: f64) -> Self {
        State { len: 2, c: [a, b] }
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let mut s = State::zeros(v.len());
        s.c[..v.len()].copy_from_slice(v);
        s
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.c[..self.len]
    }

    pub fn dot(&self, o: &State) -> f64 {
        debug_assert_eq!(self.len, o.len);
        (0..self.len).map(|k| self.c[k] * o.c[k]).sum()
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.as_slice().iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> State {
        let mut s = *self;
        for k in 0..self.len {
            s.c[k] = f(self.c[k]);
        }
        s
    }
}

impl Index<usize> for State {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        debug_assert!(k < self.len);
        &self.c[k]
    }
}

impl IndexMut<usize> for State {
    fn index_mut(&mut self, k: usize) -> &mut f64 {
        debug_assert!(k < self.len);
        &mut self.c[k]
    }
}

impl Add for State {
    type Output = State;
    fn add(mut self, o: State) -> State {
        self += o;
        self
    }
}

impl AddAssign for State {
    fn add_assign(&mut self, o: State) {
        debug_assert_eq!(self.len, o.len);
        for k in 0..self.len {
            self.c[k] += o.c[k];
        }
    }
}

impl Sub for State {
    type Output = State;
    fn sub(mut self, o: State) -> State {
        self -= o;
        self
    }
}

impl SubAssign for State {
    fn sub_assign(&mut self, o: State) {
        debug_assert_eq!(self.len, o.len);
        for k in 0..self.len {
            self.c[k] -= o.c[k];
        }
    }
}

impl Mul<f64> for State {
    type Output = State;
    fn mul(self, a: f64) -> State {
        self.map(|x| a * x)
    }
}

impl Mul<State> for f64 {
    type Output = State;
    fn mul(self, s: State) -> State {
        s * self
    }
}

impl Neg for State {
    type Output = State;
    fn neg(self) -> State {
        self.map(|x| -x)
    }
}

/// Dense `n × n` matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat {
    n: usize,
    a: [[f64; MAX_N]; MAX_N],
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        assert!((1..=MAX_N).contains(&n));
        Mat { n, a: [[0.0; MAX_N]; MAX_N] }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let mut m = Mat::zeros(rows.len());
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), rows.len());
            m.a[i][..r.len()].copy_from_slice(r);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i][j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i][j] = v;
    }

    pub fn mul_vec(&self, v: &State) -> State {
        let mut out = State::zeros(self.n);
        for i in 0..self.n {
            out[i] = (0..self.n).map(|j| self.a[i][j] * v[j]).sum();
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self.a[i][j] * self.a[i][j];
            }
        }
        s.sqrt()
    }
}

/// Solves `m x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` for a numerically singular matrix.
pub fn solve_linear(m: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut x = b.to_vec();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |s, v| s.max(v.abs()))
        .max(1e-300);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-14 * scale {
            return None;
        }
        a.swap(col, piv);
        x.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let s: f64 = (col + 1..n).map(|k| a[col][k] * x[k]).sum();
        x[col] = (x[col] - s) / a[col][col];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic() {
        let a = State::pair(1.0, 2.0);
        let b = State::pair(0.5, -1.0);
        assert_eq!(a + b, State::pair(1.5, 1.0));
        assert_eq!(a - b, State::pair(0.5, 3.0));
        assert_eq!(2.0 * a, State::pair(2.0, 4.0));
        assert_eq!(a.dot(&b), -1.5);
    }

    #[test]
    fn linear_solve() {
        let m = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x = solve_linear(&m, &[3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
        assert!(solve_linear(&[vec![1.0, 2.0], vec![2.0, 4.0]], &[1.0, 1.0]).is_none());
    }
}
