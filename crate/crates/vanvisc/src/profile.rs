//! Right-continuous piecewise-constant functions of one variable.

use crate::error::{Error, Result};
use crate::state::State;
use std::fmt::Write as _;

/// `u(x) = values[k]` for `breakpoints[k-1] ≤ x < breakpoints[k]`, with
/// `values.len() == breakpoints.len() + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseConstant {
    pub breakpoints: Vec<f64>,
    pub values: Vec<State>,
}

impl PiecewiseConstant {
    pub fn constant(u: State) -> Self {
        PiecewiseConstant { breakpoints: Vec::new(), values: vec![u] }
    }

    pub fn new(breakpoints: Vec<f64>, values: Vec<State>) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(Error::Config("need one more value than breakpoints".into()));
        }
        if breakpoints.windows(2).any(|w| w[1] < w[0]) || breakpoints.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("breakpoints must be finite and non-decreasing".into()));
        }
        Ok(PiecewiseConstant { breakpoints, values })
    }

    /// Builds from a left state and `(position, state to the right)` pairs.
    pub fn from_jumps(left: State, jumps: &[(f64, State)]) -> Result<Self> {
        let mut bp = Vec::with_capacity(jumps.len());
        let mut vals = vec![left];
        for &(x, u) in jumps {
            bp.push(x);
            vals.push(u);
        }
        PiecewiseConstant::new(bp, vals)
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// Right-continuous evaluation.
    pub fn eval(&self, x: f64) -> State {
        let k = self.breakpoints.partition_point(|&b| b <= x);
        self.values[k]
    }

    pub fn left_state(&self) -> State {
        self.values[0]
    }

    pub fn right_state(&self) -> State {
        *self.values.last().unwrap()
    }

    /// Jumps as `(position, left state, right state)`.
    pub fn jumps(&self) -> impl Iterator<Item = (f64, State, State)> + '_ {
        self.breakpoints
            .iter()
            .enumerate()
            .map(move |(k, &x)| (x, self.values[k], self.values[k + 1]))
    }

    /// Sum of Euclidean jump sizes.
    pub fn total_variation(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Exact `∫|u - v| dx` summing component-wise absolute differences.
    pub fn l1_distance(&self, other: &PiecewiseConstant) -> f64 {
        let mut xs: Vec<f64> = self.breakpoints.iter().chain(&other.breakpoints).copied().collect();
        xs.sort_by(f64::total_cmp);
        let mut total = 0.0;
        for w in xs.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b > a {
                let m = 0.5 * (a + b);
                let d = self.eval(m) - other.eval(m);
                total += (b - a) * d.as_slice().iter().map(|v| v.abs()).sum::<f64>();
            }
        }
        // Outside the breakpoints both functions are constant; a mismatch there
        // would make the distance infinite.
        if let (Some(&first), Some(&last)) = (xs.first(), xs.last()) {
            let dl = self.eval(first - 1.0) - other.eval(first - 1.0);
            let dr = self.eval(last + 1.0) - other.eval(last + 1.0);
            if dl.max_abs() > 0.0 || dr.max_abs() > 0.0 {
                return f64::INFINITY;
            }
        }
        total
    }

    /// CSV with header `x,u_1..u_n`; the first row holds the state left of
    /// every breakpoint at `x = -inf`.
    pub fn to_csv(&self) -> String {
        let n = self.dim();
        let mut out = String::from("x");
        for k in 1..=n {
            let _ = write!(out, ",u_{k}");
        }
        out.push('\n');
        let mut row = |x: f64, u: &State| {
            if x.is_infinite() {
                out.push_str("-inf");
            } else {
                let _ = write!(out, "{x}");
            }
            for v in u.as_slice() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        };
        row(f64::NEG_INFINITY, &self.values[0]);
        for (k, &x) in self.breakpoints.iter().enumerate() {
            row(x, &self.values[k + 1]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluation_is_right_continuous() {
        let u = PiecewiseConstant::from_jumps(State::scalar(1.0), &[(0.0, State::scalar(0.0))]).unwrap();
        assert_eq!(u.eval(-1e-12)[0], 1.0);
        assert_eq!(u.eval(0.0)[0], 0.0);
    }

    #[test]
    fn distance_between_steps() {
        let a = PiecewiseConstant::from_jumps(State::scalar(1.0), &[(0.0, State::scalar(0.0))]).unwrap();
        let b = PiecewiseConstant::from_jumps(State::scalar(1.0), &[(0.5, State::scalar(0.0))]).unwrap();
        assert!((a.l1_distance(&b) - 0.5).abs() < 1e-15);
        assert_eq!(a.total_variation(), 1.0);
        assert_eq!(a.to_csv(), "x,u_1\n-inf,1\n0,0\n");
    }
}
