//! Adaptive Dormand–Prince 5(4) integrator for autonomous systems.

use crate::error::Result;
use crate::state::State;
use std::ops::ControlFlow;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    /// Mixed absolute/relative tolerance per step: the local error must
    /// stay below `tol·(abs_floor + |y|)`.
    pub tol: f64,
    pub abs_floor: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions { tol, abs_floor: 1.0, h_init: 1e-3, h_max: f64::INFINITY, max_steps: 1_000_000 }
    }
}

/// Integrates `y' = f(y)` from `t0` towards `t1` (either direction).
///
/// `observe(t, y)` runs after every accepted step and may stop the
/// integration early. Returns the final time and state.
pub fn integrate<F, O>(
    f: F,
    y0: State,
    t0: f64,
    t1: f64,
    opts: OdeOptions,
    mut observe: O,
) -> Result<(f64, State)>
where
    F: Fn(&State) -> Result<State>,
    O: FnMut(f64, &State) -> Result<ControlFlow<()>>,
{
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();
    if span == 0.0 {
        return Ok((t0, y0));
    }
    let mut t = t0;
    let mut y = y0;
    let mut h = opts.h_init.min(span).min(opts.h_max);
    let mut k1 = f(&y)?;
    for _ in 0..opts.max_steps {
        let remaining = (t1 - t) * dir;
        if remaining <= 1e-15 * (1.0 + span) {
            return Ok((t, y));
        }
        let last = h >= remaining;
        let hs = if last { remaining } else { h } * dir;
        let k2 = f(&(y + k1 * (hs * A21)))?;
        let k3 = f(&(y + k1 * (hs * A31) + k2 * (hs * A32)))?;
        let k4 = f(&(y + k1 * (hs * A41) + k2 * (hs * A42) + k3 * (hs * A43)))?;
        let k5 = f(&(y + k1 * (hs * A51) + k2 * (hs * A52) + k3 * (hs * A53) + k4 * (hs * A54)))?;
        let k6 = f(&(y
            + k1 * (hs * A61)
            + k2 * (hs * A62)
            + k3 * (hs * A63)
            + k4 * (hs * A64)
            + k5 * (hs * A65)))?;
        let y_new = y + k1 * (hs * B1) + k3 * (hs * B3) + k4 * (hs * B4) + k5 * (hs * B5) + k6 * (hs * B6);
        let k7 = f(&y_new)?;
        let err_vec =
            k1 * (hs * E1) + k3 * (hs * E3) + k4 * (hs * E4) + k5 * (hs * E5) + k6 * (hs * E6) + k7 * (hs * E7);
        let scale = opts.abs_floor + y.max_abs().max(y_new.max_abs());
        let err = err_vec.max_abs() / (opts.tol * scale);
        if err <= 1.0 {
            t = if last { t1 } else { t + hs };
            y = y_new;
            k1 = k7;
            if let ControlFlow::Break(()) = observe(t, &y)? {
                return Ok((t, y));
            }
            if last {
                return Ok((t, y));
            }
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = (h.min(remaining) * factor).min(opts.h_max);
        if h < 1e-14 * (1.0 + span) {
            return Err(crate::error::Error::ShootFailure("integrator step size underflow".into()));
        }
    }
    Err(crate::error::Error::ShootFailure("integrator step budget exhausted".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth() {
        let (t, y) = integrate(
            |y| Ok(*y),
            State::scalar(1.0),
            0.0,
            2.0,
            OdeOptions::with_tol(1e-12),
            |_, _| Ok(ControlFlow::Continue(())),
        )
        .unwrap();
        assert_eq!(t, 2.0);
        assert!((y[0] - 2f64.exp()).abs() < 1e-10);
    }

    #[test]
    fn backward_rotation() {
        let (_, y) = integrate(
            |y| Ok(State::pair(-y[1], y[0])),
            State::pair(1.0, 0.0),
            0.0,
            -1.0,
            OdeOptions::with_tol(1e-12),
            |_, _| Ok(ControlFlow::Continue(())),
        )
        .unwrap();
        assert!((y[0] - 1f64.cos()).abs() < 1e-10 && (y[1] + 1f64.sin()).abs() < 1e-10);
    }
}
