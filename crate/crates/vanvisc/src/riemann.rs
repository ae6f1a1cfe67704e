//! Lax wave curves and the classical Riemann solver.
//!
//! Wave curves are parametrized by the jump of the characteristic speed:
//! the state reached from `u0` along the `i`-curve with parameter `s`
//! satisfies `λ_i(result) - λ_i(u0) = s`. Positive `s` follows the
//! rarefaction curve, negative `s` the Hugoniot locus.

use crate::error::{Error, Result};
use crate::ode::{integrate, OdeOptions};
use crate::state::{solve_linear, State};
use crate::system::SystemModel;
use serde::{Deserialize, Serialize};
use std::ops::ControlFlow;

/// Tolerance for rarefaction-curve integration and Hugoniot root-finding.
pub const CURVE_TOL: f64 = 1e-10;
/// Largest accepted Rankine–Hugoniot residual.
pub const RH_TOL: f64 = 1e-8;
/// Waves weaker than this are dropped from a fan.
pub const NEGLIGIBLE_STRENGTH: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WaveKind {
    Shock,
    Rarefaction,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum WaveSpeed {
    Shock(f64),
    /// Edge speeds `(λ_i(left), λ_i(right))` of a rarefaction fan.
    Fan(f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElementaryWave {
    pub family: usize,
    pub kind: WaveKind,
    pub strength: f64,
    pub speed: WaveSpeed,
    pub left_state: State,
    pub right_state: State,
}

/// Solution of a Riemann problem: waves in family order and the states
/// `ω_0 = u⁻, …, ω_n = u⁺` between them.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveFan {
    pub waves: Vec<ElementaryWave>,
    pub intermediate_states: Vec<State>,
    /// Curve parameters of every family, zero where no wave is present.
    pub strengths: Vec<f64>,
}

/// Point on the `family` wave curve through `u0` with parameter `s`.
pub fn lax_curve(model: &SystemModel, family: usize, u0: &State, s: f64) -> Result<State> {
    model.check_domain(u0)?;
    if s == 0.0 {
        return Ok(*u0);
    }
    if model.dim() == 1 {
        let target = model.lambda(u0, 1)? + s;
        let u = scalar_level(model, u0, target)?;
        model.check_domain(&u).map_err(|_| Error::CurveEscape { family })?;
        return Ok(u);
    }
    let out = if s > 0.0 {
        integral_curve(model, family, u0, s)?
    } else {
        hugoniot_point(model, family, u0, s)?
    };
    model.check_domain(&out).map_err(|_| Error::CurveEscape { family })?;
    Ok(out)
}

/// State `u` of a scalar law with `λ(u) = target`.
fn scalar_level(model: &SystemModel, u0: &State, target: f64) -> Result<State> {
    if model.is_burgers() {
        return Ok(State::scalar(target));
    }
    let mut u = *u0;
    for _ in 0..100 {
        let f = model.eigen_frame_unchecked(&u)?;
        let d = target - f.lambdas[0];
        if d.abs() <= 1e-14 * (1.0 + target.abs()) {
            return Ok(u);
        }
        // r = 1 / λ'(u) by normalization.
        u = u + f.r[0] * d;
    }
    Err(Error::NoRoot { family: 1, strength: target - model.lambda(u0, 1)? })
}

/// Integral curve of `r_family` of parameter length `s` (either sign).
fn integral_curve(model: &SystemModel, family: usize, u0: &State, s: f64) -> Result<State> {
    let rhs = |w: &State| -> Result<State> {
        if !model.domain_box().contains(w) || !w.is_finite() {
            return Err(Error::CurveEscape { family });
        }
        Ok(model.eigen_frame_unchecked(w)?.right(family))
    };
    let mut opts = OdeOptions::with_tol(CURVE_TOL * 1e-2);
    opts.h_init = (s.abs() / 4.0).max(1e-6);
    let (_, y) = integrate(rhs, *u0, 0.0, s, opts, |_, _| Ok(ControlFlow::Continue(())))?;
    Ok(y)
}

/// Point `u` on the `family` Hugoniot locus through `u0` with `λ(u) - λ(u0) = s`.
fn hugoniot_point(model: &SystemModel, family: usize, u0: &State, s: f64) -> Result<State> {
    let n = model.dim();
    let lam0 = model.lambda(u0, family)?;
    let target = lam0 + s;
    let mut u = integral_curve(model, family, u0, s).unwrap_or(*u0);
    if s.abs() < 1e-7 {
        // The two curves agree to third order in s.
        return Ok(u);
    }
    let f0 = model.flux(u0);
    let residual = |u: &State, c: f64| -> Result<Vec<f64>> {
        let rh = model.flux(u) - f0 - (*u - *u0) * c;
        let mut r: Vec<f64> = rh.as_slice().to_vec();
        r.push(model.eigenvalues(u)?[family - 1] - target);
        Ok(r)
    };
    let norm = |r: &[f64]| r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut c = 0.5 * (lam0 + target);
    let mut res = residual(&u, c)?;
    for _ in 0..60 {
        let scale = 1.0 + f0.max_abs() + u.max_abs();
        let converged = norm(&res[..n]) <= 1e-14 * scale && res[n].abs() <= 1e-13 * (1.0 + target.abs());
        if norm(&res[..n]) <= 4.0 * f64::EPSILON * scale && res[n].abs() <= 4.0 * f64::EPSILON * (1.0 + target.abs()) {
            return Ok(u);
        }
        let mut jac = vec![vec![0.0; n + 1]; n + 1];
        for k in 0..n {
            let h = 1e-7 * (1.0 + u[k].abs());
            let mut up = u;
            up[k] += h;
            let mut dn = u;
            dn[k] -= h;
            let rp = residual(&up, c)?;
            let rn = residual(&dn, c)?;
            for row in 0..=n {
                jac[row][k] = (rp[row] - rn[row]) / (2.0 * h);
            }
        }
        for row in 0..n {
            jac[row][n] = -(u[row] - u0[row]);
        }
        let neg: Vec<f64> = res.iter().map(|x| -x).collect();
        let step = solve_linear(&jac, &neg).ok_or(Error::NoRoot { family, strength: s })?;
        let mut lambda = 1.0;
        let current = norm(&res);
        loop {
            let mut trial = u;
            for k in 0..n {
                trial[k] += lambda * step[k];
            }
            let tc = c + lambda * step[n];
            if let Ok(r) = residual(&trial, tc) {
                if converged && norm(&r) >= current {
                    return Ok(u);
                }
                if norm(&r) < current || lambda < 1e-3 {
                    u = trial;
                    c = tc;
                    res = r;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-4 {
                return Err(Error::NoRoot { family, strength: s });
            }
        }
    }
    let scale = 1.0 + f0.max_abs() + u.max_abs();
    if norm(&res[..n]) <= 1e-12 * scale && res[n].abs() <= CURVE_TOL {
        Ok(u)
    } else {
        Err(Error::NoRoot { family, strength: s })
    }
}

/// Applies the wave curves of families `1..=n` in order, returning `ω_0..ω_n`.
pub fn compose_curves(model: &SystemModel, u_minus: &State, strengths: &[f64]) -> Result<Vec<State>> {
    let mut states = Vec::with_capacity(strengths.len() + 1);
    states.push(*u_minus);
    let mut w = *u_minus;
    for (i, &s) in strengths.iter().enumerate() {
        w = lax_curve(model, i + 1, &w, s)?;
        states.push(w);
    }
    Ok(states)
}

/// Rankine–Hugoniot speed by least squares; fails if the residual exceeds
/// [`RH_TOL`].
pub fn shock_speed(model: &SystemModel, u_minus: &State, u_plus: &State) -> Result<f64> {
    let du = *u_plus - *u_minus;
    let dd = du.dot(&du);
    if dd == 0.0 {
        return Err(Error::NotOnLocus { residual: 0.0 });
    }
    let df = model.flux(u_plus) - model.flux(u_minus);
    let c = df.dot(&du) / dd;
    let residual = (df - du * c).norm();
    if residual > RH_TOL {
        return Err(Error::NotOnLocus { residual });
    }
    Ok(c)
}

fn build_fan(model: &SystemModel, states: Vec<State>, strengths: Vec<f64>) -> Result<WaveFan> {
    let mut waves = Vec::new();
    for (i, &s) in strengths.iter().enumerate() {
        if s.abs() <= NEGLIGIBLE_STRENGTH {
            continue;
        }
        let family = i + 1;
        let (left, right) = (states[i], states[i + 1]);
        let wave = if s < 0.0 {
            let speed = shock_speed(model, &left, &right)?;
            ElementaryWave {
                family,
                kind: WaveKind::Shock,
                strength: s,
                speed: WaveSpeed::Shock(speed),
                left_state: left,
                right_state: right,
            }
        } else {
            let a = model.lambda(&left, family)?;
            let b = model.lambda(&right, family)?;
            ElementaryWave {
                family,
                kind: WaveKind::Rarefaction,
                strength: s,
                speed: WaveSpeed::Fan(a, b),
                left_state: left,
                right_state: right,
            }
        };
        waves.push(wave);
    }
    Ok(WaveFan { waves, intermediate_states: states, strengths })
}

/// Solves the Riemann problem `(u⁻, u⁺)` by composing Lax curves.
pub fn solve_riemann(model: &SystemModel, u_minus: &State, u_plus: &State) -> Result<WaveFan> {
    model.check_domain(u_minus)?;
    model.check_domain(u_plus)?;
    let n = model.dim();
    if n == 1 {
        let s = model.lambda(u_plus, 1)? - model.lambda(u_minus, 1)?;
        return build_fan(model, vec![*u_minus, *u_plus], vec![s]);
    }
    let strengths = match newton_strengths(model, u_minus, u_plus) {
        Ok(s) => s,
        Err(_) => bisection_strengths(model, u_minus, u_plus)?,
    };
    let mut states = compose_curves(model, u_minus, &strengths)?;
    // Pin the last state to the data so adjacent fronts share states exactly.
    let last = states.len() - 1;
    let miss = (states[last] - *u_plus).norm();
    if miss > 1e-8 {
        return Err(Error::NoSolution { residual: miss });
    }
    states[last] = *u_plus;
    build_fan(model, states, strengths)
}

fn initial_strengths(model: &SystemModel, u_minus: &State, u_plus: &State) -> Vec<f64> {
    let mid = (*u_minus + *u_plus) * 0.5;
    let frame = model
        .eigen_frame(&mid)
        .or_else(|_| model.eigen_frame(u_minus))
        .expect("left state already checked");
    let du = *u_plus - *u_minus;
    frame.l.iter().map(|l| l.dot(&du)).collect()
}

fn newton_strengths(model: &SystemModel, u_minus: &State, u_plus: &State) -> Result<Vec<f64>> {
    let n = model.dim();
    let scale = 1.0 + u_plus.max_abs();
    let eval = |s: &[f64]| -> Result<State> {
        let st = compose_curves(model, u_minus, s)?;
        Ok(st[n] - *u_plus)
    };
    let mut s = initial_strengths(model, u_minus, u_plus);
    let mut r = eval(&s)?;
    // Iterate to the roundoff floor: the last state is pinned to `u⁺`
    // afterwards, and any miss left here would reappear as a jump whose
    // strength disagrees with its states.
    for _ in 0..100 {
        if r.max_abs() <= 4.0 * f64::EPSILON * scale {
            return Ok(s);
        }
        let mut jac = vec![vec![0.0; n]; n];
        for k in 0..n {
            let h = 1e-7;
            let mut sp = s.clone();
            sp[k] += h;
            let mut sn = s.clone();
            sn[k] -= h;
            let d = (eval(&sp)? - eval(&sn)?) * (0.5 / h);
            for row in 0..n {
                jac[row][k] = d[row];
            }
        }
        let neg: Vec<f64> = r.as_slice().iter().map(|x| -x).collect();
        let step = solve_linear(&jac, &neg).ok_or(Error::NoSolution { residual: r.norm() })?;
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = s.iter().zip(&step).map(|(a, b)| a + lambda * b).collect();
            match eval(&trial) {
                Ok(rt) if rt.norm() < r.norm() => {
                    s = trial;
                    r = rt;
                    break;
                }
                _ if r.max_abs() <= 1e-13 * scale => return Ok(s),
                _ => {
                    lambda *= 0.5;
                    if lambda < 1e-6 {
                        return Err(Error::NoSolution { residual: r.norm() });
                    }
                }
            }
        }
    }
    if r.max_abs() <= 1e-10 * scale {
        Ok(s)
    } else {
        Err(Error::NoSolution { residual: r.norm() })
    }
}

/// Root of `g` on a bracket found by expanding around `x0`.
fn bisect(g: impl Fn(f64) -> Result<f64>, x0: f64, width: f64) -> Result<f64> {
    let mut w = width.max(1e-6);
    let (mut a, mut b, mut ga, mut gb);
    let mut tries = 0;
    loop {
        a = x0 - w;
        b = x0 + w;
        ga = g(a);
        gb = g(b);
        if let (Ok(x), Ok(y)) = (&ga, &gb) {
            if x * y <= 0.0 {
                break;
            }
        }
        w *= if ga.is_err() || gb.is_err() { 0.5 } else { 2.0 };
        tries += 1;
        if tries > 40 {
            return Err(Error::NoSolution { residual: f64::NAN });
        }
    }
    let mut ga = ga?;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let gm = g(m)?;
        if gm == 0.0 || (b - a) < 1e-15 * (1.0 + m.abs()) {
            return Ok(m);
        }
        if ga * gm <= 0.0 {
            b = m;
        } else {
            a = m;
            ga = gm;
        }
    }
    Ok(0.5 * (a + b))
}

/// Nested bisection for two families: the inner solve fixes `σ_2` so the
/// miss has no `l_2` component, the outer solve zeroes the `l_1` component.
fn bisection_strengths(model: &SystemModel, u_minus: &State, u_plus: &State) -> Result<Vec<f64>> {
    if model.dim() != 2 {
        return Err(Error::NoSolution { residual: f64::NAN });
    }
    let frame = model.eigen_frame(u_plus)?;
    let (l1, l2) = (frame.left(1), frame.left(2));
    let guess = initial_strengths(model, u_minus, u_plus);
    let width = 2.0 * (*u_plus - *u_minus).norm() + 1e-3;
    let inner = |s1: f64| -> Result<(f64, State)> {
        let w1 = lax_curve(model, 1, u_minus, s1)?;
        let s2 = bisect(|s2| Ok(l2.dot(&(*u_plus - lax_curve(model, 2, &w1, s2)?))), guess[1], width)?;
        Ok((s2, lax_curve(model, 2, &w1, s2)?))
    };
    let s1 = bisect(|s1| Ok(l1.dot(&(*u_plus - inner(s1)?.1))), guess[0], width)?;
    let (s2, end) = inner(s1)?;
    let miss = (end - *u_plus).norm();
    if miss > 1e-9 {
        return Err(Error::NoSolution { residual: miss });
    }
    Ok(vec![s1, s2])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> SystemModel {
        SystemModel::p_system(2.0, 1.0).unwrap()
    }

    #[test]
    fn burgers_curves() {
        let m = SystemModel::burgers();
        assert_eq!(lax_curve(&m, 1, &State::scalar(0.0), 0.5).unwrap()[0], 0.5);
        assert_eq!(lax_curve(&m, 1, &State::scalar(1.0), -1.0).unwrap()[0], 0.0);
    }

    #[test]
    fn p_system_rarefaction_curve_shifts_lambda() {
        let m = p();
        let u0 = State::pair(1.0, 0.0);
        let u = lax_curve(&m, 2, &u0, 0.1).unwrap();
        let d = m.lambda(&u, 2).unwrap() - m.lambda(&u0, 2).unwrap();
        assert!((d - 0.1).abs() < 1e-8, "{d}");
        // Oracle: the 2-rarefaction curve of the p-system keeps the Riemann
        // invariant w + ∫ c(v) dv constant; with γ=2, k=1, ∫c = -2√2/√v.
        let inv = |u: &State| u[1] - 2.0 * 2f64.sqrt() / u[0].sqrt();
        assert!((inv(&u) - inv(&u0)).abs() < 1e-9);
    }

    #[test]
    fn p_system_shock_curve() {
        let m = p();
        let u0 = State::pair(1.0, 0.0);
        let u = lax_curve(&m, 1, &u0, -0.2).unwrap();
        let d = m.lambda(&u, 1).unwrap() - m.lambda(&u0, 1).unwrap();
        assert!((d + 0.2).abs() < 1e-10);
        let c = shock_speed(&m, &u0, &u).unwrap();
        let (a, b) = (m.lambda(&u, 1).unwrap(), m.lambda(&u0, 1).unwrap());
        assert!(a < c && c < b, "{a} {c} {b}");
    }

    #[test]
    fn burgers_riemann() {
        let m = SystemModel::burgers();
        let fan = solve_riemann(&m, &State::scalar(1.0), &State::scalar(0.0)).unwrap();
        assert_eq!(fan.waves.len(), 1);
        assert_eq!(fan.waves[0].kind, WaveKind::Shock);
        assert_eq!(fan.waves[0].strength, -1.0);
        assert_eq!(fan.waves[0].speed, WaveSpeed::Shock(0.5));
        let fan = solve_riemann(&m, &State::scalar(0.0), &State::scalar(1.0)).unwrap();
        assert_eq!(fan.waves[0].kind, WaveKind::Rarefaction);
        assert_eq!(fan.waves[0].strength, 1.0);
        assert_eq!(fan.waves[0].speed, WaveSpeed::Fan(0.0, 1.0));
    }

    #[test]
    fn burgers_shock_speeds() {
        let m = SystemModel::burgers();
        assert_eq!(shock_speed(&m, &State::scalar(2.0), &State::scalar(0.0)).unwrap(), 1.0);
        assert_eq!(shock_speed(&m, &State::scalar(1.0), &State::scalar(0.0)).unwrap(), 0.5);
    }

    #[test]
    fn p_system_two_wave_fan() {
        let m = p();
        let (ul, ur) = (State::pair(1.0, 0.0), State::pair(1.1, 0.05));
        let fan = solve_riemann(&m, &ul, &ur).unwrap();
        assert_eq!(fan.waves.len(), 2);
        assert_eq!(fan.waves[0].family, 1);
        assert_eq!(fan.waves[1].family, 2);
        // Oracle: independent nested bisection on the two curve parameters.
        let oracle = bisection_strengths(&m, &ul, &ur).unwrap();
        for i in 0..2 {
            assert!((oracle[i] - fan.strengths[i]).abs() < 1e-9);
        }
        let st = compose_curves(&m, &ul, &fan.strengths).unwrap();
        assert!((st[2] - ur).norm() <= 1e-8);
        for w in &fan.waves {
            let d = m.lambda(&w.right_state, w.family).unwrap() - m.lambda(&w.left_state, w.family).unwrap();
            assert!((d - w.strength).abs() < 1e-8);
        }
    }

    #[test]
    fn not_on_locus() {
        let m = p();
        assert!(matches!(
            shock_speed(&m, &State::pair(1.0, 0.0), &State::pair(1.1, 0.05)),
            Err(Error::NotOnLocus { .. })
        ));
    }

    #[test]
    fn curve_escape() {
        let m = p();
        assert!(matches!(
            lax_curve(&m, 2, &State::pair(0.6, 0.0), 3.0),
            Err(Error::CurveEscape { .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn round_trip_strength(v in 0.8f64..1.4, w in -0.3f64..0.3, s in -0.25f64..0.25, fam in 1usize..=2) {
                let m = SystemModel::p_system(2.0, 1.0).unwrap();
                let u0 = State::pair(v, w);
                let u1 = lax_curve(&m, fam, &u0, s).unwrap();
                let fan = solve_riemann(&m, &u0, &u1).unwrap();
                prop_assert!((fan.strengths[fam - 1] - s).abs() < 1e-7);
                prop_assert!(fan.strengths[2 - fam].abs() < 1e-7);
                for wv in fan.waves.iter().filter(|w| w.strength.abs() > 1e-9) {
                    if let WaveSpeed::Shock(c) = wv.speed {
                        let lr = m.lambda(&wv.right_state, wv.family).unwrap();
                        let ll = m.lambda(&wv.left_state, wv.family).unwrap();
                        prop_assert!(lr < c && c < ll);
                        let rh = (m.flux(&wv.right_state) - m.flux(&wv.left_state)
                            - (wv.right_state - wv.left_state) * c).norm();
                        prop_assert!(rh <= RH_TOL);
                    }
                }
            }

            #[test]
            fn general_riemann_recomposes(v1 in 0.8f64..1.3, w1 in -0.2f64..0.2, dv in -0.15f64..0.15, dw in -0.15f64..0.15) {
                let m = SystemModel::p_system(2.0, 1.0).unwrap();
                let ul = State::pair(v1, w1);
                let ur = State::pair(v1 + dv, w1 + dw);
                let fan = solve_riemann(&m, &ul, &ur).unwrap();
                let st = compose_curves(&m, &ul, &fan.strengths).unwrap();
                prop_assert!((st[2] - ur).norm() <= 1e-8);
            }

            #[test]
            fn burgers_strengths_add(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0) {
                let m = SystemModel::burgers();
                let s = |x: f64, y: f64| solve_riemann(&m, &State::scalar(x), &State::scalar(y)).unwrap().strengths[0];
                prop_assert!((s(a, c) - (s(a, b) + s(b, c))).abs() <= 1e-15 * 8.0);
            }
        }
    }
}
