//! The viscous equation `u_t + f(u)_x = ε u_xx` on a padded grid, and
//! viscous shock profiles.

use crate::error::{Error, Result};
use crate::ode::{integrate, OdeOptions};
use crate::profile::PiecewiseConstant;
use crate::riemann::shock_speed;
use crate::state::State;
use crate::system::{ModelKind, SystemModel};
use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::sync::Arc;

/// Largest admissible `dt·(max|λ|/dx + 2ε/dx²)`.
pub const CFL_LIMIT: f64 = 0.9;

/// Initial data for the viscous solver.
#[derive(Clone)]
pub enum InitialData {
    /// Sampled by exact cell averages.
    Piecewise(PiecewiseConstant),
    /// Sampled at cell centres; constant outside `support`.
    Smooth { f: Arc<dyn Fn(f64) -> State + Send + Sync>, support: (f64, f64) },
}

impl InitialData {
    fn support(&self) -> (f64, f64) {
        match self {
            InitialData::Piecewise(p) => {
                let a = p.breakpoints.first().copied().unwrap_or(0.0);
                let b = p.breakpoints.last().copied().unwrap_or(0.0);
                (a, b)
            }
            InitialData::Smooth { support, .. } => *support,
        }
    }

    fn cell_value(&self, a: f64, b: f64) -> State {
        match self {
            InitialData::Piecewise(p) => {
                let mut acc = State::zeros(p.dim());
                let mut x = a;
                let mut k = p.breakpoints.partition_point(|&bp| bp <= a);
                while x < b {
                    let next = p.breakpoints.get(k).copied().unwrap_or(f64::INFINITY).min(b);
                    acc = acc + p.values[k] * (next - x);
                    x = next;
                    k += 1;
                }
                acc * (1.0 / (b - a))
            }
            InitialData::Smooth { f, .. } => f(0.5 * (a + b)),
        }
    }
}

/// Grid settings; `None` fields are derived from the data.
#[derive(Clone, Debug, PartialEq)]
pub struct ViscousParams {
    pub dx: Option<f64>,
    pub cfl: f64,
    /// Explicit computational interval; rejected if narrower than needed.
    pub domain: Option<(f64, f64)>,
}

impl Default for ViscousParams {
    fn default() -> Self {
        ViscousParams { dx: None, cfl: CFL_LIMIT, domain: None }
    }
}

/// Cell-centred values `values[k][j]` at `x = x0 + (j + ½)dx`, `t = times[k]`.
#[derive(Clone, Debug)]
pub struct GridSolution {
    pub x0: f64,
    pub dx: f64,
    pub times: Vec<f64>,
    pub values: Vec<Vec<State>>,
    pub epsilon: f64,
    pub dt: f64,
}

impl GridSolution {
    pub fn len(&self) -> usize {
        self.values.first().map(Vec::len).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x_grid(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.x0 + (j as f64 + 0.5) * self.dx).collect()
    }

    pub fn final_values(&self) -> &[State] {
        self.values.last().unwrap()
    }

    /// `Σ_j u_j dx` at output `k`.
    pub fn mass(&self, k: usize) -> State {
        let n = self.values[k][0].len();
        self.values[k].iter().fold(State::zeros(n), |a, u| a + *u) * self.dx
    }

    pub fn total_variation(&self, k: usize) -> f64 {
        self.values[k].windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Exact `∫|u_grid − p|`, summing component-wise absolute differences,
    /// with the grid read as constant on each cell.
    pub fn l1_distance(&self, k: usize, p: &PiecewiseConstant) -> f64 {
        let mut total = 0.0;
        let mut idx = p.breakpoints.partition_point(|&b| b <= self.x0);
        for (j, u) in self.values[k].iter().enumerate() {
            let a = self.x0 + j as f64 * self.dx;
            let b = a + self.dx;
            let mut x = a;
            while x < b {
                let next = p.breakpoints.get(idx).copied().unwrap_or(f64::INFINITY).min(b);
                let d = *u - p.values[idx];
                total += (next - x) * d.as_slice().iter().map(|v| v.abs()).sum::<f64>();
                x = next;
                if next < b {
                    idx += 1;
                }
            }
        }
        total
    }

    /// CSV `x,u_1..u_n` at output `k`.
    pub fn to_csv(&self, k: usize) -> String {
        let n = self.values[k][0].len();
        let mut out = String::from("x");
        for c in 1..=n {
            let _ = write!(out, ",u_{c}");
        }
        out.push('\n');
        for (x, u) in self.x_grid().iter().zip(&self.values[k]) {
            let _ = write!(out, "{x}");
            for v in u.as_slice() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Solves to `tau` with grid spacing `dx` (at most `ε/4`) and returns the
/// initial and final profiles.
pub fn solve_viscous(model: &SystemModel, epsilon: f64, initial: &InitialData, tau: f64, dx: f64) -> Result<GridSolution> {
    solve_viscous_at(model, epsilon, initial, &[tau], &ViscousParams { dx: Some(dx), ..ViscousParams::default() })
}

fn max_char_speed(model: &SystemModel, states: &[State]) -> Result<f64> {
    let mut s: f64 = 0.0;
    for u in states {
        for l in model.eigenvalues(u)? {
            s = s.max(l.abs());
        }
    }
    Ok(s)
}

/// Solves and records the profile at `t = 0` and at each of `times`
/// (ascending).
pub fn solve_viscous_at(
    model: &SystemModel,
    epsilon: f64,
    initial: &InitialData,
    times: &[f64],
    params: &ViscousParams,
) -> Result<GridSolution> {
    if !(epsilon > 0.0) {
        return Err(Error::BadParameter("epsilon must be positive".into()));
    }
    if params.cfl > CFL_LIMIT || !(params.cfl > 0.0) {
        return Err(Error::CflViolation(format!("cfl {} outside (0, {CFL_LIMIT}]", params.cfl)));
    }
    let dx = params.dx.unwrap_or(epsilon / 4.0);
    if dx > epsilon / 4.0 * (1.0 + 1e-12) {
        return Err(Error::ResolutionTooCoarse(dx));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| t < 0.0) {
        return Err(Error::Config("output times must be ascending and non-negative".into()));
    }
    let tau = times.last().copied().unwrap_or(0.0);

    let (a, b) = initial.support();
    let probe: Vec<State> = match initial {
        InitialData::Piecewise(p) => p.values.clone(),
        InitialData::Smooth { f, .. } => (0..=400).map(|k| f(a + (b - a) * k as f64 / 400.0)).collect(),
    };
    let speed = max_char_speed(model, &probe)?;
    let min_jump = probe
        .windows(2)
        .map(|w| (w[1] - w[0]).norm())
        .filter(|&d| d > 0.0)
        .fold(f64::INFINITY, f64::min)
        .max(1e-2);
    // Waves travel at most `speed·τ`; beyond that the diffusive tail of a
    // resolved layer decays below 1e-10.
    let pad = speed * tau + 12.0 * (epsilon * tau).sqrt() + 25.0 * epsilon / min_jump + 10.0 * dx;
    let needed = (a - pad, b + pad);
    let (lo, hi) = match params.domain {
        Some((lo, hi)) => {
            if lo > needed.0 || hi < needed.1 {
                return Err(Error::DomainTooSmall(format!(
                    "[{lo}, {hi}] does not contain [{}, {}]",
                    needed.0, needed.1
                )));
            }
            (lo, hi)
        }
        None => needed,
    };
    let n = ((hi - lo) / dx).ceil() as usize;
    let mut u: Vec<State> = (0..n).map(|j| initial.cell_value(lo + j as f64 * dx, lo + (j + 1) as f64 * dx)).collect();
    for s in &u {
        model.check_domain(s)?;
    }
    let speed_grid = max_char_speed(model, &[u[0], u[n - 1]])?.max(speed);
    let dt = params.cfl / (speed_grid / dx + 2.0 * epsilon / (dx * dx));

    let mut out_times = vec![0.0];
    let mut values = vec![u.clone()];
    let mut t = 0.0;
    for &target in times {
        let steps = ((target - t) / dt).ceil() as usize;
        if steps > 0 {
            let h = (target - t) / steps as f64;
            advance(model, &mut u, steps, h, dx, epsilon)?;
        }
        t = target;
        out_times.push(t);
        values.push(u.clone());
    }
    Ok(GridSolution { x0: lo, dx, times: out_times, values, epsilon, dt })
}

fn advance(model: &SystemModel, u: &mut [State], steps: usize, dt: f64, dx: f64, eps: f64) -> Result<()> {
    match model.kind() {
        ModelKind::Burgers(_) => {
            let mut s: Vec<f64> = u.iter().map(|v| v[0]).collect();
            scalar_steps(&mut s, steps, dt, dx, eps, |v| 0.5 * v * v, |v| v.abs());
            for (dst, v) in u.iter_mut().zip(s) {
                *dst = State::scalar(v);
            }
        }
        ModelKind::PSystem(p) => {
            let (g, k) = (p.gamma, p.k);
            let c = (k * g).sqrt();
            let mut v: Vec<f64> = u.iter().map(|s| s[0]).collect();
            let mut w: Vec<f64> = u.iter().map(|s| s[1]).collect();
            // |A| = c(v̄)·I since A² = c²I.
            pair_steps(&mut v, &mut w, steps, dt, dx, eps, |a, b| (-b, k * a.powf(-g)), |a, _| {
                c * a.powf(-(g + 1.0) / 2.0)
            })?;
            for (j, dst) in u.iter_mut().enumerate() {
                *dst = State::pair(v[j], w[j]);
            }
        }
        ModelKind::Custom(_) => generic_steps(model, u, steps, dt, dx, eps)?,
    }
    Ok(())
}

fn scalar_steps(
    u: &mut [f64],
    steps: usize,
    dt: f64,
    dx: f64,
    eps: f64,
    f: impl Fn(f64) -> f64,
    abs_a: impl Fn(f64) -> f64,
) {
    let n = u.len();
    let mut fu = vec![0.0; n];
    let mut flux = vec![0.0; n + 1];
    let r = dt / dx;
    let d = eps / dx;
    for _ in 0..steps {
        for j in 0..n {
            fu[j] = f(u[j]);
        }
        flux[0] = fu[0];
        flux[n] = fu[n - 1];
        for j in 0..n - 1 {
            let (a, b) = (u[j], u[j + 1]);
            flux[j + 1] = 0.5 * (fu[j] + fu[j + 1]) - (0.5 * abs_a(0.5 * (a + b)) + d) * (b - a);
        }
        for j in 0..n {
            u[j] -= r * (flux[j + 1] - flux[j]);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn pair_steps(
    v: &mut [f64],
    w: &mut [f64],
    steps: usize,
    dt: f64,
    dx: f64,
    eps: f64,
    f: impl Fn(f64, f64) -> (f64, f64),
    scalar_abs_a: impl Fn(f64, f64) -> f64,
) -> Result<()> {
    let n = v.len();
    let mut f1 = vec![0.0; n];
    let mut f2 = vec![0.0; n];
    let mut g1 = vec![0.0; n + 1];
    let mut g2 = vec![0.0; n + 1];
    let r = dt / dx;
    let d = eps / dx;
    for _ in 0..steps {
        for j in 0..n {
            let (a, b) = f(v[j], w[j]);
            f1[j] = a;
            f2[j] = b;
        }
        g1[0] = f1[0];
        g2[0] = f2[0];
        g1[n] = f1[n - 1];
        g2[n] = f2[n - 1];
        for j in 0..n - 1 {
            let c = scalar_abs_a(0.5 * (v[j] + v[j + 1]), 0.5 * (w[j] + w[j + 1])) * 0.5 + d;
            g1[j + 1] = 0.5 * (f1[j] + f1[j + 1]) - c * (v[j + 1] - v[j]);
            g2[j + 1] = 0.5 * (f2[j] + f2[j + 1]) - c * (w[j + 1] - w[j]);
        }
        for j in 0..n {
            v[j] -= r * (g1[j + 1] - g1[j]);
            w[j] -= r * (g2[j + 1] - g2[j]);
        }
    }
    if v.iter().chain(w.iter()).any(|x| !x.is_finite()) {
        return Err(Error::CflViolation("solution blew up".into()));
    }
    Ok(())
}

fn generic_steps(model: &SystemModel, u: &mut [State], steps: usize, dt: f64, dx: f64, eps: f64) -> Result<()> {
    let n = u.len();
    let dim = u[0].len();
    let mut fu = vec![State::zeros(dim); n];
    let mut flux = vec![State::zeros(dim); n + 1];
    let r = dt / dx;
    for _ in 0..steps {
        for j in 0..n {
            fu[j] = model.flux(&u[j]);
        }
        flux[0] = fu[0];
        flux[n] = fu[n - 1];
        for j in 0..n - 1 {
            let du = u[j + 1] - u[j];
            let mid = (u[j] + u[j + 1]) * 0.5;
            let fr = model.eigen_frame_unchecked(&mid)?;
            let mut diss = State::zeros(dim);
            for i in 1..=dim {
                diss = diss + fr.right(i) * (fr.lambda(i).abs() * fr.left(i).dot(&du));
            }
            flux[j + 1] = (fu[j] + fu[j + 1]) * 0.5 - diss * 0.5 - du * (eps / dx);
        }
        for j in 0..n {
            u[j] = u[j] - (flux[j + 1] - flux[j]) * r;
        }
    }
    Ok(())
}

/// Largest gap allowed between the shooting target and the orbit's end.
pub const ENDPOINT_TOL: f64 = 1e-8;

/// A travelling wave `ω` with `ω″ = (A(ω) − λ)ω′`, `ω(±∞) = u±`, stored on
/// the adaptive grid of the shooting integration and centred so that
/// `∫_{−∞}^0 |ω − u⁻| = ∫_0^∞ |ω − u⁺|`.
#[derive(Clone, Debug)]
pub struct ShockProfile {
    pub model: SystemModel,
    pub left_state: State,
    pub right_state: State,
    pub speed: f64,
    pub family: usize,
    /// `λ_i(u⁺) − λ_i(u⁻)`.
    pub strength: f64,
    /// `(s, ω(s))`, ascending in `s`.
    pub samples: Vec<(f64, State)>,
    /// Shift subtracted from the raw shooting parameter.
    pub center_shift: f64,
    /// `∫_{−∞}^0 |ω − u⁻| − ∫_0^∞ |ω − u⁺|` after centring.
    pub centering_residual: f64,
    /// Exponential rates of approach to `u⁻` (as `s → −∞`) and `u⁺`.
    pub tail_rates: (f64, f64),
}

impl ShockProfile {
    /// `ω′ = f(ω) − f(u⁻) − λ(ω − u⁻)`, the once-integrated profile equation.
    pub fn rhs(&self, w: &State) -> State {
        profile_rhs(&self.model, &self.left_state, self.speed, w)
    }

    /// `ω(s)` by cubic Hermite interpolation; endpoint states beyond the
    /// sampled range.
    pub fn eval(&self, s: f64) -> State {
        let sm = &self.samples;
        if s <= sm[0].0 {
            return self.left_state;
        }
        if s >= sm.last().unwrap().0 {
            return self.right_state;
        }
        let k = sm.partition_point(|p| p.0 <= s);
        let (s0, w0) = sm[k - 1];
        let (s1, w1) = sm[k];
        let h = s1 - s0;
        let t = (s - s0) / h;
        let (d0, d1) = (self.rhs(&w0), self.rhs(&w1));
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        w0 * h00 + d0 * (h10 * h) + w1 * h01 + d1 * (h11 * h)
    }

    /// `ω′(s)`.
    pub fn derivative(&self, s: f64) -> State {
        self.rhs(&self.eval(s))
    }

    /// `ω″(s) = (A(ω) − λ)ω′`.
    pub fn second_derivative(&self, s: f64) -> State {
        let w = self.eval(s);
        let d = self.rhs(&w);
        self.model.jacobian(&w).mul_vec(&d) - d * self.speed
    }

    /// `ω^ε(s) = ω(s/ε)`.
    pub fn eval_eps(&self, s: f64, eps: f64) -> State {
        self.eval(s / eps)
    }

    pub fn derivative_eps(&self, s: f64, eps: f64) -> State {
        self.derivative(s / eps) * (1.0 / eps)
    }

    pub fn second_derivative_eps(&self, s: f64, eps: f64) -> State {
        self.second_derivative(s / eps) * (1.0 / (eps * eps))
    }

    /// Largest `|ω′ − G(ω)|` at step midpoints, with `ω′` from the
    /// interpolant; a consistency check of the stored orbit.
    pub fn ode_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for w in self.samples.windows(2) {
            let (s0, s1) = (w[0].0, w[1].0);
            let m = 0.5 * (s0 + s1);
            let h = 1e-4 * (s1 - s0);
            let num = (self.eval(m + h) - self.eval(m - h)) * (0.5 / h);
            worst = worst.max((num - self.derivative(m)).max_abs());
        }
        worst
    }

    /// Distances of the first and last sample from `u⁻` and `u⁺`.
    pub fn endpoint_errors(&self) -> (f64, f64) {
        let first = self.samples[0].1;
        let last = self.samples.last().unwrap().1;
        ((first - self.left_state).norm(), (last - self.right_state).norm())
    }

    /// CSV `s,u_1..u_n` of the samples.
    pub fn to_csv(&self) -> String {
        let n = self.left_state.len();
        let mut out = String::from("s");
        for c in 1..=n {
            let _ = write!(out, ",u_{c}");
        }
        out.push('\n');
        for (s, w) in &self.samples {
            let _ = write!(out, "{s}");
            for v in w.as_slice() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

fn profile_rhs(model: &SystemModel, um: &State, speed: f64, w: &State) -> State {
    model.flux(w) - model.flux(um) - (*w - *um) * speed
}

/// Family `i` with `λ_i(u⁺) < λ < λ_i(u⁻)` (and the other families
/// non-characteristic), or `NotLaxPair`.
fn lax_family(model: &SystemModel, um: &State, up: &State, speed: f64) -> Result<usize> {
    let lm = model.eigenvalues(um)?;
    let lp = model.eigenvalues(up)?;
    for i in 0..lm.len() {
        let lax = lp[i] < speed && speed < lm[i];
        let below = i == 0 || lm[i - 1] < speed;
        let above = i + 1 == lm.len() || speed < lp[i + 1];
        if lax && below && above {
            return Ok(i + 1);
        }
    }
    Err(Error::NotLaxPair)
}

/// Weighted Simpson of `g(s) = |ω(s) − target|` over one step, with the
/// midpoint from the Hermite interpolant.
fn step_integral(p: &ShockProfile, s0: f64, s1: f64, target: &State) -> f64 {
    let g = |s: f64| (p.eval(s) - *target).norm();
    (s1 - s0) / 6.0 * (g(s0) + 4.0 * g(0.5 * (s0 + s1)) + g(s1))
}

/// Viscous profile of the Lax shock `(u⁻, u⁺)`, by shooting from the saddle
/// endpoint along its one-dimensional invariant manifold.
pub fn shock_profile(model: &SystemModel, u_minus: &State, u_plus: &State) -> Result<ShockProfile> {
    let speed = shock_speed(model, u_minus, u_plus).map_err(|_| Error::NotLaxPair)?;
    let family = lax_family(model, u_minus, u_plus, speed)?;
    let fm = model.eigen_frame_unchecked(u_minus)?;
    let fp = model.eigen_frame_unchecked(u_plus)?;
    let strength = fp.lambda(family) - fm.lambda(family);
    // Linearisation of ω′ = G(ω) at u± has eigenvalues λ_k(u±) − λ.
    let rates_m: Vec<f64> = fm.lambdas.iter().map(|l| l - speed).collect();
    let rates_p: Vec<f64> = fp.lambdas.iter().map(|l| l - speed).collect();
    let unstable_m = rates_m.iter().filter(|&&r| r > 0.0).count();
    let tail_m = rates_m.iter().copied().filter(|&r| r > 0.0).fold(f64::INFINITY, f64::min);
    let tail_p = rates_p.iter().copied().filter(|&r| r < 0.0).map(f64::abs).fold(f64::INFINITY, f64::min);

    let forward = unstable_m == 1;
    let (start, target, dir, rate, k) = if forward {
        let k = rates_m.iter().position(|&r| r > 0.0).unwrap() + 1;
        (*u_minus, *u_plus, 1.0, rates_m[k - 1], k)
    } else {
        let k = rates_p.iter().position(|&r| r < 0.0).ok_or(Error::NotLaxPair)? + 1;
        (*u_plus, *u_minus, -1.0, rates_p[k - 1], k)
    };
    let frame = if forward { &fm } else { &fp };
    let mut r = frame.right(k);
    r = r * (1.0 / r.norm());
    if r.dot(&(target - start)) < 0.0 {
        r = -r;
    }
    let eta = 1e-8 * strength.abs();
    let h_max = 0.05 / rate.abs().min(tail_m).min(tail_p);
    // Integrate the deviation from the target with error control relative to
    // it, so the approach to the target keeps its slow-mode shape instead of
    // carrying a fast-mode error at the absolute tolerance.
    let floor = 1e-3;
    let opts = OdeOptions { tol: 1e-13, abs_floor: floor, h_init: 0.1 * h_max, h_max, max_steps: 2_000_000 };
    let rhs = |d: &State| Ok(profile_rhs(model, u_minus, speed, &(target + *d)) * dir);
    let d0 = start + r * eta - target;
    let mut raw = vec![(0.0, target + d0)];
    let stop = 1e-12 * (1.0 + strength.abs());
    let horizon = 1e3 / rate.abs().min(tail_m).min(tail_p);
    let (_, end) = integrate(rhs, d0, 0.0, horizon, opts, |s, d| {
        raw.push((s, target + *d));
        if !d.is_finite() || d.max_abs() > 1e6 {
            return Err(Error::ShootFailure("orbit diverged".into()));
        }
        Ok(if d.norm() < stop { ControlFlow::Break(()) } else { ControlFlow::Continue(()) })
    })?;
    let end = target + end;
    if (end - target).norm() > ENDPOINT_TOL {
        return Err(Error::ShootFailure(format!("orbit misses target by {:e}", (end - target).norm())));
    }
    if !forward {
        raw = raw.into_iter().rev().map(|(s, w)| (-s, w)).collect();
    }
    let mut p = ShockProfile {
        model: model.clone(),
        left_state: *u_minus,
        right_state: *u_plus,
        speed,
        family,
        strength,
        samples: raw,
        center_shift: 0.0,
        centering_residual: 0.0,
        tail_rates: (tail_m, tail_p),
    };
    center(&mut p);
    Ok(p)
}

/// Picks the shift so both centring integrals agree; the tails beyond the
/// sampled range are added in closed form, `d/rate`.
fn center(p: &mut ShockProfile) {
    let sm = p.samples.clone();
    let m = sm.len();
    let (um, up) = (p.left_state, p.right_state);
    // cum_m[k] = ∫_{-∞}^{s_k} |ω − u⁻|, cum_p[k] = ∫_{s_k}^{∞} |ω − u⁺|.
    let mut cum_m = vec![(sm[0].1 - um).norm() / p.tail_rates.0; m];
    for k in 1..m {
        cum_m[k] = cum_m[k - 1] + step_integral(p, sm[k - 1].0, sm[k].0, &um);
    }
    let mut cum_p = vec![(sm[m - 1].1 - up).norm() / p.tail_rates.1; m];
    for k in (0..m - 1).rev() {
        cum_p[k] = cum_p[k + 1] + step_integral(p, sm[k].0, sm[k + 1].0, &up);
    }
    let balance = |c: f64| -> f64 {
        let k = sm.partition_point(|q| q.0 <= c).clamp(1, m - 1);
        let left = cum_m[k - 1] + step_integral(p, sm[k - 1].0, c, &um);
        let right = cum_p[k] + step_integral(p, c, sm[k].0, &up);
        left - right
    };
    let (mut lo, mut hi) = (sm[0].0, sm[m - 1].0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if balance(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-13 * (1.0 + hi.abs()) {
            break;
        }
    }
    let c = 0.5 * (lo + hi);
    let residual = balance(c);
    for q in &mut p.samples {
        q.0 -= c;
    }
    p.center_shift = c;
    p.centering_residual = residual;
}

/// Fitted constants of the exponential tail bounds
/// `|∂_s ω^ε| ≤ C₁ (σ²/ε) e^{−c|sσ|/ε}` and
/// `|∂²_s ω^ε| ≤ C₂ (|σ|³/ε²) e^{−c|sσ|/ε}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailReport {
    /// Exponent constant `c`: the slower endpoint rate divided by `|σ|`.
    pub decay_constant: f64,
    pub c1: f64,
    pub c2: f64,
    /// `max(ratio/C − 1)` over all samples, per bound.
    pub violation1: f64,
    pub violation2: f64,
    /// Largest `|∂_s ω^ε(s)|` over the samples and its position.
    pub peak_derivative: (f64, f64),
}

impl TailReport {
    pub fn max_violation(&self) -> f64 {
        self.violation1.max(self.violation2).max(0.0)
    }
}

/// Separation from both endpoints below which a sample counts as tail.
pub const TAIL_CUTOFF: f64 = 1e-6;

/// Relative error of `ω″` tolerated from rounding of the stored states; tail
/// samples closer to an endpoint than this allows are not checked.
pub const TAIL_RESOLUTION: f64 = 1e-3;

/// Distance from `u` below which rounding of the state (`EPS·|u|`), amplified
/// by `(A − λ)²`, exceeds [`TAIL_RESOLUTION`] of the slow-mode `ω″ ≈ rate²·d`.
/// Matters for weak system shocks, where the slow rate is `~|σ|/2` and the
/// other family's rate stays `O(1)`.
fn resolution_floor(p: &ShockProfile, u: &State, rate: f64) -> f64 {
    let spread = p.model.eigenvalues(u).map_or(rate, |ls| ls.iter().map(|l| (l - p.speed).abs()).fold(rate, f64::max));
    f64::EPSILON * (1.0 + u.max_abs()) * (spread / rate).powi(2) / TAIL_RESOLUTION
}

/// Fits `C₁, C₂` on the body of the profile (samples at least
/// [`TAIL_CUTOFF`] from both endpoints) and reports how far the resolved
/// tails exceed the fitted bounds.
pub fn tail_bound_check(profile: &ShockProfile, epsilon: f64) -> TailReport {
    let sig = profile.strength.abs();
    let c = profile.tail_rates.0.min(profile.tail_rates.1) / sig;
    let floors = (
        resolution_floor(profile, &profile.left_state, profile.tail_rates.0),
        resolution_floor(profile, &profile.right_state, profile.tail_rates.1),
    );
    let mut pts: Vec<(f64, f64, f64, bool)> = Vec::new();
    let mut peak = (0.0, 0.0);
    for w in profile.samples.windows(2) {
        for s in [w[0].0, 0.5 * (w[0].0 + w[1].0)] {
            let x = s * epsilon;
            let d1 = profile.derivative_eps(x, epsilon).norm();
            let d2 = profile.second_derivative_eps(x, epsilon).norm();
            let e = (c * (x * sig).abs() / epsilon).exp();
            let r1 = d1 * e / (sig * sig / epsilon);
            let r2 = d2 * e / (sig.powi(3) / (epsilon * epsilon));
            let u = profile.eval(s);
            let (dl, dr) = ((u - profile.left_state).norm(), (u - profile.right_state).norm());
            if dl < floors.0 || dr < floors.1 {
                continue;
            }
            pts.push((r1, r2, x, dl.min(dr) >= TAIL_CUTOFF));
            if d1 > peak.0 {
                peak = (d1, x);
            }
        }
    }
    let c1 = pts.iter().filter(|p| p.3).map(|p| p.0).fold(0.0, f64::max);
    let c2 = pts.iter().filter(|p| p.3).map(|p| p.1).fold(0.0, f64::max);
    let v1 = pts.iter().map(|p| p.0 / c1 - 1.0).fold(f64::NEG_INFINITY, f64::max);
    let v2 = pts.iter().map(|p| p.1 / c2 - 1.0).fold(f64::NEG_INFINITY, f64::max);
    TailReport { decay_constant: c, c1, c2, violation1: v1, violation2: v2, peak_derivative: peak }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riemann::lax_curve;

    fn tanh_profile(s: f64) -> f64 {
        0.5 - 0.5 * (s / 4.0).tanh()
    }

    #[test]
    fn burgers_profile_is_tanh() {
        let m = SystemModel::burgers();
        let p = shock_profile(&m, &State::scalar(1.0), &State::scalar(0.0)).unwrap();
        assert!(p.center_shift.is_finite());
        let mut worst: f64 = 0.0;
        for k in -400..=400 {
            let s = k as f64 * 0.1;
            worst = worst.max((p.eval(s)[0] - tanh_profile(s)).abs());
        }
        assert!(worst < 1e-8, "{worst}");
        assert!(p.centering_residual.abs() < 1e-6);
        // Oracle residual of the second-order equation on the analytic tanh.
        let s = 0.7;
        let h = 1e-3;
        let d2 = (tanh_profile(s + h) - 2.0 * tanh_profile(s) + tanh_profile(s - h)) / (h * h);
        let d1 = (tanh_profile(s + h) - tanh_profile(s - h)) / (2.0 * h);
        assert!((d2 - (tanh_profile(s) - 0.5) * d1).abs() < 1e-6);
        assert!((p.second_derivative(s)[0] - d2).abs() < 1e-6);
    }

    #[test]
    fn burgers_tail_constants() {
        let m = SystemModel::burgers();
        let p = shock_profile(&m, &State::scalar(1.0), &State::scalar(0.0)).unwrap();
        for eps in [1e-2, 1e-3] {
            let rep = tail_bound_check(&p, eps);
            assert!((rep.decay_constant - 0.5).abs() < 1e-12);
            assert!(rep.c1 <= 1.0);
            assert!(rep.max_violation() <= 0.01);
            // |ω′(0)| = 1/(8ε) is the peak, and the bound at s = 0 covers it.
            let centre = p.derivative_eps(0.0, eps).norm();
            assert!((centre * 8.0 * eps - 1.0).abs() < 1e-8);
            assert!(rep.peak_derivative.0 <= centre * (1.0 + 1e-12));
            assert!(rep.c1 / eps >= centre);
        }
    }

    #[test]
    fn p_system_profiles() {
        let m = SystemModel::p_system(2.0, 1.0).unwrap();
        let um = State::pair(1.0, 0.0);
        for fam in [1, 2] {
            let up = lax_curve(&m, fam, &um, -0.3).unwrap();
            let p = shock_profile(&m, &um, &up).unwrap();
            assert_eq!(p.family, fam);
            let (e0, e1) = p.endpoint_errors();
            assert!(e0 <= 1e-8 && e1 <= 1e-8, "{e0} {e1}");
            assert!(p.centering_residual.abs() <= 1e-6);
            assert!(p.ode_residual() < 1e-8, "{}", p.ode_residual());
            let rep = tail_bound_check(&p, 1e-3);
            assert!(rep.c1.is_finite() && rep.c2.is_finite());
            assert!(rep.max_violation() <= 0.01, "{rep:?}");
            // λ_i decreases along the orbit.
            let lam: Vec<f64> = p.samples.iter().map(|(_, w)| m.lambda(w, fam).unwrap()).collect();
            assert!(lam.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        }
    }

    #[test]
    fn non_lax_pairs_rejected() {
        let m = SystemModel::burgers();
        assert!(matches!(shock_profile(&m, &State::scalar(0.0), &State::scalar(1.0)), Err(Error::NotLaxPair)));
    }

    fn burgers_step(l: f64, r: f64) -> InitialData {
        InitialData::Piecewise(PiecewiseConstant::from_jumps(State::scalar(l), &[(0.0, State::scalar(r))]).unwrap())
    }

    #[test]
    fn constant_data_stays_constant() {
        let m = SystemModel::burgers();
        let data = InitialData::Piecewise(PiecewiseConstant::constant(State::scalar(0.3)));
        let sol = solve_viscous(&m, 0.01, &data, 0.5, 0.0025).unwrap();
        assert!(sol.final_values().iter().all(|u| u[0] == 0.3));
    }

    #[test]
    fn travelling_wave_translates() {
        let m = SystemModel::burgers();
        let eps = 0.01;
        let data = InitialData::Smooth {
            f: Arc::new(move |x| State::scalar(tanh_profile(x / eps))),
            support: (-0.5, 0.5),
        };
        let dx = eps / 4.0;
        let sol = solve_viscous(&m, eps, &data, 1.0, dx).unwrap();
        let mut err = 0.0;
        for (x, u) in sol.x_grid().iter().zip(sol.final_values()) {
            err += (u[0] - tanh_profile((x - 0.5) / eps)).abs() * dx;
        }
        assert!(err <= 5.0 * dx, "{err}");
    }

    #[test]
    fn rarefaction_distance() {
        let m = SystemModel::burgers();
        let eps = 0.01;
        let sol = solve_viscous(&m, eps, &burgers_step(0.0, 1.0), 1.0, eps / 4.0).unwrap();
        let mut err = 0.0;
        for (x, u) in sol.x_grid().iter().zip(sol.final_values()) {
            err += (u[0] - x.clamp(0.0, 1.0)).abs() * sol.dx;
        }
        assert!(err <= eps.sqrt(), "{err}");
    }

    #[test]
    fn conservation_and_limits() {
        let m = SystemModel::burgers();
        let data = InitialData::Piecewise(
            PiecewiseConstant::from_jumps(State::scalar(0.0), &[(0.0, State::scalar(1.0)), (0.5, State::scalar(0.0))])
                .unwrap(),
        );
        let sol = solve_viscous(&m, 0.02, &data, 1.0, 0.005).unwrap();
        assert!((sol.mass(0)[0] - sol.mass(1)[0]).abs() < 1e-10);
        assert!(sol.total_variation(1) <= sol.total_variation(0) + 1e-12);
        assert!(matches!(solve_viscous(&m, 0.02, &data, 1.0, 0.01), Err(Error::ResolutionTooCoarse(_))));
        let small = ViscousParams { domain: Some((-0.1, 0.6)), ..ViscousParams::default() };
        assert!(matches!(solve_viscous_at(&m, 0.02, &data, &[1.0], &small), Err(Error::DomainTooSmall(_))));
        let fast = ViscousParams { cfl: 1.5, ..ViscousParams::default() };
        assert!(matches!(solve_viscous_at(&m, 0.02, &data, &[1.0], &fast), Err(Error::CflViolation(_))));
    }

    #[test]
    fn refinement_is_first_order() {
        let m = SystemModel::burgers();
        let eps = 0.02;
        let data = InitialData::Smooth {
            f: Arc::new(move |x| State::scalar(tanh_profile(x / eps))),
            support: (-0.5, 0.5),
        };
        let coarse = solve_viscous(&m, eps, &data, 0.5, eps / 4.0).unwrap();
        let fine = solve_viscous(&m, eps, &data, 0.5, eps / 8.0).unwrap();
        let finer = solve_viscous(&m, eps, &data, 0.5, eps / 16.0).unwrap();
        let exact = |x: f64| tanh_profile((x - 0.25) / eps);
        let err = |s: &GridSolution| -> f64 {
            s.x_grid().iter().zip(s.final_values()).map(|(x, u)| (u[0] - exact(*x)).abs() * s.dx).sum()
        };
        let (e1, e2, e3) = (err(&coarse), err(&fine), err(&finer));
        assert!(e2 < e1 && e3 < e2, "{e1} {e2} {e3}");
    }
}
