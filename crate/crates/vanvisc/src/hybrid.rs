//! The approximation `v = u*φ_δ + Σ_α (ω̃_α − ϱ_α)`: a mollified
//! front-tracking solution with viscous profiles inserted at big shocks.

use crate::error::{Error, Result};
use crate::front_tracking::{FTRun, Front};
use crate::profile::PiecewiseConstant;
use crate::quad;
use crate::state::State;
use crate::system::SystemModel;
use crate::viscous::{shock_profile, ShockProfile};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;
use std::sync::Arc;

/// Half-width of the kernel support, in units of `δ`.
pub const KERNEL_RADIUS: f64 = 2.0 / 3.0;
const KERNEL_A2: f64 = 4.0 / 9.0;

/// `φ(s) = c(4/9 − s²)³` on `|s| ≤ 2/3`, with `c` giving unit mass, and its
/// rescaling `φ_δ(s) = φ(s/δ)/δ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mollifier {
    pub delta: f64,
}

/// `c = 35 / (32 a⁷)` with `a = 2/3`.
fn kernel_const() -> f64 {
    35.0 / (32.0 * KERNEL_RADIUS.powi(7))
}

impl Mollifier {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::BadParameter("delta must be positive".into()));
        }
        Ok(Mollifier { delta })
    }

    pub fn kernel(s: f64) -> f64 {
        if s.abs() >= KERNEL_RADIUS {
            return 0.0;
        }
        let q = KERNEL_A2 - s * s;
        kernel_const() * q * q * q
    }

    pub fn kernel_derivative(s: f64) -> f64 {
        if s.abs() >= KERNEL_RADIUS {
            return 0.0;
        }
        let q = KERNEL_A2 - s * s;
        -6.0 * kernel_const() * s * q * q
    }

    /// `∫_{−∞}^s φ`.
    pub fn kernel_cdf(s: f64) -> f64 {
        if s <= -KERNEL_RADIUS {
            return 0.0;
        }
        if s >= KERNEL_RADIUS {
            return 1.0;
        }
        let a2 = KERNEL_A2;
        let s2 = s * s;
        let f = s * (a2 * a2 * a2 - a2 * a2 * s2 + 0.6 * a2 * s2 * s2 - s2 * s2 * s2 / 7.0);
        0.5 + kernel_const() * f
    }

    pub fn phi(&self, x: f64) -> f64 {
        Self::kernel(x / self.delta) / self.delta
    }

    pub fn phi_prime(&self, x: f64) -> f64 {
        Self::kernel_derivative(x / self.delta) / (self.delta * self.delta)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        Self::kernel_cdf(x / self.delta)
    }

    /// Support half-width `2δ/3`.
    pub fn radius(&self) -> f64 {
        KERNEL_RADIUS * self.delta
    }
}

/// Numerical checks of the kernel: symmetry error, mass error, whether the
/// support is inside `[−2/3, 2/3]`, and whether `s·φ′(s) ≤ 0`.
pub fn kernel_properties() -> (f64, f64, bool, bool) {
    let mut sym: f64 = 0.0;
    let mut mono = true;
    for k in 0..=1000 {
        let s = k as f64 / 1000.0;
        sym = sym.max((Mollifier::kernel(s) - Mollifier::kernel(-s)).abs());
        mono &= s * Mollifier::kernel_derivative(s) <= 0.0 && -s * Mollifier::kernel_derivative(-s) <= 0.0;
    }
    let mass = quad::integrate(Mollifier::kernel, -KERNEL_RADIUS, KERNEL_RADIUS, 1e-15);
    let support = Mollifier::kernel(KERNEL_RADIUS) == 0.0 && Mollifier::kernel(0.7) == 0.0;
    (sym, (mass - 1.0).abs(), support, mono)
}

/// `u * φ_δ` for piecewise-constant `u`, evaluated in closed form.
#[derive(Clone, Debug)]
pub struct Mollified {
    pub mollifier: Mollifier,
    left: State,
    /// `(position, jump, speed)`, sorted by position.
    jumps: Vec<(f64, State, f64)>,
    prefix: Vec<State>,
}

impl Mollified {
    fn from_jumps(left: State, mut jumps: Vec<(f64, State, f64)>, mollifier: Mollifier) -> Self {
        jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut prefix = Vec::with_capacity(jumps.len() + 1);
        prefix.push(State::zeros(left.len()));
        for j in &jumps {
            let last = *prefix.last().unwrap();
            prefix.push(last + j.1);
        }
        Mollified { mollifier, left, jumps, prefix }
    }

    fn local(&self, x: f64) -> std::ops::Range<usize> {
        let r = self.mollifier.radius();
        let a = self.jumps.partition_point(|j| j.0 < x - r);
        let b = self.jumps.partition_point(|j| j.0 <= x + r);
        a..b
    }

    pub fn eval(&self, x: f64) -> State {
        let range = self.local(x);
        let mut v = self.left + self.prefix[range.start];
        for j in &self.jumps[range] {
            v = v + j.1 * self.mollifier.cdf(x - j.0);
        }
        v
    }

    pub fn dx(&self, x: f64) -> State {
        let mut v = State::zeros(self.left.len());
        for j in &self.jumps[self.local(x)] {
            v = v + j.1 * self.mollifier.phi(x - j.0);
        }
        v
    }

    pub fn dxx(&self, x: f64) -> State {
        let mut v = State::zeros(self.left.len());
        for j in &self.jumps[self.local(x)] {
            v = v + j.1 * self.mollifier.phi_prime(x - j.0);
        }
        v
    }

    /// Time derivative when each jump moves at its speed.
    pub fn dt(&self, x: f64) -> State {
        let mut v = State::zeros(self.left.len());
        for j in &self.jumps[self.local(x)] {
            v = v - j.1 * (j.2 * self.mollifier.phi(x - j.0));
        }
        v
    }

    /// Intervals where the mollification differs from a constant.
    pub fn active_intervals(&self) -> Vec<(f64, f64)> {
        let r = self.mollifier.radius();
        self.jumps.iter().map(|j| (j.0 - r, j.0 + r)).collect()
    }
}

/// `v^δ = u * φ_δ`.
pub fn mollify(u: &PiecewiseConstant, delta: f64) -> Result<Mollified> {
    let m = Mollifier::new(delta)?;
    let jumps = u.jumps().map(|(x, l, r)| (x, r - l, 0.0)).collect();
    Ok(Mollified::from_jumps(u.left_state(), jumps, m))
}

fn component_l1(d: State) -> f64 {
    d.as_slice().iter().map(|v| v.abs()).sum()
}

fn merge_intervals(mut iv: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(iv.len());
    for (a, b) in iv {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Integrates `g` over the union of `intervals`, cutting at `cuts` too.
fn integrate_union(g: &(dyn Fn(f64) -> f64 + Sync), intervals: Vec<(f64, f64)>, cuts: &[f64], tol: f64) -> f64 {
    let mut total = 0.0;
    for (a, b) in merge_intervals(intervals) {
        let mut pts = vec![a, b];
        pts.extend(cuts.iter().copied().filter(|&c| c > a && c < b));
        pts.sort_by(f64::total_cmp);
        for w in pts.windows(2) {
            total += quad::integrate(g, w[0], w[1], tol);
        }
    }
    total
}

/// `‖u*φ_δ − u‖₁`.
pub fn mollification_error(u: &PiecewiseConstant, delta: f64) -> Result<f64> {
    let m = mollify(u, delta)?;
    let g = |x: f64| component_l1(m.eval(x) - u.eval(x));
    Ok(integrate_union(&g, m.active_intervals(), &u.breakpoints, 1e-14))
}

/// The squeeze map: `ξ` on `|ξ| ≤ √ε/2`, `ε/(4(√ε−ξ))` up to `√ε`, odd.
pub fn squeeze_map(xi: f64, epsilon: f64) -> Result<f64> {
    Ok(squeeze_derivatives(xi, epsilon)?.0)
}

/// `(φ, φ′, φ″)` of the squeeze map.
pub fn squeeze_derivatives(xi: f64, epsilon: f64) -> Result<(f64, f64, f64)> {
    let r = epsilon.sqrt();
    if xi.abs() >= r {
        return Err(Error::SqueezeOutOfRange { xi, limit: r });
    }
    if xi.abs() <= 0.5 * r {
        return Ok((xi, 1.0, 0.0));
    }
    let s = xi.signum();
    let d = r - xi.abs();
    Ok((s * epsilon / (4.0 * d), epsilon / (4.0 * d * d), s * epsilon / (2.0 * d * d * d)))
}

/// Inserted-profile parametrisation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SqueezeMode {
    /// The squeeze map, sending `±√ε` to `±∞`.
    Squeeze,
    /// `φ(ξ) = ξ`: the unsqueezed profile, for testing.
    Identity,
}

/// One piece of a big-shock track between two events touching it.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackSegment {
    pub t0: f64,
    pub t1: f64,
    /// First and one-past-last strip index covered.
    pub strips: (usize, usize),
    pub front_id: u64,
    pub x0: f64,
    pub speed: f64,
    pub left_state: State,
    pub right_state: State,
    pub strength: f64,
}

impl TrackSegment {
    pub fn position(&self, t: f64) -> f64 {
        self.x0 + self.speed * (t - self.t0)
    }
}

/// A big shock followed through the run.
#[derive(Clone, Debug, PartialEq)]
pub struct BigShockTrack {
    pub id: usize,
    pub family: usize,
    pub rho: f64,
    pub segments: Vec<TrackSegment>,
}

impl BigShockTrack {
    pub fn t_start(&self) -> f64 {
        self.segments[0].t0
    }

    pub fn t_end(&self) -> f64 {
        self.segments.last().unwrap().t1
    }

    pub fn segment_at(&self, t: f64) -> Option<&TrackSegment> {
        self.segments.iter().find(|s| s.t0 <= t && t < s.t1).or_else(|| {
            let last = self.segments.last().unwrap();
            (t == last.t1 && last.t0 < t).then_some(last)
        })
    }

    pub fn position(&self, t: f64) -> Option<f64> {
        self.segment_at(t).map(|s| s.position(t))
    }

    pub fn strength(&self, t: f64) -> Option<f64> {
        self.segment_at(t).map(|s| s.strength)
    }

    pub fn max_strength(&self) -> f64 {
        self.segments.iter().map(|s| s.strength.abs()).fold(0.0, f64::max)
    }
}

struct Chain {
    family: usize,
    confirmed: bool,
    segments: Vec<TrackSegment>,
}

fn open_segment(f: &Front, t: f64, strip: usize) -> TrackSegment {
    TrackSegment {
        t0: t,
        t1: f64::NAN,
        strips: (strip, usize::MAX),
        front_id: f.id,
        x0: f.position,
        speed: f.speed,
        left_state: f.left_state,
        right_state: f.right_state,
        strength: f.strength,
    }
}

/// Selects the big shocks of `run` for threshold `ρ`.
///
/// A candidate opens on any shock of strength `≥ ρ/2`. Until it has reached
/// `ρ` it ends at the first interaction it takes part in (the outgoing shock
/// may open a new candidate); once confirmed it follows the outgoing shock of
/// its family through interactions and ends when that shock is weaker than
/// `ρ/2`. Confirmed candidates are the tracks.
pub fn select_big_shocks(run: &FTRun, rho: f64) -> Vec<BigShockTrack> {
    let half = 0.5 * rho;
    let strips = run.configs.len() - 1;
    let mut chains: Vec<Chain> = Vec::new();
    let mut open: HashMap<u64, usize> = HashMap::new();
    for f in run.configs[0].fronts.iter().filter(|f| f.is_shock() && f.strength.abs() >= half) {
        open.insert(f.id, chains.len());
        chains.push(Chain { family: f.family, confirmed: f.strength.abs() >= rho, segments: vec![open_segment(f, 0.0, 0)] });
    }
    for (j, e) in run.events.iter().enumerate() {
        let strip = j + 1;
        let mut involved: Vec<usize> = Vec::new();
        for f in &e.incoming {
            if let Some(c) = open.remove(&f.id) {
                let seg = chains[c].segments.last_mut().unwrap();
                seg.t1 = e.time;
                seg.strips.1 = strip;
                involved.push(c);
            }
        }
        let mut claimed: Vec<u64> = Vec::new();
        let mut families: Vec<usize> = involved.iter().map(|&c| chains[c].family).collect();
        families.sort_unstable();
        families.dedup();
        for fam in families {
            let out = e
                .outgoing
                .iter()
                .filter(|f| f.is_shock() && f.family == fam && f.strength.abs() >= half)
                .max_by(|a, b| a.strength.abs().total_cmp(&b.strength.abs()));
            let best = involved
                .iter()
                .copied()
                .filter(|&c| chains[c].family == fam && chains[c].confirmed)
                .max_by(|&a, &b| {
                    let sa = chains[a].segments.last().unwrap().strength.abs();
                    let sb = chains[b].segments.last().unwrap().strength.abs();
                    sa.total_cmp(&sb)
                });
            if let (Some(out), Some(best)) = (out, best) {
                chains[best].segments.push(open_segment(out, e.time, strip));
                open.insert(out.id, best);
                claimed.push(out.id);
            }
        }
        for f in e.outgoing.iter().filter(|f| f.is_shock() && f.strength.abs() >= half && !claimed.contains(&f.id)) {
            open.insert(f.id, chains.len());
            chains.push(Chain {
                family: f.family,
                confirmed: f.strength.abs() >= rho,
                segments: vec![open_segment(f, e.time, strip)],
            });
        }
    }
    for (_, c) in open {
        let seg = chains[c].segments.last_mut().unwrap();
        seg.t1 = run.tau;
        seg.strips.1 = strips;
    }
    chains
        .into_iter()
        .filter(|c| c.confirmed)
        .enumerate()
        .map(|(id, c)| BigShockTrack { id, family: c.family, rho, segments: c.segments })
        .collect()
}

/// Settings for [`build_hybrid`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HybridOptions {
    /// Mollification width; `None` means `√ε`.
    pub delta: Option<f64>,
    pub squeeze: SqueezeMode,
    /// Accept overlapping insertion intervals of different families.
    pub allow_overlap: bool,
}

impl Default for HybridOptions {
    fn default() -> Self {
        HybridOptions { delta: None, squeeze: SqueezeMode::Squeeze, allow_overlap: false }
    }
}

/// Profiles keyed by the bit patterns of their end states.
pub type ProfileCache = HashMap<Vec<u64>, Arc<ShockProfile>>;

fn profile_key(a: &State, b: &State) -> Vec<u64> {
    a.as_slice().iter().chain(b.as_slice()).map(|v| v.to_bits()).collect()
}

/// Clamp applied to the inserted profile near `u±`.
pub const PROFILE_CLAMP: f64 = 1e-14;

#[derive(Clone)]
struct Insert {
    track: usize,
    x: f64,
    speed: f64,
    um: State,
    up: State,
    profile: Arc<ShockProfile>,
}

/// `v` on one strip at one time.
#[derive(Clone)]
pub struct Snapshot {
    mollified: Mollified,
    inserts: Vec<Insert>,
    epsilon: f64,
    delta: f64,
    squeeze: SqueezeMode,
}

/// `(value, ∂x, ∂xx, ∂t)`.
type Jet = (State, State, State, State);

impl Snapshot {
    fn insert_jet(&self, ins: &Insert, x: f64) -> Option<Jet> {
        let xi = x - ins.x;
        if xi.abs() >= self.delta {
            return None;
        }
        let m = &self.mollified.mollifier;
        let jump = ins.up - ins.um;
        let rho = ins.um + jump * m.cdf(xi);
        let rho_x = jump * m.phi(xi);
        let rho_xx = jump * m.phi_prime(xi);
        let (w, wx, wxx) = match self.squeeze {
            SqueezeMode::Identity => {
                let p = &ins.profile;
                (p.eval_eps(xi, self.epsilon), p.derivative_eps(xi, self.epsilon), p.second_derivative_eps(xi, self.epsilon))
            }
            SqueezeMode::Squeeze => match squeeze_derivatives(xi, self.epsilon) {
                Err(_) => {
                    let end = if xi > 0.0 { ins.up } else { ins.um };
                    (end, State::zeros(end.len()), State::zeros(end.len()))
                }
                Ok((s, s1, s2)) => {
                    let p = &ins.profile;
                    let w = p.eval_eps(s, self.epsilon);
                    let end = if xi > 0.0 { ins.up } else { ins.um };
                    if (w - end).norm() < PROFILE_CLAMP {
                        (end, State::zeros(end.len()), State::zeros(end.len()))
                    } else {
                        let d1 = p.derivative_eps(s, self.epsilon);
                        let d2 = p.second_derivative_eps(s, self.epsilon);
                        (w, d1 * s1, d2 * (s1 * s1) + d1 * s2)
                    }
                }
            },
        };
        let vx = wx - rho_x;
        Some((w - rho, vx, wxx - rho_xx, vx * (-ins.speed)))
    }

    /// `(v, v_x, v_xx, v_t)` at `x`.
    pub fn jet(&self, x: f64) -> Jet {
        let mo = &self.mollified;
        let (mut v, mut vx, mut vxx, mut vt) = (mo.eval(x), mo.dx(x), mo.dxx(x), mo.dt(x));
        for ins in &self.inserts {
            if let Some((a, b, c, d)) = self.insert_jet(ins, x) {
                v = v + a;
                vx = vx + b;
                vxx = vxx + c;
                vt = vt + d;
            }
        }
        (v, vx, vxx, vt)
    }

    pub fn eval(&self, x: f64) -> State {
        self.jet(x).0
    }

    /// `v_t + A(v)v_x − εv_xx`.
    pub fn residual_at(&self, model: &SystemModel, x: f64) -> State {
        let (v, vx, vxx, vt) = self.jet(x);
        vt + model.jacobian(&v).mul_vec(&vx) - vxx * self.epsilon
    }

    /// Where `v` may be non-constant.
    pub fn active_intervals(&self) -> Vec<(f64, f64)> {
        let mut iv = self.mollified.active_intervals();
        iv.extend(self.inserts.iter().map(|i| (i.x - self.delta, i.x + self.delta)));
        iv
    }

    fn cuts(&self) -> Vec<f64> {
        let r = self.epsilon.sqrt();
        let mut c = Vec::new();
        for i in &self.inserts {
            c.extend([i.x - self.delta, i.x - 0.5 * r, i.x, i.x + 0.5 * r, i.x + self.delta]);
        }
        c
    }

    fn cuts_with_jumps(&self) -> Vec<f64> {
        let mut c = self.cuts();
        c.extend(self.mollified.jumps.iter().map(|j| j.0));
        c
    }
}

/// The hybrid approximation of a whole run.
pub struct HybridApprox<'a> {
    pub run: &'a FTRun,
    pub tracks: Vec<BigShockTrack>,
    pub epsilon: f64,
    pub delta: f64,
    pub squeeze: SqueezeMode,
    /// Profiles per `(track, segment)`.
    profiles: HashMap<(usize, usize), Arc<ShockProfile>>,
}

/// Builds `v` for `run` and `tracks`, computing and caching the profiles.
pub fn build_hybrid<'a>(
    run: &'a FTRun,
    tracks: &[BigShockTrack],
    epsilon: f64,
    options: &HybridOptions,
    cache: &mut ProfileCache,
) -> Result<HybridApprox<'a>> {
    let delta = options.delta.unwrap_or(epsilon.sqrt());
    if !(epsilon > 0.0 && delta > 0.0) {
        return Err(Error::BadParameter("epsilon and delta must be positive".into()));
    }
    let mut profiles = HashMap::new();
    for (ti, t) in tracks.iter().enumerate() {
        for (si, s) in t.segments.iter().enumerate() {
            let key = profile_key(&s.left_state, &s.right_state);
            let p = match cache.get(&key) {
                Some(p) => p.clone(),
                None => {
                    let p = Arc::new(
                        shock_profile(&run.model, &s.left_state, &s.right_state).map_err(|_| Error::MissingProfile(t.id))?,
                    );
                    cache.insert(key, p.clone());
                    p
                }
            };
            profiles.insert((ti, si), p);
        }
    }
    let h = HybridApprox { run, tracks: tracks.to_vec(), epsilon, delta, squeeze: options.squeeze, profiles };
    if !options.allow_overlap {
        h.check_overlaps()?;
    }
    Ok(h)
}

impl<'a> HybridApprox<'a> {
    pub fn strip_count(&self) -> usize {
        self.run.configs.len() - 1
    }

    /// `[t_k, t_{k+1}]` of strip `k`.
    pub fn strip_interval(&self, k: usize) -> (f64, f64) {
        (self.run.configs[k].time, self.run.configs[k + 1].time)
    }

    fn active(&self, k: usize) -> impl Iterator<Item = (usize, usize, &TrackSegment)> + '_ {
        self.tracks.iter().enumerate().flat_map(move |(ti, t)| {
            t.segments
                .iter()
                .enumerate()
                .filter(move |(_, s)| s.strips.0 <= k && k < s.strips.1)
                .map(move |(si, s)| (ti, si, s))
        })
    }

    /// `v` on strip `k` at time `t` (which may be either end of the strip).
    pub fn snapshot(&self, k: usize, t: f64) -> Snapshot {
        let cfg = &self.run.configs[k];
        let dt = t - cfg.time;
        let jumps = cfg
            .fronts
            .iter()
            .map(|f| (f.position + f.speed * dt, f.right_state - f.left_state, f.speed))
            .collect();
        let mollified = Mollified::from_jumps(cfg.left_most_state, jumps, Mollifier { delta: self.delta });
        let inserts = self
            .active(k)
            .map(|(ti, si, s)| Insert {
                track: ti,
                x: s.position(t),
                speed: s.speed,
                um: s.left_state,
                up: s.right_state,
                profile: self.profiles[&(ti, si)].clone(),
            })
            .collect();
        Snapshot { mollified, inserts, epsilon: self.epsilon, delta: self.delta, squeeze: self.squeeze }
    }

    /// Strip containing `t`, right-continuous.
    pub fn strip_at(&self, t: f64) -> usize {
        let n = self.strip_count();
        let k = self.run.configs[..n].partition_point(|c| c.time <= t);
        k.max(1) - 1
    }

    /// `v(t, ·)`.
    pub fn at(&self, t: f64) -> Snapshot {
        self.snapshot(self.strip_at(t), t)
    }

    /// `v(t, x)`.
    pub fn eval(&self, t: f64, x: f64) -> State {
        self.at(t).eval(x)
    }

    fn check_overlaps(&self) -> Result<()> {
        for k in 0..self.strip_count() {
            let (t0, t1) = self.strip_interval(k);
            let act: Vec<(usize, usize, &TrackSegment)> = self.active(k).collect();
            for a in 0..act.len() {
                for b in a + 1..act.len() {
                    let (sa, sb) = (act[a].2, act[b].2);
                    if self.tracks[act[a].0].family == self.tracks[act[b].0].family {
                        continue;
                    }
                    let gap = |t: f64| (sa.position(t) - sb.position(t)).abs();
                    if gap(t0).min(gap(t1)) < 2.0 * self.delta {
                        return Err(Error::OverlappingTracks(self.tracks[act[a].0].id, self.tracks[act[b].0].id));
                    }
                }
            }
        }
        Ok(())
    }

    /// CSV `x,u_1..u_n` of `v(t, ·)` on `grid`.
    pub fn to_csv(&self, t: f64, grid: &[f64]) -> String {
        let snap = self.at(t);
        let n = self.run.model.dim();
        let mut out = String::from("x");
        for c in 1..=n {
            out.push_str(&format!(",u_{c}"));
        }
        out.push('\n');
        for &x in grid {
            out.push_str(&format!("{x}"));
            for v in snap.eval(x).as_slice() {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// `‖v(0) − ū‖₁` with `ū` the initial front-tracking data.
    pub fn initial_distance(&self) -> f64 {
        let snap = self.snapshot(0, 0.0);
        let u = self.run.configs[0].profile();
        distance_to(&snap, &u, 1e-13)
    }

    /// `‖v(τ) − u(τ)‖₁`.
    pub fn final_distance(&self) -> f64 {
        let k = self.strip_count() - 1;
        let snap = self.snapshot(k, self.run.tau);
        let u = self.run.final_config().profile();
        distance_to(&snap, &u, 1e-13)
    }
}

fn distance_to(snap: &Snapshot, u: &PiecewiseConstant, tol: f64) -> f64 {
    let g = |x: f64| component_l1(snap.eval(x) - u.eval(x));
    let mut cuts = snap.cuts_with_jumps();
    cuts.extend(&u.breakpoints);
    integrate_union(&g, snap.active_intervals(), &cuts, tol)
}

/// Quadrature settings for [`residual`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualOptions {
    /// Gauss–Legendre nodes per time panel.
    pub time_nodes: usize,
    /// Panels are shortened until fronts move at most this many `δ` in one.
    pub panel_motion: f64,
    /// Absolute tolerance of each spatial integral.
    pub spatial_tol: f64,
    /// Recompute with doubled time resolution and tightened spatial
    /// tolerance; fail if the totals differ by more than 2%.
    pub verify: bool,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        ResidualOptions { time_nodes: 4, panel_motion: 1.0, spatial_tol: 1e-9, verify: false }
    }
}

/// Integrated residual `∬|v_t + A(v)v_x − εv_xx|`, with the part inside each
/// track's interval `J_α` reported per track.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualReport {
    pub total: f64,
    pub away_from_tracks: f64,
    pub per_track: Vec<f64>,
}

fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Newton iteration on P_n from the Chebyshev-like initial guesses.
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                let (mut q0, mut q1) = (1.0, z);
                for k in 2..=n {
                    let q2 = ((2 * k - 1) as f64 * z * q1 - (k - 1) as f64 * q0) / k as f64;
                    q0 = q1;
                    q1 = q2;
                }
                let d = n as f64 * (z * q1 - q0) / (z * z - 1.0);
                x[i] = z;
                w[i] = 2.0 / ((1.0 - z * z) * d * d);
                break;
            }
        }
    }
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    (x, w)
}

/// Splits intervals into pieces no longer than `len`.
fn refine(intervals: Vec<(f64, f64)>, len: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for (a, b) in merge_intervals(intervals) {
        let n = ((b - a) / len).ceil().max(1.0) as usize;
        let h = (b - a) / n as f64;
        out.extend((0..n).map(|k| (a + k as f64 * h, if k + 1 == n { b } else { a + (k + 1) as f64 * h })));
    }
    out
}

/// `∫|R(t, x)| dx`, split into the part inside each insertion interval and
/// the rest.
fn spatial_residual(h: &HybridApprox, snap: &Snapshot, tol: f64) -> (f64, Vec<(usize, f64)>) {
    let model = &h.run.model;
    let g = |x: f64| component_l1(snap.residual_at(model, x));
    let cuts = snap.cuts();
    let piece = h.delta / 3.0;
    let mut covered: Vec<(f64, f64)> = Vec::new();
    let mut tracks = Vec::new();
    for ins in &snap.inserts {
        let iv = (ins.x - h.delta, ins.x + h.delta);
        let mut pieces = vec![iv];
        for c in &covered {
            pieces = subtract(&pieces, *c);
        }
        let val: f64 = refine(pieces, piece).into_iter().map(|p| integrate_union(&g, vec![p], &cuts, tol)).sum();
        tracks.push((ins.track, val));
        covered.push(iv);
    }
    let mut rest = merge_intervals(snap.mollified.active_intervals());
    for c in &covered {
        rest = subtract(&rest, *c);
    }
    let away = refine(rest, piece).into_iter().map(|p| integrate_union(&g, vec![p], &[], tol)).sum();
    (away, tracks)
}

fn residual_pass(h: &HybridApprox, opts: &ResidualOptions) -> Result<ResidualReport> {
    let (gx, gw) = gauss_legendre(opts.time_nodes);
    let nt = h.tracks.len();
    // v is continuous in time except where a track starts or ends.
    let mut breaks = vec![0.0, h.run.tau];
    for j in 0..h.run.events.len() {
        if classify_event(h.run, &h.tracks, j)?.is_some() {
            breaks.push(h.run.events[j].time);
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let vmax = h
        .run
        .configs
        .iter()
        .flat_map(|c| c.fronts.iter())
        .filter(|f| f.is_physical())
        .map(|f| f.speed.abs())
        .fold(1e-12, f64::max);
    let max_len = opts.panel_motion * h.delta / vmax;
    let mut panels = Vec::new();
    for w in breaks.windows(2) {
        let n = ((w[1] - w[0]) / max_len).ceil().max(1.0) as usize;
        let dt = (w[1] - w[0]) / n as f64;
        panels.extend((0..n).map(|k| (w[0] + k as f64 * dt, dt)));
    }
    let nodes: Vec<(f64, f64)> = panels
        .iter()
        .flat_map(|&(a, dt)| gx.iter().zip(&gw).map(move |(x, w)| (a + 0.5 * dt * (1.0 + x), 0.5 * dt * w)))
        .filter(|&(_, w)| w > 0.0)
        .collect();
    let parts: Vec<(f64, Vec<(usize, f64)>)> = nodes
        .par_iter()
        .map(|&(t, w)| {
            let (away, tracks) = spatial_residual(h, &h.at(t), opts.spatial_tol);
            (w * away, tracks.into_iter().map(|(i, v)| (i, w * v)).collect())
        })
        .collect();
    let mut away = 0.0;
    let mut per_track = vec![0.0; nt];
    for (a, t) in parts {
        away += a;
        for (i, v) in t {
            per_track[i] += v;
        }
    }
    let total = away + per_track.iter().sum::<f64>();
    Ok(ResidualReport { total, away_from_tracks: away, per_track })
}

fn subtract(pieces: &[(f64, f64)], cut: (f64, f64)) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for &(a, b) in pieces {
        if cut.1 <= a || cut.0 >= b {
            out.push((a, b));
            continue;
        }
        if cut.0 > a {
            out.push((a, cut.0));
        }
        if cut.1 < b {
            out.push((cut.1, b));
        }
    }
    out
}

/// `∫_0^τ ∫ |v_t + A(v)v_x − εv_xx| dx dt`, strip by strip.
pub fn residual(h: &HybridApprox, opts: &ResidualOptions) -> Result<ResidualReport> {
    let rep = residual_pass(h, opts)?;
    if opts.verify {
        let fine = ResidualOptions {
            time_nodes: 2 * opts.time_nodes,
            panel_motion: 0.5 * opts.panel_motion,
            spatial_tol: 0.1 * opts.spatial_tol,
            verify: false,
        };
        let check = residual_pass(h, &fine)?;
        let rel = (check.total - rep.total).abs() / check.total.abs().max(1e-300);
        if rel > 0.02 {
            return Err(Error::ResolutionTooCoarse(rel));
        }
    }
    Ok(rep)
}

/// Which kind of change a jump of `v` at an interaction time comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpCase {
    Creation,
    Termination,
    TransversalCrossing,
    SameFamilyAbsorption,
    BigBigMerge,
}

impl JumpCase {
    pub fn index(self) -> usize {
        match self {
            JumpCase::Creation => 0,
            JumpCase::Termination => 1,
            JumpCase::TransversalCrossing => 2,
            JumpCase::SameFamilyAbsorption => 3,
            JumpCase::BigBigMerge => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JumpEvent {
    pub time: f64,
    pub position: f64,
    pub case: JumpCase,
    pub value: f64,
}

/// `Σ_i ∫|v(t_i) − v(t_i−)| dx` with per-case totals, indexed by
/// [`JumpCase::index`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JumpReport {
    pub total: f64,
    pub per_case: [f64; 5],
    pub events: Vec<JumpEvent>,
}

/// Classifies event `j` (0-based) of `run` by its effect on `tracks`;
/// `None` when no track starts or ends there.
pub fn classify_event(run: &FTRun, tracks: &[BigShockTrack], j: usize) -> Result<Option<JumpCase>> {
    let e = &run.events[j];
    let strip = j + 1;
    let mut starts = Vec::new();
    let mut ends = Vec::new();
    for (ti, t) in tracks.iter().enumerate() {
        for (si, s) in t.segments.iter().enumerate() {
            if s.strips.0 == strip {
                starts.push((ti, si));
            }
            if s.strips.1 == strip {
                ends.push((ti, si));
            }
        }
    }
    if starts.is_empty() && ends.is_empty() {
        return Ok(None);
    }
    let created = starts.iter().any(|&(_, si)| si == 0);
    let terminated = ends.iter().any(|&(ti, si)| si + 1 == tracks[ti].segments.len());
    let mut fams: Vec<usize> = ends.iter().map(|&(ti, _)| tracks[ti].family).collect();
    fams.sort_unstable();
    let big_merge = fams.windows(2).any(|w| w[0] == w[1]);
    let tracked_ids: Vec<u64> = ends.iter().map(|&(ti, si)| tracks[ti].segments[si].front_id).collect();
    let others: Vec<&Front> = e.incoming.iter().filter(|f| !tracked_ids.contains(&f.id)).collect();
    let case = if big_merge {
        JumpCase::BigBigMerge
    } else if created {
        JumpCase::Creation
    } else if terminated {
        JumpCase::Termination
    } else if others.iter().any(|f| !fams.contains(&f.family)) {
        JumpCase::TransversalCrossing
    } else if !others.is_empty() {
        JumpCase::SameFamilyAbsorption
    } else {
        return Err(Error::UnclassifiableEvent { t: e.time });
    };
    Ok(Some(case))
}

/// Jumps of `v` at the interaction times.
pub fn jump_sum(h: &HybridApprox) -> Result<JumpReport> {
    let run = h.run;
    let mut jobs = Vec::new();
    for j in 0..run.events.len() {
        if let Some(case) = classify_event(run, &h.tracks, j)? {
            jobs.push((j, case));
        }
    }
    let events: Vec<JumpEvent> = jobs
        .into_par_iter()
        .map(|(j, case)| {
            let e = &run.events[j];
            let before = h.snapshot(j, e.time);
            let after = h.snapshot(j + 1, e.time);
            let g = |x: f64| component_l1(after.eval(x) - before.eval(x));
            let mut iv = before.active_intervals();
            iv.extend(after.active_intervals());
            let lo = e.position - 2.0 * h.delta;
            let hi = e.position + 2.0 * h.delta;
            let iv: Vec<(f64, f64)> = iv.into_iter().filter(|&(a, b)| b > lo && a < hi).map(|(a, b)| (a.max(lo), b.min(hi))).collect();
            let mut cuts = before.cuts_with_jumps();
            cuts.extend(after.cuts_with_jumps());
            let value = integrate_union(&g, iv, &cuts, 1e-13);
            JumpEvent { time: e.time, position: e.position, case, value }
        })
        .collect();
    let mut per_case = [0.0; 5];
    for e in &events {
        per_case[e.case.index()] += e.value;
    }
    Ok(JumpReport { total: per_case.iter().sum(), per_case, events })
}

/// `∫ Osc{u; [y−δ, y+δ]} |D_x u|(dy)` for piecewise-constant `u`.
pub fn oscillation_integral(u: &PiecewiseConstant, delta: f64) -> f64 {
    let mut total = 0.0;
    for (k, &x) in u.breakpoints.iter().enumerate() {
        let jump = (u.values[k + 1] - u.values[k]).norm();
        let a = u.breakpoints.partition_point(|&b| b < x - delta);
        let b = u.breakpoints.partition_point(|&b| b <= x + delta);
        let states = &u.values[a..=b];
        let mut osc: f64 = 0.0;
        for i in 0..states.len() {
            for j in i + 1..states.len() {
                osc = osc.max((states[i] - states[j]).norm());
            }
        }
        total += jump * osc;
    }
    total
}
