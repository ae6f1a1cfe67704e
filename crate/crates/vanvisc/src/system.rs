//! Flux functions, Jacobians and normalized eigenstructure.
//!
//! Right eigenvectors are scaled so that `∇λ_i · r_i = 1`, left eigenvectors
//! so that `l_i · r_j = δ_ij`. With this scaling the strength of an `i`-wave
//! is the jump of `λ_i` across it. Families are numbered from 1.

use crate::error::{Error, Result};
use crate::state::{Mat, State};
use std::fmt;
use std::sync::Arc;

/// Eigenvalues closer than this are treated as coincident.
pub const HYPERBOLICITY_GAP: f64 = 1e-12;

/// A flux `f: R^n → R^n` with its Jacobian.
pub trait Flux: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn flux(&self, u: &State) -> State;
    fn jacobian(&self, u: &State) -> Mat;
    /// `∇λ_i(u)` in closed form, if known. `family` starts at 1.
    fn eigenvalue_gradient(&self, _u: &State, _family: usize) -> Option<State> {
        None
    }
}

/// Scalar Burgers flux `u²/2`.
#[derive(Clone, Copy, Debug)]
pub struct Burgers;

impl Flux for Burgers {
    fn dim(&self) -> usize {
        1
    }
    fn flux(&self, u: &State) -> State {
        State::scalar(0.5 * u[0] * u[0])
    }
    fn jacobian(&self, u: &State) -> Mat {
        Mat::from_rows(&[&[u[0]]])
    }
    fn eigenvalue_gradient(&self, _u: &State, _family: usize) -> Option<State> {
        Some(State::scalar(1.0))
    }
}

/// The p-system `v_t - w_x = 0`, `w_t + p(v)_x = 0` with `p(v) = k v^(-γ)`.
#[derive(Clone, Copy, Debug)]
pub struct PSystem {
    pub gamma: f64,
    pub k: f64,
}

impl PSystem {
    /// Sound speed `sqrt(-p'(v))`.
    pub fn sound_speed(&self, v: f64) -> f64 {
        (self.k * self.gamma).sqrt() * v.powf(-(self.gamma + 1.0) / 2.0)
    }

    pub fn pressure(&self, v: f64) -> f64 {
        self.k * v.powf(-self.gamma)
    }
}

impl Flux for PSystem {
    fn dim(&self) -> usize {
        2
    }
    fn flux(&self, u: &State) -> State {
        State::pair(-u[1], self.pressure(u[0]))
    }
    fn jacobian(&self, u: &State) -> Mat {
        let dp = -self.gamma * self.k * u[0].powf(-self.gamma - 1.0);
        Mat::from_rows(&[&[0.0, -1.0], &[dp, 0.0]])
    }
    fn eigenvalue_gradient(&self, u: &State, family: usize) -> Option<State> {
        let dc = -(self.k * self.gamma).sqrt() * (self.gamma + 1.0) / 2.0
            * u[0].powf(-(self.gamma + 3.0) / 2.0);
        let sign = if family == 1 { -1.0 } else { 1.0 };
        Some(State::pair(sign * dc, 0.0))
    }
}

/// Named presets accepted by [`preset_model`].
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Burgers,
    PSystem { gamma: f64, k: f64 },
}

/// Component-wise bounds on admissible states.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomainBox {
    pub lower: State,
    pub upper: State,
}

impl DomainBox {
    pub fn new(lower: State, upper: State) -> Self {
        DomainBox { lower, upper }
    }

    pub fn contains(&self, u: &State) -> bool {
        (0..u.len()).all(|k| {
            let tol = 1e-12 * (1.0 + self.upper[k].abs().max(self.lower[k].abs()));
            u[k] >= self.lower[k] - tol && u[k] <= self.upper[k] + tol
        })
    }

    /// Regular grid of roughly `samples` points covering the box.
    pub fn sample_grid(&self, samples: usize) -> Vec<State> {
        let n = self.lower.len();
        let per_axis = if n == 1 {
            samples.max(1)
        } else {
            ((samples as f64).sqrt().ceil() as usize).max(1)
        };
        let coord = |k: usize, j: usize| {
            if per_axis == 1 {
                0.5 * (self.lower[k] + self.upper[k])
            } else {
                self.lower[k] + (self.upper[k] - self.lower[k]) * j as f64 / (per_axis - 1) as f64
            }
        };
        if n == 1 {
            (0..per_axis).map(|j| State::scalar(coord(0, j))).collect()
        } else {
            let mut out = Vec::with_capacity(per_axis * per_axis);
            for a in 0..per_axis {
                for b in 0..per_axis {
                    out.push(State::pair(coord(0, a), coord(1, b)));
                }
            }
            out
        }
    }
}

#[derive(Clone, Debug)]
pub enum ModelKind {
    Burgers(Burgers),
    PSystem(PSystem),
    Custom(Arc<dyn Flux>),
}

/// A strictly hyperbolic system together with its admissible state box.
#[derive(Clone, Debug)]
pub struct SystemModel {
    name: String,
    kind: ModelKind,
    domain: DomainBox,
}

/// Eigenvalues in increasing order with normalized eigenvectors.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenFrame {
    pub lambdas: Vec<f64>,
    pub r: Vec<State>,
    pub l: Vec<State>,
}

impl EigenFrame {
    pub fn lambda(&self, family: usize) -> f64 {
        self.lambdas[family - 1]
    }
    pub fn right(&self, family: usize) -> State {
        self.r[family - 1]
    }
    pub fn left(&self, family: usize) -> State {
        self.l[family - 1]
    }
}

/// Per-family minima of `|∇λ_i · r_i|` with unit-length `r_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct GnlReport {
    pub min_per_family: Vec<f64>,
    pub min_gap: f64,
}

impl SystemModel {
    pub fn burgers() -> Self {
        SystemModel {
            name: "burgers".into(),
            kind: ModelKind::Burgers(Burgers),
            domain: DomainBox::new(State::scalar(-4.0), State::scalar(4.0)),
        }
    }

    /// p-system with `p(v) = k v^(-γ)` on `v ∈ [0.5, 2]`, `w ∈ [-2, 2]`.
    pub fn p_system(gamma: f64, k: f64) -> Result<Self> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(Error::BadParameter(format!("gamma must exceed 1, got {gamma}")));
        }
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::BadParameter(format!("k must be positive, got {k}")));
        }
        Ok(SystemModel {
            name: format!("p_system(gamma={gamma}, k={k})"),
            kind: ModelKind::PSystem(PSystem { gamma, k }),
            domain: DomainBox::new(State::pair(0.5, -2.0), State::pair(2.0, 2.0)),
        })
    }

    pub fn custom(name: impl Into<String>, flux: Arc<dyn Flux>, domain: DomainBox) -> Self {
        SystemModel { name: name.into(), kind: ModelKind::Custom(flux), domain }
    }

    pub fn with_domain(mut self, domain: DomainBox) -> Self {
        self.domain = domain;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn is_burgers(&self) -> bool {
        matches!(self.kind, ModelKind::Burgers(_))
    }

    fn flux_impl(&self) -> &dyn Flux {
        match &self.kind {
            ModelKind::Burgers(b) => b,
            ModelKind::PSystem(p) => p,
            ModelKind::Custom(c) => c.as_ref(),
        }
    }

    pub fn dim(&self) -> usize {
        self.flux_impl().dim()
    }

    pub fn flux(&self, u: &State) -> State {
        self.flux_impl().flux(u)
    }

    pub fn jacobian(&self, u: &State) -> Mat {
        self.flux_impl().jacobian(u)
    }

    pub fn domain_box(&self) -> &DomainBox {
        &self.domain
    }

    pub fn check_domain(&self, u: &State) -> Result<()> {
        if u.is_finite() && self.domain.contains(u) {
            Ok(())
        } else {
            Err(Error::OutOfDomain { state: u.as_slice().to_vec() })
        }
    }

    /// Sorted eigenvalues of the Jacobian, without eigenvectors.
    pub fn eigenvalues(&self, u: &State) -> Result<Vec<f64>> {
        let j = self.jacobian(u);
        match j.dim() {
            1 => Ok(vec![j.get(0, 0)]),
            _ => {
                let (l1, l2) = eig2(&j, u)?;
                Ok(vec![l1, l2])
            }
        }
    }

    /// `λ_i(u)` for a single family.
    pub fn lambda(&self, u: &State, family: usize) -> Result<f64> {
        if let ModelKind::Burgers(_) = self.kind {
            return Ok(u[0]);
        }
        Ok(self.eigenvalues(u)?[family - 1])
    }

    fn gradient(&self, u: &State, family: usize) -> Result<State> {
        if let Some(g) = self.flux_impl().eigenvalue_gradient(u, family) {
            return Ok(g);
        }
        let n = u.len();
        let mut g = State::zeros(n);
        for k in 0..n {
            let h = 1e-6 * (1.0 + u[k].abs());
            let mut up = *u;
            let mut dn = *u;
            up[k] += h;
            dn[k] -= h;
            g[k] = (self.eigenvalues(&up)?[family - 1] - self.eigenvalues(&dn)?[family - 1])
                / (2.0 * h);
        }
        Ok(g)
    }

    /// Unit right eigenvectors and left eigenvectors, before GNL scaling.
    fn raw_frame(&self, u: &State) -> Result<(Vec<f64>, Vec<State>, Vec<State>)> {
        let j = self.jacobian(u);
        if j.dim() == 1 {
            return Ok((vec![j.get(0, 0)], vec![State::scalar(1.0)], vec![State::scalar(1.0)]));
        }
        let (l1, l2) = eig2(&j, u)?;
        let (a, b, c, d) = (j.get(0, 0), j.get(0, 1), j.get(1, 0), j.get(1, 1));
        let mut rs = Vec::with_capacity(2);
        let mut ls = Vec::with_capacity(2);
        for lam in [l1, l2] {
            let r1 = State::pair(b, lam - a);
            let r2 = State::pair(lam - d, c);
            let r = if r1.norm() >= r2.norm() { r1 } else { r2 };
            let l1v = State::pair(c, lam - a);
            let l2v = State::pair(lam - d, b);
            let l = if l1v.norm() >= l2v.norm() { l1v } else { l2v };
            rs.push(r * (1.0 / r.norm()));
            ls.push(l * (1.0 / l.norm()));
        }
        Ok((vec![l1, l2], rs, ls))
    }

    /// Eigenvalues and eigenvectors normalized by `∇λ_i·r_i = 1`, `l_i·r_j = δ_ij`.
    pub fn eigen_frame(&self, u: &State) -> Result<EigenFrame> {
        self.check_domain(u)?;
        self.eigen_frame_unchecked(u)
    }

    /// As [`eigen_frame`](Self::eigen_frame) without the domain check.
    pub fn eigen_frame_unchecked(&self, u: &State) -> Result<EigenFrame> {
        let (lambdas, mut r, mut l) = self.raw_frame(u)?;
        for i in 0..lambdas.len() {
            let g = self.gradient(u, i + 1)?.dot(&r[i]);
            if g.abs() < 1e-12 {
                return Err(Error::GnlViolation {
                    family: i + 1,
                    state: u.as_slice().to_vec(),
                    value: g,
                });
            }
            r[i] = r[i] * (1.0 / g);
            let s = l[i].dot(&r[i]);
            l[i] = l[i] * (1.0 / s);
        }
        Ok(EigenFrame { lambdas, r, l })
    }

    /// Upper bound on `|λ_i|` over the admissible box.
    pub fn max_speed(&self) -> f64 {
        match &self.kind {
            ModelKind::Burgers(_) => self.domain.lower[0].abs().max(self.domain.upper[0].abs()),
            ModelKind::PSystem(p) => p.sound_speed(self.domain.lower[0]),
            ModelKind::Custom(_) => self
                .domain
                .sample_grid(400)
                .iter()
                .filter_map(|u| self.eigenvalues(u).ok())
                .flat_map(|ls| ls.into_iter().map(f64::abs))
                .fold(0.0, f64::max),
        }
    }

    /// Upper bound on `|r_i|` over the admissible box, from a sample grid.
    pub fn max_eigenvector_length(&self) -> f64 {
        match &self.kind {
            ModelKind::Burgers(_) => 1.0,
            _ => self
                .domain
                .sample_grid(400)
                .iter()
                .filter_map(|u| self.eigen_frame(u).ok())
                .flat_map(|f| f.r.into_iter().map(|r| r.norm()))
                .fold(0.0, f64::max),
        }
    }
}

fn eig2(j: &Mat, u: &State) -> Result<(f64, f64)> {
    let (a, b, c, d) = (j.get(0, 0), j.get(0, 1), j.get(1, 0), j.get(1, 1));
    let m = 0.5 * (a + d);
    let disc = 0.25 * (a - d) * (a - d) + b * c;
    let gap = 2.0 * disc.max(0.0).sqrt();
    if !(disc > 0.0) || gap < HYPERBOLICITY_GAP {
        return Err(Error::NonHyperbolic { state: u.as_slice().to_vec(), gap });
    }
    let s = disc.sqrt();
    Ok((m - s, m + s))
}

/// Builds a preset model. `p_system` requires `γ > 1` and `k > 0`.
pub fn preset_model(preset: Preset) -> Result<SystemModel> {
    match preset {
        Preset::Burgers => Ok(SystemModel::burgers()),
        Preset::PSystem { gamma, k } => SystemModel::p_system(gamma, k),
    }
}

/// Minimum of `|∇λ_i·r_i|` per family (unit `r_i`) over a grid of about
/// `samples` states in the model's box.
pub fn check_genuine_nonlinearity(model: &SystemModel, samples: usize) -> Result<GnlReport> {
    if samples == 0 {
        return Err(Error::BadParameter("samples must be at least 1".into()));
    }
    let n = model.dim();
    let mut mins = vec![f64::INFINITY; n];
    let mut min_gap = f64::INFINITY;
    for u in model.domain_box().sample_grid(samples) {
        let (lambdas, r, _) = model.raw_frame(&u)?;
        for w in lambdas.windows(2) {
            min_gap = min_gap.min(w[1] - w[0]);
        }
        for i in 0..n {
            let g = model.gradient(&u, i + 1)?.dot(&r[i]).abs();
            if g < 1e-8 {
                return Err(Error::GnlViolation {
                    family: i + 1,
                    state: u.as_slice().to_vec(),
                    value: g,
                });
            }
            mins[i] = mins[i].min(g);
        }
    }
    Ok(GnlReport { min_per_family: mins, min_gap })
}
