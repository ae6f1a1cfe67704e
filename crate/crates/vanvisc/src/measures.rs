//! Wave measures, rearrangements and the comparison with Burgers' equation.
//!
//! Measures here are finite sums of atoms plus a piecewise-constant density.
//! Every integral against them (sups over sets of given size, pair masses
//! `(μ⊗μ){|x−y| ≤ ρ}`) is evaluated exactly from that decomposition.

use crate::error::{Error, Result};
use crate::front_tracking::{FTRun, FrontConfiguration};
use crate::profile::PiecewiseConstant;
use crate::quad;
use crate::riemann::solve_riemann;
use crate::state::State;
use crate::system::SystemModel;
use std::collections::HashMap;
use std::fmt::Write as _;

/// Uniform density `z` on `[a, b)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityPiece {
    pub a: f64,
    pub b: f64,
    pub z: f64,
}

impl DensityPiece {
    pub fn mass(&self) -> f64 {
        self.z * (self.b - self.a)
    }
}

/// Signed measure of `i`-waves: atoms at strictly increasing positions plus a
/// density on disjoint sorted pieces.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveMeasure {
    pub family: usize,
    pub atoms: Vec<(f64, f64)>,
    pub density: Vec<DensityPiece>,
}

/// Sums overlapping pieces into disjoint sorted ones; zero pieces dropped.
fn normalize_density(pieces: &[DensityPiece]) -> Vec<DensityPiece> {
    let mut pts: Vec<f64> = pieces.iter().filter(|p| p.b > p.a && p.z != 0.0).flat_map(|p| [p.a, p.b]).collect();
    if pts.is_empty() {
        return Vec::new();
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut diff: Vec<f64> = vec![0.0; pts.len()];
    for p in pieces.iter().filter(|p| p.b > p.a && p.z != 0.0) {
        diff[pts.partition_point(|&x| x < p.a)] += p.z;
        diff[pts.partition_point(|&x| x < p.b)] -= p.z;
    }
    // Running sums leave roundoff where pieces cancel exactly.
    let floor = 1e-12 * pieces.iter().map(|p| p.z.abs()).fold(0.0, f64::max);
    let mut out: Vec<DensityPiece> = Vec::new();
    let mut z = 0.0;
    for k in 0..pts.len() - 1 {
        z += diff[k];
        if z.abs() > floor {
            match out.last_mut() {
                Some(last) if last.b == pts[k] && last.z == z => last.b = pts[k + 1],
                _ => out.push(DensityPiece { a: pts[k], b: pts[k + 1], z }),
            }
        }
    }
    out
}

fn normalize_atoms(atoms: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut a: Vec<(f64, f64)> = atoms.to_vec();
    a.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(a.len());
    for (x, m) in a {
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 += m,
            _ => out.push((x, m)),
        }
    }
    out.retain(|&(_, m)| m != 0.0);
    out
}

/// `∫_{a1}^{b1} |[a2,b2] ∩ [x−ρ, x+ρ]| dx`, the area of a rectangle inside
/// the band `|x−y| ≤ ρ`.
pub fn band_area(a1: f64, b1: f64, a2: f64, b2: f64, rho: f64) -> f64 {
    if b1 <= a1 || b2 <= a2 {
        return 0.0;
    }
    let f = |x: f64| (b2.min(x + rho) - a2.max(x - rho)).max(0.0);
    let mut cuts = vec![a1, b1];
    for c in [a2 - rho, b2 - rho, a2 + rho, b2 + rho] {
        if c > a1 && c < b1 {
            cuts.push(c);
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.windows(2).map(|w| 0.5 * (w[1] - w[0]) * (f(w[0]) + f(w[1]))).sum()
}

impl WaveMeasure {
    pub fn zero(family: usize) -> Self {
        WaveMeasure { family, atoms: Vec::new(), density: Vec::new() }
    }

    /// Builds a measure, merging atoms at equal positions and summing
    /// overlapping density pieces.
    pub fn new(family: usize, atoms: &[(f64, f64)], density: &[DensityPiece]) -> Self {
        WaveMeasure { family, atoms: normalize_atoms(atoms), density: normalize_density(density) }
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum::<f64>() + self.density.iter().map(DensityPiece::mass).sum::<f64>()
    }

    pub fn total_variation(&self) -> f64 {
        self.atoms.iter().map(|a| a.1.abs()).sum::<f64>()
            + self.density.iter().map(|p| p.mass().abs()).sum::<f64>()
    }

    pub fn singular_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    pub fn is_non_negative(&self) -> bool {
        self.atoms.iter().all(|a| a.1 >= 0.0) && self.density.iter().all(|p| p.z >= 0.0)
    }

    fn require_non_negative(&self) -> Result<()> {
        let worst = self
            .atoms
            .iter()
            .map(|a| a.1)
            .chain(self.density.iter().map(|p| p.z))
            .fold(0.0, f64::min);
        if worst < 0.0 {
            Err(Error::NegativeMass(worst))
        } else {
            Ok(())
        }
    }

    /// `sup { μ(A) : meas(A) ≤ s }` for a non-negative measure: every atom
    /// counts, then the densest pieces first.
    pub fn sup_mass(&self, s: f64) -> f64 {
        let mut pieces: Vec<&DensityPiece> = self.density.iter().collect();
        pieces.sort_by(|p, q| q.z.total_cmp(&p.z));
        let mut left = s.max(0.0);
        let mut total = self.singular_mass();
        for p in pieces {
            if left <= 0.0 {
                break;
            }
            let l = (p.b - p.a).min(left);
            total += p.z * l;
            left -= l;
        }
        total
    }

    /// `μ(-∞, x]` as a function of `x` for a density-only measure, via a
    /// sorted prefix table.
    fn density_cdf(&self) -> impl Fn(f64) -> f64 + '_ {
        let mut prefix = Vec::with_capacity(self.density.len() + 1);
        prefix.push(0.0);
        for p in &self.density {
            prefix.push(prefix.last().unwrap() + p.mass());
        }
        move |x: f64| {
            let k = self.density.partition_point(|p| p.b <= x);
            let mut v = prefix[k];
            if let Some(p) = self.density.get(k) {
                if x > p.a {
                    v += p.z * (x - p.a);
                }
            }
            v
        }
    }

    /// `(μ⊗μ)({(x,y) : |x−y| ≤ ρ})`, exactly.
    pub fn pair_mass(&self, rho: f64) -> f64 {
        let mut total = 0.0;
        for (j, &(x, m)) in self.atoms.iter().enumerate() {
            total += m * m;
            for &(y, n) in &self.atoms[j + 1..] {
                if y - x > rho {
                    break;
                }
                total += 2.0 * m * n;
            }
        }
        let cdf = self.density_cdf();
        for &(x, m) in &self.atoms {
            total += 2.0 * m * (cdf(x + rho) - cdf(x - rho));
        }
        let d = &self.density;
        for j in 0..d.len() {
            total += d[j].z * d[j].z * band_area(d[j].a, d[j].b, d[j].a, d[j].b, rho);
            for k in j + 1..d.len() {
                if d[k].a - d[j].b > rho {
                    break;
                }
                total += 2.0 * d[j].z * d[k].z * band_area(d[j].a, d[j].b, d[k].a, d[k].b, rho);
            }
        }
        total
    }

    /// The non-decreasing function `v` with `D_x v = μ` and `v(−∞) = v_left`.
    pub fn to_profile(&self, v_left: f64) -> Result<MonotoneProfile> {
        self.require_non_negative()?;
        let mut pts: Vec<f64> = self.atoms.iter().map(|a| a.0).collect();
        pts.extend(self.density.iter().flat_map(|p| [p.a, p.b]));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        if pts.is_empty() {
            return Ok(MonotoneProfile { vertices: vec![(0.0, v_left)] });
        }
        let atom_at: HashMap<u64, f64> = self.atoms.iter().map(|&(x, m)| (x.to_bits(), m)).collect();
        let mut verts = Vec::with_capacity(2 * pts.len());
        let mut v = v_left;
        let mut piece = 0;
        for (k, &p) in pts.iter().enumerate() {
            verts.push((p, v));
            if let Some(m) = atom_at.get(&p.to_bits()) {
                v += m;
                verts.push((p, v));
            }
            if let Some(&q) = pts.get(k + 1) {
                while piece < self.density.len() && self.density[piece].b <= p {
                    piece += 1;
                }
                if let Some(d) = self.density.get(piece) {
                    if d.a <= p && q <= d.b {
                        v += d.z * (q - p);
                    }
                }
            }
        }
        verts.dedup();
        Ok(MonotoneProfile { vertices: verts })
    }

    /// Positive and negative parts.
    pub fn pos_neg_parts(&self) -> (WaveMeasure, WaveMeasure) {
        pos_neg_parts(self)
    }

    /// CSV `kind,a,b,value` with one row per atom (`a = b`) and density piece.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,a,b,value\n");
        for &(x, m) in &self.atoms {
            let _ = writeln!(out, "atom,{x},{x},{m}");
        }
        for p in &self.density {
            let _ = writeln!(out, "density,{},{},{}", p.a, p.b, p.z);
        }
        out
    }
}

/// `μ = μ⁺ − μ⁻` with both parts non-negative.
pub fn pos_neg_parts(m: &WaveMeasure) -> (WaveMeasure, WaveMeasure) {
    let split = |sign: f64| WaveMeasure {
        family: m.family,
        atoms: m.atoms.iter().filter(|a| a.1 * sign > 0.0).map(|&(x, v)| (x, v * sign)).collect(),
        density: m
            .density
            .iter()
            .filter(|p| p.z * sign > 0.0)
            .map(|p| DensityPiece { z: p.z * sign, ..*p })
            .collect(),
    };
    (split(1.0), split(-1.0))
}

/// Atoms at the jumps of `u`, with masses the `i`-strengths of the local
/// Riemann problems.
pub fn wave_measure(model: &SystemModel, u: &PiecewiseConstant, family: usize) -> Result<WaveMeasure> {
    let mut atoms = Vec::new();
    for (x, ul, ur) in u.jumps() {
        if (ur - ul).max_abs() == 0.0 {
            continue;
        }
        let fan = solve_riemann(model, &ul, &ur)?;
        atoms.push((x, fan.strengths[family - 1]));
    }
    Ok(WaveMeasure::new(family, &atoms, &[]))
}

/// Density branch for grid data: `l_i(ū)·(u_{k+1} − u_k)/Δx` on each cell
/// `[x_k, x_{k+1})`, with `ū` the cell midpoint average.
pub fn wave_measure_grid(model: &SystemModel, xs: &[f64], us: &[State], family: usize) -> Result<WaveMeasure> {
    if xs.len() != us.len() {
        return Err(Error::Config("grid and values differ in length".into()));
    }
    let mut pieces = Vec::with_capacity(xs.len());
    for k in 0..xs.len().saturating_sub(1) {
        let dx = xs[k + 1] - xs[k];
        if dx <= 0.0 {
            continue;
        }
        let mid = (us[k] + us[k + 1]) * 0.5;
        let l = model.eigen_frame_unchecked(&mid)?.left(family);
        pieces.push(DensityPiece { a: xs[k], b: xs[k + 1], z: l.dot(&(us[k + 1] - us[k])) / dx });
    }
    Ok(WaveMeasure::new(family, &[], &pieces))
}

/// Atoms read directly from the physical fronts of one family.
pub fn wave_measure_of_config(config: &FrontConfiguration, family: usize) -> WaveMeasure {
    let atoms: Vec<(f64, f64)> =
        config.fronts.iter().filter(|f| f.is_physical() && f.family == family).map(|f| (f.position, f.strength)).collect();
    WaveMeasure::new(family, &atoms, &[])
}

/// A bounded non-decreasing function stored as the vertices of its graph,
/// joined by straight segments; a vertical segment is a jump. Constant
/// outside the first and last vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneProfile {
    pub vertices: Vec<(f64, f64)>,
}

impl MonotoneProfile {
    pub fn from_vertices(vertices: Vec<(f64, f64)>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::NotMonotone("empty profile".into()));
        }
        if vertices.windows(2).any(|w| w[1].0 < w[0].0 || w[1].1 < w[0].1) {
            return Err(Error::NotMonotone("vertices must be non-decreasing in both coordinates".into()));
        }
        Ok(MonotoneProfile { vertices })
    }

    /// Right-continuous value at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let v = &self.vertices;
        let k = v.partition_point(|p| p.0 <= x);
        if k == 0 {
            return v[0].1;
        }
        if k == v.len() {
            return v[k - 1].1;
        }
        let (x0, w0) = v[k - 1];
        let (x1, w1) = v[k];
        w0 + (w1 - w0) * (x - x0) / (x1 - x0)
    }

    pub fn left_limit(&self) -> f64 {
        self.vertices[0].1
    }

    pub fn right_limit(&self) -> f64 {
        self.vertices.last().unwrap().1
    }

    pub fn total_mass(&self) -> f64 {
        self.right_limit() - self.left_limit()
    }

    pub fn singular_mass(&self) -> f64 {
        self.vertices.windows(2).filter(|w| w[1].0 == w[0].0).map(|w| w[1].1 - w[0].1).sum()
    }

    /// `D_x v` as a measure.
    pub fn derivative(&self, family: usize) -> WaveMeasure {
        let mut atoms = Vec::new();
        let mut pieces = Vec::new();
        for w in self.vertices.windows(2) {
            let (x0, v0) = w[0];
            let (x1, v1) = w[1];
            if x1 == x0 {
                atoms.push((x0, v1 - v0));
            } else if v1 > v0 {
                pieces.push(DensityPiece { a: x0, b: x1, z: (v1 - v0) / (x1 - x0) });
            }
        }
        WaveMeasure::new(family, &atoms, &pieces)
    }

    /// Moves every graph point by `x ↦ x + dt·v`: the exact Burgers
    /// evolution of non-decreasing data (jumps open into centred fans).
    pub fn burgers_advance(&self, dt: f64) -> MonotoneProfile {
        let mut v: Vec<(f64, f64)> = self.vertices.iter().map(|&(x, w)| (x + dt * w, w)).collect();
        for k in 1..v.len() {
            if v[k].0 < v[k - 1].0 {
                v[k].0 = v[k - 1].0;
            }
        }
        MonotoneProfile { vertices: v }
    }

    /// Adds `c·sgn(x)`; the point `x = 0` becomes a jump from `w(0)−c` to
    /// `w(0)+c`.
    pub fn add_odd_step(&self, c: f64) -> MonotoneProfile {
        let mut out = Vec::with_capacity(self.vertices.len() + 2);
        let mut split = false;
        let v = &self.vertices;
        for (k, &(x, w)) in v.iter().enumerate() {
            if !split && k > 0 && v[k - 1].0 < 0.0 && x > 0.0 {
                let (x0, w0) = v[k - 1];
                let wz = w0 + (w - w0) * (0.0 - x0) / (x - x0);
                out.push((0.0, wz - c));
                out.push((0.0, wz + c));
                split = true;
            }
            if x < 0.0 || (x == 0.0 && w < 0.0) {
                out.push((x, w - c));
            } else if x > 0.0 || w > 0.0 {
                if !split && x > 0.0 {
                    // Every vertex so far lies strictly left of the origin.
                    let w0 = if k == 0 { w } else { out.last().map(|p| p.1 + c).unwrap_or(w) };
                    out.push((0.0, w0 - c));
                    out.push((0.0, w0 + c));
                    split = true;
                }
                if x == 0.0 && !split {
                    out.push((0.0, w.min(0.0) - c));
                    split = true;
                }
                out.push((x, w + c));
            } else {
                out.push((0.0, -c));
                out.push((0.0, c));
                split = true;
            }
        }
        if !split {
            let w = v.last().unwrap().1;
            out.push((0.0, w - c));
            out.push((0.0, w + c));
        }
        out.dedup();
        MonotoneProfile { vertices: out }
    }

    /// CSV `x,v` of the vertices.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,v\n");
        for (x, v) in &self.vertices {
            let _ = writeln!(out, "{x},{v}");
        }
        out
    }
}

/// The odd rearrangement `v̂`: odd, with `v̂(0+) = ½·(singular mass)` and
/// slope on `x > 0` given by the symmetric decreasing rearrangement of `v_x`.
pub fn odd_rearrangement(v: &MonotoneProfile) -> Result<MonotoneProfile> {
    MonotoneProfile::from_vertices(v.vertices.clone())?;
    let mu = v.derivative(0);
    Ok(odd_rearrangement_of_measure(&mu))
}

/// Odd rearrangement of a non-negative measure; equal to
/// `sgn(x)·sup_{meas(A) ≤ 2|x|} μ(A)/2`.
pub fn odd_rearrangement_of_measure(mu: &WaveMeasure) -> MonotoneProfile {
    let mut pieces: Vec<DensityPiece> = mu.density.iter().copied().filter(|p| p.z > 0.0).collect();
    pieces.sort_by(|p, q| q.z.total_cmp(&p.z));
    let half_sing = 0.5 * mu.singular_mass();
    let mut right = vec![(0.0, half_sing)];
    let (mut x, mut w) = (0.0, half_sing);
    for p in pieces {
        x += 0.5 * (p.b - p.a);
        w += 0.5 * p.mass();
        right.push((x, w));
    }
    let mut verts: Vec<(f64, f64)> = right.iter().rev().map(|&(x, w)| (-x, -w)).collect();
    verts.extend(right);
    verts.dedup();
    MonotoneProfile { vertices: verts }
}

/// `sgn(x)·sup_{meas(A) ≤ 2|x|} μ(A)/2` evaluated straight from the sup.
pub fn rearranged_value(mu: &WaveMeasure, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    x.signum() * 0.5 * mu.sup_mass(2.0 * x.abs())
}

/// Relative slack used by [`order_leq`].
pub const ORDER_TOL: f64 = 1e-10;

/// `μ ⪯ μ′`: `sup_{meas A ≤ s} μ(A) ≤ sup_{meas B ≤ s} μ′(B)` for all `s > 0`.
///
/// Both sides are concave piecewise-linear in `s`, so it suffices to compare
/// at `s → 0+` and at every breakpoint of either side.
pub fn order_leq(mu: &WaveMeasure, mu_prime: &WaveMeasure) -> Result<bool> {
    Ok(order_margin(mu, mu_prime)? <= ORDER_TOL * (1.0 + mu.total_mass().max(mu_prime.total_mass())))
}

/// Largest excess `sup μ − sup μ′` over all set sizes; `≤ 0` means `μ ⪯ μ′`.
pub fn order_margin(mu: &WaveMeasure, mu_prime: &WaveMeasure) -> Result<f64> {
    mu.require_non_negative()?;
    mu_prime.require_non_negative()?;
    let lengths = |m: &WaveMeasure| {
        let mut p: Vec<&DensityPiece> = m.density.iter().collect();
        p.sort_by(|a, b| b.z.total_cmp(&a.z));
        let mut acc = 0.0;
        p.iter()
            .map(|q| {
                acc += q.b - q.a;
                acc
            })
            .collect::<Vec<f64>>()
    };
    let mut ss = lengths(mu);
    ss.extend(lengths(mu_prime));
    let mut worst = mu.singular_mass() - mu_prime.singular_mass();
    for s in ss {
        worst = worst.max(mu.sup_mass(s) - mu_prime.sup_mass(s));
    }
    Ok(worst.max(mu.total_mass() - mu_prime.total_mass()))
}

/// The solution `w` of Burgers' equation with the impulsive source
/// `−κ sgn(x) dQ/dt`, started from the odd rearrangement of `μ₀⁺`.
#[derive(Clone, Debug)]
pub struct ComparisonSolution {
    pub kappa: f64,
    pub q_history: Vec<(f64, f64)>,
    pub initial: MonotoneProfile,
    impulses: Vec<(f64, f64)>,
}

/// Tolerance on increases of `Q` treated as roundoff.
const Q_ROUNDOFF: f64 = 1e-12;

pub fn burgers_comparison(mu0_plus: &WaveMeasure, q_history: &[(f64, f64)], kappa: f64) -> Result<ComparisonSolution> {
    mu0_plus.require_non_negative()?;
    if !(kappa > 0.0) {
        return Err(Error::BadParameter("kappa must be positive".into()));
    }
    let mut impulses = Vec::new();
    for w in q_history.windows(2) {
        let (t, q) = w[1];
        let drop = w[0].1 - q;
        if drop < -Q_ROUNDOFF * (1.0 + q.abs()) || w[1].0 < w[0].0 {
            return Err(Error::NonMonotoneHistory { t });
        }
        if drop > 0.0 {
            impulses.push((t, kappa * drop));
        }
    }
    Ok(ComparisonSolution {
        kappa,
        q_history: q_history.to_vec(),
        initial: odd_rearrangement_of_measure(mu0_plus),
        impulses,
    })
}

impl ComparisonSolution {
    /// `w(t, ·)`, right-continuous in `t` at impulse times.
    pub fn profile_at(&self, t: f64) -> MonotoneProfile {
        let mut w = self.initial.clone();
        let mut now = 0.0;
        for &(tk, c) in &self.impulses {
            if tk > t {
                break;
            }
            w = w.burgers_advance(tk - now).add_odd_step(c);
            now = tk;
        }
        w.burgers_advance(t - now)
    }

    /// `w(t, +∞)`.
    pub fn total_height(&self, t: f64) -> f64 {
        self.initial.right_limit() + self.impulses.iter().filter(|i| i.0 <= t).map(|i| i.1).sum::<f64>()
    }

    pub fn impulse_times(&self) -> Vec<f64> {
        self.impulses.iter().map(|i| i.0).collect()
    }

    /// `∫_0^τ ∫ [w(t,x+ρ) − w(t,x−ρ)] w_x(t,x) dx dt`.
    pub fn pair_integral(&self, tau: f64, rho: f64) -> f64 {
        let mut cuts = vec![0.0];
        cuts.extend(self.impulses.iter().map(|i| i.0).filter(|&t| t > 0.0 && t < tau));
        cuts.push(tau);
        let scale = self.total_height(tau).powi(2).max(1e-300);
        cuts.windows(2)
            .map(|w| quad::integrate(|t| self.profile_at(t).derivative(0).pair_mass(rho), w[0], w[1], 1e-11 * scale))
            .sum()
    }
}

/// `v(t,x) = x/t` on `|x| ≤ σ̄t`, `sgn(x)·σ̄` outside: one centred
/// rarefaction of strength `2σ̄`.
pub fn single_rarefaction_reference(sigma_bar: f64, t: f64) -> Result<MonotoneProfile> {
    if !(sigma_bar > 0.0 && t > 0.0) {
        return Err(Error::BadParameter("need sigma_bar > 0 and t > 0".into()));
    }
    Ok(MonotoneProfile { vertices: vec![(-sigma_bar * t, -sigma_bar), (sigma_bar * t, sigma_bar)] })
}

/// `∫_0^τ ∫ [v(t,x+ρ) − v(t,x−ρ)] v_x dx dt` for the single rarefaction, in
/// closed form.
pub fn single_rarefaction_pair_integral(sigma_bar: f64, tau: f64, rho: f64) -> f64 {
    // Below t* the fan is narrower than ρ and the pair mass is (2σ̄)²; after
    // it equals (4σ̄ρt − ρ²)/t².
    let t_star = rho / (2.0 * sigma_bar);
    if tau <= t_star {
        return 4.0 * sigma_bar * sigma_bar * tau;
    }
    4.0 * sigma_bar * sigma_bar * t_star + 4.0 * sigma_bar * rho * (tau / t_star).ln() - rho * rho * (1.0 / t_star - 1.0 / tau)
}

/// Both sides of the rearrangement inequality for a non-decreasing `u`:
/// `(D u ⊗ D u){|x−y| ≤ ρ}` and three times the same for `û`.
pub fn lemma1_sides(u: &MonotoneProfile, rho: f64) -> Result<(f64, f64)> {
    let hat = odd_rearrangement(u)?;
    Ok((u.derivative(0).pair_mass(rho), 3.0 * hat.derivative(0).pair_mass(rho)))
}

/// Both sides of the monotonicity of the pair mass under `⪯`, for
/// `D_x v ⪯ D_x w`.
pub fn lemma2_sides(v: &MonotoneProfile, w: &MonotoneProfile, rho: f64) -> Result<(f64, f64)> {
    let (dv, dw) = (v.derivative(0), w.derivative(0));
    if !order_leq(&dv, &dw)? {
        return Err(Error::BadParameter("the pair-mass comparison needs D_x v ⪯ D_x w".into()));
    }
    let (hv, hw) = (odd_rearrangement(v)?, odd_rearrangement(w)?);
    Ok((hv.derivative(0).pair_mass(rho), hw.derivative(0).pair_mass(rho)))
}

/// `σ̄ = ½μ₀⁺(ℝ) + κ[Q(0) − Q(τ)]`.
pub fn comparison_sigma_bar(cs: &ComparisonSolution, tau: f64) -> f64 {
    cs.total_height(tau)
}

/// Both sides of the comparison between `w` and the single rarefaction of
/// strength `2σ̄`: `(I_w, 2·I_v)`.
pub fn lemma3_sides(cs: &ComparisonSolution, tau: f64, rho: f64) -> (f64, f64) {
    let sb = comparison_sigma_bar(cs, tau);
    let iv = if sb > 0.0 { single_rarefaction_pair_integral(sb, tau, rho) } else { 0.0 };
    (cs.pair_integral(tau, rho), 2.0 * iv)
}

/// Birth time of every front id appearing in `run`.
fn birth_times(run: &FTRun) -> HashMap<u64, f64> {
    let mut birth = HashMap::new();
    for f in &run.configs[0].fronts {
        birth.insert(f.id, run.configs[0].time);
    }
    for e in &run.events {
        for f in &e.outgoing {
            birth.entry(f.id).or_insert(e.time);
        }
    }
    birth
}

/// Positive `i`-waves of the run at time `t`, each rarefaction step of
/// strength `σ` born at `t_b` spread uniformly over `[x − σ(t−t_b), x]`, the
/// width its fan would have in the exact solution.
pub fn smeared_positive_measure(run: &FTRun, t: f64, family: usize) -> Result<WaveMeasure> {
    let birth = birth_times(run);
    let cfg = run.config_at(t)?;
    let mut atoms = Vec::new();
    let mut pieces = Vec::new();
    for f in cfg.fronts.iter().filter(|f| f.is_physical() && f.family == family && f.strength > 0.0) {
        let age = t - birth.get(&f.id).copied().unwrap_or(t);
        let len = f.strength * age;
        if len > 0.0 {
            pieces.push(DensityPiece { a: f.position - len, b: f.position, z: 1.0 / age });
        } else {
            atoms.push((f.position, f.strength));
        }
    }
    Ok(WaveMeasure::new(family, &atoms, &pieces))
}

/// Builds the comparison solution of a front-tracking run for one family.
pub fn comparison_for_run(run: &FTRun, family: usize, kappa: f64) -> Result<ComparisonSolution> {
    let (mu0_plus, _) = wave_measure_of_config(run.initial(), family).pos_neg_parts();
    let q: Vec<(f64, f64)> = run.glimm_history.iter().map(|g| (g.t, g.q)).collect();
    burgers_comparison(&mu0_plus, &q, kappa)
}

/// Largest excess of the positive waves over `D_x w(t)` (see
/// [`order_margin`]) across the sample `times`; `≤ 0` means the comparison
/// holds everywhere.
pub fn comparison_margin(run: &FTRun, family: usize, kappa: f64, times: &[f64]) -> Result<f64> {
    let cs = comparison_for_run(run, family, kappa)?;
    let mut worst = f64::NEG_INFINITY;
    for &t in times {
        let mu = smeared_positive_measure(run, t, family)?;
        let dw = cs.profile_at(t).derivative(family);
        let scale = 1.0 + mu.total_mass().max(dw.total_mass());
        worst = worst.max(order_margin(&mu, &dw)? / scale);
    }
    Ok(worst)
}

/// Which fronts enter the pair interaction integral.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairMode {
    /// Rarefaction steps, paired within a family.
    RarefactionsOnly,
    /// Every front, paired regardless of family.
    AllFronts,
}

/// `∫_0^τ Σ_{|x_α−x_β| ≤ δ} |σ_α σ_β| dt` over ordered pairs (including
/// `α = β`), integrated exactly: gaps are linear in `t` between events.
pub fn pair_interaction_integral(run: &FTRun, delta: f64, tau: f64, mode: PairMode) -> f64 {
    let tau = tau.min(run.tau);
    let mut total = 0.0;
    for (k, cfg) in run.configs.iter().enumerate() {
        let t0 = cfg.time;
        let t1 = run.configs.get(k + 1).map(|c| c.time).unwrap_or(t0).min(tau);
        if t1 <= t0 {
            continue;
        }
        let dt = t1 - t0;
        let fronts: Vec<_> = cfg
            .fronts
            .iter()
            .filter(|f| match mode {
                PairMode::RarefactionsOnly => f.is_rarefaction(),
                PairMode::AllFronts => true,
            })
            .collect();
        for (a, fa) in fronts.iter().enumerate() {
            total += fa.strength * fa.strength * dt;
            for fb in &fronts[a + 1..] {
                let g0 = fb.position - fa.position;
                let dg = fb.speed - fa.speed;
                let g1 = g0 + dg * dt;
                if g0.min(g1) > delta {
                    break;
                }
                if mode == PairMode::RarefactionsOnly && fa.family != fb.family {
                    continue;
                }
                // Time measure of {s ∈ [0, dt] : g0 + dg·s ≤ δ}; the gap stays
                // non-negative between events.
                let within = if dg.abs() < 1e-300 {
                    if g0 <= delta { dt } else { 0.0 }
                } else {
                    let s = (delta - g0) / dg;
                    if dg > 0.0 { s.clamp(0.0, dt) } else { dt - s.clamp(0.0, dt) }
                };
                total += 2.0 * (fa.strength * fb.strength).abs() * within;
            }
        }
    }
    total
}

/// `2K²δσ(1 + ln(στ/2δ))`, the bound for one centred rarefaction.
pub fn single_rarefaction_bound(k: f64, delta: f64, sigma: f64, tau: f64) -> f64 {
    2.0 * k * k * delta * sigma * (1.0 + (sigma * tau / (2.0 * delta)).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::front_tracking::{track, TrackingParams};

    fn step(x: f64, h: f64) -> WaveMeasure {
        WaveMeasure::new(1, &[(x, h)], &[])
    }

    #[test]
    fn burgers_wave_measures() {
        let m = SystemModel::burgers();
        let up = PiecewiseConstant::from_jumps(State::scalar(0.0), &[(0.0, State::scalar(1.0))]).unwrap();
        assert_eq!(wave_measure(&m, &up, 1).unwrap().atoms, vec![(0.0, 1.0)]);
        let down = PiecewiseConstant::from_jumps(State::scalar(1.0), &[(0.0, State::scalar(0.0))]).unwrap();
        assert_eq!(wave_measure(&m, &down, 1).unwrap().atoms, vec![(0.0, -1.0)]);
    }

    #[test]
    fn p_system_wave_measures() {
        let m = SystemModel::p_system(2.0, 1.0).unwrap();
        let (a, b) = (State::pair(1.0, 0.0), State::pair(1.2, 0.1));
        let u = PiecewiseConstant::from_jumps(a, &[(0.3, b)]).unwrap();
        let fan = solve_riemann(&m, &a, &b).unwrap();
        for i in 1..=2 {
            let mu = wave_measure(&m, &u, i).unwrap();
            assert_eq!(mu.atoms, vec![(0.3, fan.strengths[i - 1])]);
        }
    }

    #[test]
    fn sign_split() {
        let mu = WaveMeasure::new(1, &[(0.0, 1.0), (1.0, -0.5)], &[]);
        let (p, n) = pos_neg_parts(&mu);
        assert_eq!(p.atoms, vec![(0.0, 1.0)]);
        assert_eq!(n.atoms, vec![(1.0, 0.5)]);
        let (_, n) = pos_neg_parts(&step(0.0, 2.0));
        assert_eq!(n.total_variation(), 0.0);
        let mixed = WaveMeasure::new(1, &[(0.0, 1.0), (1.0, -2.0), (2.0, 3.0), (3.0, -4.0)], &[]);
        let (p, n) = pos_neg_parts(&mixed);
        assert_eq!(p.atoms, vec![(0.0, 1.0), (2.0, 3.0)]);
        assert_eq!(n.atoms, vec![(1.0, 2.0), (3.0, 4.0)]);
    }

    #[test]
    fn rearrangement_examples() {
        let h = odd_rearrangement(&step(3.0, 1.0).to_profile(0.0).unwrap()).unwrap();
        for x in [-5.0, -0.1, 0.1, 7.0] {
            assert_eq!(h.eval(x), 0.5 * f64::signum(x));
        }
        let flat = WaveMeasure::new(1, &[], &[DensityPiece { a: 0.0, b: 1.0, z: 1.0 }]);
        let h = odd_rearrangement(&flat.to_profile(0.0).unwrap()).unwrap();
        for x in [-0.7, -0.25, 0.0, 0.3, 0.5, 2.0] {
            assert!((h.eval(x) - x.clamp(-0.5, 0.5)).abs() < 1e-15);
        }
        // Atom 1 at 0 and density 1 on [2,3]: sup over |A| ≤ s is 1 + min(s,1).
        let mixed = WaveMeasure::new(1, &[(0.0, 1.0)], &[DensityPiece { a: 2.0, b: 3.0, z: 1.0 }]);
        let h = odd_rearrangement(&mixed.to_profile(0.0).unwrap()).unwrap();
        for x in [0.01, 0.2, 0.5, 0.9, 3.0] {
            let oracle = 0.5 * (1.0 + f64::min(2.0 * x, 1.0));
            assert!((h.eval(x) - oracle).abs() < 1e-15);
        }
    }

    #[test]
    fn order_examples() {
        let atom = step(0.0, 1.0);
        let flat = WaveMeasure::new(1, &[], &[DensityPiece { a: 0.0, b: 1.0, z: 1.0 }]);
        assert!(order_leq(&atom, &atom).unwrap());
        assert!(order_leq(&flat, &atom).unwrap());
        assert!(!order_leq(&atom, &flat).unwrap());
        assert!(matches!(order_leq(&step(0.0, -1.0), &atom), Err(Error::NegativeMass(_))));
    }

    #[test]
    fn band_area_oracle() {
        // Monte-Carlo-free oracle: midpoint rule on a fine grid.
        let (a1, b1, a2, b2, rho) = (0.0, 1.3, 0.4, 2.1, 0.35);
        let n = 4000;
        let mut acc = 0.0;
        for i in 0..n {
            let x = a1 + (b1 - a1) * (i as f64 + 0.5) / n as f64;
            for j in 0..n {
                let y = a2 + (b2 - a2) * (j as f64 + 0.5) / n as f64;
                if (x - y).abs() <= rho {
                    acc += 1.0;
                }
            }
        }
        let grid = acc * (b1 - a1) * (b2 - a2) / (n * n) as f64;
        assert!((band_area(a1, b1, a2, b2, rho) - grid).abs() < 1e-3);
    }

    #[test]
    fn comparison_fan_from_unit_atom() {
        let cs = burgers_comparison(&step(0.0, 1.0), &[(0.0, 0.0)], 10.0).unwrap();
        let w = cs.profile_at(1.0);
        for x in [-2.0, -0.5, -0.2, 0.0, 0.3, 0.5, 1.0] {
            assert!((w.eval(x) - x.clamp(-0.5, 0.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn comparison_pure_impulse() {
        let (kappa, d, t1) = (2.0, 0.25, 0.5);
        let cs = burgers_comparison(&WaveMeasure::zero(1), &[(0.0, 1.0), (t1, 1.0 - d)], kappa).unwrap();
        assert_eq!(cs.profile_at(0.4).total_mass(), 0.0);
        let h = kappa * d;
        let at = cs.profile_at(t1);
        assert_eq!(at.eval(-1e-9), -h);
        assert_eq!(at.eval(0.0), h);
        let later = cs.profile_at(t1 + 1.0);
        for x in [-2.0, -0.3, 0.1, 0.5, 0.6] {
            assert!((later.eval(x) - x.clamp(-h, h)).abs() < 1e-15);
        }
        assert!(matches!(
            burgers_comparison(&WaveMeasure::zero(1), &[(0.0, 1.0), (1.0, 2.0)], 1.0),
            Err(Error::NonMonotoneHistory { .. })
        ));
    }

    /// Lax–Oleinik formula by direct minimisation of
    /// `W0(y) + (x−y)²/2t` over a grid, refined by golden-section search.
    fn hopf_lax(w0: &MonotoneProfile, t: f64, x: f64) -> f64 {
        let lo = w0.vertices[0].0 - 10.0;
        let hi = w0.vertices.last().unwrap().0 + 10.0;
        // Exact primitive of the piecewise-linear w0 by trapezoids.
        let prim = |y: f64| -> f64 {
            let n = 64;
            let mut s = 0.0;
            let mut pts = vec![lo];
            pts.extend(w0.vertices.iter().map(|v| v.0).filter(|&v| v > lo && v < y));
            pts.push(y);
            for p in pts.windows(2) {
                let h = (p[1] - p[0]) / n as f64;
                for k in 0..n {
                    let a = p[0] + h * k as f64;
                    s += 0.5 * h * (w0.eval(a + 1e-15 * h) + w0.eval(a + h - 1e-15 * h));
                }
            }
            s
        };
        let cost = |y: f64| prim(y) + (x - y) * (x - y) / (2.0 * t);
        let n = 2000;
        let mut best = (f64::INFINITY, lo);
        for k in 0..=n {
            let y = lo + (hi - lo) * k as f64 / n as f64;
            let c = cost(y);
            if c < best.0 {
                best = (c, y);
            }
        }
        let h = (hi - lo) / n as f64;
        let (mut a, mut b) = (best.1 - h, best.1 + h);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if cost(c) < cost(d) {
                b = d;
            } else {
                a = c;
            }
        }
        (x - 0.5 * (a + b)) / t
    }

    #[test]
    fn comparison_matches_lax_oleinik() {
        let mu = WaveMeasure::new(
            1,
            &[(0.5, 0.4)],
            &[DensityPiece { a: -1.0, b: 0.0, z: 0.3 }, DensityPiece { a: 1.0, b: 1.5, z: 1.2 }],
        );
        let cs = burgers_comparison(&mu, &[(0.0, 0.0)], 10.0).unwrap();
        let w = cs.profile_at(0.5);
        for x in [-1.0, -0.4, -0.1, 0.05, 0.2, 0.45, 0.9] {
            let oracle = hopf_lax(&cs.initial, 0.5, x);
            assert!((w.eval(x) - oracle).abs() < 1e-6, "x={x}: {} vs {oracle}", w.eval(x));
        }
    }

    #[test]
    fn single_rarefaction_values() {
        let v = single_rarefaction_reference(1.0, 1.0).unwrap();
        assert_eq!(v.eval(0.5), 0.5);
        assert_eq!(v.eval(2.0), 1.0);
        assert_eq!(single_rarefaction_reference(0.3, 2.0).unwrap().eval(-1.0), -0.3);
    }

    #[test]
    fn closed_form_rarefaction_integral() {
        let (sb, tau, rho) = (0.4, 3.0, 0.1);
        let numeric = quad::integrate(
            |t| single_rarefaction_reference(sb, t).unwrap().derivative(0).pair_mass(rho),
            1e-12,
            tau,
            1e-12,
        );
        assert!((single_rarefaction_pair_integral(sb, tau, rho) - numeric).abs() < 1e-9);
    }

    fn burgers_run(left: f64, jumps: &[(f64, f64)], tau: f64, cap: f64) -> FTRun {
        let j: Vec<(f64, State)> = jumps.iter().map(|&(x, u)| (x, State::scalar(u))).collect();
        let data = PiecewiseConstant::from_jumps(State::scalar(left), &j).unwrap();
        let p = TrackingParams { rarefaction_cap: cap, ..TrackingParams::default() };
        track(&SystemModel::burgers(), &data, tau, &p).unwrap()
    }

    #[test]
    fn pair_integral_examples() {
        let shock = burgers_run(1.0, &[(0.0, 0.0)], 1.0, 0.1);
        assert_eq!(pair_interaction_integral(&shock, 0.1, 1.0, PairMode::RarefactionsOnly), 0.0);
        // Two unit-speed-apart steps far from each other: only the diagonal.
        let steps = burgers_run(0.0, &[(0.0, 0.1), (5.0, 0.2)], 1.0, 0.1);
        let diag = 2.0 * 0.1 * 0.1;
        let v = pair_interaction_integral(&steps, 0.5, 1.0, PairMode::RarefactionsOnly);
        assert!((v - diag).abs() < 1e-15);
    }

    #[test]
    fn pair_integral_of_centred_rarefaction() {
        let (sigma, tau, delta) = (0.5, 4.0, 0.05);
        let run = burgers_run(0.0, &[(0.0, sigma)], tau, 1e-3);
        let v = pair_interaction_integral(&run, delta, tau, PairMode::RarefactionsOnly);
        assert!(v <= single_rarefaction_bound(1.0, delta, sigma, tau));
    }

    #[test]
    fn smeared_fan_matches_comparison() {
        let run = burgers_run(0.0, &[(0.0, 0.5)], 2.0, 0.01);
        let margin = comparison_margin(&run, 1, 10.0, &[0.5, 1.0, 2.0]).unwrap();
        assert!(margin <= 1e-9, "{margin}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn random_measure() -> impl Strategy<Value = WaveMeasure> {
            (
                prop::collection::vec((-3.0f64..3.0, 0.0f64..1.0), 0..4),
                prop::collection::vec((-3.0f64..3.0, 0.01f64..1.5, 0.0f64..2.0), 1..5),
            )
                .prop_map(|(atoms, dens)| {
                    let pieces: Vec<DensityPiece> =
                        dens.iter().map(|&(a, l, z)| DensityPiece { a, b: a + l, z }).collect();
                    WaveMeasure::new(1, &atoms, &pieces)
                })
        }

        /// `sup μ(A)` over `|A| ≤ s` by sorting the values of the density on
        /// a fine grid: an independent discretisation of the sup.
        fn grid_sup(mu: &WaveMeasure, s: f64) -> f64 {
            let h = 1e-4;
            let mut vals = Vec::new();
            let mut x = -4.0;
            while x < 6.0 {
                let m = x + 0.5 * h;
                vals.push(mu.density.iter().filter(|p| p.a <= m && m < p.b).map(|p| p.z).sum::<f64>());
                x += h;
            }
            vals.sort_by(|a, b| b.total_cmp(a));
            let n = (s / h).floor() as usize;
            mu.singular_mass() + vals.iter().take(n).sum::<f64>() * h
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn rearrangement_is_the_sup(mu in random_measure(), x in 0.01f64..3.0) {
                let h = odd_rearrangement(&mu.to_profile(0.0).unwrap()).unwrap();
                prop_assert!((h.eval(x) - rearranged_value(&mu, x)).abs() < 1e-12);
                prop_assert!((h.eval(-x) + h.eval(x)).abs() < 1e-12);
                prop_assert!((h.eval(x) - 0.5 * grid_sup(&mu, 2.0 * x)).abs() < 2e-3);
                prop_assert!((h.total_mass() - mu.total_mass()).abs() < 1e-12);
            }

            #[test]
            fn rearrangement_preserves_the_order_class(mu in random_measure()) {
                let hat = odd_rearrangement(&mu.to_profile(0.0).unwrap()).unwrap().derivative(1);
                prop_assert!(order_leq(&mu, &hat).unwrap() && order_leq(&hat, &mu).unwrap());
            }

            #[test]
            fn pair_mass_is_monotone_in_rho(mu in random_measure(), r in 0.01f64..2.0) {
                prop_assert!(mu.pair_mass(r) <= mu.pair_mass(1.5 * r) + 1e-12);
                prop_assert!(mu.pair_mass(1e3) <= mu.total_mass().powi(2) + 1e-9);
            }
        }
    }
}
