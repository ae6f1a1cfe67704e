//! Interaction functionals for a front-tracking configuration: the Glimm
//! quantity `Υ`, the cross-family `Q♭`, the shock–rarefaction `Q♮`, the
//! shock–shock `Q♯` and their combination `Q̂`, with an auditor checking that
//! `Q̂` only grows when a big shock is created.

use crate::error::{Error, Result};
use crate::front_tracking::{glimm_functionals, FTRun, Front, FrontConfiguration};
use crate::hybrid::{classify_event, BigShockTrack, JumpCase};
use rayon::prelude::*;
use serde::Serialize;

/// Absolute tolerance for `ΔQ̂ ≤ 0`.
pub const AUDIT_TOL: f64 = 1e-10;

/// Weights of the composite functional.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FunctionalConstants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

/// `C₁ ≫ C₂ ≫ C₃ ≫ 1` a decade apart. Larger `C₁` lifts the roundoff in `ΔΥ`
/// (~1e-14 on long front lists) above [`AUDIT_TOL`].
impl Default for FunctionalConstants {
    fn default() -> Self {
        FunctionalConstants { c0: 4.0, c1: 1e3, c2: 1e2, c3: 10.0 }
    }
}

/// Big-shock threshold `4√ε|ln ε|`.
pub fn default_rho(epsilon: f64) -> f64 {
    4.0 * epsilon.sqrt() * epsilon.ln().abs()
}

/// Cross-family pair weight `W♭_{αβ}`.
pub fn w_flat(x_alpha: f64, k_alpha: usize, x_beta: f64, k_beta: usize, epsilon: f64) -> f64 {
    let h = 2.0 * epsilon.sqrt();
    let d = x_beta - x_alpha;
    let ramp = (0.5 + d / (2.0 * h)).clamp(0.0, 1.0);
    match k_beta.cmp(&k_alpha) {
        std::cmp::Ordering::Less => ramp,
        std::cmp::Ordering::Greater => 1.0 - ramp,
        std::cmp::Ordering::Equal => 0.0,
    }
}

/// `W♮_α(x) = min{½ + |x − x_α|/(4√ε), 1}`.
pub fn w_natural(x: f64, x_alpha: f64, epsilon: f64) -> f64 {
    (0.5 + (x - x_alpha).abs() / (4.0 * epsilon.sqrt())).min(1.0)
}

/// `Q♭ = Σ_{k_β ≠ k_α} W♭_{αβ}|σ_α σ_β|` over ordered pairs.
pub fn q_flat(config: &FrontConfiguration, epsilon: f64) -> f64 {
    let h = 2.0 * epsilon.sqrt();
    let fams = families(config);
    let mut total = 0.0;
    for a in &config.fronts {
        let sa = a.strength.abs();
        for (k, fam) in fams.iter().enumerate() {
            if k == a.family || fam.x.is_empty() {
                continue;
            }
            let lo = fam.x.partition_point(|&x| x < a.position - h);
            let hi = fam.x.partition_point(|&x| x <= a.position + h);
            let (w0, w1) = (fam.s0[hi] - fam.s0[lo], fam.s1[hi] - fam.s1[lo]);
            // Σ_window |σ_β|(x_β − x_α)/(2h).
            let slope = (w1 - a.position * w0) / (2.0 * h);
            let inner = if k < a.family { 0.5 * w0 + slope } else { 0.5 * w0 - slope };
            let outer = if k < a.family { fam.total() - fam.s0[hi] } else { fam.s0[lo] };
            total += sa * (inner + outer);
        }
    }
    total
}

struct Family {
    x: Vec<f64>,
    s0: Vec<f64>,
    s1: Vec<f64>,
}

impl Family {
    fn total(&self) -> f64 {
        *self.s0.last().unwrap()
    }
}

fn families(config: &FrontConfiguration) -> Vec<Family> {
    let max = config.fronts.iter().map(|f| f.family).max().unwrap_or(0);
    let mut fams: Vec<Family> = (0..=max).map(|_| Family { x: vec![], s0: vec![0.0], s1: vec![0.0] }).collect();
    for f in &config.fronts {
        let fam = &mut fams[f.family];
        let s = f.strength.abs();
        fam.x.push(f.position);
        let (p0, p1) = (*fam.s0.last().unwrap(), *fam.s1.last().unwrap());
        fam.s0.push(p0 + s);
        fam.s1.push(p1 + s * f.position);
    }
    fams
}

/// Atoms `(x_β, mass)` of `D_x w̃_α` for the front at index `alpha`: the
/// same-family rarefactions accumulated outward and cut off at `|σ_α|/4`.
pub fn w_tilde_atoms(config: &FrontConfiguration, alpha: usize) -> Vec<(f64, f64)> {
    let a = &config.fronts[alpha];
    let cap = 0.25 * a.strength.abs();
    let mut atoms = Vec::new();
    let same = |f: &&Front| f.family == a.family && f.is_rarefaction();
    let mut w: f64 = 0.0;
    for f in config.fronts[..alpha].iter().rev().filter(same) {
        let next = w - f.strength;
        let mass = w.max(-cap) - next.max(-cap);
        if mass > 0.0 {
            atoms.push((f.position, mass));
        }
        w = next;
    }
    w = 0.0;
    for f in config.fronts[alpha + 1..].iter().filter(same) {
        let next = w + f.strength;
        let mass = next.min(cap) - w.min(cap);
        if mass > 0.0 {
            atoms.push((f.position, mass));
        }
        w = next;
    }
    atoms
}

/// Atoms `(x_β, mass, W♯_α(x_β))` of `D_x z̃_α` away from `x_α`, for the
/// shock at index `alpha`.
pub fn z_tilde_atoms(config: &FrontConfiguration, alpha: usize, epsilon: f64) -> Vec<(f64, f64, f64)> {
    let a = &config.fronts[alpha];
    let base = 0.5 * a.strength.abs();
    let mut atoms = Vec::new();
    let same = |f: &&Front| f.family == a.family && f.is_physical();
    let (mut z, mut env) = (-base, -base);
    for f in config.fronts[..alpha].iter().rev().filter(same) {
        z += if f.is_shock() { -f.strength.abs() } else { 3.0 * f.strength };
        if z < env {
            atoms.push((f.position, env - z, 1.0 / (epsilon - z)));
            env = z;
        }
    }
    let (mut z, mut env) = (base, base);
    for f in config.fronts[alpha + 1..].iter().filter(same) {
        z += if f.is_shock() { f.strength.abs() } else { -3.0 * f.strength };
        if z > env {
            atoms.push((f.position, z - env, 1.0 / (epsilon + z)));
            env = z;
        }
    }
    atoms
}

/// `Q♮ = Σ_{α big} ∫ W♮_α dD_x w̃_α`; `big` lists the front ids of big shocks.
pub fn q_natural(config: &FrontConfiguration, big: &[u64], epsilon: f64) -> f64 {
    let mut total = 0.0;
    for (i, a) in config.fronts.iter().enumerate() {
        if !big.contains(&a.id) {
            continue;
        }
        total += w_tilde_atoms(config, i)
            .into_iter()
            .map(|(x, m)| w_natural(x, a.position, epsilon) * m)
            .sum::<f64>();
    }
    total
}

/// `∫ W♯_α dD_x z̃_α` for each shock, without the `W♮` factor.
pub fn sharp_weight_integrals(config: &FrontConfiguration, epsilon: f64) -> Vec<f64> {
    (0..config.fronts.len())
        .filter(|&i| config.fronts[i].is_shock())
        .map(|i| z_tilde_atoms(config, i, epsilon).into_iter().map(|(_, m, w)| m * w).sum())
        .collect()
}

/// `Q♯ = Σ_{α shock} |σ_α| ∫ W♮_α W♯_α dD_x z̃_α`.
pub fn q_sharp(config: &FrontConfiguration, epsilon: f64) -> f64 {
    config
        .fronts
        .iter()
        .enumerate()
        .filter(|(_, f)| f.is_shock())
        .map(|(i, a)| {
            let s: f64 = z_tilde_atoms(config, i, epsilon)
                .into_iter()
                .map(|(x, m, w)| w_natural(x, a.position, epsilon) * w * m)
                .sum();
            a.strength.abs() * s
        })
        .sum()
}

/// All functionals of one configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FunctionalSnapshot {
    pub t: f64,
    pub v: f64,
    pub q: f64,
    pub upsilon: f64,
    pub q_flat: f64,
    pub q_natural: f64,
    pub q_sharp: f64,
    pub q_hat: f64,
    pub constants: FunctionalConstants,
    pub epsilon: f64,
}

impl FunctionalSnapshot {
    /// `Q̂` from the parts.
    pub fn recompose(&self) -> f64 {
        compose(self.epsilon, &self.constants, self.upsilon, self.q_flat, self.q_natural, self.q_sharp)
    }

    /// `(Υ, Q♭, Q♮)/TV` and `Q♯/(|ln ε| TV)`, the constants of the a priori bounds.
    pub fn bound_ratios(&self, tv: f64) -> [f64; 4] {
        let l = self.epsilon.ln().abs();
        [self.upsilon / tv, self.q_flat / tv, self.q_natural / tv, self.q_sharp / (l * tv)]
    }
}

fn compose(eps: f64, c: &FunctionalConstants, upsilon: f64, flat: f64, natural: f64, sharp: f64) -> f64 {
    let s = eps.sqrt();
    s * eps.ln().abs() * (c.c1 * upsilon + c.c2 * flat + c.c3 * natural) + s * sharp
}

/// `Q̂ = √ε|ln ε|(C₁Υ + C₂Q♭ + C₃Q♮) + √ε Q♯` with all parts.
pub fn q_hat(config: &FrontConfiguration, big: &[u64], epsilon: f64, constants: &FunctionalConstants) -> FunctionalSnapshot {
    let (v, q) = glimm_functionals(config);
    let upsilon = v + constants.c0 * q;
    let q_flat = q_flat(config, epsilon);
    let q_natural = q_natural(config, big, epsilon);
    let q_sharp = q_sharp(config, epsilon);
    FunctionalSnapshot {
        t: config.time,
        v,
        q,
        upsilon,
        q_flat,
        q_natural,
        q_sharp,
        q_hat: compose(epsilon, constants, upsilon, q_flat, q_natural, q_sharp),
        constants: *constants,
        epsilon,
    }
}

/// Front ids of the tracks active on strip `k`.
pub fn big_ids_on_strip(tracks: &[BigShockTrack], k: usize) -> Vec<u64> {
    tracks
        .iter()
        .flat_map(|t| t.segments.iter())
        .filter(|s| s.strips.0 <= k && k < s.strips.1)
        .map(|s| s.front_id)
        .collect()
}

/// Audit classification of an interaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventCase {
    Creation,
    Termination,
    TransversalCrossing,
    SameFamilyAbsorption,
    BigBigMerge,
    SmallSmall,
}

impl From<JumpCase> for EventCase {
    fn from(c: JumpCase) -> Self {
        match c {
            JumpCase::Creation => EventCase::Creation,
            JumpCase::Termination => EventCase::Termination,
            JumpCase::TransversalCrossing => EventCase::TransversalCrossing,
            JumpCase::SameFamilyAbsorption => EventCase::SameFamilyAbsorption,
            JumpCase::BigBigMerge => EventCase::BigBigMerge,
        }
    }
}

/// Changes of every functional across one interaction.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditRecord {
    pub time: f64,
    pub position: f64,
    pub case: EventCase,
    pub delta_v: f64,
    pub delta_q: f64,
    pub delta_upsilon: f64,
    pub delta_q_flat: f64,
    pub delta_q_natural: f64,
    pub delta_q_sharp: f64,
    pub delta_q_hat: f64,
    pub participants: Vec<u64>,
    /// `ΔQ̂/(√ε|ln ε||σ_α|)` at creations.
    pub creation_ratio: Option<f64>,
    /// `−ΔQ̂ / (√ε|σ₁σ₂|/(|σ₁|+|σ₂|+ε))` at big–big merges.
    pub merge_loss_ratio: Option<f64>,
}

/// The audit of a whole run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub epsilon: f64,
    pub rho: f64,
    pub constants: FunctionalConstants,
    pub records: Vec<AuditRecord>,
    /// Largest `ΔQ̂` over events without a creation.
    pub max_increase: f64,
    pub max_creation_ratio: Option<f64>,
    pub min_merge_loss_ratio: Option<f64>,
}

impl AuditReport {
    /// Events without a creation where `ΔQ̂` exceeds the tolerance.
    pub fn violations(&self) -> impl Iterator<Item = &AuditRecord> {
        self.records.iter().filter(|r| r.case != EventCase::Creation && r.delta_q_hat > AUDIT_TOL)
    }

    /// Fails with the largest violation, if any.
    pub fn check(&self) -> Result<()> {
        match self.violations().max_by(|a, b| a.delta_q_hat.total_cmp(&b.delta_q_hat)) {
            None => Ok(()),
            Some(r) => Err(Error::MonotonicityViolation {
                t: r.time,
                case: serde_json::to_string(&r.case).unwrap_or_default(),
                increase: r.delta_q_hat,
            }),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("audit report serializes")
    }
}

/// Snapshots before and after every interaction, with each change
/// classified and the creation and merge ratios recorded.
pub fn audit_events(
    run: &FTRun,
    tracks: &[BigShockTrack],
    epsilon: f64,
    constants: &FunctionalConstants,
) -> Result<AuditReport> {
    let rho = tracks.first().map(|t| t.rho).unwrap_or_else(|| default_rho(epsilon));
    let cases: Vec<EventCase> = (0..run.events.len())
        .map(|j| Ok(classify_event(run, tracks, j)?.map(EventCase::from).unwrap_or(EventCase::SmallSmall)))
        .collect::<Result<_>>()?;
    let s = epsilon.sqrt();
    let l = epsilon.ln().abs();
    let records: Vec<AuditRecord> = (0..run.events.len())
        .into_par_iter()
        .map(|j| {
            let e = &run.events[j];
            let before = run.config_before(j + 1);
            let after = run.config_after(j + 1);
            let b = q_hat(&before, &big_ids_on_strip(tracks, j), epsilon, constants);
            let a = q_hat(after, &big_ids_on_strip(tracks, j + 1), epsilon, constants);
            let (dv, dq) = (e.delta_v, e.delta_q);
            let du = dv + constants.c0 * dq;
            let (df, dn, ds) = (a.q_flat - b.q_flat, a.q_natural - b.q_natural, a.q_sharp - b.q_sharp);
            let dh = s * l * (constants.c1 * du + constants.c2 * df + constants.c3 * dn) + s * ds;
            let case = cases[j];
            let creation_ratio = (case == EventCase::Creation).then(|| {
                let created: f64 = tracks
                    .iter()
                    .filter(|t| t.segments[0].strips.0 == j + 1)
                    .map(|t| t.segments[0].strength.abs())
                    .sum();
                dh / (s * l * created)
            });
            let merge_loss_ratio = (case == EventCase::BigBigMerge).then(|| {
                let merged: Vec<f64> = tracks
                    .iter()
                    .flat_map(|t| t.segments.iter())
                    .filter(|seg| seg.strips.1 == j + 1)
                    .map(|seg| seg.strength.abs())
                    .collect();
                let (s1, s2) = (merged[0], merged[1]);
                -dh / (s * s1 * s2 / (s1 + s2 + epsilon))
            });
            AuditRecord {
                time: e.time,
                position: e.position,
                case,
                delta_v: dv,
                delta_q: dq,
                delta_upsilon: du,
                delta_q_flat: df,
                delta_q_natural: dn,
                delta_q_sharp: ds,
                delta_q_hat: dh,
                participants: e.incoming.iter().map(|f| f.id).collect(),
                creation_ratio,
                merge_loss_ratio,
            }
        })
        .collect();
    let max_increase = records
        .iter()
        .filter(|r| r.case != EventCase::Creation)
        .map(|r| r.delta_q_hat)
        .fold(f64::NEG_INFINITY, f64::max);
    let max_creation_ratio = records.iter().filter_map(|r| r.creation_ratio).reduce(f64::max);
    let min_merge_loss_ratio = records.iter().filter_map(|r| r.merge_loss_ratio).reduce(f64::min);
    Ok(AuditReport { epsilon, rho, constants: *constants, records, max_increase, max_creation_ratio, min_merge_loss_ratio })
}

/// Rates of change of the functionals on one inter-event interval.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayRecord {
    pub t0: f64,
    pub t1: f64,
    /// `dQ♭/dt` at the midpoint, differentiating the weights exactly.
    pub q_flat_rate: f64,
    /// `−Σ_{|x_α−x_β|<2√ε} |σ_ασ_β||ẋ_α−ẋ_β|/(4√ε)` over ordered pairs.
    pub closed_form_rate: f64,
    /// `Σ_{|x_α−x_β|<2√ε} |σ_ασ_β|` over ordered pairs.
    pub window_products: f64,
    /// Largest `dW♭/dt·|σ_ασ_β|` over in-window pairs; positive means a
    /// receding pair.
    pub max_pair_rate: f64,
    /// Central differences at the midpoint.
    pub q_natural_rate: f64,
    pub q_sharp_rate: f64,
}

fn flat_rates(config: &FrontConfiguration, epsilon: f64) -> (f64, f64, f64, f64) {
    let h = 2.0 * epsilon.sqrt();
    let (mut rate, mut closed, mut prod, mut max_pair) = (0.0, 0.0, 0.0, f64::NEG_INFINITY);
    for a in &config.fronts {
        for b in &config.fronts {
            if a.family == b.family || (b.position - a.position).abs() >= h {
                continue;
            }
            let p = (a.strength * b.strength).abs();
            let dw = if b.family < a.family { 1.0 } else { -1.0 } * (b.speed - a.speed) / (2.0 * h);
            rate += p * dw;
            closed -= p * (a.speed - b.speed).abs() / (2.0 * h);
            prod += p;
            max_pair = max_pair.max(p * dw);
        }
    }
    (rate, closed, prod, max_pair)
}

/// Per-interval decay diagnostics of `Q♭`, `Q♮`, `Q♯`.
pub fn interaction_decay_rates(run: &FTRun, tracks: &[BigShockTrack], epsilon: f64) -> Vec<DecayRecord> {
    (0..run.configs.len() - 1)
        .into_par_iter()
        .filter_map(|k| {
            let (t0, t1) = (run.configs[k].time, run.configs[k + 1].time);
            if t1 <= t0 {
                return None;
            }
            let mid = 0.5 * (t0 + t1);
            let cfg = run.configs[k].advanced_to(mid);
            let (q_flat_rate, closed_form_rate, window_products, max_pair_rate) = flat_rates(&cfg, epsilon);
            let big = big_ids_on_strip(tracks, k);
            let dt = 0.25 * (t1 - t0);
            let (lo, hi) = (run.configs[k].advanced_to(mid - dt), run.configs[k].advanced_to(mid + dt));
            let q_natural_rate = (q_natural(&hi, &big, epsilon) - q_natural(&lo, &big, epsilon)) / (2.0 * dt);
            let q_sharp_rate = (q_sharp(&hi, epsilon) - q_sharp(&lo, epsilon)) / (2.0 * dt);
            Some(DecayRecord {
                t0,
                t1,
                q_flat_rate,
                closed_form_rate,
                window_products,
                max_pair_rate: if window_products > 0.0 { max_pair_rate } else { 0.0 },
                q_natural_rate,
                q_sharp_rate,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::front_tracking::FrontKind;
    use crate::state::State;

    fn front(id: u64, x: f64, family: usize, strength: f64, speed: f64) -> Front {
        let kind = if strength < 0.0 { FrontKind::Shock } else { FrontKind::RarefactionStep };
        Front {
            id,
            position: x,
            family,
            kind,
            strength,
            speed,
            left_state: State::scalar(0.0),
            right_state: State::scalar(0.0),
        }
    }

    fn config(fronts: Vec<Front>) -> FrontConfiguration {
        FrontConfiguration { time: 0.0, fronts, left_most_state: State::scalar(0.0), next_id: 100 }
    }

    fn brute_flat(c: &FrontConfiguration, eps: f64) -> f64 {
        let mut t = 0.0;
        for a in &c.fronts {
            for b in &c.fronts {
                t += w_flat(a.position, a.family, b.position, b.family, eps) * (a.strength * b.strength).abs();
            }
        }
        t
    }

    #[test]
    fn flat_weight_examples() {
        let eps: f64 = 1e-4;
        let h = 2.0 * eps.sqrt();
        assert_eq!(q_flat(&config(vec![front(0, 0.0, 1, -0.1, 0.0), front(1, 0.01, 1, 0.2, 0.0)]), eps), 0.0);
        assert_eq!(w_flat(0.0, 2, 0.0, 1, eps), 0.5);
        assert_eq!(w_flat(0.0, 2, -1.01 * h, 1, eps), 0.0);
        assert_eq!(w_flat(0.0, 2, 1.01 * h, 1, eps), 1.0);
        assert_eq!(w_flat(0.0, 1, -1.01 * h, 2, eps), 1.0);
        for s in [-1.0, 1.0] {
            assert!((w_flat(0.0, 2, s * h, 1, eps) - w_flat(0.0, 2, s * h * (1.0 + 1e-12), 1, eps)).abs() < 1e-10);
            assert!((w_natural(s * 2.0 * h, 0.0, eps) - 1.0).abs() < 1e-15);
        }
        assert_eq!(w_natural(0.0, 0.0, eps), 0.5);
    }

    #[test]
    fn natural_examples() {
        let eps = 1e-4;
        let c = config(vec![front(0, 0.0, 1, -1.0, 0.0), front(1, 0.0, 1, 0.1, 0.0)]);
        assert_eq!(q_natural(&c, &[], eps), 0.0);
        assert!((q_natural(&c, &[0], eps) - 0.05).abs() < 1e-15);
        let c = config(vec![front(0, 0.0, 1, -1.0, 0.0), front(1, 0.0, 1, 0.3, 0.0), front(2, 0.0, 1, 0.2, 0.0)]);
        assert!((q_natural(&c, &[0], eps) - 0.25 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn sharp_examples() {
        let eps: f64 = 1e-4;
        let s = 0.2;
        assert_eq!(q_sharp(&config(vec![front(0, 0.0, 1, -s, 0.0)]), eps), 0.0);
        let d = 0.5 * eps.sqrt();
        let c = config(vec![front(0, 0.0, 1, -s, 0.0), front(1, d, 1, -s, 0.0)]);
        // Each shock sees its partner as one atom of size s where z̃ reaches s/2 + s.
        let one = s * (0.5 + d / (4.0 * eps.sqrt())) * s / (eps + 1.5 * s);
        assert!((q_sharp(&c, eps) - 2.0 * one).abs() < 1e-12);
        // Enough rarefaction in between erases the partner's atom.
        let c = config(vec![front(0, 0.0, 1, -s, 0.0), front(1, d / 2.0, 1, 0.2, 0.0), front(2, d, 1, -s, 0.0)]);
        assert_eq!(q_sharp(&c, eps), 0.0);
    }

    #[test]
    fn snapshot_recomposes() {
        let eps = 1e-3;
        let c = config(vec![front(0, 0.0, 1, -0.3, 1.0), front(1, 0.01, 2, 0.1, 2.0), front(2, 0.02, 1, -0.1, 0.5)]);
        let snap = q_hat(&c, &[0], eps, &FunctionalConstants::default());
        assert!((snap.q_hat - snap.recompose()).abs() <= 1e-12 * snap.q_hat.abs().max(1.0));
        let empty = q_hat(&config(vec![]), &[], eps, &FunctionalConstants::default());
        assert_eq!((empty.q_hat, empty.q_flat, empty.q_sharp), (0.0, 0.0, 0.0));
    }

    #[test]
    fn flat_rate_matches_difference() {
        let eps: f64 = 1e-4;
        let c = config(vec![front(0, 0.0, 2, -0.2, 1.0), front(1, 0.005, 1, 0.1, -0.5)]);
        let (rate, closed, _, _) = flat_rates(&c, eps);
        assert!((rate - closed).abs() < 1e-10);
        let h = 1e-6;
        let shift = |c: &FrontConfiguration, t: f64| {
            let mut c = c.clone();
            for f in &mut c.fronts {
                f.position += f.speed * t;
            }
            c
        };
        let fd = (q_flat(&shift(&c, h), eps) - q_flat(&shift(&c, -h), eps)) / (2.0 * h);
        assert!((fd - rate).abs() < 1e-8);
        let far = config(vec![front(0, 0.0, 2, -0.2, 1.0), front(1, 0.5, 1, 0.1, -0.5)]);
        assert_eq!(flat_rates(&far, eps).0, 0.0);
    }

    proptest::proptest! {
        #[test]
        fn q_flat_matches_pairwise(xs in proptest::collection::vec((-0.05f64..0.05, 1usize..4, -0.3f64..0.3), 0..12)) {
            let mut xs = xs;
            xs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let c = config(xs.iter().enumerate().map(|(i, &(x, k, s))| front(i as u64, x, k, s, 0.0)).collect());
            let eps = 1e-4;
            let fast = q_flat(&c, eps);
            proptest::prop_assert!((fast - brute_flat(&c, eps)).abs() < 1e-12);
        }

        #[test]
        fn z_envelope_is_monotone(xs in proptest::collection::vec((-0.05f64..0.05, -0.3f64..0.3), 1..12)) {
            let mut xs = xs;
            xs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let c = config(xs.iter().enumerate().map(|(i, &(x, s))| front(i as u64, x, 1, s, 0.0)).collect());
            let eps = 1e-4;
            for (i, f) in c.fronts.iter().enumerate() {
                if !f.is_shock() { continue; }
                for (_, m, w) in z_tilde_atoms(&c, i, eps) {
                    proptest::prop_assert!(m > 0.0 && w > 0.0 && w <= 1.0 / eps);
                }
                for (_, m) in w_tilde_atoms(&c, i) {
                    proptest::prop_assert!(m > 0.0);
                }
                let tot: f64 = w_tilde_atoms(&c, i).iter().map(|a| a.1).sum();
                proptest::prop_assert!(tot <= 0.5 * f.strength.abs() + 1e-15);
            }
        }
    }
}
