//! Experiment orchestration: convergence sweeps in `ε`, functional audits and
//! rarefaction-decay scaling, with CSV and JSON output.

use crate::error::{Error, Result};
use crate::front_tracking::{track, FTRun, TrackingParams};
use crate::functionals::{audit_events, interaction_decay_rates, AuditReport, DecayRecord, FunctionalConstants};
use crate::hybrid::{build_hybrid, jump_sum, residual, select_big_shocks, HybridOptions, ProfileCache, ResidualOptions};
use crate::measures::{pair_interaction_integral, single_rarefaction_bound, PairMode};
use crate::profile::PiecewiseConstant;
use crate::riemann::{compose_curves, lax_curve, shock_speed};
use crate::state::State;
use crate::system::{preset_model, Preset, SystemModel};
use crate::viscous::{solve_viscous, InitialData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Named initial data.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    LoneShock,
    LoneRarefaction,
    Merge,
    Cancellation,
    /// Two shocks merging, then eaten by a rarefaction from the left.
    MergeCancellation,
    /// A shock just below `ρ(ε)` growing past it at `t = 1/2`, between two
    /// rarefactions of strength `0.3ρ`.
    Creation,
    RandomBv { seed: u64, n_jumps: usize, tv: f64 },
    /// Explicit data: left state and `(x, right state)` jumps.
    Jumps { left: Vec<f64>, jumps: Vec<(f64, Vec<f64>)> },
}

/// Everything an experiment needs; read from a flat `key = value` file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub system: Preset,
    pub scenario: Scenario,
    /// Seeds for `random_bv`; each gives one run.
    pub seeds: Vec<u64>,
    pub tau: f64,
    pub epsilons: Vec<f64>,
    /// `δ = delta_factor·√ε`.
    pub delta_factor: f64,
    /// `ρ = rho_factor·√ε|ln ε|`.
    pub rho_factor: f64,
    /// `dx = dx_factor·ε`.
    pub dx_factor: f64,
    /// Rarefaction step cap `= cap_factor·ε` (converge, functionals).
    pub cap_factor: f64,
    /// Rarefaction step cap for the decay study.
    pub decay_cap: f64,
    pub deltas: Vec<f64>,
    pub constants: FunctionalConstants,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            system: Preset::Burgers,
            scenario: Scenario::MergeCancellation,
            seeds: vec![1],
            tau: 1.0,
            epsilons: vec![4e-3, 2e-3, 1e-3, 5e-4, 2.5e-4],
            delta_factor: 1.0,
            rho_factor: 4.0,
            dx_factor: 0.25,
            cap_factor: 1.0,
            decay_cap: 1e-3,
            deltas: vec![0.1, 0.05, 0.02, 0.01, 0.005],
            constants: FunctionalConstants::default(),
        }
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{s}'"))))
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unknown keys are
    /// errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut c = ExperimentConfig::default();
        let get = |k: &str| kv.get(k).map(String::as_str);
        let gamma: f64 = get("gamma").map(|v| parse_one("gamma", v)).transpose()?.unwrap_or(2.0);
        let kcoef: f64 = get("k").map(|v| parse_one("k", v)).transpose()?.unwrap_or(1.0);
        if let Some(v) = get("system") {
            c.system = match v {
                "burgers" => Preset::Burgers,
                "p_system" => Preset::PSystem { gamma, k: kcoef },
                _ => return Err(Error::Config(format!("system: unknown '{v}'"))),
            };
        }
        let seed: u64 = get("seed").map(|v| parse_one("seed", v)).transpose()?.unwrap_or(1);
        let n_jumps: usize = get("n_jumps").map(|v| parse_one("n_jumps", v)).transpose()?.unwrap_or(6);
        let tv: f64 = get("tv").map(|v| parse_one("tv", v)).transpose()?.unwrap_or(0.3);
        if let Some(v) = get("scenario") {
            c.scenario = match v {
                "lone_shock" => Scenario::LoneShock,
                "lone_rarefaction" => Scenario::LoneRarefaction,
                "merge" => Scenario::Merge,
                "cancellation" => Scenario::Cancellation,
                "merge_cancellation" => Scenario::MergeCancellation,
                "creation" => Scenario::Creation,
                "random_bv" => Scenario::RandomBv { seed, n_jumps, tv },
                "jumps" => {
                    let left = parse_list("left", get("left").ok_or_else(|| Error::Config("jumps needs 'left'".into()))?)?;
                    let mut jumps = Vec::new();
                    for item in get("jumps").unwrap_or("").split(';').filter(|s| !s.trim().is_empty()) {
                        let (x, u) = item
                            .split_once(':')
                            .ok_or_else(|| Error::Config(format!("jumps: expected x:u1,u2 in '{item}'")))?;
                        jumps.push((parse_one("jumps", x)?, parse_list("jumps", u)?));
                    }
                    Scenario::Jumps { left, jumps }
                }
                _ => return Err(Error::Config(format!("scenario: unknown '{v}'"))),
            };
        }
        if let Some(v) = get("seeds") {
            c.seeds = parse_list("seeds", v)?;
        } else if matches!(c.scenario, Scenario::RandomBv { .. }) {
            c.seeds = vec![seed];
        }
        macro_rules! num {
            ($key:literal, $field:expr) => {
                if let Some(v) = get($key) {
                    $field = parse_one($key, v)?;
                }
            };
        }
        num!("tau", c.tau);
        num!("delta_factor", c.delta_factor);
        num!("rho_factor", c.rho_factor);
        num!("dx_factor", c.dx_factor);
        num!("cap_factor", c.cap_factor);
        num!("decay_cap", c.decay_cap);
        num!("c0", c.constants.c0);
        num!("c1", c.constants.c1);
        num!("c2", c.constants.c2);
        num!("c3", c.constants.c3);
        if let Some(v) = get("epsilons") {
            c.epsilons = parse_list("epsilons", v)?;
        }
        if let Some(v) = get("deltas") {
            c.deltas = parse_list("deltas", v)?;
        }
        const KNOWN: [&str; 22] = [
            "system", "gamma", "k", "scenario", "seed", "n_jumps", "tv", "left", "jumps", "seeds", "tau", "delta_factor",
            "rho_factor", "dx_factor", "cap_factor", "decay_cap", "c0", "c1", "c2", "c3", "epsilons", "deltas",
        ];
        if let Some(k) = kv.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key '{k}'")));
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::Config("tau must be positive".into()));
        }
        if self.epsilons.iter().any(|&e| !(e > 0.0)) || self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("epsilons must be positive and decreasing".into()));
        }
        if self.deltas.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::Config("deltas must be positive".into()));
        }
        for (name, v) in [
            ("delta_factor", self.delta_factor),
            ("rho_factor", self.rho_factor),
            ("dx_factor", self.dx_factor),
            ("cap_factor", self.cap_factor),
            ("decay_cap", self.decay_cap),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<SystemModel> {
        preset_model(self.system)
    }

    pub fn rho(&self, epsilon: f64) -> f64 {
        self.rho_factor * epsilon.sqrt() * epsilon.ln().abs()
    }

    /// Scenario for one seed of the corpus.
    fn scenario_for(&self, seed: u64) -> Scenario {
        match &self.scenario {
            Scenario::RandomBv { n_jumps, tv, .. } => Scenario::RandomBv { seed, n_jumps: *n_jumps, tv: *tv },
            s => s.clone(),
        }
    }

    fn runs(&self) -> Vec<(u64, Scenario)> {
        match self.scenario {
            Scenario::RandomBv { .. } => self.seeds.iter().map(|&s| (s, self.scenario_for(s))).collect(),
            _ => vec![(0, self.scenario.clone())],
        }
    }
}

fn base_state(model: &SystemModel) -> State {
    if model.dim() == 1 {
        State::scalar(0.0)
    } else {
        State::pair(1.0, 0.0)
    }
}

/// Data whose jumps are elementary waves of family 1 with the given
/// strengths, placed at the given positions.
fn waves(model: &SystemModel, left: State, waves: &[(f64, f64)]) -> Result<PiecewiseConstant> {
    let mut u = left;
    let mut jumps = Vec::new();
    for &(x, s) in waves {
        u = lax_curve(model, 1, &u, s)?;
        jumps.push((x, u));
    }
    PiecewiseConstant::from_jumps(left, &jumps)
}

/// Initial data of `scenario` for `model`; `rho` sizes the creation scenario.
pub fn scenario_data(model: &SystemModel, scenario: &Scenario, rho: f64) -> Result<PiecewiseConstant> {
    let burgers = model.dim() == 1;
    let base = base_state(model);
    match scenario {
        Scenario::LoneShock => waves(model, if burgers { State::scalar(0.5) } else { base }, &[(0.0, if burgers { -1.0 } else { -0.3 })]),
        Scenario::LoneRarefaction => waves(model, base, &[(0.0, if burgers { 0.5 } else { 0.3 })]),
        Scenario::Merge => {
            let s = if burgers { [-0.5, -1.0] } else { [-0.1, -0.2] };
            waves(model, if burgers { State::scalar(1.0) } else { base }, &[(0.0, s[0]), (0.1, s[1])])
        }
        Scenario::Cancellation => {
            let s = if burgers { [1.0, -1.5] } else { [0.15, -0.3] };
            waves(model, if burgers { State::scalar(0.0) } else { base }, &[(-0.15, s[0]), (0.0, s[1])])
        }
        Scenario::MergeCancellation => {
            let s = if burgers { [1.0, -0.5, -1.0] } else { [0.2, -0.1, -0.2] };
            waves(model, if burgers { State::scalar(0.0) } else { base }, &[(-0.15, s[0]), (0.0, s[1]), (0.1, s[2])])
        }
        Scenario::Creation => {
            // A shock just below ρ absorbs a negligible one at t = ½; the
            // rarefactions on either side carry the weight the new big shock
            // picks up, and reach it only after τ = 1.
            let left = if burgers { State::scalar(0.5 * rho) } else { base };
            let lam = |u: &State| model.lambda(u, 1);
            let u0 = lax_curve(model, 1, &left, 0.3 * rho)?;
            let u1 = lax_curve(model, 1, &u0, -(1.0 - 1e-8) * rho)?;
            let u2 = lax_curve(model, 1, &u1, -2e-8 * rho)?;
            let u3 = lax_curve(model, 1, &u2, 0.3 * rho)?;
            let s_big = shock_speed(model, &u0, &u1)?;
            let gap = 0.5 * (s_big - shock_speed(model, &u1, &u2)?);
            let x_left = -1.5 * (lam(&u0)? - s_big);
            let x_right = gap + 1.5 * (s_big - lam(&u2)?);
            PiecewiseConstant::from_jumps(left, &[(x_left, u0), (0.0, u1), (gap, u2), (x_right, u3)])
        }
        Scenario::RandomBv { seed, n_jumps, tv } => random_bv(model, *seed, *n_jumps, *tv),
        Scenario::Jumps { left, jumps } => {
            let jumps: Vec<(f64, State)> = jumps.iter().map(|(x, u)| (*x, State::from_slice(u))).collect();
            let p = PiecewiseConstant::from_jumps(State::from_slice(left), &jumps)?;
            for u in &p.values {
                model.check_domain(u)?;
            }
            Ok(p)
        }
    }
}

/// `n_jumps` jumps at uniform positions in `[−1, 1]`, with random wave
/// strengths of total size `tv` (both families for systems).
pub fn random_bv(model: &SystemModel, seed: u64, n_jumps: usize, tv: f64) -> Result<PiecewiseConstant> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs: Vec<f64> = (0..n_jumps).map(|_| rng.gen_range(-1.0..1.0)).collect();
    xs.sort_by(f64::total_cmp);
    let n = model.dim();
    let raw: Vec<Vec<f64>> = (0..n_jumps).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let total: f64 = raw.iter().flatten().map(|s: &f64| s.abs()).sum();
    let scale = if total > 0.0 { tv / total } else { 0.0 };
    let left = base_state(model);
    let mut u = left;
    let mut jumps = Vec::new();
    for (x, s) in xs.into_iter().zip(raw) {
        let s: Vec<f64> = s.iter().map(|v| v * scale).collect();
        u = *compose_curves(model, &u, &s)?.last().unwrap();
        jumps.push((x, u));
    }
    PiecewiseConstant::from_jumps(left, &jumps)
}

/// One row of a convergence sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    /// `√ε|ln ε|`.
    pub rate_variable: f64,
    pub l1_error: f64,
    pub initial_distance: f64,
    pub final_distance: f64,
    pub residual: f64,
    pub jump_sum: f64,
    pub tracks: usize,
    pub events: usize,
    /// `"ok"` or the error that stopped the row.
    pub status: String,
}

impl ConvergenceRow {
    fn failed(epsilon: f64, e: &Error) -> Self {
        ConvergenceRow {
            epsilon,
            rate_variable: epsilon.sqrt() * epsilon.ln().abs(),
            l1_error: f64::NAN,
            initial_distance: f64::NAN,
            final_distance: f64::NAN,
            residual: f64::NAN,
            jump_sum: f64::NAN,
            tracks: 0,
            events: 0,
            status: e.to_string(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    /// Terms of the patching estimate: both endpoints, residual and jumps.
    pub fn decomposition_sum(&self) -> f64 {
        self.initial_distance + self.final_distance + self.residual + self.jump_sum
    }
}

/// Least-squares fit `y ≈ C·x^p`, as `(C, p)`.
pub fn fit_power(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let p = sxy / sxx;
    Some(((my - p * mx).exp(), p))
}

/// `max/min` of positive values.
pub fn spread(values: &[f64]) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(0.0, f64::max);
    hi / lo
}

/// Rows plus the fit `error ≈ C·(√ε|ln ε|)^p`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub constant: Option<f64>,
    pub exponent: Option<f64>,
    /// Largest `error / decomposition sum`.
    pub patching_constant: Option<f64>,
    pub delta_factor: f64,
    pub tau: f64,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "epsilon,rate_variable,l1_error,initial_distance,final_distance,residual,jump_sum,tracks,events,status\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},\"{}\"",
                r.epsilon,
                r.rate_variable,
                r.l1_error,
                r.initial_distance,
                r.final_distance,
                r.residual,
                r.jump_sum,
                r.tracks,
                r.events,
                r.status.replace('"', "'")
            );
        }
        out
    }

    fn ok_rows(&self) -> impl Iterator<Item = &ConvergenceRow> {
        self.rows.iter().filter(|r| r.is_ok())
    }

    /// Spread of `error / (√ε|ln ε|)` over the successful rows.
    pub fn ratio_spread(&self) -> f64 {
        spread(&self.ok_rows().map(|r| r.l1_error / r.rate_variable).collect::<Vec<_>>())
    }

    /// Spreads of the normalised hybrid bounds: endpoint distances over
    /// `δ₀√ε`, residual over `δ₀(1+τ)√ε|ln ε|`, jump sum over `δ₀√ε|ln ε|`.
    pub fn hybrid_spreads(&self) -> [f64; 3] {
        let d0 = self.delta_factor;
        let rows: Vec<&ConvergenceRow> = self.ok_rows().collect();
        let end: Vec<f64> = rows.iter().map(|r| (r.initial_distance + r.final_distance) / (d0 * r.epsilon.sqrt())).collect();
        let res: Vec<f64> = rows.iter().map(|r| r.residual / (d0 * (1.0 + self.tau) * r.rate_variable)).collect();
        let jmp: Vec<f64> = rows.iter().map(|r| r.jump_sum / (d0 * r.rate_variable)).collect();
        [spread(&end), spread(&res), spread(&jmp)]
    }
}

fn converge_row(cfg: &ExperimentConfig, model: &SystemModel, epsilon: f64) -> Result<ConvergenceRow> {
    let rho = cfg.rho(epsilon);
    let data = scenario_data(model, &cfg.scenario, rho)?;
    let params = TrackingParams::for_viscosity(epsilon, cfg.cap_factor * epsilon);
    let run = track(model, &data, cfg.tau, &params)?;
    let viscous = solve_viscous(model, epsilon, &InitialData::Piecewise(data), cfg.tau, cfg.dx_factor * epsilon)?;
    let exact = run.final_config().profile();
    let l1_error = viscous.l1_distance(viscous.times.len() - 1, &exact);
    let tracks = select_big_shocks(&run, rho);
    let mut cache = ProfileCache::new();
    let options = HybridOptions { delta: Some(cfg.delta_factor * epsilon.sqrt()), ..HybridOptions::default() };
    let h = build_hybrid(&run, &tracks, epsilon, &options, &mut cache)?;
    let res = residual(&h, &ResidualOptions::default())?;
    let jumps = jump_sum(&h)?;
    Ok(ConvergenceRow {
        epsilon,
        rate_variable: epsilon.sqrt() * epsilon.ln().abs(),
        l1_error,
        initial_distance: h.initial_distance(),
        final_distance: h.final_distance(),
        residual: res.total,
        jump_sum: jumps.total,
        tracks: tracks.len(),
        events: run.events.len(),
        status: "ok".into(),
    })
}

/// Viscous solution versus front tracking at `τ` for every `ε`, with the
/// hybrid approximation's terms. A failing `ε` is reported in its row.
pub fn converge(cfg: &ExperimentConfig) -> Result<ConvergenceTable> {
    cfg.validate()?;
    let model = cfg.model()?;
    let rows: Vec<ConvergenceRow> = cfg
        .epsilons
        .par_iter()
        .map(|&e| converge_row(cfg, &model, e).unwrap_or_else(|err| ConvergenceRow::failed(e, &err)))
        .collect();
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.is_ok()).map(|r| (r.rate_variable, r.l1_error)).collect();
    let fit = fit_power(&pts);
    let patching_constant = rows
        .iter()
        .filter(|r| r.is_ok() && r.decomposition_sum() > 0.0)
        .map(|r| r.l1_error / r.decomposition_sum())
        .reduce(f64::max);
    Ok(ConvergenceTable {
        rows,
        constant: fit.map(|f| f.0),
        exponent: fit.map(|f| f.1),
        patching_constant,
        delta_factor: cfg.delta_factor,
        tau: cfg.tau,
    })
}

/// Audit and decay rates of one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FunctionalRun {
    pub epsilon: f64,
    pub seed: u64,
    pub events: usize,
    /// Largest increase of `Υ` over the events; `None` without events.
    pub max_upsilon_increase: Option<f64>,
    pub audit: AuditReport,
    pub rates: Vec<DecayRecord>,
}

/// Runs for every `ε` and seed, plus the spread of the largest creation ratio
/// across `ε`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FunctionalsReport {
    pub runs: Vec<FunctionalRun>,
    pub creation_ratio_by_epsilon: Vec<(f64, Option<f64>)>,
    pub violations: usize,
}

impl FunctionalsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn check(&self) -> Result<()> {
        for r in &self.runs {
            r.audit.check()?;
        }
        Ok(())
    }
}

fn functional_run(cfg: &ExperimentConfig, model: &SystemModel, epsilon: f64, seed: u64, scenario: &Scenario) -> Result<FunctionalRun> {
    let rho = cfg.rho(epsilon);
    let data = scenario_data(model, scenario, rho)?;
    let run = track(model, &data, cfg.tau, &TrackingParams::for_viscosity(epsilon, cfg.cap_factor * epsilon))?;
    let tracks = select_big_shocks(&run, rho);
    let audit = audit_events(&run, &tracks, epsilon, &cfg.constants)?;
    let rates = interaction_decay_rates(&run, &tracks, epsilon);
    Ok(FunctionalRun { epsilon, seed, events: run.events.len(), max_upsilon_increase: max_upsilon_increase(&run), audit, rates })
}

/// Largest `ΔΥ = ΔV + C₀ΔQ` over the events.
pub fn max_upsilon_increase(run: &FTRun) -> Option<f64> {
    run.events.iter().map(|e| e.delta_v + run.params.c0 * e.delta_q).reduce(f64::max)
}

/// Functional audit for every `ε` and seed.
pub fn functionals(cfg: &ExperimentConfig) -> Result<FunctionalsReport> {
    cfg.validate()?;
    let model = cfg.model()?;
    let jobs: Vec<(f64, u64, Scenario)> =
        cfg.epsilons.iter().flat_map(|&e| cfg.runs().into_iter().map(move |(s, sc)| (e, s, sc))).collect();
    let runs = jobs
        .par_iter()
        .map(|(e, s, sc)| functional_run(cfg, &model, *e, *s, sc))
        .collect::<Result<Vec<_>>>()?;
    let creation_ratio_by_epsilon = cfg
        .epsilons
        .iter()
        .map(|&e| {
            let k = runs.iter().filter(|r| r.epsilon == e).filter_map(|r| r.audit.max_creation_ratio).reduce(f64::max);
            (e, k)
        })
        .collect();
    let violations = runs.iter().map(|r| r.audit.violations().count()).sum();
    Ok(FunctionalsReport { runs, creation_ratio_by_epsilon, violations })
}

/// One `δ` of the decay study.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayRow {
    pub delta: f64,
    /// `∫_0^τ Σ_{|x_α−x_β|≤δ} |σ_ασ_β|` over same-family rarefaction pairs.
    pub integral: f64,
    /// `integral / (δ(ln(2+τ) + |ln δ|)·TV)`.
    pub normalized: f64,
    /// `integral / (δ|ln δ|)`.
    pub per_delta_log: f64,
    /// `2K²δσ(1 + ln(στ/2δ))` with `σ` the total rarefaction strength.
    pub single_rarefaction_bound: f64,
}

/// Pair-integral scaling over `δ` for every seed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayTable {
    pub rows: Vec<(u64, DecayRow)>,
}

impl DecayTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,delta,integral,normalized,per_delta_log,single_rarefaction_bound\n");
        for (s, r) in &self.rows {
            let _ = writeln!(
                out,
                "{s},{},{},{},{},{}",
                r.delta, r.integral, r.normalized, r.per_delta_log, r.single_rarefaction_bound
            );
        }
        out
    }

    /// Largest relative deviation of `integral/(δ|ln δ|)` from its
    /// least-squares constant, per seed.
    pub fn log_fit_deviation(&self, seed: u64) -> f64 {
        let pts: Vec<(f64, f64)> =
            self.rows.iter().filter(|(s, _)| *s == seed).map(|(_, r)| (r.delta, r.integral)).collect();
        log_fit_deviation(&pts)
    }

    /// The same fit on the integrals summed over all seeds.
    pub fn aggregate_log_fit_deviation(&self) -> f64 {
        let mut pts: Vec<(f64, f64)> = Vec::new();
        for (_, r) in &self.rows {
            match pts.iter_mut().find(|p| p.0 == r.delta) {
                Some(p) => p.1 += r.integral,
                None => pts.push((r.delta, r.integral)),
            }
        }
        log_fit_deviation(&pts)
    }
}

fn log_fit_deviation(pts: &[(f64, f64)]) -> f64 {
    let xs: Vec<f64> = pts.iter().map(|p| p.0 * p.0.ln().abs()).collect();
    let c = pts.iter().zip(&xs).map(|(p, x)| p.1 * x).sum::<f64>() / xs.iter().map(|x| x * x).sum::<f64>();
    pts.iter().zip(&xs).map(|(p, x)| (p.1 / (c * x) - 1.0).abs()).fold(0.0, f64::max)
}

/// Rarefaction pair integrals for each `δ` of the configuration.
pub fn decay(cfg: &ExperimentConfig) -> Result<DecayTable> {
    cfg.validate()?;
    let model = cfg.model()?;
    let k = model.max_eigenvector_length();
    let mut rows = Vec::new();
    for (seed, scenario) in cfg.runs() {
        let data = scenario_data(&model, &scenario, cfg.rho(cfg.epsilons[0]))?;
        let params = TrackingParams { rarefaction_cap: cfg.decay_cap, ..TrackingParams::default() };
        let run = track(&model, &data, cfg.tau, &params)?;
        let tv: f64 = run.initial().fronts.iter().map(|f| f.strength.abs()).sum();
        let sigma: f64 = run.initial().fronts.iter().filter(|f| f.is_rarefaction()).map(|f| f.strength).sum();
        for &delta in &cfg.deltas {
            let integral = pair_interaction_integral(&run, delta, cfg.tau, PairMode::RarefactionsOnly);
            let normalized = integral / (delta * ((2.0 + cfg.tau).ln() + delta.ln().abs()) * tv);
            rows.push((
                seed,
                DecayRow {
                    delta,
                    integral,
                    normalized,
                    per_delta_log: integral / (delta * delta.ln().abs()),
                    single_rarefaction_bound: single_rarefaction_bound(k, delta, sigma, cfg.tau),
                },
            ));
        }
    }
    Ok(DecayTable { rows })
}

/// Writes `contents` to `dir/name`, creating `dir`.
pub fn write_output(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(dir.join(name), contents).map_err(|e| Error::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let c = ExperimentConfig::parse(
            "system = p_system\ngamma = 1.4\nscenario = random_bv # comment\nseeds = 3,4\ntv = 0.2\nepsilons = 1e-2, 1e-3\n",
        )
        .unwrap();
        assert_eq!(c.system, Preset::PSystem { gamma: 1.4, k: 1.0 });
        assert_eq!(c.seeds, vec![3, 4]);
        assert_eq!(c.epsilons, vec![1e-2, 1e-3]);
        assert!(matches!(c.scenario, Scenario::RandomBv { tv, .. } if tv == 0.2));
        assert!(ExperimentConfig::parse("bogus = 1").is_err());
        assert!(ExperimentConfig::parse("epsilons = 1e-3, 1e-2").is_err());
        assert!(ExperimentConfig::parse("tau = -1").is_err());
        let j = ExperimentConfig::parse("scenario = jumps\nleft = 1\njumps = 0:0; 0.5:-0.5").unwrap();
        assert_eq!(j.scenario, Scenario::Jumps { left: vec![1.0], jumps: vec![(0.0, vec![0.0]), (0.5, vec![-0.5])] });
    }

    #[test]
    fn scenarios_are_valid() {
        for model in [SystemModel::burgers(), SystemModel::p_system(2.0, 1.0).unwrap()] {
            for sc in [
                Scenario::LoneShock,
                Scenario::LoneRarefaction,
                Scenario::Merge,
                Scenario::Cancellation,
                Scenario::MergeCancellation,
                Scenario::Creation,
                Scenario::RandomBv { seed: 7, n_jumps: 5, tv: 0.3 },
            ] {
                let d = scenario_data(&model, &sc, 0.5).unwrap();
                for u in &d.values {
                    model.check_domain(u).unwrap();
                }
            }
        }
        let a = random_bv(&SystemModel::burgers(), 5, 8, 0.3).unwrap();
        assert_eq!(a, random_bv(&SystemModel::burgers(), 5, 8, 0.3).unwrap());
        assert!((a.total_variation() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn merge_cancellation_has_both_events() {
        let m = SystemModel::burgers();
        let d = scenario_data(&m, &Scenario::MergeCancellation, 1.0).unwrap();
        let run = track(&m, &d, 1.0, &TrackingParams::for_viscosity(1e-3, 0.05)).unwrap();
        use crate::front_tracking::EventType;
        assert!(run.events.iter().any(|e| e.kind == EventType::Merge));
        assert!(run.events.iter().any(|e| e.kind == EventType::Cancellation));
    }

    #[test]
    fn power_fit() {
        let pts: Vec<(f64, f64)> = [0.1, 0.2, 0.4].iter().map(|&x: &f64| (x, 3.0 * x.powf(1.5))).collect();
        let (c, p) = fit_power(&pts).unwrap();
        assert!((c - 3.0).abs() < 1e-12 && (p - 1.5).abs() < 1e-12);
    }

    #[test]
    fn constant_data_converges_trivially() {
        let cfg = ExperimentConfig {
            scenario: Scenario::Jumps { left: vec![0.3], jumps: vec![] },
            epsilons: vec![1e-2],
            ..ExperimentConfig::default()
        };
        let t = converge(&cfg).unwrap();
        let r = &t.rows[0];
        assert!(r.is_ok(), "{}", r.status);
        assert!(r.l1_error < 1e-12 && r.residual == 0.0 && r.jump_sum == 0.0);
    }
}
