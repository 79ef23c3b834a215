//! Restart schedules, the two-point base solver that drives them, and the closed-form
//! upper bounds on the admissible noise level for four function classes.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::SolveReport;
use crate::linalg::dist;
use crate::oracle::{tolerant_ceil, Oracle};
use crate::problem::{sample_unit_sphere, ClassParams, FeasibleSet};

/// Golden-ratio increment separating the seeds of consecutive runs.
pub const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seed of run `index` derived from a base seed; run 0 uses the base seed itself.
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_add(index.wrapping_mul(SEED_STRIDE))
}

/// Function classes with a closed-form noise bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundClass {
    #[serde(rename = "lip-convex")]
    LipConvex,
    #[serde(rename = "lip-sg")]
    LipSg,
    #[serde(rename = "smooth-convex")]
    SmoothConvex,
    #[serde(rename = "smooth-sg")]
    SmoothSg,
}

impl BoundClass {
    pub const ALL: [BoundClass; 4] = [
        BoundClass::LipConvex,
        BoundClass::LipSg,
        BoundClass::SmoothConvex,
        BoundClass::SmoothSg,
    ];

    pub fn id(self) -> &'static str {
        match self {
            BoundClass::LipConvex => "lip-convex",
            BoundClass::LipSg => "lip-sg",
            BoundClass::SmoothConvex => "smooth-convex",
            BoundClass::SmoothSg => "smooth-sg",
        }
    }

    /// Label of the dimension-dependent first term of the max.
    pub fn first_branch(self) -> &'static str {
        match self {
            BoundClass::LipConvex => "eps^2/(sqrt(n)*M*R)",
            BoundClass::LipSg => "mu^(1/nu)*eps^(2-1/nu)/(sqrt(n)*M)",
            BoundClass::SmoothConvex => "eps^(3/2)/(n^(1/4)*sqrt(L)*R)",
            BoundClass::SmoothSg => "mu^(1/nu)*eps^(3/2-1/nu)/(n^(1/4)*sqrt(L))",
        }
    }
}

/// Label of the `ε/n` term.
pub const EPS_OVER_N: &str = "eps/n";

impl fmt::Display for BoundClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for BoundClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        BoundClass::ALL
            .into_iter()
            .find(|c| c.id() == s)
            .ok_or_else(|| Error::Unsupported(format!("unknown class `{s}`")))
    }
}

/// Constants for the bound formulas; each class reads only the ones it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub n: Option<usize>,
    #[serde(rename = "M")]
    pub lipschitz: Option<f64>,
    #[serde(rename = "L")]
    pub smoothness: Option<f64>,
    pub mu: Option<f64>,
    pub nu: Option<f64>,
    #[serde(rename = "R")]
    pub radius: Option<f64>,
}

impl From<&ClassParams> for BoundInputs {
    fn from(p: &ClassParams) -> Self {
        Self {
            n: Some(p.n),
            lipschitz: Some(p.lipschitz),
            smoothness: p.smoothness,
            mu: (p.mu > 0.0).then_some(p.mu),
            nu: Some(p.nu.value()),
            radius: Some(p.radius),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Bound {
    pub class: BoundClass,
    pub eps: f64,
    pub value: f64,
    /// Value of the dimension-dependent term.
    pub first: f64,
    /// Value of `ε/n`.
    pub second: f64,
    pub dominant_branch: String,
}

fn need(v: Option<f64>, name: &'static str) -> Result<f64> {
    let v = v.ok_or(Error::MissingConstant(name))?;
    if !(v > 0.0) {
        return Err(invalid(name, format!("{v} must be > 0")));
    }
    Ok(v)
}

/// Upper bound on the maximum admissible noise level for `class` at accuracy `ε`.
/// The first term wins ties.
pub fn table1_bound(class: BoundClass, inputs: &BoundInputs, eps: f64) -> Result<Table1Bound> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(invalid("eps", format!("{eps} must be > 0")));
    }
    let n = inputs.n.ok_or(Error::MissingConstant("n"))?;
    if n == 0 {
        return Err(invalid("n", "dimension must be positive"));
    }
    let nf = n as f64;
    let inv_nu = |nu: Option<f64>| -> Result<f64> {
        let nu = nu.ok_or(Error::MissingConstant("nu"))?;
        if nu.is_nan() || nu < 1.0 {
            return Err(invalid("nu", format!("{nu} is not in [1, inf]")));
        }
        Ok(if nu.is_infinite() { 0.0 } else { 1.0 / nu })
    };
    let first = match class {
        BoundClass::LipConvex => {
            let m = need(inputs.lipschitz, "M")?;
            let r = need(inputs.radius, "R")?;
            eps * eps / (nf.sqrt() * m * r)
        }
        BoundClass::LipSg => {
            let m = need(inputs.lipschitz, "M")?;
            let mu = need(inputs.mu, "mu")?;
            let q = inv_nu(inputs.nu)?;
            mu.powf(q) * eps.powf(2.0 - q) / (nf.sqrt() * m)
        }
        BoundClass::SmoothConvex => {
            let l = need(inputs.smoothness, "L")?;
            let r = need(inputs.radius, "R")?;
            // Square roots are correctly rounded; `powf` is not.
            eps * eps.sqrt() / (nf.sqrt().sqrt() * l.sqrt() * r)
        }
        BoundClass::SmoothSg => {
            let l = need(inputs.smoothness, "L")?;
            let mu = need(inputs.mu, "mu")?;
            let q = inv_nu(inputs.nu)?;
            mu.powf(q) * eps.powf(1.5 - q) / (nf.sqrt().sqrt() * l.sqrt())
        }
    };
    let second = eps / nf;
    let (value, branch) = if first >= second {
        (first, class.first_branch())
    } else {
        (second, EPS_OVER_N)
    };
    Ok(Table1Bound {
        class,
        eps,
        value,
        first,
        second,
        dominant_branch: branch.into(),
    })
}

/// Which per-restart formula family a schedule follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScheduleCase {
    #[serde(rename = "lip-sg")]
    LipschitzSg,
    #[serde(rename = "smooth-sg")]
    SmoothSg,
}

impl ScheduleCase {
    pub fn id(self) -> &'static str {
        match self {
            ScheduleCase::LipschitzSg => "lip-sg",
            ScheduleCase::SmoothSg => "smooth-sg",
        }
    }
}

impl FromStr for ScheduleCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lip-sg" => Ok(ScheduleCase::LipschitzSg),
            "smooth-sg" => Ok(ScheduleCase::SmoothSg),
            other => Err(Error::Unsupported(format!("unknown schedule case `{other}`"))),
        }
    }
}

/// One restart: noise budget, iteration budget and target accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub k: u32,
    pub regime: u8,
    pub delta_k: f64,
    #[serde(rename = "N_k")]
    pub n_k: f64,
    pub eps_k: f64,
    /// Distance proxy `2^{-k/ν} R` entering the formulas of restart `k`.
    #[serde(skip)]
    pub distance: f64,
}

impl ScheduleEntry {
    /// Iteration budget rounded up, at least 1.
    pub fn iterations(&self) -> u64 {
        (tolerant_ceil(self.n_k).max(1.0)) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSchedule {
    pub case: ScheduleCase,
    pub eps: f64,
    pub params: ClassParams,
    pub entries: Vec<ScheduleEntry>,
    pub k_total: u32,
    /// Per-restart failure probability.
    pub alpha: f64,
    /// `γ` in the Lipschitz case, `α` in the smooth case.
    pub split: f64,
    pub repetitions: u32,
    /// `⌈log₂(μR^ν/ε)⌉ - 1` before clipping.
    pub raw_k_total: i64,
}

impl RestartSchedule {
    pub fn min_delta(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.delta_k)
            .fold(f64::INFINITY, f64::min)
    }
}

/// `⌈log₂(μR^ν/ε)⌉ - 1`, unclipped.
pub fn raw_restart_count(mu: f64, radius: f64, nu: f64, eps: f64) -> i64 {
    tolerant_ceil((mu * radius.powf(nu) / eps).log2()) as i64 - 1
}

/// Repetitions `⌈log₂(1/α)⌉` that push a per-run failure probability of 1/2 below `α`.
pub fn repetitions(alpha: f64) -> u32 {
    (tolerant_ceil((1.0 / alpha).log2()).max(1.0)) as u32
}

/// Per-restart failure probability `α = β/k` for an overall budget `β`.
pub fn alpha_from_beta(beta: f64, k_total: u32) -> f64 {
    beta / k_total.max(1) as f64
}

struct Common {
    n: f64,
    mu: f64,
    nu: f64,
    radius: f64,
    k_total: u32,
    raw: i64,
}

fn common(params: &ClassParams, eps: f64, split: f64, split_name: &'static str, alpha: f64) -> Result<Common> {
    params.validate()?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(invalid("eps", format!("{eps} must be > 0")));
    }
    if !(params.mu > 0.0) {
        return Err(Error::MissingConstant("mu"));
    }
    if params.nu.is_infinite() {
        return Err(invalid("nu", "restart schedules need a finite exponent"));
    }
    if !(split > 0.0 && split < 1.0) {
        return Err(invalid(split_name, format!("{split} is not in (0, 1)")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("{alpha} is not in (0, 1)")));
    }
    let nu = params.nu.value();
    let raw = raw_restart_count(params.mu, params.radius, nu, eps);
    Ok(Common {
        n: params.n as f64,
        mu: params.mu,
        nu,
        radius: params.radius,
        k_total: raw.max(1) as u32,
        raw,
    })
}

/// Closed-form noise budget of restart `k` in the given regime; `split` is `γ` in the
/// Lipschitz case and `α` in the smooth case. Unset constants read as NaN.
pub fn closed_form_delta(case: ScheduleCase, regime: u8, k: u32, split: f64, params: &ClassParams) -> f64 {
    let kf = k as f64;
    let n = params.n as f64;
    let (mu, nu, r) = (params.mu, params.nu.value(), params.radius);
    match (case, regime) {
        (ScheduleCase::LipschitzSg, 1) => {
            let m = params.lipschitz;
            2f64.powf(-kf * (2.0 - 1.0 / nu)) * split * split * mu * mu * r.powf(2.0 * nu - 1.0)
                / (16.0 * n.sqrt() * m)
        }
        (ScheduleCase::SmoothSg, 1) => {
            let l = params.smoothness.unwrap_or(f64::NAN);
            2f64.powf(-kf * (1.5 - 1.0 / nu))
                * (split.powi(3) * mu.powi(3) / (n.sqrt() * l)).sqrt()
                * r.powf(1.5 * nu - 1.0)
                / 8.0
        }
        _ => 2f64.powf(-kf) * split * mu * r.powf(nu) / (4.0 * n),
    }
}

/// Schedule for Lipschitz `(μ, ν)`-growing functions with noise/iteration split `γ`.
pub fn schedule_lipschitz_sg(params: &ClassParams, eps: f64, gamma: f64, alpha: f64) -> Result<RestartSchedule> {
    let c = common(params, eps, gamma, "gamma", alpha)?;
    let m = params.lipschitz;
    let entries = (1..=c.k_total)
        .map(|k| {
            let kf = k as f64;
            let d = 2f64.powf(-kf / c.nu) * c.radius;
            let eps_k = 0.25 * c.mu * d.powf(c.nu);
            let n_k = (m * d / ((1.0 - gamma) * eps_k)).powi(2);
            let regime = if eps_k >= m * d / c.n.sqrt() { 1 } else { 2 };
            let delta_k = closed_form_delta(ScheduleCase::LipschitzSg, regime, k, gamma, params);
            ScheduleEntry {
                k,
                regime,
                delta_k,
                n_k,
                eps_k,
                distance: d,
            }
        })
        .collect();
    Ok(RestartSchedule {
        case: ScheduleCase::LipschitzSg,
        eps,
        params: params.clone(),
        entries,
        k_total: c.k_total,
        alpha,
        split: gamma,
        repetitions: repetitions(alpha),
        raw_k_total: c.raw,
    })
}

/// Schedule for smooth `(μ, ν)`-growing functions; `α` is both the split factor and the
/// per-restart failure probability.
pub fn schedule_smooth_sg(params: &ClassParams, eps: f64, alpha: f64) -> Result<RestartSchedule> {
    let l = params.smoothness.ok_or(Error::MissingConstant("L"))?;
    let c = common(params, eps, alpha, "alpha", alpha)?;
    let entries = (1..=c.k_total)
        .map(|k| {
            let kf = k as f64;
            let d = 2f64.powf(-kf / c.nu) * c.radius;
            let eps_k = 0.25 * c.mu * d.powf(c.nu);
            let n_k = (l * d * d / ((1.0 - alpha) * eps_k)).sqrt();
            let regime = if eps_k >= l * d * d / c.n.powf(1.5) { 1 } else { 2 };
            let delta_k = closed_form_delta(ScheduleCase::SmoothSg, regime, k, alpha, params);
            ScheduleEntry {
                k,
                regime,
                delta_k,
                n_k,
                eps_k,
                distance: d,
            }
        })
        .collect();
    Ok(RestartSchedule {
        case: ScheduleCase::SmoothSg,
        eps,
        params: params.clone(),
        entries,
        k_total: c.k_total,
        alpha,
        split: alpha,
        repetitions: repetitions(alpha),
        raw_k_total: c.raw,
    })
}

/// Projected two-point random-direction method with iterate averaging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseSolverConfig {
    pub iterations: u64,
    /// Finite-difference radius `τ`.
    pub tau: f64,
    /// Distance bound `D` in the step `η = D / (M √(n N))`; the set diameter by default.
    #[serde(default)]
    pub radius: Option<f64>,
    /// Overrides the step size.
    #[serde(default)]
    pub step: Option<f64>,
    /// Initial point; the set center by default.
    #[serde(default)]
    pub start: Option<Vec<f64>>,
}

impl BaseSolverConfig {
    pub fn new(iterations: u64) -> Self {
        Self {
            iterations,
            tau: 1e-6,
            radius: None,
            step: None,
            start: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(invalid("N", "at least one iteration is required"));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(invalid("tau", format!("{} must be > 0", self.tau)));
        }
        Ok(())
    }
}

/// Runs the base method and returns the average of `x_0..x_{N-1}`. One extra evaluation at
/// the returned point supplies its noisy value.
pub fn base_solver<O: Oracle>(oracle: &mut O, cfg: &BaseSolverConfig, seed: u64) -> Result<SolveReport> {
    cfg.validate()?;
    let set: FeasibleSet = oracle.set().clone();
    let n = set.dim();
    let m = oracle.params().lipschitz;
    let start = oracle.calls();
    let x0 = match &cfg.start {
        Some(x) => set.project(x)?,
        None => set.center(),
    };
    let d = cfg.radius.unwrap_or_else(|| set.diameter());
    let eta = cfg
        .step
        .unwrap_or_else(|| d / (m * ((n as u64 * cfg.iterations) as f64).sqrt()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = x0;
    let mut sum = vec![0.0; n];
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    for t in 0..cfg.iterations {
        sum.iter_mut().zip(&x).for_each(|(s, xi)| *s += xi);
        if t + 1 == cfg.iterations {
            break;
        }
        let e = sample_unit_sphere(n, &mut rng);
        for i in 0..n {
            plus[i] = x[i] + cfg.tau * e[i];
            minus[i] = x[i] - cfg.tau * e[i];
        }
        let diff = oracle.evaluate_extended(&plus) - oracle.evaluate_extended(&minus);
        let scale = eta * n as f64 * diff / (2.0 * cfg.tau);
        let y: Vec<f64> = x.iter().zip(&e).map(|(xi, ei)| xi - scale * ei).collect();
        x = set.project(&y)?;
    }
    let avg: Vec<f64> = sum.iter().map(|s| s / cfg.iterations as f64).collect();
    // Averages of feasible points are feasible up to rounding.
    let avg = set.project(&avg)?;
    let value = oracle.evaluate(&avg)?;
    let mut report = SolveReport::new("base", f64::NAN, oracle.noise_bound()).with_seed(seed);
    report.calls = oracle.calls() - start;
    report.per_level_calls = vec![report.calls];
    report.gap = oracle.gap(&avg);
    report.candidate = avg;
    report.noisy_value = value;
    Ok(report)
}

/// Trace of one restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartStep {
    pub k: u32,
    pub iterations: u64,
    pub delta_k: f64,
    /// Index of the repetition whose output was kept.
    pub chosen: u32,
    /// `‖x^{N_{k-1}} - x*‖₂`, when the minimizer is known.
    pub start_distance: Option<f64>,
    /// `‖x^{N_k} - x*‖₂`, when the minimizer is known.
    pub end_distance: Option<f64>,
}

impl RestartStep {
    /// `‖x^{N_k} - x*‖ ≤ 2^{-1/ν} ‖x^{N_{k-1}} - x*‖`.
    pub fn contracted(&self, nu: f64) -> Option<bool> {
        Some(self.end_distance? <= 2f64.powf(-1.0 / nu) * self.start_distance? + 1e-15)
    }
}

/// Outcome of a restart run: the final report plus one trace entry per restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartReport {
    pub report: SolveReport,
    pub steps: Vec<RestartStep>,
}

/// Runs `k_total` restarts. Each restart repeats the base method from the same point with
/// independent seeds and keeps the output with the smallest noisy value. The base method
/// at restart `k` uses `N_k` iterations and the distance bound `2^{-(k-1)/ν} R`.
pub fn restart_solve<O: Oracle>(oracle: &mut O, schedule: &RestartSchedule, base: &BaseSolverConfig, seed: u64) -> Result<RestartReport> {
    base.validate()?;
    let start_calls = oracle.calls();
    let delta = oracle.noise_bound();
    let minimizer = oracle.minimizer().map(<[f64]>::to_vec);
    let nu = schedule.params.nu.value();
    let mut x = match &base.start {
        Some(x) => oracle.set().project(x)?,
        None => oracle.set().center(),
    };
    let mut report = SolveReport::new("restart", schedule.eps, delta).with_seed(seed);
    let mut steps = Vec::with_capacity(schedule.entries.len());
    let mut noisy = f64::NAN;
    let mut run = 0u64;
    for entry in &schedule.entries {
        if delta > entry.delta_k {
            report.flag("delta-above-schedule");
        }
        let before = oracle.calls();
        let cfg = BaseSolverConfig {
            iterations: entry.iterations(),
            radius: Some(entry.distance * 2f64.powf(1.0 / nu)),
            start: Some(x.clone()),
            ..base.clone()
        };
        let mut best: Option<SolveReport> = None;
        let mut chosen = 0;
        for rep in 0..schedule.repetitions {
            let r = base_solver(oracle, &cfg, sub_seed(seed, run))?;
            run += 1;
            if best.as_ref().is_none_or(|b| r.noisy_value < b.noisy_value) {
                best = Some(r);
                chosen = rep;
            }
        }
        let best = best.expect("at least one repetition");
        steps.push(RestartStep {
            k: entry.k,
            iterations: cfg.iterations,
            delta_k: entry.delta_k,
            chosen,
            start_distance: minimizer.as_ref().map(|m| dist(&x, m)),
            end_distance: minimizer.as_ref().map(|m| dist(&best.candidate, m)),
        });
        report.per_level_calls.push(oracle.calls() - before);
        noisy = best.noisy_value;
        x = best.candidate;
    }
    report.calls = oracle.calls() - start_calls;
    report.gap = oracle.gap(&x);
    report.candidate = x;
    report.noisy_value = noisy;
    Ok(RestartReport { report, steps })
}
