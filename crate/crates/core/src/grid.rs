//! Grid searches on intervals, boxes and simplices.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::oracle::Oracle;
use crate::problem::{FeasibleSet, Simplex};

/// Step scale of the grid: `Δ = ε / (2 s M)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SafetyMode {
    /// `s = 1`, `Δ = ε / (2M)`.
    Standard,
    /// `s = 2`, `Δ = ε / (4M)`, so that `MΔ + 2δ ≤ ε` whenever `δ ≤ 3ε/8`.
    #[default]
    Safety,
}

impl SafetyMode {
    pub fn factor(self) -> f64 {
        match self {
            SafetyMode::Standard => 1.0,
            SafetyMode::Safety => 2.0,
        }
    }

    /// Noise level this mode is designed to tolerate.
    pub fn delta_cap(self, eps: f64) -> f64 {
        match self {
            SafetyMode::Standard => eps / 2.0,
            SafetyMode::Safety => eps / 4.0,
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            SafetyMode::Standard => "standard",
            SafetyMode::Safety => "safety",
        }
    }
}

impl std::str::FromStr for SafetyMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" | "1" => Ok(SafetyMode::Standard),
            "safety" | "2" => Ok(SafetyMode::Safety),
            other => Err(invalid("mode", format!("unknown safety mode `{other}`"))),
        }
    }
}

/// Uniform grid `{a, a + Δ, …, a + ⌊(b-a)/Δ⌋Δ, b}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1DConfig {
    pub a: f64,
    pub b: f64,
    pub step: f64,
    pub mode: SafetyMode,
}

impl Grid1DConfig {
    pub fn new(a: f64, b: f64, step: f64, mode: SafetyMode) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidSet(format!("interval [{a}, {b}] is empty")));
        }
        if !(step.is_finite() && step > 0.0) {
            return Err(invalid("step", format!("{step} must be > 0")));
        }
        Ok(Self {
            a,
            b,
            step: step.min(b - a),
            mode,
        })
    }

    /// `Δ = ε / (2 s M)`.
    pub fn for_accuracy(a: f64, b: f64, lipschitz: f64, eps: f64, mode: SafetyMode) -> Result<Self> {
        if !(lipschitz > 0.0 && eps > 0.0) {
            return Err(invalid("eps", "eps and M must be positive"));
        }
        Self::new(a, b, eps / (2.0 * mode.factor() * lipschitz), mode)
    }

    pub fn points(&self) -> Vec<f64> {
        grid_points(self.a, self.b, self.step)
    }
}

/// Grid over `[a, b]` with spacing at most `step`; both endpoints included.
/// A degenerate interval yields the single point `a`.
pub fn grid_points(a: f64, b: f64, step: f64) -> Vec<f64> {
    let len = b - a;
    if !(len > 0.0) {
        return vec![a];
    }
    let k = (len / step + 1e-9).floor() as usize;
    let mut pts: Vec<f64> = (0..=k).map(|i| a + i as f64 * step).collect();
    let last = *pts.last().expect("non-empty");
    if last >= b - 1e-12 * len.max(1.0) {
        pts.pop();
    }
    pts.push(b);
    pts
}

/// Extra output of the simplex search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexDiagnostics {
    /// Noise allowance `j ε/(n+1)` at level `j = 1..n`, innermost first.
    pub level_noise_budget: Vec<f64>,
    /// Grid step `ε/((n+1) M_j)` per level.
    pub level_steps: Vec<f64>,
    pub localization_length: Option<f64>,
    pub pruning_threshold: Option<f64>,
    /// Largest `‖x_i - x'_{i+1}‖₂` between consecutive probes and their warm starts.
    pub max_warm_start_shift: f64,
    /// `ε / ((n+1) M)`.
    pub warm_start_bound: f64,
    pub pruned_probes: u64,
    /// `binom(N + n + 1, n)` with `N = ⌈(n+1)M/ε⌉`, in decimal.
    pub probe_budget: String,
}

/// Outcome of one solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub algo: String,
    pub seed: u64,
    pub eps: f64,
    pub delta: f64,
    /// True optimality gap, when the optimum is known.
    pub gap: Option<f64>,
    /// Oracle calls made by the run.
    pub calls: u64,
    pub per_level_calls: Vec<u64>,
    pub flags: Vec<String>,
    pub candidate: Vec<f64>,
    pub noisy_value: f64,
    /// Provable bound on the gap for this run, when one applies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simplex: Option<SimplexDiagnostics>,
}

impl SolveReport {
    pub(crate) fn new(algo: &str, eps: f64, delta: f64) -> Self {
        Self {
            algo: algo.into(),
            seed: 0,
            eps,
            delta,
            gap: None,
            calls: 0,
            per_level_calls: Vec::new(),
            flags: Vec::new(),
            candidate: Vec::new(),
            noisy_value: f64::NAN,
            bound: None,
            simplex: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn flag(&mut self, f: impl Into<String>) {
        let f = f.into();
        if !self.flags.contains(&f) {
            self.flags.push(f);
        }
    }

    pub fn has_flag(&self, f: &str) -> bool {
        self.flags.iter().any(|g| g == f)
    }
}

/// Noisy argmin with ties resolved toward the lowest index.
fn argmin(values: impl IntoIterator<Item = f64>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best {
            Some((_, b)) if !(v < b) => {}
            _ => best = Some((i, v)),
        }
    }
    best
}

/// Evaluates every grid point and returns the noisy argmin. The provable guarantee is
/// `f(x) - f(x*) ≤ MΔ + 2δ`.
pub fn grid_search_1d<O: Oracle>(oracle: &mut O, lipschitz: f64, eps: f64, cfg: &Grid1DConfig) -> Result<SolveReport> {
    let FeasibleSet::Interval { a, b } = *oracle.set() else {
        return Err(Error::InvalidSet(format!(
            "grid search needs an interval, got a {}",
            oracle.set().kind()
        )));
    };
    if cfg.a < a - 1e-12 || cfg.b > b + 1e-12 {
        return Err(Error::InvalidSet(format!(
            "grid [{}, {}] leaves the interval [{a}, {b}]",
            cfg.a, cfg.b
        )));
    }
    let delta = oracle.noise_bound();
    let start = oracle.calls();
    let pts = cfg.points();
    let mut values = Vec::with_capacity(pts.len());
    for t in &pts {
        values.push(oracle.evaluate(&[*t])?);
    }
    let (i, v) = argmin(values).expect("grid is never empty");
    let mut report = SolveReport::new("grid1d", eps, delta);
    report.candidate = vec![pts[i]];
    report.noisy_value = v;
    report.calls = oracle.calls() - start;
    report.per_level_calls = vec![report.calls];
    report.gap = oracle.gap(&report.candidate);
    report.bound = Some(lipschitz * cfg.step + 2.0 * delta);
    if delta > cfg.mode.delta_cap(eps) {
        report.flag("delta-above-cap");
    }
    Ok(report)
}

/// Coordinate-wise search for separable objectives on a box: coordinate `i` is solved on a
/// 1-D grid with step `ε/(s n M)` and then frozen. The sweep starts at the box center.
pub fn grid_search_separable<O: Oracle>(oracle: &mut O, lipschitz: f64, eps: f64, mode: SafetyMode) -> Result<SolveReport> {
    let FeasibleSet::Box { bounds } = oracle.set().clone() else {
        return Err(Error::InvalidSet(format!(
            "separable search needs a box, got a {}",
            oracle.set().kind()
        )));
    };
    if !(lipschitz > 0.0 && eps > 0.0) {
        return Err(invalid("eps", "eps and M must be positive"));
    }
    let n = bounds.len();
    let step = eps / (mode.factor() * n as f64 * lipschitz);
    let delta = oracle.noise_bound();
    let start = oracle.calls();
    let mut x: Vec<f64> = bounds.iter().map(|(a, b)| 0.5 * (a + b)).collect();
    let mut per_level = Vec::with_capacity(n);
    let mut noisy = f64::NAN;
    for (i, (a, b)) in bounds.iter().enumerate() {
        let before = oracle.calls();
        let pts = grid_points(*a, *b, step.min(b - a));
        let mut values = Vec::with_capacity(pts.len());
        for t in &pts {
            x[i] = *t;
            values.push(oracle.evaluate(&x)?);
        }
        let (k, v) = argmin(values).expect("grid is never empty");
        x[i] = pts[k];
        noisy = v;
        per_level.push(oracle.calls() - before);
    }
    let mut report = SolveReport::new("separable", eps, delta);
    report.calls = oracle.calls() - start;
    report.per_level_calls = per_level;
    report.gap = oracle.gap(&x);
    report.candidate = x;
    report.noisy_value = noisy;
    // Coverage error MΔ/2 plus noisy-argmin error 2δ on each coordinate.
    report.bound = Some(n as f64 * (0.5 * lipschitz * step + 2.0 * delta));
    if delta > eps / (2.0 * n as f64) {
        report.flag("delta-above-cap");
    }
    Ok(report)
}

/// Settings of the nested simplex search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexSearchConfig {
    pub eps: f64,
    /// Lipschitz constant `M` in the ambient Euclidean norm.
    pub lipschitz: f64,
    /// Growth modulus `μ`; zero disables localization.
    pub mu: f64,
    pub nu: f64,
    /// Localize every subproblem after the first one at its level.
    pub localize: bool,
    /// Replace subproblems on short remaining intervals by a single probe.
    pub edge_pruning: bool,
}

impl SimplexSearchConfig {
    pub fn new(eps: f64, lipschitz: f64, mu: f64, nu: f64) -> Result<Self> {
        let cfg = Self {
            eps,
            lipschitz,
            mu,
            nu,
            localize: true,
            edge_pruning: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Settings for `f ∈ F(M, μ, ν)` read from class constants.
    pub fn from_params(params: &crate::problem::ClassParams, eps: f64) -> Result<Self> {
        Self::new(eps, params.lipschitz, params.mu, params.nu.value())
    }

    pub fn without_pruning(mut self) -> Self {
        self.edge_pruning = false;
        self
    }

    pub fn without_localization(mut self) -> Self {
        self.localize = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(invalid("eps", format!("{} must be > 0", self.eps)));
        }
        if !(self.lipschitz.is_finite() && self.lipschitz > 0.0) {
            return Err(invalid("M", format!("{} must be > 0", self.lipschitz)));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(invalid("mu", format!("{} must be >= 0", self.mu)));
        }
        if self.nu.is_nan() || self.nu < 1.0 {
            return Err(invalid("nu", format!("{} is not in [1, inf]", self.nu)));
        }
        Ok(())
    }

    /// Noise cap `ε/(n+1)`.
    pub fn delta_cap(&self, n: usize) -> f64 {
        self.eps / (n + 1) as f64
    }

    /// `2^{2+1/ν} (ε/(μ(n+1)))^{1/ν}`, or `None` without strong growth.
    pub fn localization_length(&self, n: usize) -> Option<f64> {
        localization_length(self.eps, self.mu, self.nu, n)
    }

    /// Remaining length `2ε/(μ(n+1))` below which any point is accurate enough.
    pub fn pruning_threshold(&self, n: usize) -> Option<f64> {
        (self.mu > 0.0).then(|| 2.0 * self.eps / (self.mu * (n + 1) as f64))
    }
}

/// `2^{2+1/ν} (ε/(μ(n+1)))^{1/ν}`; `None` when `μ = 0`.
pub fn localization_length(eps: f64, mu: f64, nu: f64, n: usize) -> Option<f64> {
    if mu <= 0.0 {
        return None;
    }
    let inv = if nu.is_infinite() { 0.0 } else { 1.0 / nu };
    Some(2f64.powf(2.0 + inv) * (eps / (mu * (n + 1) as f64)).powf(inv))
}

/// `binom(N + n + 1, n)`: evaluations of the nested search without localization.
pub fn probe_budget(outer: u64, n: u64) -> BigUint {
    binomial(outer + n + 1, n)
}

fn binomial(m: u64, k: u64) -> BigUint {
    let k = k.min(m.saturating_sub(k));
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc *= BigUint::from(m - i);
        acc /= BigUint::from(i + 1);
    }
    acc
}

/// Heuristic evaluation count with localization and pruning,
/// `(n+1)M/ε · max{1, M/μ}^{n-1}`, up to a constant factor.
pub fn localized_budget_estimate(n: usize, lipschitz: f64, mu: f64, eps: f64) -> f64 {
    let ratio = if mu > 0.0 { (lipschitz / mu).max(1.0) } else { f64::INFINITY };
    (n + 1) as f64 * lipschitz / eps * ratio.powi(n as i32 - 1)
}

struct Nested<'a, O> {
    oracle: &'a mut O,
    simplex: &'a Simplex,
    steps: Vec<f64>,
    edges: Vec<f64>,
    window: Option<f64>,
    prune_below: Option<f64>,
    alphas: Vec<f64>,
    probes: Vec<u64>,
    pruned: u64,
    max_shift: f64,
}

impl<O: Oracle> Nested<'_, O> {
    fn probe(&mut self) -> Result<f64> {
        let x = self.simplex.combine(&self.alphas);
        self.oracle.evaluate(&x)
    }

    /// Minimizes over `α_j ∈ [lo, hi]` with `α_1..α_{j-1}` summing to at most `cap - α_j`.
    /// Returns the noisy value and the chosen `α_1..α_j`.
    fn solve(&mut self, j: usize, lo: f64, hi: f64, cap: f64, hint: Option<&[f64]>) -> Result<(f64, Vec<f64>)> {
        let pts = grid_points(lo, hi, self.steps[j - 1]);
        let mut best: Option<(f64, Vec<f64>)> = None;
        // Inner solution of the previous probe, reused as the warm start of the next one.
        let mut prev: Option<(f64, Vec<f64>)> = None;
        for t in pts {
            self.probes[j - 1] += 1;
            self.alphas[j - 1] = t;
            let (value, inner) = if j == 1 {
                (self.probe()?, Vec::new())
            } else {
                let rest = (cap - t).max(0.0);
                let warm: Option<Vec<f64>> = match &prev {
                    Some((_, sol)) => Some(sol.clone()),
                    None => hint.map(|h| h[..j - 1].to_vec()),
                };
                if let Some((t_prev, _)) = &prev {
                    self.max_shift = self.max_shift.max((t - t_prev).abs() * self.edges[j - 1]);
                }
                if self.prune_below.is_some_and(|p| rest <= p) {
                    let mut inner = warm.unwrap_or_else(|| vec![0.0; j - 1]);
                    let total: f64 = inner.iter().sum();
                    if total > rest {
                        let scale = if total > 0.0 { rest / total } else { 0.0 };
                        inner.iter_mut().for_each(|a| *a *= scale);
                    }
                    self.alphas[..j - 1].copy_from_slice(&inner);
                    self.pruned += 1;
                    (self.probe()?, inner)
                } else {
                    let (wlo, whi) = match (self.window, &warm) {
                        (Some(len), Some(w)) => window(w[j - 2], len, rest),
                        _ => (0.0, rest),
                    };
                    self.solve(j - 1, wlo, whi, rest, warm.as_deref())?
                }
            };
            let mut sol = inner.clone();
            sol.push(t);
            match &best {
                Some((b, _)) if !(value < *b) => {}
                _ => best = Some((value, sol)),
            }
            prev = Some((t, inner));
        }
        Ok(best.expect("grid is never empty"))
    }
}

/// Interval of length `len` centred at `c`, clipped to `[0, rest]`; collapses to the
/// nearest feasible point when the clipped interval is empty.
fn window(c: f64, len: f64, rest: f64) -> (f64, f64) {
    let lo = (c - 0.5 * len).max(0.0);
    let hi = (c + 0.5 * len).min(rest);
    if lo <= hi {
        (lo, hi)
    } else {
        let p = c.clamp(0.0, rest);
        (p, p)
    }
}

/// Nested grid search over barycentric coordinates. The outermost level scans `α_n ∈ [0, 1]`,
/// level `j` scans `α_j ∈ [0, 1 - Σ_{i>j} α_i]` with step `ε/((n+1) M_j)`. After the first
/// subproblem at a level, the inner interval is localized around the previous inner solution.
pub fn simplex_grid_search<O: Oracle>(oracle: &mut O, cfg: &SimplexSearchConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let simplex = oracle
        .set()
        .as_simplex()
        .ok_or_else(|| Error::InvalidSet(format!("simplex search needs a simplex, got a {}", oracle.set().kind())))?
        .clone();
    let n = simplex.n();
    let eps = cfg.eps;
    let delta = oracle.noise_bound();
    let quantum = eps / (n + 1) as f64;
    let coord_lip = simplex.coordwise_lipschitz(cfg.lipschitz);
    let steps: Vec<f64> = coord_lip.iter().map(|m| quantum / m).collect();

    let mut report = SolveReport::new("simplex", eps, delta);
    if delta > quantum {
        report.flag("delta-above-cap");
    }
    let window = if cfg.localize { cfg.localization_length(n) } else { None };
    if cfg.localize && window.is_none() {
        report.flag("localization-disabled-mu-zero");
    }
    let mut prune_below = if cfg.edge_pruning { cfg.pruning_threshold(n) } else { None };
    if cfg.edge_pruning && cfg.nu != 1.0 {
        prune_below = None;
        report.flag("pruning-disabled-nu");
    }

    let start = oracle.calls();
    let (value, alphas) = {
        let mut nested = Nested {
            oracle: &mut *oracle,
            simplex: &simplex,
            steps: steps.clone(),
            edges: simplex.edge_lengths(),
            window,
            prune_below,
            alphas: vec![0.0; n],
            probes: vec![0; n],
            pruned: 0,
            max_shift: 0.0,
        };
        let out = nested.solve(n, 0.0, 1.0, 1.0, None)?;
        report.per_level_calls = nested.probes.clone();
        let outer = (1.0 / steps[n - 1]).ceil() as u64;
        report.simplex = Some(SimplexDiagnostics {
            level_noise_budget: (1..=n).map(|j| j as f64 * quantum).collect(),
            level_steps: steps.clone(),
            localization_length: window,
            pruning_threshold: prune_below,
            max_warm_start_shift: nested.max_shift,
            warm_start_bound: quantum / cfg.lipschitz,
            pruned_probes: nested.pruned,
            probe_budget: probe_budget(outer, n as u64).to_string(),
        });
        out
    };
    let x = simplex.combine(&alphas);
    report.calls = oracle.calls() - start;
    report.gap = oracle.gap(&x);
    report.candidate = x;
    report.noisy_value = value;
    Ok(report)
}

#[cfg(test)]
mod tests;
