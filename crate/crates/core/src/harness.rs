//! Empirical measurement of the largest noise level an algorithm tolerates, by bisection
//! over `δ`, and its comparison with the closed-form bounds.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{
    grid_search_1d, grid_search_separable, simplex_grid_search, Grid1DConfig, SafetyMode,
    SimplexSearchConfig, SolveReport,
};
use crate::oracle::{NoisePolicy, NoisyOracle};
use crate::problem::{ClassParams, FeasibleSet, Family, InstanceSpec, ProblemInstance};
use crate::reductions::{base_solver, sub_seed, table1_bound, BaseSolverConfig, BoundClass, BoundInputs, Table1Bound};

/// Slack added to `ε` when deciding success.
pub const SUCCESS_SLACK: f64 = 1e-12;

/// Solver under measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algo", rename_all = "snake_case")]
pub enum Algorithm {
    Grid1d {
        #[serde(default)]
        mode: SafetyMode,
    },
    Separable {
        #[serde(default)]
        mode: SafetyMode,
    },
    Simplex {
        #[serde(default = "yes")]
        pruning: bool,
        #[serde(default = "yes")]
        localize: bool,
    },
    Base {
        iterations: u64,
    },
}

fn yes() -> bool {
    true
}

impl Algorithm {
    pub fn id(&self) -> &'static str {
        match self {
            Algorithm::Grid1d { .. } => "grid1d",
            Algorithm::Separable { .. } => "separable",
            Algorithm::Simplex { .. } => "simplex",
            Algorithm::Base { .. } => "base",
        }
    }

    /// Runs the algorithm once on `oracle`.
    pub fn run(&self, oracle: &mut NoisyOracle, eps: f64, seed: u64) -> Result<SolveReport> {
        let params = oracle.instance().params.clone();
        let report = match self {
            Algorithm::Grid1d { mode } => {
                let FeasibleSet::Interval { a, b } = oracle.instance().set else {
                    return Err(Error::InvalidSet("grid1d needs an interval".into()));
                };
                let cfg = Grid1DConfig::for_accuracy(a, b, params.lipschitz, eps, *mode)?;
                grid_search_1d(oracle, params.lipschitz, eps, &cfg)?
            }
            Algorithm::Separable { mode } => {
                grid_search_separable(oracle, params.lipschitz, eps, *mode)?
            }
            Algorithm::Simplex { pruning, localize } => {
                let mut cfg = SimplexSearchConfig::from_params(&params, eps)?;
                cfg.edge_pruning = *pruning;
                cfg.localize = *localize;
                simplex_grid_search(oracle, &cfg)?
            }
            Algorithm::Base { iterations } => {
                let mut r = base_solver(oracle, &BaseSolverConfig::new(*iterations), seed)?;
                r.eps = eps;
                r
            }
        };
        Ok(report.with_seed(seed))
    }
}

/// Strength of the noise used while probing a level `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryTier {
    /// No noise regardless of `δ`.
    Zero,
    /// `U[-δ, δ]` noise.
    Uniform,
    /// `+δ` on points with gap at most `ε`, `-δ` elsewhere.
    Sign,
    /// Every grid point in turn is lowered by `δ` while all others are raised by `δ`;
    /// the worst outcome counts. Only for `grid1d`.
    Exhaustive,
}

impl AdversaryTier {
    pub fn id(self) -> &'static str {
        match self {
            AdversaryTier::Zero => "zero",
            AdversaryTier::Uniform => "uniform",
            AdversaryTier::Sign => "sign",
            AdversaryTier::Exhaustive => "exhaustive",
        }
    }
}

impl fmt::Display for AdversaryTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for AdversaryTier {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(AdversaryTier::Zero),
            "uniform" => Ok(AdversaryTier::Uniform),
            "sign" => Ok(AdversaryTier::Sign),
            "exhaustive" | "planted" => Ok(AdversaryTier::Exhaustive),
            other => Err(Error::Unsupported(format!("unknown policy `{other}`"))),
        }
    }
}

/// Everything needed to replay a measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MalnQuery {
    pub algorithm: Algorithm,
    pub family: Family,
    pub params: ClassParams,
    pub set: FeasibleSet,
    pub eps: f64,
    pub tier: AdversaryTier,
    pub trials: u32,
    pub success_threshold: f64,
    pub delta_max: f64,
    /// Relative width `(hi - lo)/hi` at which bisection stops.
    pub tolerance: f64,
    pub seed: u64,
    /// Worker threads for the trials of one probe; the rayon default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

impl MalnQuery {
    /// Defaults: 50 trials, threshold 0.9, `δ_max = ε`, tolerance 1%.
    pub fn new(algorithm: Algorithm, family: Family, params: ClassParams, set: FeasibleSet, eps: f64, tier: AdversaryTier, seed: u64) -> Self {
        Self {
            algorithm,
            family,
            params,
            set,
            eps,
            tier,
            trials: 50,
            success_threshold: 0.9,
            delta_max: eps,
            tolerance: 0.01,
            seed,
            jobs: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(invalid("eps", format!("{} must be > 0", self.eps)));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "at least one trial is required"));
        }
        if !(self.success_threshold > 0.0 && self.success_threshold <= 1.0) {
            return Err(invalid("threshold", "must lie in (0, 1]"));
        }
        if !(self.delta_max.is_finite() && self.delta_max > 0.0) {
            return Err(invalid("delta_max", "must be > 0"));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(invalid("tolerance", "must lie in (0, 1)"));
        }
        if self.tier == AdversaryTier::Exhaustive && !matches!(self.algorithm, Algorithm::Grid1d { .. }) {
            return Err(Error::Unsupported(
                "the exhaustive adversary is only available for grid1d".into(),
            ));
        }
        Ok(())
    }

    /// Default class for the theory column: smooth when `L` is set, strongly growing when `μ > 0`.
    pub fn default_class(&self) -> BoundClass {
        match (self.params.smoothness.is_some(), self.params.mu > 0.0) {
            (false, false) => BoundClass::LipConvex,
            (false, true) => BoundClass::LipSg,
            (true, false) => BoundClass::SmoothConvex,
            (true, true) => BoundClass::SmoothSg,
        }
    }

    fn instance(&self, trial: u32) -> Result<ProblemInstance> {
        InstanceSpec::new(self.family, self.params.clone(), self.set.clone(), sub_seed(self.seed, trial as u64)).build()
    }
}

/// Outcome of one trial at one noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub gap: f64,
    pub calls: u64,
}

/// Success rate at one probed `δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub delta: f64,
    pub success_rate: f64,
    pub worst_gap: f64,
    pub mean_calls: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MalnReport {
    pub query: MalnQuery,
    pub feasible: bool,
    /// Largest probed `δ` with success rate at least the threshold.
    pub delta_lo: f64,
    /// Smallest probed `δ` with success rate below the threshold; absent if none failed.
    pub delta_hi: Option<f64>,
    /// Probes in evaluation order.
    pub curve: Vec<CurvePoint>,
    /// Pairs of probes where a larger `δ` had a strictly higher success rate.
    pub monotonicity_violations: u32,
    pub theory: Option<Table1Bound>,
    /// `delta_lo / theory`.
    pub ratio: Option<f64>,
    pub flags: Vec<String>,
}

impl MalnReport {
    /// `(δ, success rate)` pairs sorted by `δ`.
    pub fn plot_data(&self) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = self.curve.iter().map(|c| (c.delta, c.success_rate)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts
    }

    pub fn rate_at(&self, delta: f64) -> Option<f64> {
        self.curve.iter().find(|c| c.delta == delta).map(|c| c.success_rate)
    }
}

/// Runs every trial of `query` at noise level `delta`, in trial order.
pub fn run_trials(query: &MalnQuery, delta: f64) -> Result<Vec<TrialOutcome>> {
    let run = |trial: u32| -> Result<TrialOutcome> { run_trial(query, delta, trial) };
    let trials: Vec<u32> = (0..query.trials).collect();
    let exec = || trials.par_iter().map(|t| run(*t)).collect::<Result<Vec<_>>>();
    match query.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::Unsupported(e.to_string()))?
            .install(exec),
        None => exec(),
    }
}

/// One trial: a fresh instance (shared across noise levels) and a fresh noise stream.
pub fn run_trial(query: &MalnQuery, delta: f64, trial: u32) -> Result<TrialOutcome> {
    let instance = Arc::new(query.instance(trial)?);
    let seed = sub_seed(query.seed ^ 0x5EED_0F_0015E, trial as u64);
    let eps = query.eps;
    let solve = |policy: NoisePolicy| -> Result<SolveReport> {
        let mut oracle = NoisyOracle::new(Arc::clone(&instance), policy)?;
        query.algorithm.run(&mut oracle, eps, seed)
    };
    let outcome = |r: &SolveReport| -> Result<TrialOutcome> {
        Ok(TrialOutcome {
            gap: r.gap.ok_or(Error::UnknownMinimizer)?,
            calls: r.calls,
        })
    };
    match query.tier {
        AdversaryTier::Zero => outcome(&solve(NoisePolicy::Zero)?),
        AdversaryTier::Uniform => outcome(&solve(NoisePolicy::UniformBounded { delta, seed })?),
        AdversaryTier::Sign => outcome(&solve(NoisePolicy::AdversarialSign { delta, threshold: eps })?),
        AdversaryTier::Exhaustive => {
            let Algorithm::Grid1d { mode } = query.algorithm else {
                return Err(Error::Unsupported("exhaustive adversary needs grid1d".into()));
            };
            let FeasibleSet::Interval { a, b } = instance.set else {
                return Err(Error::InvalidSet("grid1d needs an interval".into()));
            };
            let grid = Grid1DConfig::for_accuracy(a, b, instance.params.lipschitz, eps, mode)?.points();
            let mut worst = TrialOutcome { gap: f64::NEG_INFINITY, calls: 0 };
            for (j, p) in grid.iter().enumerate() {
                let boosted = grid
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != j)
                    .map(|(_, q)| vec![*q])
                    .collect();
                let r = solve(NoisePolicy::AdversarialPlanted {
                    delta,
                    boosted,
                    suppressed: vec![vec![*p]],
                })?;
                let o = outcome(&r)?;
                worst.calls += o.calls;
                worst.gap = worst.gap.max(o.gap);
            }
            Ok(worst)
        }
    }
}

fn probe(query: &MalnQuery, delta: f64) -> Result<CurvePoint> {
    let outcomes = run_trials(query, delta)?;
    let ok = outcomes
        .iter()
        .filter(|o| o.gap <= query.eps + SUCCESS_SLACK)
        .count();
    Ok(CurvePoint {
        delta,
        success_rate: ok as f64 / outcomes.len() as f64,
        worst_gap: outcomes.iter().map(|o| o.gap).fold(f64::NEG_INFINITY, f64::max),
        mean_calls: outcomes.iter().map(|o| o.calls as f64).sum::<f64>() / outcomes.len() as f64,
    })
}

/// Doublings of `δ_max` tried when nothing fails at `δ_max`.
const MAX_EXPANSIONS: u32 = 8;

/// Brackets the empirical noise tolerance by bisection on `δ`. Trials use the same
/// instances and noise seeds at every level.
pub fn measure_maln(query: &MalnQuery) -> Result<MalnReport> {
    query.validate()?;
    let mut curve = Vec::new();
    let mut flags = Vec::new();
    let pass = |c: &CurvePoint| c.success_rate >= query.success_threshold;

    let zero = probe(query, 0.0)?;
    let feasible = pass(&zero);
    curve.push(zero);
    let (delta_lo, delta_hi) = if !feasible {
        flags.push("infeasible".to_string());
        (0.0, Some(0.0))
    } else {
        let mut lo = 0.0;
        let mut hi = query.delta_max;
        let mut broke = false;
        for _ in 0..=MAX_EXPANSIONS {
            let c = probe(query, hi)?;
            let ok = pass(&c);
            curve.push(c);
            if !ok {
                broke = true;
                break;
            }
            lo = hi;
            hi *= 2.0;
            flags.push("range-expanded".to_string());
        }
        if broke {
            while hi - lo > query.tolerance * hi {
                let mid = 0.5 * (lo + hi);
                let c = probe(query, mid)?;
                if pass(&c) {
                    lo = mid;
                } else {
                    hi = mid;
                }
                curve.push(c);
            }
            (lo, Some(hi))
        } else {
            flags.push("unbroken".to_string());
            (lo, None)
        }
    };
    flags.dedup();

    let mut violations = 0;
    for a in &curve {
        for b in &curve {
            if a.delta < b.delta && a.success_rate < b.success_rate {
                violations += 1;
            }
        }
    }
    if violations > 0 {
        flags.push("non-monotone".to_string());
    }
    flags.push(format!("tier:{}", query.tier));

    let inputs = BoundInputs::from(&query.params);
    let theory = table1_bound(query.default_class(), &inputs, query.eps).ok();
    let ratio = theory.as_ref().map(|t| delta_lo / t.value);
    Ok(MalnReport {
        query: query.clone(),
        feasible,
        delta_lo,
        delta_hi,
        curve,
        monotonicity_violations: violations,
        theory,
        ratio,
        flags,
    })
}

/// One row of the empirical-versus-theory table. The bound is an upper bound over all
/// algorithms and is asymptotic in `n`; the row states ordering only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub class: BoundClass,
    pub algo: String,
    pub n: usize,
    pub eps: f64,
    pub empirical_lo: f64,
    pub empirical_hi: Option<f64>,
    pub theory_bound: f64,
    pub dominant_branch: String,
    pub ratio: f64,
    pub flags: Vec<String>,
}

pub const ASYMPTOTIC_CAVEAT: &str = "asymptotic-in-n";

/// Places a measured bracket next to the closed-form bound of `class`. The constants
/// must be those the report was measured with.
pub fn compare_with_theory(report: &MalnReport, class: BoundClass, params: &ClassParams, eps: f64) -> Result<ComparisonRow> {
    let q = &report.query.params;
    let mismatch = |what: &'static str| Err(invalid(what, "differs from the measured query"));
    if params.n != q.n {
        return mismatch("n");
    }
    if eps != report.query.eps {
        return mismatch("eps");
    }
    if params.lipschitz != q.lipschitz {
        return mismatch("M");
    }
    if params.radius != q.radius {
        return mismatch("R");
    }
    if params.mu != q.mu || params.nu != q.nu {
        return mismatch("mu");
    }
    if params.smoothness.is_some() && params.smoothness != q.smoothness {
        return mismatch("L");
    }
    let bound = table1_bound(class, &BoundInputs::from(params), eps)?;
    let ratio = report.delta_lo / bound.value;
    let mut flags = vec![ASYMPTOTIC_CAVEAT.to_string()];
    if ratio > 1.0 {
        flags.push("exceeds-theory".into());
    }
    if !report.feasible {
        flags.push("infeasible".into());
    }
    Ok(ComparisonRow {
        class,
        algo: report.query.algorithm.id().into(),
        n: params.n,
        eps,
        empirical_lo: report.delta_lo,
        empirical_hi: report.delta_hi,
        theory_bound: bound.value,
        dominant_branch: bound.dominant_branch,
        ratio,
        flags,
    })
}
