//! Command execution. Each command turns a [`Spec`] into a JSON result plus a CSV table.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use maln_core::reductions::{restart_solve, RestartSchedule, ScheduleCase};
use maln_core::{
    compare_with_theory, measure_maln, schedule_lipschitz_sg, schedule_smooth_sg, table1_bound,
    AdversaryTier, Algorithm, BaseSolverConfig, BoundInputs, ClassParams, Exponent, FeasibleSet,
    Family, InstanceSpec, MalnQuery, NoisePolicy, NoisyOracle, SafetyMode, Simplex,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{AlgoId, PolicyId, Spec};
use crate::output::{cell, Table, UsageError};

/// What a command produced.
pub struct Outcome {
    /// The settings after defaults were filled in.
    pub spec: Spec,
    pub result: Value,
    pub table: Table,
    /// `(δ, success rate)` pairs from a noise-tolerance measurement.
    pub plot: Option<Vec<(f64, f64)>>,
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn require_eps(spec: &Spec) -> Result<f64> {
    spec.core.eps.ok_or_else(|| usage("missing flag --eps"))
}

pub fn bounds(mut spec: Spec) -> Result<Outcome> {
    let eps = require_eps(&spec)?;
    let class = spec.class_id.ok_or_else(|| usage("missing flag --class"))?;
    spec.core.seed.get_or_insert(0);
    let c = &spec.class;
    let inputs = BoundInputs {
        n: c.n,
        lipschitz: c.m,
        smoothness: c.l,
        mu: c.mu,
        nu: c.nu.map(Exponent::value),
        radius: c.r,
    };
    let b = table1_bound(class, &inputs, eps)?;
    let table = Table::new(
        &["class", "eps", "value", "first", "second", "dominant_branch"],
        vec![vec![
            class.to_string(),
            cell(b.eps),
            cell(b.value),
            cell(b.first),
            cell(b.second),
            b.dominant_branch.clone(),
        ]],
    );
    Ok(Outcome {
        result: to_value(&b)?,
        spec,
        table,
        plot: None,
    })
}

fn default_family(algo: AlgoId) -> Family {
    match algo {
        AlgoId::Grid1d => Family::PiecewiseLinear,
        AlgoId::Separable => Family::SeparablePiecewiseLinear,
        AlgoId::Simplex | AlgoId::Base => Family::Cone,
        AlgoId::Restart => Family::Quadratic,
    }
}

/// Feasible set of the algorithm: an interval, a cube, the canonical simplex or a ball
/// centered at the origin.
fn feasible_set(spec: &mut Spec, algo: AlgoId) -> Result<FeasibleSet> {
    let n = *spec.class.n.get_or_insert(1);
    let set = match algo {
        AlgoId::Grid1d => {
            if n != 1 {
                bail!(usage(format!("grid1d works in one dimension, got --n {n}")));
            }
            let lo = *spec.problem.lo.get_or_insert(-1.0);
            let hi = *spec.problem.hi.get_or_insert(1.0);
            FeasibleSet::interval(lo, hi)?
        }
        AlgoId::Separable => {
            let lo = *spec.problem.lo.get_or_insert(-1.0);
            let hi = *spec.problem.hi.get_or_insert(1.0);
            FeasibleSet::cube(n, lo, hi)?
        }
        AlgoId::Simplex => FeasibleSet::Simplex(Simplex::canonical(n)),
        AlgoId::Base | AlgoId::Restart => {
            let r = *spec.problem.hi.get_or_insert(1.0);
            FeasibleSet::ball(vec![0.0; n], r)?
        }
    };
    Ok(set)
}

/// Class constants with family-specific defaults: cones grow sharply with `μ = M`,
/// quadratics take the largest `μ` the Lipschitz bound allows, piecewise-linear
/// families do not grow.
fn class_params(spec: &mut Spec, family: Family, set: &FeasibleSet) -> Result<ClassParams> {
    let c = &mut spec.class;
    let n = *c.n.get_or_insert(1);
    let m = *c.m.get_or_insert(1.0);
    let r = *c.r.get_or_insert(set.diameter());
    let (mu, nu) = match family {
        Family::Cone => (*c.mu.get_or_insert(m), *c.nu.get_or_insert(Exponent::ONE)),
        Family::Quadratic => (
            *c.mu.get_or_insert(m / set.diameter()),
            *c.nu.get_or_insert(Exponent::TWO),
        ),
        Family::PiecewiseLinear | Family::SeparablePiecewiseLinear => {
            (*c.mu.get_or_insert(0.0), *c.nu.get_or_insert(Exponent::ONE))
        }
    };
    let mut p = ClassParams::new(n, m, r)?.with_growth(mu, nu)?;
    if let Some(l) = c.l {
        p = p.with_smoothness(l)?;
    }
    Ok(p)
}

fn algorithm(spec: &mut Spec, algo: AlgoId) -> Algorithm {
    let p = &mut spec.problem;
    match algo {
        AlgoId::Grid1d => Algorithm::Grid1d {
            mode: *p.mode.get_or_insert(SafetyMode::Safety),
        },
        AlgoId::Separable => Algorithm::Separable {
            mode: *p.mode.get_or_insert(SafetyMode::Safety),
        },
        AlgoId::Simplex => Algorithm::Simplex {
            pruning: *p.pruning.get_or_insert(true),
            localize: *p.localize.get_or_insert(true),
        },
        AlgoId::Base | AlgoId::Restart => Algorithm::Base {
            iterations: *p.iterations.get_or_insert(1000),
        },
    }
}

fn schedule_for(spec: &mut Spec, params: &ClassParams, eps: f64) -> Result<RestartSchedule> {
    let s = &mut spec.schedule;
    let case = *s.case.get_or_insert(ScheduleCase::LipschitzSg);
    let alpha = *s.alpha.get_or_insert(0.5);
    Ok(match case {
        ScheduleCase::LipschitzSg => {
            let gamma = *s.gamma.get_or_insert(0.5);
            schedule_lipschitz_sg(params, eps, gamma, alpha)?
        }
        ScheduleCase::SmoothSg => schedule_smooth_sg(params, eps, alpha)?,
    })
}

fn join_flags(flags: &[String]) -> String {
    flags.join(";")
}

pub fn solve(mut spec: Spec, log: Option<&Path>) -> Result<Outcome> {
    let eps = require_eps(&spec)?;
    let seed = *spec.core.seed.get_or_insert(0);
    let algo = *spec.problem.algo.get_or_insert(AlgoId::Grid1d);
    let family = *spec.problem.family.get_or_insert(default_family(algo));
    let set = feasible_set(&mut spec, algo)?;
    let params = class_params(&mut spec, family, &set)?;
    let delta = *spec.noise.delta.get_or_insert(0.0);
    let default_policy = if delta > 0.0 { PolicyId::Uniform } else { PolicyId::Zero };
    let policy = match *spec.noise.policy.get_or_insert(default_policy) {
        PolicyId::Zero => NoisePolicy::Zero,
        PolicyId::Uniform => NoisePolicy::UniformBounded { delta, seed },
        PolicyId::Sign => NoisePolicy::AdversarialSign { delta, threshold: eps },
        PolicyId::Planted => bail!(usage("the planted adversary is only available to `maln`")),
    };
    let spec_instance = InstanceSpec::new(family, params.clone(), set, seed);
    let instance = Arc::new(spec_instance.build()?);
    let mut oracle = NoisyOracle::new(Arc::clone(&instance), policy)?;
    if let Some(path) = log {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        oracle = oracle.with_log(Box::new(BufWriter::new(file)));
    }

    let (report, steps) = if algo == AlgoId::Restart {
        let schedule = schedule_for(&mut spec, &params, eps)?;
        // Iteration counts come from the schedule.
        let out = restart_solve(&mut oracle, &schedule, &BaseSolverConfig::new(1), seed)?;
        (out.report, Some(out.steps))
    } else {
        let a = algorithm(&mut spec, algo);
        (a.run(&mut oracle, eps, seed)?, None)
    };
    drop(oracle);

    let table = Table::new(
        &["algo", "family", "eps", "delta", "gap", "calls", "noisy_value", "bound", "candidate", "flags"],
        vec![vec![
            report.algo.clone(),
            family.to_string(),
            cell(eps),
            cell(report.delta),
            report.gap.map(cell).unwrap_or_default(),
            report.calls.to_string(),
            cell(report.noisy_value),
            report.bound.map(cell).unwrap_or_default(),
            serde_json::to_string(&report.candidate)?,
            join_flags(&report.flags),
        ]],
    );
    let mut result = json!({ "instance": spec_instance, "report": report });
    if let Some(steps) = steps {
        result["restarts"] = to_value(&steps)?;
    }
    Ok(Outcome {
        spec,
        result,
        table,
        plot: None,
    })
}

pub fn maln(mut spec: Spec) -> Result<Outcome> {
    let eps = require_eps(&spec)?;
    let seed = *spec.core.seed.get_or_insert(0);
    let algo = *spec.problem.algo.get_or_insert(AlgoId::Simplex);
    if algo == AlgoId::Restart {
        bail!(usage("`maln` measures grid1d, separable, simplex or base"));
    }
    let family = *spec.problem.family.get_or_insert(default_family(algo));
    let set = feasible_set(&mut spec, algo)?;
    let params = class_params(&mut spec, family, &set)?;
    let algorithm = algorithm(&mut spec, algo);
    let default_policy = if algo == AlgoId::Grid1d { PolicyId::Planted } else { PolicyId::Sign };
    let tier = match *spec.noise.policy.get_or_insert(default_policy) {
        PolicyId::Zero => AdversaryTier::Zero,
        PolicyId::Uniform => AdversaryTier::Uniform,
        PolicyId::Sign => AdversaryTier::Sign,
        PolicyId::Planted => AdversaryTier::Exhaustive,
    };
    let mut q = MalnQuery::new(algorithm, family, params.clone(), set, eps, tier, seed);
    let m = &mut spec.maln;
    q.trials = *m.trials.get_or_insert(q.trials);
    q.success_threshold = *m.threshold.get_or_insert(q.success_threshold);
    q.delta_max = *m.delta_max.get_or_insert(q.delta_max);
    q.tolerance = *m.tol.get_or_insert(q.tolerance);
    // The worker count never changes results, so it stays out of the echoed config.
    q.jobs = m.jobs.take();
    q.validate().map_err(|e| usage(e.to_string()))?;

    let report = measure_maln(&q)?;
    let class = *spec.class_id.get_or_insert(q.default_class());
    let comparison = compare_with_theory(&report, class, &params, eps).ok();
    let rows = report
        .curve
        .iter()
        .map(|c| {
            vec![
                cell(c.delta),
                cell(c.success_rate),
                cell(c.worst_gap),
                cell(c.mean_calls),
            ]
        })
        .collect();
    let table = Table::new(&["delta", "success_rate", "worst_gap", "mean_calls"], rows);
    let plot = Some(report.plot_data());
    let mut result = to_value(&report)?;
    // The query is already echoed as config.
    if let Value::Object(map) = &mut result {
        map.remove("query");
    }
    result["comparison"] = to_value(&comparison)?;
    Ok(Outcome {
        spec,
        result,
        table,
        plot,
    })
}

pub fn schedule(mut spec: Spec) -> Result<Outcome> {
    let eps = require_eps(&spec)?;
    spec.core.seed.get_or_insert(0);
    let c = &mut spec.class;
    let n = *c.n.get_or_insert(1);
    let m = *c.m.get_or_insert(1.0);
    let r = *c.r.get_or_insert(1.0);
    let nu = *c.nu.get_or_insert(Exponent::ONE);
    let mu = c.mu.ok_or_else(|| anyhow::Error::from(maln_core::Error::MissingConstant("mu")))?;
    let mut params = ClassParams::new(n, m, r)?.with_growth(mu, nu)?;
    if let Some(l) = c.l {
        params = params.with_smoothness(l)?;
    }
    let s = schedule_for(&mut spec, &params, eps)?;
    let rows = s
        .entries
        .iter()
        .map(|e| {
            vec![
                e.k.to_string(),
                e.regime.to_string(),
                cell(e.delta_k),
                cell(e.n_k),
                cell(e.eps_k),
            ]
        })
        .collect();
    let table = Table::new(&["k", "regime", "delta_k", "N_k", "eps_k"], rows);
    Ok(Outcome {
        result: to_value(&s)?,
        spec,
        table,
        plot: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchCommand {
    Bounds,
    Solve,
    Maln,
    Schedule,
}

/// A sweep file: fixed `params`, and `sweep` lists whose Cartesian product is run.
#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchFile {
    pub command: BenchCommand,
    #[serde(default)]
    pub params: toml::Table,
    #[serde(default)]
    pub sweep: BTreeMap<String, Vec<toml::Value>>,
}

pub fn parse_spec(table: toml::Table) -> Result<Spec> {
    let spec: Spec = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| usage(format!("bad setting: {}", e.message())))?;
    if let Some(key) = spec.unknown.keys().next() {
        bail!(usage(format!("unknown setting `{key}`")));
    }
    Ok(spec)
}

/// Every sweep point in lexicographic order of the sorted keys.
fn sweep_points(sweep: &BTreeMap<String, Vec<toml::Value>>) -> Vec<toml::Table> {
    let mut points = vec![toml::Table::new()];
    for (key, values) in sweep {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.insert(key.clone(), v.clone());
                    q
                })
            })
            .collect();
    }
    points
}

/// Least-squares slope of `ln y` against `ln x`.
fn log_log_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 || pts.iter().any(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return None;
    }
    let k = pts.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = pts.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn summary(command: BenchCommand, result: &Value) -> Vec<(&'static str, String)> {
    let num = |v: &Value| v.as_f64().map(cell).unwrap_or_default();
    match command {
        BenchCommand::Bounds => vec![
            ("value", num(&result["value"])),
            ("dominant_branch", result["dominant_branch"].as_str().unwrap_or("").into()),
        ],
        BenchCommand::Solve => vec![
            ("gap", num(&result["report"]["gap"])),
            ("calls", result["report"]["calls"].to_string()),
        ],
        BenchCommand::Maln => vec![
            ("delta_lo", num(&result["delta_lo"])),
            ("delta_hi", num(&result["delta_hi"])),
            ("theory", num(&result["theory"]["value"])),
            ("ratio", num(&result["ratio"])),
        ],
        BenchCommand::Schedule => vec![
            ("k_total", result["k_total"].to_string()),
            ("min_delta", {
                let m = result["entries"]
                    .as_array()
                    .into_iter()
                    .flatten()
                    .filter_map(|e| e["delta_k"].as_f64())
                    .fold(f64::INFINITY, f64::min);
                cell(m)
            }),
        ],
    }
}

/// Result of a sweep; `failed` is set when any point hit a runtime error.
pub struct BenchOutcome {
    pub outcome: Outcome,
    pub failed: bool,
}

pub fn bench(file: BenchFile, overrides: Spec) -> Result<BenchOutcome> {
    let mut over = match toml::Value::try_from(&overrides)? {
        toml::Value::Table(t) => t,
        _ => unreachable!("a struct serializes to a table"),
    };
    // Worker count is not part of any result.
    let jobs = over.remove("jobs");
    let keys: Vec<String> = file.sweep.keys().cloned().collect();
    let mut rows = Vec::new();
    let mut points = Vec::new();
    let mut fit_pts = Vec::new();
    let mut failed = false;
    for point in sweep_points(&file.sweep) {
        let mut table = file.params.clone();
        table.extend(point.clone());
        table.extend(over.clone());
        let mut spec = parse_spec(table)?;
        spec.maln.jobs = jobs.as_ref().and_then(|j| j.as_integer()).map(|j| j as usize);
        let run = match file.command {
            BenchCommand::Bounds => bounds(spec),
            BenchCommand::Solve => solve(spec, None),
            BenchCommand::Maln => maln(spec),
            BenchCommand::Schedule => schedule(spec),
        };
        let sweep_cells: Vec<String> = keys
            .iter()
            .map(|k| point.get(k).map(toml_cell).unwrap_or_default())
            .collect();
        match run {
            Ok(o) => {
                let s = summary(file.command, &o.result);
                if keys.len() == 1 && keys[0] == "n" {
                    if let (Some(n), Some(lo)) = (o.spec.class.n, o.result["delta_lo"].as_f64()) {
                        fit_pts.push((n as f64, lo));
                    }
                }
                let mut row = sweep_cells;
                row.extend(s.iter().map(|(_, v)| v.clone()));
                row.push(String::new());
                rows.push(row);
                points.push(json!({ "point": point, "config": crate::output::config_value(&o.spec)?, "result": o.result }));
            }
            Err(e) if crate::output::is_usage(&e) => return Err(e),
            Err(e) => {
                failed = true;
                let mut row = sweep_cells;
                row.extend(summary(file.command, &Value::Null).iter().map(|_| String::new()));
                row.push(format!("{e:#}"));
                rows.push(row);
                points.push(json!({ "point": point, "error": format!("{e:#}") }));
            }
        }
    }
    let mut header: Vec<String> = keys.clone();
    header.extend(summary(file.command, &Value::Null).iter().map(|(k, _)| k.to_string()));
    header.push("error".into());
    let mut result = json!({ "command": file.command, "points": points });
    if file.command == BenchCommand::Maln {
        if let Some(p) = log_log_slope(&fit_pts) {
            result["fit"] = json!({ "x": "n", "y": "delta_lo", "exponent": p });
        }
    }
    if failed {
        result["flags"] = json!(["partial"]);
    }
    let mut echoed = file.params;
    echoed.extend(over);
    let base = parse_spec(echoed)?;
    Ok(BenchOutcome {
        outcome: Outcome {
            spec: Spec {
                unknown: BTreeMap::new(),
                ..base
            },
            result,
            table: Table::from_strings(header, rows),
            plot: None,
        },
        failed,
    })
}

fn toml_cell(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Float(f) => cell(*f),
        other => other.to_string(),
    }
}
