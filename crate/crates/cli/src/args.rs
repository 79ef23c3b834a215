//! Flag groups shared by the subcommands. Every group also deserializes from the
//! `[params]` and `[sweep]` tables of a bench file, so flag names and file keys agree.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use maln_core::reductions::ScheduleCase;
use maln_core::{BoundClass, Exponent, Family, SafetyMode};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgoId {
    Grid1d,
    Separable,
    Simplex,
    Base,
    Restart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyId {
    Zero,
    Uniform,
    Sign,
    /// Exhaustive planted adversary over the probe grid.
    #[value(alias = "exhaustive")]
    #[serde(alias = "exhaustive")]
    Planted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Class constants. Anything left unset is filled per command, except for `bounds`,
/// which reports the first missing constant its class needs.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassArgs {
    /// Dimension.
    #[arg(long)]
    pub n: Option<usize>,
    /// Lipschitz constant.
    #[arg(long = "M", value_name = "M")]
    #[serde(rename = "M")]
    pub m: Option<f64>,
    /// Smoothness constant.
    #[arg(long = "L", value_name = "L")]
    #[serde(rename = "L")]
    pub l: Option<f64>,
    /// Growth coefficient.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Growth exponent in [1, inf].
    #[arg(long)]
    pub nu: Option<Exponent>,
    /// Distance bound to the minimizer.
    #[arg(long = "R", value_name = "R")]
    #[serde(rename = "R")]
    pub r: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct CoreArgs {
    /// Target accuracy.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ProblemArgs {
    #[arg(long, value_enum)]
    pub algo: Option<AlgoId>,
    /// Instance family: cone, quadratic, pwl or separable-pwl.
    #[arg(long)]
    pub family: Option<Family>,
    /// Grid scale: standard (Δ = ε/2M) or safety (Δ = ε/4M).
    #[arg(long)]
    pub mode: Option<SafetyMode>,
    /// Iterations of the base method.
    #[arg(long)]
    pub iterations: Option<u64>,
    /// Edge pruning in simplex search.
    #[arg(long)]
    pub pruning: Option<bool>,
    /// Localized windows in simplex search.
    #[arg(long)]
    pub localize: Option<bool>,
    /// Lower end of the interval or box.
    #[arg(long, allow_hyphen_values = true)]
    pub lo: Option<f64>,
    /// Upper end of the interval or box, or the ball radius.
    #[arg(long, allow_hyphen_values = true)]
    pub hi: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseArgs {
    /// Noise bound δ.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, value_enum)]
    pub policy: Option<PolicyId>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct MalnArgs {
    /// Trials per probed noise level.
    #[arg(long)]
    pub trials: Option<u32>,
    /// Success-rate threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Initial upper end of the δ search.
    #[arg(long = "delta-max")]
    pub delta_max: Option<f64>,
    /// Relative bisection tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Worker threads for trials.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleArgs {
    /// lip-sg or smooth-sg.
    #[arg(long)]
    pub case: Option<ScheduleCase>,
    /// Noise/iteration split in the Lipschitz case.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Per-restart failure probability.
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Args)]
pub struct OutArgs {
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

/// Every setting of one run, as echoed into the output.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Spec {
    #[serde(flatten)]
    pub core: CoreArgs,
    #[serde(flatten)]
    pub class: ClassArgs,
    /// Class of the closed-form bound.
    #[serde(rename = "class")]
    pub class_id: Option<BoundClass>,
    #[serde(flatten)]
    pub problem: ProblemArgs,
    #[serde(flatten)]
    pub noise: NoiseArgs,
    #[serde(flatten)]
    pub maln: MalnArgs,
    #[serde(flatten)]
    pub schedule: ScheduleArgs,
    /// Keys no group recognized; rejected when non-empty.
    #[serde(flatten, skip_serializing)]
    pub unknown: BTreeMap<String, toml::Value>,
}
