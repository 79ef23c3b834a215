//! Function classes, feasible sets and synthetic instances whose minimizers are known
//! by construction.

mod objective;
mod set;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use objective::{minimize_max_affine, AffinePiece, Objective};
pub use set::{
    sample_unit_ball, sample_unit_sphere, BarycentricPoint, FeasibleSet, Simplex, MEMBERSHIP_TOL,
};

/// Growth exponent `ν ∈ [1, +∞]`. `+∞` is a distinguished value whose reciprocal is 0.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Exponent(f64);

impl Exponent {
    pub const ONE: Exponent = Exponent(1.0);
    pub const TWO: Exponent = Exponent(2.0);
    pub const INFINITY: Exponent = Exponent(f64::INFINITY);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value < 1.0 {
            return Err(invalid("nu", format!("{value} is not in [1, +inf]")));
        }
        Ok(Exponent(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// `1/ν`, equal to 0 for `ν = +∞`.
    pub fn recip(self) -> f64 {
        if self.is_infinite() {
            0.0
        } else {
            1.0 / self.0
        }
    }
}

impl Default for Exponent {
    fn default() -> Self {
        Exponent::ONE
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "+inf" | "infinity" => Ok(Exponent::INFINITY),
            other => other
                .parse::<f64>()
                .map_err(|e| invalid("nu", e.to_string()))
                .and_then(Exponent::new),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ExponentRepr {
    Finite(f64),
    Named(String),
}

impl Serialize for Exponent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_infinite() {
            ExponentRepr::Named("inf".into()).serialize(s)
        } else {
            ExponentRepr::Finite(self.0).serialize(s)
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match ExponentRepr::deserialize(d)? {
            ExponentRepr::Finite(v) => Exponent::new(v),
            ExponentRepr::Named(s) => s.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// Constants `(n, M, L, μ, ν, R)` of a function class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassParams {
    pub n: usize,
    /// Lipschitz constant `M`.
    #[serde(rename = "M")]
    pub lipschitz: f64,
    /// Gradient-Lipschitz constant `L`, when the class is smooth.
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub smoothness: Option<f64>,
    /// Strong-growth modulus `μ`.
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub nu: Exponent,
    /// Feasible-set radius / initial distance bound `R`.
    #[serde(rename = "R")]
    pub radius: f64,
}

impl ClassParams {
    pub fn new(n: usize, lipschitz: f64, radius: f64) -> Result<Self> {
        let p = ClassParams {
            n,
            lipschitz,
            smoothness: None,
            mu: 0.0,
            nu: Exponent::ONE,
            radius,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_growth(mut self, mu: f64, nu: Exponent) -> Result<Self> {
        self.mu = mu;
        self.nu = nu;
        self.validate()?;
        Ok(self)
    }

    pub fn with_smoothness(mut self, l: f64) -> Result<Self> {
        self.smoothness = Some(l);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n", "dimension must be positive"));
        }
        if !(self.lipschitz.is_finite() && self.lipschitz > 0.0) {
            return Err(invalid("M", format!("{} must be > 0", self.lipschitz)));
        }
        if let Some(l) = self.smoothness {
            if !(l.is_finite() && l > 0.0) {
                return Err(invalid("L", format!("{l} must be > 0")));
            }
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(invalid("mu", format!("{} must be >= 0", self.mu)));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(invalid("R", format!("{} must be > 0", self.radius)));
        }
        if self.mu > 0.0 && self.nu == Exponent::ONE && self.lipschitz <= self.mu / 2.0 {
            return Err(invalid(
                "M",
                format!(
                    "M = {} must exceed mu/2 = {} when nu = 1",
                    self.lipschitz,
                    self.mu / 2.0
                ),
            ));
        }
        Ok(())
    }
}

/// Generator families of synthetic instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// `M ‖x - x*‖₂`, member of the Lipschitz `(M, M, 1)`-growing class.
    #[serde(rename = "cone")]
    Cone,
    /// `(μ/2) ‖x - x*‖₂²`, smooth with `L = μ` and `ν = 2`.
    #[serde(rename = "quadratic")]
    Quadratic,
    /// Seeded maximum of affine pieces in one dimension with slopes in `[-M, M]`.
    #[serde(rename = "pwl")]
    PiecewiseLinear,
    /// Sum of independent piecewise-linear coordinates on a box.
    #[serde(rename = "separable-pwl")]
    SeparablePiecewiseLinear,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Cone,
        Family::Quadratic,
        Family::PiecewiseLinear,
        Family::SeparablePiecewiseLinear,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Family::Cone => "cone",
            Family::Quadratic => "quadratic",
            Family::PiecewiseLinear => "pwl",
            Family::SeparablePiecewiseLinear => "separable-pwl",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.id() == s)
            .ok_or_else(|| Error::Unsupported(format!("unknown family `{s}`")))
    }
}

/// Default number of affine pieces for the piecewise-linear families.
pub const DEFAULT_PIECES: usize = 8;

/// Replayable description of an instance: building it twice yields identical instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub family: Family,
    pub params: ClassParams,
    pub set: FeasibleSet,
    pub seed: u64,
    /// Explicit minimizer for the cone and quadratic families; drawn from the seed otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minimizer: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pieces: Option<usize>,
}

impl InstanceSpec {
    pub fn new(family: Family, params: ClassParams, set: FeasibleSet, seed: u64) -> Self {
        Self {
            family,
            params,
            set,
            seed,
            minimizer: None,
            pieces: None,
        }
    }

    pub fn with_minimizer(mut self, x: Vec<f64>) -> Self {
        self.minimizer = Some(x);
        self
    }

    pub fn build(&self) -> Result<ProblemInstance> {
        build_instance(self)
    }
}

/// Objective, feasible set, class constants and (when known) the minimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub objective: Objective,
    pub set: FeasibleSet,
    pub params: ClassParams,
    pub minimizer: Option<Vec<f64>>,
    pub optimum: Option<f64>,
    /// Present for generated instances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<InstanceSpec>,
}

impl ProblemInstance {
    /// Wraps a hand-written objective. The minimizer is optional; the optimum is derived from it.
    pub fn from_objective(
        objective: Objective,
        set: FeasibleSet,
        params: ClassParams,
        minimizer: Option<Vec<f64>>,
    ) -> Result<Self> {
        set.validate()?;
        params.validate()?;
        if set.dim() != params.n && set.as_simplex().is_none() {
            return Err(invalid("n", format!("set has dimension {}", set.dim())));
        }
        if let Some(x) = &minimizer {
            if !set.contains(x, MEMBERSHIP_TOL) {
                return Err(Error::OutsideSet(x.clone()));
            }
        }
        let optimum = minimizer.as_ref().map(|x| objective.value(x));
        Ok(Self {
            objective,
            set,
            params,
            minimizer,
            optimum,
            spec: None,
        })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.objective.value(x)
    }

    /// `f(x) - f(x*)`, when the optimum is known.
    pub fn gap(&self, x: &[f64]) -> Option<f64> {
        self.optimum.map(|f| self.value(x) - f)
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    /// Ambient-space Lipschitz constant of the objective.
    pub fn euclidean_lipschitz(&self) -> f64 {
        match &self.objective {
            Objective::Separable { terms } => self.params.lipschitz * (terms.len() as f64).sqrt(),
            _ => self.params.lipschitz,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        match &self.spec {
            Some(spec) => serde_json::to_string(spec).map_err(|e| Error::Unsupported(e.to_string())),
            None => Err(Error::Unsupported(
                "hand-built instances have no replayable description".into(),
            )),
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let spec: InstanceSpec =
            serde_json::from_str(json).map_err(|e| Error::Unsupported(e.to_string()))?;
        spec.build()
    }
}

/// Builds an instance of `family` with the given constants on `set`.
pub fn make_instance(
    family: Family,
    params: ClassParams,
    set: FeasibleSet,
    seed: u64,
) -> Result<ProblemInstance> {
    InstanceSpec::new(family, params, set, seed).build()
}

fn inconsistent(family: Family, reason: impl Into<String>) -> Error {
    Error::InconsistentFamily {
        family: family.id().into(),
        reason: reason.into(),
    }
}

fn build_instance(spec: &InstanceSpec) -> Result<ProblemInstance> {
    let InstanceSpec {
        family,
        params,
        set,
        seed,
        ..
    } = spec;
    let family = *family;
    params.validate()?;
    set.validate()?;
    let dim = match set {
        FeasibleSet::Simplex(s) => s.n(),
        other => other.dim(),
    };
    if dim != params.n {
        return Err(inconsistent(
            family,
            format!("n = {} but the set has dimension {dim}", params.n),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(*seed);
    let m = params.lipschitz;
    let pieces = spec.pieces.unwrap_or(DEFAULT_PIECES);
    if pieces == 0 {
        return Err(invalid("pieces", "at least one affine piece is required"));
    }

    let place = |rng: &mut ChaCha8Rng| -> Result<Vec<f64>> {
        match &spec.minimizer {
            Some(x) if set.contains(x, MEMBERSHIP_TOL) => Ok(x.clone()),
            Some(x) => Err(Error::OutsideSet(x.clone())),
            None => Ok(set.sample(rng)),
        }
    };

    let (objective, minimizer, optimum) = match family {
        Family::Cone => {
            if params.nu != Exponent::ONE || (params.mu - m).abs() > 1e-12 * m {
                return Err(inconsistent(family, "requires mu = M and nu = 1"));
            }
            let center = place(&mut rng)?;
            let obj = Objective::Cone {
                center: center.clone(),
                slope: m,
            };
            (obj, center, 0.0)
        }
        Family::Quadratic => {
            if params.nu != Exponent::TWO || params.mu <= 0.0 {
                return Err(inconsistent(family, "requires mu > 0 and nu = 2"));
            }
            if let Some(l) = params.smoothness {
                if (l - params.mu).abs() > 1e-12 * l {
                    return Err(inconsistent(family, "requires L = mu"));
                }
            }
            let need = params.mu * set.diameter();
            if m < need * (1.0 - 1e-12) {
                return Err(inconsistent(
                    family,
                    format!("M = {m} is below mu * diam(S) = {need}"),
                ));
            }
            let center = place(&mut rng)?;
            let obj = Objective::Quadratic {
                center: center.clone(),
                curvature: params.mu,
            };
            (obj, center, 0.0)
        }
        Family::PiecewiseLinear => {
            let FeasibleSet::Interval { a, b } = set else {
                return Err(inconsistent(family, "requires an interval"));
            };
            if params.mu != 0.0 {
                return Err(inconsistent(family, "has no strong growth; set mu = 0"));
            }
            let ps = random_pieces(&mut rng, pieces, m, *a, *b);
            let (x, v) = minimize_max_affine(&ps, *a, *b);
            (Objective::MaxAffine { pieces: ps }, vec![x], v)
        }
        Family::SeparablePiecewiseLinear => {
            let FeasibleSet::Box { bounds } = set else {
                return Err(inconsistent(family, "requires a box"));
            };
            if params.mu != 0.0 {
                return Err(inconsistent(family, "has no strong growth; set mu = 0"));
            }
            let mut terms = Vec::with_capacity(bounds.len());
            let mut x = Vec::with_capacity(bounds.len());
            let mut total = 0.0;
            for (a, b) in bounds {
                let ps = random_pieces(&mut rng, pieces, m, *a, *b);
                let (xi, vi) = minimize_max_affine(&ps, *a, *b);
                terms.push(ps);
                x.push(xi);
                total += vi;
            }
            (Objective::Separable { terms }, x, total)
        }
    };

    Ok(ProblemInstance {
        objective,
        set: set.clone(),
        params: params.clone(),
        minimizer: Some(minimizer),
        optimum: Some(optimum),
        spec: Some(spec.clone()),
    })
}

/// Each piece passes through a random point of the graph band over `[a, b]`;
/// slopes are drawn from `[-1.25 M, 1.25 M]` and clipped to `[-M, M]`.
fn random_pieces(rng: &mut ChaCha8Rng, k: usize, m: f64, a: f64, b: f64) -> Vec<AffinePiece> {
    (0..k)
        .map(|_| {
            let slope = rng.random_range(-1.25 * m..=1.25 * m).clamp(-m, m);
            let t = rng.random_range(a..=b);
            let v = rng.random_range(0.0..=0.25 * m * (b - a));
            AffinePiece::new(slope, v - slope * t)
        })
        .collect()
}

/// `M · ‖p_i - p_{n+1}‖` per barycentric coordinate.
pub fn coordwise_lipschitz(simplex: &Simplex, lipschitz: f64) -> Vec<f64> {
    simplex.coordwise_lipschitz(lipschitz)
}

/// `x(α) = Σ α_i p_i + (1 - Σ α_i) p_{n+1}`.
pub fn to_cartesian(simplex: &Simplex, alphas: &BarycentricPoint) -> Result<Vec<f64>> {
    simplex.to_cartesian(alphas)
}
