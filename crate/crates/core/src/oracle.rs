//! Zeroth-order evaluation channels returning `f(x) + ξ` with `|ξ| ≤ δ`.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::dist;
use crate::problem::{
    sample_unit_ball, ClassParams, Exponent, FeasibleSet, ProblemInstance, MEMBERSHIP_TOL,
};

/// Tolerance used to match planted points.
pub const PLANT_TOL: f64 = 1e-12;

/// A counted evaluation channel. One algorithm run owns one oracle exclusively.
pub trait Oracle {
    /// Noisy value at a feasible point; rejects points outside the set.
    fn evaluate(&mut self, x: &[f64]) -> Result<f64>;

    /// Noisy value without the membership check. The objectives are defined on the
    /// whole space, which smoothing and finite differences rely on.
    fn evaluate_extended(&mut self, x: &[f64]) -> f64;

    /// Noiseless value of the underlying function, not counted.
    fn true_value(&self, x: &[f64]) -> f64;

    fn calls(&self) -> u64;

    /// Bound `δ` on `|ξ|`.
    fn noise_bound(&self) -> f64;

    fn set(&self) -> &FeasibleSet;

    fn params(&self) -> &ClassParams;

    fn minimizer(&self) -> Option<&[f64]>;

    fn optimum(&self) -> Option<f64>;

    /// True optimality gap at `x`, when the optimum is known.
    fn gap(&self, x: &[f64]) -> Option<f64> {
        self.optimum().map(|f| self.true_value(x) - f)
    }
}

impl<O: Oracle + ?Sized> Oracle for &mut O {
    fn evaluate(&mut self, x: &[f64]) -> Result<f64> {
        (**self).evaluate(x)
    }
    fn evaluate_extended(&mut self, x: &[f64]) -> f64 {
        (**self).evaluate_extended(x)
    }
    fn true_value(&self, x: &[f64]) -> f64 {
        (**self).true_value(x)
    }
    fn calls(&self) -> u64 {
        (**self).calls()
    }
    fn noise_bound(&self) -> f64 {
        (**self).noise_bound()
    }
    fn set(&self) -> &FeasibleSet {
        (**self).set()
    }
    fn params(&self) -> &ClassParams {
        (**self).params()
    }
    fn minimizer(&self) -> Option<&[f64]> {
        (**self).minimizer()
    }
    fn optimum(&self) -> Option<f64> {
        (**self).optimum()
    }
}

/// How the additive noise `ξ` is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum NoisePolicy {
    Zero,
    /// `ξ ~ U[-δ, δ]` from a seeded stream.
    UniformBounded { delta: f64, seed: u64 },
    /// `+δ` where the true gap is at most `threshold`, `-δ` elsewhere. This lifts
    /// good points and lowers bad ones, so it needs the optimum.
    AdversarialSign { delta: f64, threshold: f64 },
    /// `+δ` on boosted points, `-δ` on suppressed points, zero elsewhere.
    AdversarialPlanted {
        delta: f64,
        boosted: Vec<Vec<f64>>,
        suppressed: Vec<Vec<f64>>,
    },
}

impl NoisePolicy {
    pub fn delta(&self) -> f64 {
        match self {
            NoisePolicy::Zero => 0.0,
            NoisePolicy::UniformBounded { delta, .. }
            | NoisePolicy::AdversarialSign { delta, .. }
            | NoisePolicy::AdversarialPlanted { delta, .. } => *delta,
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            NoisePolicy::Zero => "zero",
            NoisePolicy::UniformBounded { .. } => "uniform",
            NoisePolicy::AdversarialSign { .. } => "sign",
            NoisePolicy::AdversarialPlanted { .. } => "planted",
        }
    }

    fn validate(&self) -> Result<()> {
        let d = self.delta();
        if !(d.is_finite() && d >= 0.0) {
            return Err(invalid("delta", format!("{d} must be finite and >= 0")));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct LogLine<'a> {
    t: u64,
    x: &'a [f64],
    value: f64,
    cumulative_calls: u64,
}

/// Oracle over a problem instance with a pluggable noise policy.
pub struct NoisyOracle {
    instance: Arc<ProblemInstance>,
    policy: NoisePolicy,
    rng: ChaCha8Rng,
    calls: u64,
    log: Option<Box<dyn Write + Send>>,
}

impl fmt::Debug for NoisyOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NoisyOracle")
            .field("policy", &self.policy)
            .field("calls", &self.calls)
            .finish_non_exhaustive()
    }
}

impl NoisyOracle {
    pub fn new(instance: impl Into<Arc<ProblemInstance>>, policy: NoisePolicy) -> Result<Self> {
        policy.validate()?;
        let instance = instance.into();
        if let NoisePolicy::AdversarialSign { .. } = policy {
            if instance.optimum.is_none() {
                return Err(Error::UnknownMinimizer);
            }
        }
        let seed = match policy {
            NoisePolicy::UniformBounded { seed, .. } => seed,
            _ => 0,
        };
        Ok(Self {
            instance,
            policy,
            rng: ChaCha8Rng::seed_from_u64(seed),
            calls: 0,
            log: None,
        })
    }

    /// Noiseless oracle.
    pub fn exact(instance: impl Into<Arc<ProblemInstance>>) -> Self {
        Self::new(instance, NoisePolicy::Zero).expect("zero policy is always valid")
    }

    /// Streams every evaluation as a JSON line `{t, x, value, cumulative_calls}`.
    pub fn with_log(mut self, sink: Box<dyn Write + Send>) -> Self {
        self.log = Some(sink);
        self
    }

    pub fn instance(&self) -> &ProblemInstance {
        &self.instance
    }

    pub fn policy(&self) -> &NoisePolicy {
        &self.policy
    }

    fn noise(&mut self, x: &[f64], fx: f64) -> f64 {
        match &self.policy {
            NoisePolicy::Zero => 0.0,
            NoisePolicy::UniformBounded { delta, .. } => {
                if *delta == 0.0 {
                    0.0
                } else {
                    self.rng.random_range(-*delta..=*delta)
                }
            }
            NoisePolicy::AdversarialSign { delta, threshold } => {
                let opt = self.instance.optimum.expect("checked at construction");
                if fx - opt <= *threshold {
                    *delta
                } else {
                    -*delta
                }
            }
            NoisePolicy::AdversarialPlanted {
                delta,
                boosted,
                suppressed,
            } => {
                let hit = |set: &[Vec<f64>]| set.iter().any(|p| linf_close(p, x));
                if hit(suppressed) {
                    -*delta
                } else if hit(boosted) {
                    *delta
                } else {
                    0.0
                }
            }
        }
    }
}

fn linf_close(p: &[f64], x: &[f64]) -> bool {
    p.len() == x.len() && p.iter().zip(x).all(|(a, b)| (a - b).abs() <= PLANT_TOL)
}

impl Oracle for NoisyOracle {
    fn evaluate(&mut self, x: &[f64]) -> Result<f64> {
        if x.len() != self.instance.set.dim() || !self.instance.set.contains(x, MEMBERSHIP_TOL) {
            return Err(Error::OutsideSet(x.to_vec()));
        }
        Ok(self.evaluate_extended(x))
    }

    fn evaluate_extended(&mut self, x: &[f64]) -> f64 {
        let fx = self.instance.value(x);
        let value = fx + self.noise(x, fx);
        self.calls += 1;
        if let Some(sink) = self.log.as_mut() {
            let line = LogLine {
                t: self.calls - 1,
                x,
                value,
                cumulative_calls: self.calls,
            };
            // Logging is best effort; a broken sink must not change results.
            if let Ok(s) = serde_json::to_string(&line) {
                let _ = writeln!(sink, "{s}");
            }
        }
        value
    }

    fn true_value(&self, x: &[f64]) -> f64 {
        self.instance.value(x)
    }

    fn calls(&self) -> u64 {
        self.calls
    }

    fn noise_bound(&self) -> f64 {
        self.policy.delta()
    }

    fn set(&self) -> &FeasibleSet {
        &self.instance.set
    }

    fn params(&self) -> &ClassParams {
        &self.instance.params
    }

    fn minimizer(&self) -> Option<&[f64]> {
        self.instance.minimizer.as_deref()
    }

    fn optimum(&self) -> Option<f64> {
        self.instance.optimum
    }
}

/// `O_f(x) = O_g(x) + (μ/2)‖x - x*‖₂^ν`. The regularizer is deterministic, so the noise
/// bound is unchanged.
#[derive(Debug)]
pub struct RegularizedOracle<O> {
    base: O,
    center: Vec<f64>,
    mu: f64,
    nu: Exponent,
    params: ClassParams,
}

/// Adds `(μ, ν)` strong growth around the known minimizer of `base`.
pub fn regularized_oracle<O: Oracle>(base: O, mu: f64, nu: Exponent) -> Result<RegularizedOracle<O>> {
    RegularizedOracle::new(base, mu, nu)
}

impl<O: Oracle> RegularizedOracle<O> {
    pub fn new(base: O, mu: f64, nu: Exponent) -> Result<Self> {
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(invalid("mu", format!("{mu} must be >= 0")));
        }
        if nu.is_infinite() {
            return Err(invalid("nu", "the regularizer needs a finite exponent"));
        }
        let center = base.minimizer().ok_or(Error::UnknownMinimizer)?.to_vec();
        let mut params = base.params().clone();
        // Lipschitz constant of the regularizer on the set: (μν/2) diam^(ν-1).
        let diam = base.set().diameter();
        params.lipschitz += 0.5 * mu * nu.value() * diam.powf(nu.value() - 1.0);
        params.mu = mu;
        params.nu = nu;
        params.validate()?;
        Ok(Self {
            base,
            center,
            mu,
            nu,
            params,
        })
    }

    fn reg(&self, x: &[f64]) -> f64 {
        if self.mu == 0.0 {
            return 0.0;
        }
        0.5 * self.mu * dist(x, &self.center).powf(self.nu.value())
    }

    pub fn into_inner(self) -> O {
        self.base
    }
}

impl<O: Oracle> Oracle for RegularizedOracle<O> {
    fn evaluate(&mut self, x: &[f64]) -> Result<f64> {
        let v = self.base.evaluate(x)?;
        Ok(v + self.reg(x))
    }

    fn evaluate_extended(&mut self, x: &[f64]) -> f64 {
        self.base.evaluate_extended(x) + self.reg(x)
    }

    fn true_value(&self, x: &[f64]) -> f64 {
        self.base.true_value(x) + self.reg(x)
    }

    fn calls(&self) -> u64 {
        self.base.calls()
    }

    fn noise_bound(&self) -> f64 {
        self.base.noise_bound()
    }

    fn set(&self) -> &FeasibleSet {
        self.base.set()
    }

    fn params(&self) -> &ClassParams {
        &self.params
    }

    fn minimizer(&self) -> Option<&[f64]> {
        Some(&self.center)
    }

    fn optimum(&self) -> Option<f64> {
        self.base.optimum()
    }
}

/// Parameters of the Monte-Carlo ball-smoothing estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    /// Smoothing radius `γ`.
    pub gamma: f64,
    /// Base-oracle calls per estimate.
    pub samples: u64,
    /// Anticipated number of estimates requested by the outer algorithm.
    pub iterations: u64,
    /// Failure probability.
    pub beta: f64,
    /// Product of the partition constants.
    pub c1c2: f64,
}

impl SmoothingConfig {
    /// `γ = ε / (2M)`, which keeps the smoothed function within `ε/2` of the original.
    pub fn for_accuracy(eps: f64, lipschitz: f64, samples: u64) -> Result<Self> {
        if !(eps > 0.0 && lipschitz > 0.0) {
            return Err(invalid("eps", "eps and M must be positive"));
        }
        Ok(Self {
            gamma: eps / (2.0 * lipschitz),
            samples,
            iterations: 1,
            beta: 0.01,
            c1c2: 1.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(invalid("gamma", format!("{} must be >= 0", self.gamma)));
        }
        if self.samples == 0 {
            return Err(invalid("samples", "at least one sample is required"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(invalid("beta", format!("{} is not in (0, 1)", self.beta)));
        }
        if !(self.c1c2 > 0.0) {
            return Err(invalid("c1c2", "must be positive"));
        }
        Ok(())
    }

    /// Gradient-Lipschitz constant of the smoothed function, `√n M / γ`.
    pub fn smoothness(&self, n: usize, lipschitz: f64) -> f64 {
        (n as f64).sqrt() * lipschitz / self.gamma
    }
}

/// `N = ⌈n² T M² (c₁c₂)² / (β δ²) + 1/β⌉ + 1`.
pub fn mc_sample_count(n: usize, t: u64, lipschitz: f64, c1c2: f64, beta: f64, delta: f64) -> Result<u64> {
    if n == 0 || t == 0 {
        return Err(invalid("n", "n and T must be positive"));
    }
    if !(lipschitz > 0.0 && c1c2 > 0.0) {
        return Err(invalid("M", "M and c1c2 must be positive"));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid("beta", format!("{beta} is not in (0, 1)")));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid("delta", format!("{delta} must be positive")));
    }
    let n = n as f64;
    let v = n * n * t as f64 * lipschitz * lipschitz * c1c2 * c1c2 / (beta * delta * delta) + 1.0 / beta;
    let c = tolerant_ceil(v);
    if !(c.is_finite() && c < u64::MAX as f64 - 1.0) {
        return Err(Error::Overflow(format!("sample count {v:e}")));
    }
    Ok(c as u64 + 1)
}

/// Ceiling that ignores representation error just above an integer.
pub(crate) fn tolerant_ceil(v: f64) -> f64 {
    (v - 1e-9 * v.abs().max(1.0)).ceil()
}

/// `θ(x) = (1/N) Σ_j O_g(x + γ e_j)` with `e_j` uniform in the unit ball.
#[derive(Debug)]
pub struct SmoothingOracle<O> {
    base: O,
    cfg: SmoothingConfig,
    rng: ChaCha8Rng,
    params: ClassParams,
    calls: u64,
    below_theory: bool,
}

pub fn smoothing_oracle<O: Oracle>(base: O, cfg: SmoothingConfig, seed: u64) -> Result<SmoothingOracle<O>> {
    SmoothingOracle::new(base, cfg, seed)
}

impl<O: Oracle> SmoothingOracle<O> {
    pub fn new(base: O, cfg: SmoothingConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut params = base.params().clone();
        if cfg.gamma > 0.0 {
            params.smoothness = Some(cfg.smoothness(params.n, params.lipschitz));
        }
        let delta = base.noise_bound();
        let below_theory = if delta > 0.0 {
            let need = mc_sample_count(
                params.n,
                cfg.iterations,
                params.lipschitz,
                cfg.c1c2,
                cfg.beta,
                delta,
            )?;
            cfg.samples < need
        } else {
            false
        };
        Ok(Self {
            base,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            params,
            calls: 0,
            below_theory,
        })
    }

    /// Set when fewer samples are used than the concentration argument requires.
    pub fn below_theory(&self) -> bool {
        self.below_theory
    }

    pub fn config(&self) -> &SmoothingConfig {
        &self.cfg
    }

    /// Calls made to the wrapped oracle.
    pub fn base_calls(&self) -> u64 {
        self.base.calls()
    }

    pub fn into_inner(self) -> O {
        self.base
    }

    fn estimate(&mut self, x: &[f64]) -> f64 {
        let n = x.len();
        let mut y = x.to_vec();
        let mut sum = 0.0;
        for _ in 0..self.cfg.samples {
            if self.cfg.gamma > 0.0 {
                let e = sample_unit_ball(n, &mut self.rng);
                for ((yi, xi), ei) in y.iter_mut().zip(x).zip(&e) {
                    *yi = xi + self.cfg.gamma * ei;
                }
            }
            sum += self.base.evaluate_extended(&y);
        }
        self.calls += 1;
        sum / self.cfg.samples as f64
    }
}

impl<O: Oracle> Oracle for SmoothingOracle<O> {
    fn evaluate(&mut self, x: &[f64]) -> Result<f64> {
        let set = self.base.set();
        if x.len() != set.dim() || !set.contains(x, MEMBERSHIP_TOL) {
            return Err(Error::OutsideSet(x.to_vec()));
        }
        Ok(self.estimate(x))
    }

    fn evaluate_extended(&mut self, x: &[f64]) -> f64 {
        self.estimate(x)
    }

    /// Value of the unsmoothed function; the smoothed one has no closed form.
    fn true_value(&self, x: &[f64]) -> f64 {
        self.base.true_value(x)
    }

    fn calls(&self) -> u64 {
        self.calls
    }

    fn noise_bound(&self) -> f64 {
        self.base.noise_bound()
    }

    fn set(&self) -> &FeasibleSet {
        self.base.set()
    }

    fn params(&self) -> &ClassParams {
        &self.params
    }

    fn minimizer(&self) -> Option<&[f64]> {
        self.base.minimizer()
    }

    fn optimum(&self) -> Option<f64> {
        self.base.optimum()
    }
}

#[cfg(test)]
mod tests;
