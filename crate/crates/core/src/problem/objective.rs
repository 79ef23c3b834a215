use serde::{Deserialize, Serialize};

use crate::linalg::{dist, dot};

/// One affine piece `slope * t + intercept` of a 1-D max-affine function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffinePiece {
    pub slope: f64,
    pub intercept: f64,
}

impl AffinePiece {
    pub fn new(slope: f64, intercept: f64) -> Self {
        Self { slope, intercept }
    }

    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        self.slope * t + self.intercept
    }
}

/// Deterministic objectives. All of them are defined on the whole space, so
/// evaluation outside the feasible set (smoothing, finite differences) is well defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    /// `slope · ‖x - center‖₂`
    Cone { center: Vec<f64>, slope: f64 },
    /// `(curvature / 2) · ‖x - center‖₂²`
    Quadratic { center: Vec<f64>, curvature: f64 },
    /// `max_k (s_k x + b_k)` in one dimension.
    MaxAffine { pieces: Vec<AffinePiece> },
    /// `Σ_i max_k (s_ik x_i + b_ik)`
    Separable { terms: Vec<Vec<AffinePiece>> },
    /// `⟨w, x⟩ + bias`
    Affine { weights: Vec<f64>, bias: f64 },
    Constant { value: f64 },
}

impl Objective {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Objective::Cone { center, slope } => slope * dist(x, center),
            Objective::Quadratic { center, curvature } => {
                let d = dist(x, center);
                0.5 * curvature * d * d
            }
            Objective::MaxAffine { pieces } => max_affine(pieces, x[0]),
            Objective::Separable { terms } => terms
                .iter()
                .zip(x)
                .map(|(pieces, xi)| max_affine(pieces, *xi))
                .sum(),
            Objective::Affine { weights, bias } => dot(weights, x) + bias,
            Objective::Constant { value } => *value,
        }
    }

    /// The 1-D objective `|x - center|` scaled by `slope`.
    pub fn abs_1d(center: f64, slope: f64) -> Self {
        Objective::Cone {
            center: vec![center],
            slope,
        }
    }
}

pub(crate) fn max_affine(pieces: &[AffinePiece], t: f64) -> f64 {
    pieces
        .iter()
        .map(|p| p.at(t))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Exact minimizer of a max-affine function over `[a, b]` by walking its upper envelope
/// from the left end until the active slope turns nonnegative.
pub fn minimize_max_affine(pieces: &[AffinePiece], a: f64, b: f64) -> (f64, f64) {
    assert!(!pieces.is_empty(), "max-affine function needs at least one piece");
    let top = max_affine(pieces, a);
    // Among pieces active at `a`, the steepest one dominates just to the right.
    let mut cur = pieces
        .iter()
        .enumerate()
        .filter(|(_, p)| p.at(a) >= top - 1e-12 * (1.0 + top.abs()))
        .max_by(|(_, p), (_, q)| p.slope.total_cmp(&q.slope))
        .map(|(i, _)| i)
        .expect("non-empty");
    let mut x = a;
    loop {
        let active = pieces[cur];
        if active.slope >= 0.0 {
            return (x, max_affine(pieces, x));
        }
        let mut next: Option<(f64, usize)> = None;
        for (k, p) in pieces.iter().enumerate() {
            if p.slope <= active.slope {
                continue;
            }
            let t = (active.intercept - p.intercept) / (p.slope - active.slope);
            if t < x - 1e-15 {
                continue;
            }
            next = match next {
                Some((tb, kb)) if t > tb || (t == tb && p.slope <= pieces[kb].slope) => {
                    Some((tb, kb))
                }
                _ => Some((t, k)),
            };
        }
        match next {
            Some((t, k)) if t < b => {
                x = t.max(x);
                cur = k;
            }
            _ => return (b, max_affine(pieces, b)),
        }
    }
}
