use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist, norm};

/// Tolerance used for membership tests and barycentric invariants.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Barycentric coefficients `α_1..α_n` of a point in an n-simplex.
///
/// The weight of the last vertex is implicit: `1 - Σ α_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarycentricPoint {
    alphas: Vec<f64>,
}

impl BarycentricPoint {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        Self::check(&alphas)?;
        Ok(Self { alphas })
    }

    pub(crate) fn check(alphas: &[f64]) -> Result<()> {
        if let Some(a) = alphas.iter().find(|a| !a.is_finite() || **a < -1e-12) {
            return Err(Error::InvalidBarycentric(format!("negative coefficient {a}")));
        }
        let sum: f64 = alphas.iter().sum();
        if sum > 1.0 + 1e-12 {
            return Err(Error::InvalidBarycentric(format!(
                "coefficients sum to {sum} > 1"
            )));
        }
        Ok(())
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.alphas
    }
}

/// Euclidean n-simplex spanned by `n + 1` affinely independent vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SimplexRepr", into = "SimplexRepr")]
pub struct Simplex {
    vertices: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct SimplexRepr {
    vertices: Vec<Vec<f64>>,
}

impl TryFrom<SimplexRepr> for Simplex {
    type Error = Error;
    fn try_from(r: SimplexRepr) -> Result<Self> {
        Simplex::new(r.vertices)
    }
}

impl From<Simplex> for SimplexRepr {
    fn from(s: Simplex) -> Self {
        SimplexRepr {
            vertices: s.vertices,
        }
    }
}

impl Simplex {
    pub fn new(vertices: Vec<Vec<f64>>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::InvalidSet(
                "a simplex needs at least two vertices".into(),
            ));
        }
        let d = vertices[0].len();
        if d == 0 || vertices.iter().any(|v| v.len() != d) {
            return Err(Error::InvalidSet("vertices of unequal dimension".into()));
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidSet("non-finite vertex coordinate".into()));
        }
        let n = vertices.len() - 1;
        if n > d {
            return Err(Error::InvalidSet(format!(
                "{} vertices cannot be affinely independent in R^{d}",
                n + 1
            )));
        }
        let s = Simplex { vertices };
        let sv = s.edge_matrix().singular_values();
        let max = sv.max();
        let min = sv.min();
        if !(min > 1e-10 * max.max(1.0)) {
            return Err(Error::InvalidSet("vertices are affinely dependent".into()));
        }
        Ok(s)
    }

    /// The standard corner simplex `{x ≥ 0, Σ x ≤ 1}` in `R^n`: `p_i = e_i`, `p_{n+1} = 0`.
    pub fn canonical(n: usize) -> Self {
        assert!(n >= 1, "simplex dimension must be positive");
        let mut vertices: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut v = vec![0.0; n];
                v[i] = 1.0;
                v
            })
            .collect();
        vertices.push(vec![0.0; n]);
        Simplex { vertices }
    }

    /// Number of barycentric coordinates (the simplex dimension).
    pub fn n(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn ambient_dim(&self) -> usize {
        self.vertices[0].len()
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    fn last(&self) -> &[f64] {
        &self.vertices[self.n()]
    }

    /// Columns `p_i - p_{n+1}`.
    fn edge_matrix(&self) -> DMatrix<f64> {
        let last = self.last();
        DMatrix::from_fn(self.ambient_dim(), self.n(), |r, c| {
            self.vertices[c][r] - last[r]
        })
    }

    /// True when `‖p_i‖ = 1` for `i ≤ n` and `p_{n+1} = 0`.
    pub fn is_unit_normalized(&self) -> bool {
        self.last().iter().all(|c| *c == 0.0)
            && self.vertices[..self.n()]
                .iter()
                .all(|v| (norm(v) - 1.0).abs() <= 1e-12)
    }

    fn is_corner(&self) -> bool {
        let n = self.n();
        self.ambient_dim() == n
            && self.last().iter().all(|c| *c == 0.0)
            && self.vertices[..n]
                .iter()
                .enumerate()
                .all(|(i, v)| v.iter().enumerate().all(|(k, c)| *c == if k == i { 1.0 } else { 0.0 }))
    }

    /// `‖p_i - p_{n+1}‖` for `i = 1..n`.
    pub fn edge_lengths(&self) -> Vec<f64> {
        let last = self.last();
        self.vertices[..self.n()]
            .iter()
            .map(|v| dist(v, last))
            .collect()
    }

    /// `x(α) = Σ α_i p_i + (1 - Σ α_i) p_{n+1}`.
    pub fn to_cartesian(&self, point: &BarycentricPoint) -> Result<Vec<f64>> {
        if point.alphas.len() != self.n() {
            return Err(Error::InvalidBarycentric(format!(
                "expected {} coefficients, got {}",
                self.n(),
                point.alphas.len()
            )));
        }
        Ok(self.combine(&point.alphas))
    }

    /// Affine combination without invariant checks; callers guarantee validity.
    pub(crate) fn combine(&self, alphas: &[f64]) -> Vec<f64> {
        let last = self.last();
        let rest = 1.0 - alphas.iter().sum::<f64>();
        let mut x: Vec<f64> = last.iter().map(|c| rest * c).collect();
        for (a, v) in alphas.iter().zip(&self.vertices) {
            if *a != 0.0 {
                for (xi, vi) in x.iter_mut().zip(v) {
                    *xi += a * vi;
                }
            }
        }
        x
    }

    /// Least-squares barycentric coordinates of `x` together with the residual norm.
    pub fn to_barycentric(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        if x.len() != self.ambient_dim() {
            return Err(Error::InvalidBarycentric("dimension mismatch".into()));
        }
        if self.is_corner() {
            return Ok((x.to_vec(), 0.0));
        }
        let a = self.edge_matrix();
        let last = self.last();
        let b = DVector::from_iterator(x.len(), x.iter().zip(last).map(|(xi, li)| xi - li));
        let alphas = a
            .clone()
            .svd(true, true)
            .solve(&b, 1e-14)
            .map_err(|e| Error::InvalidSet(e.to_string()))?;
        let residual = (&a * &alphas - &b).norm();
        Ok((alphas.iter().copied().collect(), residual))
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self.to_barycentric(x) {
            Ok((alphas, residual)) => {
                residual <= tol
                    && alphas.iter().all(|a| *a >= -tol)
                    && alphas.iter().sum::<f64>() <= 1.0 + tol
            }
            Err(_) => false,
        }
    }

    /// `M · ‖p_i - p_{n+1}‖` for every barycentric coordinate.
    pub fn coordwise_lipschitz(&self, lipschitz: f64) -> Vec<f64> {
        self.edge_lengths()
            .into_iter()
            .map(|l| lipschitz * l)
            .collect()
    }

    pub fn barycenter(&self) -> Vec<f64> {
        let w = 1.0 / (self.n() + 1) as f64;
        self.combine(&vec![w; self.n()])
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d = d.max(dist(a, b));
            }
        }
        d
    }

    /// Euclidean projection onto the simplex.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        if self.is_corner() {
            return project_corner(x);
        }
        // Projected gradient on the vertex weights; the weights live on the probability simplex.
        let m = self.vertices.len();
        let gram = DMatrix::from_fn(m, m, |i, j| {
            self.vertices[i]
                .iter()
                .zip(&self.vertices[j])
                .map(|(a, b)| a * b)
                .sum::<f64>()
        });
        let step = 1.0 / gram.symmetric_eigenvalues().max().max(1e-12);
        let vx = DVector::from_iterator(
            m,
            self.vertices
                .iter()
                .map(|v| v.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()),
        );
        let mut w = DVector::from_element(m, 1.0 / m as f64);
        let mut y = w.clone();
        let mut t = 1.0_f64;
        for _ in 0..5000 {
            let grad = &gram * &y - &vx;
            let next = DVector::from_vec(project_probability(
                &(&y - step * grad).iter().copied().collect::<Vec<_>>(),
            ));
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &next + ((t - 1.0) / t_next) * (&next - &w);
            let moved = (&next - &w).norm();
            w = next;
            t = t_next;
            if moved < 1e-15 {
                break;
            }
        }
        let d = self.ambient_dim();
        let mut out = vec![0.0; d];
        for (wi, v) in w.iter().zip(&self.vertices) {
            for (o, c) in out.iter_mut().zip(v) {
                *o += wi * c;
            }
        }
        out
    }

    /// Uniform sample (Dirichlet(1, …, 1) weights).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut w: Vec<f64> = (0..=self.n()).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        self.combine(&w[..self.n()])
    }
}

/// Projection onto the probability simplex `{w ≥ 0, Σ w = 1}` (sort-based).
pub(crate) fn project_probability(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|vi| (vi - theta).max(0.0)).collect()
}

/// Projection onto `{x ≥ 0, Σ x ≤ 1}`.
fn project_corner(x: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= 1.0 {
        clipped
    } else {
        project_probability(x)
    }
}

/// Compact convex feasible sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeasibleSet {
    Interval { a: f64, b: f64 },
    Box { bounds: Vec<(f64, f64)> },
    Ball { center: Vec<f64>, radius: f64 },
    Simplex(Simplex),
}

impl FeasibleSet {
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        let s = FeasibleSet::Interval { a, b };
        s.validate()?;
        Ok(s)
    }

    pub fn cube(n: usize, lo: f64, hi: f64) -> Result<Self> {
        let s = FeasibleSet::Box {
            bounds: vec![(lo, hi); n],
        };
        s.validate()?;
        Ok(s)
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let s = FeasibleSet::Ball { center, radius };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FeasibleSet::Interval { a, b } => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(Error::InvalidSet(format!("interval [{a}, {b}] is empty")));
                }
            }
            FeasibleSet::Box { bounds } => {
                if bounds.is_empty() {
                    return Err(Error::InvalidSet("box has no coordinates".into()));
                }
                if let Some((a, b)) = bounds
                    .iter()
                    .find(|(a, b)| !(a.is_finite() && b.is_finite() && a < b))
                {
                    return Err(Error::InvalidSet(format!(
                        "degenerate box side [{a}, {b}]"
                    )));
                }
            }
            FeasibleSet::Ball { center, radius } => {
                if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidSet("invalid ball center".into()));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidSet(format!("ball radius {radius} must be > 0")));
                }
            }
            FeasibleSet::Simplex(s) => {
                Simplex::new(s.vertices.clone())?;
            }
        }
        Ok(())
    }

    /// Ambient dimension of the points of the set.
    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Interval { .. } => 1,
            FeasibleSet::Box { bounds } => bounds.len(),
            FeasibleSet::Ball { center, .. } => center.len(),
            FeasibleSet::Simplex(s) => s.ambient_dim(),
        }
    }

    /// Per-coordinate bounds for intervals and boxes.
    pub fn box_bounds(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            FeasibleSet::Interval { a, b } => Some(vec![(*a, *b)]),
            FeasibleSet::Box { bounds } => Some(bounds.clone()),
            _ => None,
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim() || x.iter().any(|c| !c.is_finite()) {
            return false;
        }
        match self {
            FeasibleSet::Interval { a, b } => x[0] >= a - tol && x[0] <= b + tol,
            FeasibleSet::Box { bounds } => bounds
                .iter()
                .zip(x)
                .all(|((a, b), xi)| *xi >= a - tol && *xi <= b + tol),
            FeasibleSet::Ball { center, radius } => dist(x, center) <= radius + tol,
            FeasibleSet::Simplex(s) => s.contains(x, tol),
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::InvalidParameter {
                name: "x",
                reason: format!("expected dimension {}, got {}", self.dim(), x.len()),
            });
        }
        Ok(match self {
            FeasibleSet::Interval { a, b } => vec![x[0].clamp(*a, *b)],
            FeasibleSet::Box { bounds } => bounds
                .iter()
                .zip(x)
                .map(|((a, b), xi)| xi.clamp(*a, *b))
                .collect(),
            FeasibleSet::Ball { center, radius } => {
                let d = dist(x, center);
                if d <= *radius {
                    x.to_vec()
                } else {
                    center
                        .iter()
                        .zip(x)
                        .map(|(c, xi)| c + (xi - c) * radius / d)
                        .collect()
                }
            }
            FeasibleSet::Simplex(s) => s.project(x),
        })
    }

    /// A canonical interior point: midpoint, box center, ball center or simplex barycenter.
    pub fn center(&self) -> Vec<f64> {
        match self {
            FeasibleSet::Interval { a, b } => vec![0.5 * (a + b)],
            FeasibleSet::Box { bounds } => bounds.iter().map(|(a, b)| 0.5 * (a + b)).collect(),
            FeasibleSet::Ball { center, .. } => center.clone(),
            FeasibleSet::Simplex(s) => s.barycenter(),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            FeasibleSet::Interval { a, b } => b - a,
            FeasibleSet::Box { bounds } => bounds
                .iter()
                .map(|(a, b)| (b - a) * (b - a))
                .sum::<f64>()
                .sqrt(),
            FeasibleSet::Ball { radius, .. } => 2.0 * radius,
            FeasibleSet::Simplex(s) => s.diameter(),
        }
    }

    /// Largest distance from `p` to a point of the set.
    pub fn max_distance_from(&self, p: &[f64]) -> f64 {
        match self {
            FeasibleSet::Interval { a, b } => (p[0] - a).abs().max((p[0] - b).abs()),
            FeasibleSet::Box { bounds } => bounds
                .iter()
                .zip(p)
                .map(|((a, b), pi)| {
                    let m = (pi - a).abs().max((pi - b).abs());
                    m * m
                })
                .sum::<f64>()
                .sqrt(),
            FeasibleSet::Ball { center, radius } => dist(p, center) + radius,
            FeasibleSet::Simplex(s) => s
                .vertices()
                .iter()
                .map(|v| dist(v, p))
                .fold(0.0, f64::max),
        }
    }

    /// Uniform sample from the set.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            FeasibleSet::Interval { a, b } => vec![rng.random_range(*a..=*b)],
            FeasibleSet::Box { bounds } => bounds
                .iter()
                .map(|(a, b)| rng.random_range(*a..=*b))
                .collect(),
            FeasibleSet::Ball { center, radius } => {
                let u = sample_unit_ball(center.len(), rng);
                center.iter().zip(u).map(|(c, ui)| c + radius * ui).collect()
            }
            FeasibleSet::Simplex(s) => s.sample(rng),
        }
    }

    pub fn as_simplex(&self) -> Option<&Simplex> {
        match self {
            FeasibleSet::Simplex(s) => Some(s),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FeasibleSet::Interval { .. } => "interval",
            FeasibleSet::Box { .. } => "box",
            FeasibleSet::Ball { .. } => "ball",
            FeasibleSet::Simplex(_) => "simplex",
        }
    }
}

/// Uniform point of the unit Euclidean ball: normalized Gaussian direction scaled by `U^{1/n}`.
pub fn sample_unit_ball<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut dir = sample_unit_sphere(n, rng);
    let u: f64 = rng.random();
    let r = if n == 1 { u } else { u.powf(1.0 / n as f64) };
    dir.iter_mut().for_each(|d| *d *= r);
    dir
}

/// Uniform point of the unit sphere `S^{n-1}`.
pub fn sample_unit_sphere<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let len = norm(&g);
        if len > 1e-300 {
            return g.into_iter().map(|v| v / len).collect();
        }
    }
}
