//! Convex constraint sets and exact ray–constraint intersection.
//!
//! Every constraint is written as `h(x) <= 0`:
//!
//! - linear: `h(x) = a^T x - b`
//! - quadratic: `h(x) = 1/2 x^T P x + q^T x - b` with `P` symmetric PSD
//!
//! A [`ConstraintSet`] optionally carries a strictly interior point `p`. The
//! central quantity is the ray bound: the largest `alpha >= 0` such that
//! `p + alpha * r` still satisfies every constraint.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Minimum slack required of a stored interior point.
pub const INTERIOR_MARGIN: f64 = 1e-7;

/// Default feasibility tolerance for sets with only linear constraints.
pub const LINEAR_FEASIBILITY_TOL: f64 = 1e-9;

/// Default feasibility tolerance once a quadratic constraint is present.
pub const QUADRATIC_FEASIBILITY_TOL: f64 = 1e-7;

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Half-space `a^T x <= b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    a: DVector<f64>,
    b: f64,
}

impl LinearConstraint {
    pub fn new(a: DVector<f64>, b: f64) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::InvalidConstraint("empty normal vector".into()));
        }
        if !a.iter().all(|v| v.is_finite()) || !b.is_finite() {
            return Err(Error::InvalidConstraint("non-finite linear constraint".into()));
        }
        if a.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidConstraint("zero normal vector".into()));
        }
        Ok(Self { a, b })
    }

    pub fn from_slice(a: &[f64], b: f64) -> Result<Self> {
        Self::new(DVector::from_column_slice(a), b)
    }

    pub fn a(&self) -> &DVector<f64> {
        &self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// `a^T x - b`.
    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.eval_unchecked(x))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &DVector<f64>) -> f64 {
        self.a.dot(x) - self.b
    }

    /// Gradient of `h`, constant for a half-space.
    pub fn gradient(&self) -> &DVector<f64> {
        &self.a
    }

    /// Distance along `r` from `p` to the hyperplane, or `+inf` when the ray
    /// never reaches it. `p` must satisfy the constraint strictly.
    pub fn ray_bound(&self, p: &DVector<f64>, r: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), p.len())?;
        check_dim(self.dim(), r.len())?;
        let h = self.eval_unchecked(p);
        if !(h < 0.0) {
            return Err(Error::NotInterior { index: 0, value: h });
        }
        Ok(linear_bound(-h, self.a.dot(r)))
    }
}

/// `slack = b - a^T p > 0`, `rate = a^T r`.
#[inline]
pub(crate) fn linear_bound(slack: f64, rate: f64) -> f64 {
    if rate > 0.0 {
        slack / rate
    } else {
        f64::INFINITY
    }
}

/// Convex quadratic constraint `1/2 x^T P x + q^T x <= b`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticConstraint {
    p: DMatrix<f64>,
    q: DVector<f64>,
    b: f64,
    p_scale: f64,
}

impl QuadraticConstraint {
    /// Validates symmetry (relative 1e-12) and positive semidefiniteness
    /// (smallest eigenvalue >= -1e-10 * largest).
    pub fn new(p: DMatrix<f64>, q: DVector<f64>, b: f64) -> Result<Self> {
        let n = q.len();
        if n == 0 {
            return Err(Error::InvalidConstraint("empty quadratic constraint".into()));
        }
        if p.nrows() != n || p.ncols() != n {
            return Err(Error::InvalidConstraint(format!(
                "P is {}x{} but q has length {n}",
                p.nrows(),
                p.ncols()
            )));
        }
        if !p.iter().chain(q.iter()).all(|v| v.is_finite()) || !b.is_finite() {
            return Err(Error::InvalidConstraint("non-finite quadratic constraint".into()));
        }
        let p_scale = p.amax();
        for i in 0..n {
            for j in (i + 1)..n {
                if (p[(i, j)] - p[(j, i)]).abs() > 1e-12 * p_scale {
                    return Err(Error::InvalidConstraint(format!(
                        "P is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if p_scale > 0.0 {
            let eig = p.clone().symmetric_eigen().eigenvalues;
            let max = eig.max();
            let min = eig.min();
            if min < -1e-10 * max.max(0.0) - f64::MIN_POSITIVE {
                return Err(Error::InvalidConstraint(format!(
                    "P is not positive semidefinite (eigenvalues in [{min:e}, {max:e}])"
                )));
            }
        }
        Ok(Self { p, q, b, p_scale })
    }

    /// For matrices that are PSD by construction (congruences and principal
    /// submatrices of validated constraints).
    pub(crate) fn new_psd_unchecked(p: DMatrix<f64>, q: DVector<f64>, b: f64) -> Self {
        let p_scale = p.amax();
        Self { p, q, b, p_scale }
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// `1/2 x^T P x + q^T x - b`.
    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.eval_unchecked(x))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x) - self.b
    }

    /// `P x + q`.
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.p * x + &self.q
    }

    /// Larger root of the ray equation, or `+inf` when the ray stays inside.
    pub fn ray_bound(&self, p: &DVector<f64>, r: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), p.len())?;
        check_dim(self.dim(), r.len())?;
        let kappa = self.eval_unchecked(p);
        if !(kappa < 0.0) {
            return Err(Error::NotInterior { index: 0, value: kappa });
        }
        let grad_p = self.gradient(p);
        let pr = &self.p * r;
        self.bound_from_terms(r.dot(&pr), grad_p.dot(r), kappa, r.norm_squared())
    }

    /// `gamma = r^T P r`, `beta = (P p + q)^T r`, `kappa = h(p) < 0`.
    #[inline]
    pub(crate) fn bound_from_terms(
        &self,
        gamma: f64,
        beta: f64,
        kappa: f64,
        r_norm_sq: f64,
    ) -> Result<f64> {
        if gamma < -1e-10 * self.p_scale * r_norm_sq {
            return Err(Error::NotPsd(gamma));
        }
        Ok(quadratic_bound(gamma.max(0.0), beta, kappa))
    }
}

/// Positive root of `gamma a^2 + 2 beta a + 2 kappa = 0` for `gamma >= 0`,
/// `kappa < 0`; `+inf` when no positive root exists.
#[inline]
pub(crate) fn quadratic_bound(gamma: f64, beta: f64, kappa: f64) -> f64 {
    let disc = beta * beta - 2.0 * gamma * kappa;
    if beta > 0.0 {
        // Cancellation-free form; reduces to -kappa / beta when gamma = 0.
        -2.0 * kappa / (beta + disc.sqrt())
    } else if gamma > 0.0 {
        (-beta + disc.sqrt()) / gamma
    } else {
        f64::INFINITY
    }
}

/// Borrowed view of either constraint kind.
#[derive(Debug, Clone, Copy)]
pub enum Constraint<'a> {
    Linear(&'a LinearConstraint),
    Quadratic(&'a QuadraticConstraint),
}

impl Constraint<'_> {
    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        match self {
            Constraint::Linear(c) => c.eval(x),
            Constraint::Quadratic(c) => c.eval(x),
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Constraint::Linear(c) => c.gradient().clone(),
            Constraint::Quadratic(c) => c.gradient(x),
        }
    }

    pub fn ray_bound(&self, p: &DVector<f64>, r: &DVector<f64>) -> Result<f64> {
        match self {
            Constraint::Linear(c) => c.ray_bound(p, r),
            Constraint::Quadratic(c) => c.ray_bound(p, r),
        }
    }

    pub fn b(&self) -> f64 {
        match self {
            Constraint::Linear(c) => c.b(),
            Constraint::Quadratic(c) => c.b(),
        }
    }
}

/// Position of a constraint in storage order: all linear constraints first,
/// then all quadratic ones. The derived ordering follows storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConstraintId {
    Linear(usize),
    Quadratic(usize),
}

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintId::Linear(i) => write!(f, "linear[{i}]"),
            ConstraintId::Quadratic(i) => write!(f, "quadratic[{i}]"),
        }
    }
}

/// Distance from the interior point to the boundary along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayBound {
    pub value: f64,
    pub active: Option<ConstraintId>,
}

impl RayBound {
    pub const INFINITE: RayBound = RayBound {
        value: f64::INFINITY,
        active: None,
    };

    pub fn finite(value: f64, active: ConstraintId) -> Self {
        Self {
            value,
            active: Some(active),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

/// Intersection of convex constraints `h_i(x) <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    dim: usize,
    linear: Vec<LinearConstraint>,
    quadratic: Vec<QuadraticConstraint>,
    interior_point: Option<DVector<f64>>,
}

impl ConstraintSet {
    pub fn new(
        dim: usize,
        linear: Vec<LinearConstraint>,
        quadratic: Vec<QuadraticConstraint>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if linear.is_empty() && quadratic.is_empty() {
            return Err(Error::InvalidArgument(
                "a constraint set needs at least one constraint".into(),
            ));
        }
        for c in &linear {
            check_dim(dim, c.dim())?;
        }
        for c in &quadratic {
            check_dim(dim, c.dim())?;
        }
        Ok(Self {
            dim,
            linear,
            quadratic,
            interior_point: None,
        })
    }

    pub fn linear_only(dim: usize, linear: Vec<LinearConstraint>) -> Result<Self> {
        Self::new(dim, linear, Vec::new())
    }

    pub fn quadratic_only(dim: usize, quadratic: Vec<QuadraticConstraint>) -> Result<Self> {
        Self::new(dim, Vec::new(), quadratic)
    }

    /// Attaches an interior point after checking every constraint is at most
    /// `-INTERIOR_MARGIN` there.
    pub fn with_interior_point(mut self, p: DVector<f64>) -> Result<Self> {
        check_dim(self.dim, p.len())?;
        if let Some((id, value)) = self.most_violated(&p) {
            if value > -INTERIOR_MARGIN {
                return Err(Error::NotInterior {
                    index: self.flat_index(id),
                    value,
                });
            }
        }
        self.interior_point = Some(p);
        Ok(self)
    }

    /// Searches for an interior point and stores it.
    pub fn ensure_interior_point(self, margin: f64, max_iters: usize) -> Result<Self> {
        if let Some(p) = &self.interior_point {
            if self.max_violation(p) <= -margin {
                return Ok(self);
            }
        }
        let p = self.find_interior_point(margin.max(INTERIOR_MARGIN), max_iters)?;
        self.with_interior_point(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn linear(&self) -> &[LinearConstraint] {
        &self.linear
    }

    pub fn quadratic(&self) -> &[QuadraticConstraint] {
        &self.quadratic
    }

    pub fn interior_point(&self) -> Option<&DVector<f64>> {
        self.interior_point.as_ref()
    }

    /// Number of constraints `m`.
    pub fn len(&self) -> usize {
        self.linear.len() + self.quadratic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn has_quadratic(&self) -> bool {
        !self.quadratic.is_empty()
    }

    /// Feasibility tolerance appropriate for the constraint mix.
    pub fn default_tolerance(&self) -> f64 {
        if self.has_quadratic() {
            QUADRATIC_FEASIBILITY_TOL
        } else {
            LINEAR_FEASIBILITY_TOL
        }
    }

    pub fn get(&self, id: ConstraintId) -> Option<Constraint<'_>> {
        match id {
            ConstraintId::Linear(i) => self.linear.get(i).map(Constraint::Linear),
            ConstraintId::Quadratic(i) => self.quadratic.get(i).map(Constraint::Quadratic),
        }
    }

    /// Index in the flat storage order used by `ConstraintId`'s ordering.
    pub fn flat_index(&self, id: ConstraintId) -> usize {
        match id {
            ConstraintId::Linear(i) => i,
            ConstraintId::Quadratic(i) => self.linear.len() + i,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ConstraintId, Constraint<'_>)> {
        let lin = self
            .linear
            .iter()
            .enumerate()
            .map(|(i, c)| (ConstraintId::Linear(i), Constraint::Linear(c)));
        let quad = self
            .quadratic
            .iter()
            .enumerate()
            .map(|(i, c)| (ConstraintId::Quadratic(i), Constraint::Quadratic(c)));
        lin.chain(quad)
    }

    /// All constraint values `h_i(x)` in storage order.
    pub fn eval_all(&self, x: &DVector<f64>) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        Ok(self.eval_all_unchecked(x))
    }

    fn eval_all_unchecked(&self, x: &DVector<f64>) -> Vec<f64> {
        self.linear
            .iter()
            .map(|c| c.eval_unchecked(x))
            .chain(self.quadratic.iter().map(|c| c.eval_unchecked(x)))
            .collect()
    }

    fn most_violated(&self, x: &DVector<f64>) -> Option<(ConstraintId, f64)> {
        let mut best: Option<(ConstraintId, f64)> = None;
        for (i, c) in self.linear.iter().enumerate() {
            let v = c.eval_unchecked(x);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((ConstraintId::Linear(i), v));
            }
        }
        for (i, c) in self.quadratic.iter().enumerate() {
            let v = c.eval_unchecked(x);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((ConstraintId::Quadratic(i), v));
            }
        }
        best
    }

    /// `max_i h_i(x)`; panics on a dimension mismatch.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        assert_eq!(x.len(), self.dim, "dimension mismatch");
        self.most_violated(x).map_or(f64::NEG_INFINITY, |(_, v)| v)
    }

    /// True iff every constraint evaluates to at most `tol` at `x`.
    pub fn is_feasible(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        check_dim(self.dim, x.len())?;
        if !(tol >= 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance {tol} < 0")));
        }
        Ok(self.linear.iter().all(|c| c.eval_unchecked(x) <= tol)
            && self.quadratic.iter().all(|c| c.eval_unchecked(x) <= tol))
    }

    /// Minimum of the per-constraint ray bounds from `p` along `r`.
    ///
    /// Ties go to the lowest storage index. `p` must be strictly feasible.
    pub fn ray_bound(&self, p: &DVector<f64>, r: &DVector<f64>) -> Result<RayBound> {
        check_dim(self.dim, p.len())?;
        check_dim(self.dim, r.len())?;
        let mut best = RayBound::INFINITE;
        for (i, c) in self.linear.iter().enumerate() {
            let h = c.eval_unchecked(p);
            if !(h < 0.0) {
                return Err(Error::NotInterior { index: i, value: h });
            }
            let v = linear_bound(-h, c.a.dot(r));
            if v < best.value {
                best = RayBound::finite(v, ConstraintId::Linear(i));
            }
        }
        let r_norm_sq = r.norm_squared();
        for (i, c) in self.quadratic.iter().enumerate() {
            let kappa = c.eval_unchecked(p);
            if !(kappa < 0.0) {
                return Err(Error::NotInterior {
                    index: self.linear.len() + i,
                    value: kappa,
                });
            }
            let pr = &c.p * r;
            let beta = p.dot(&pr) + c.q.dot(r);
            let v = c.bound_from_terms(r.dot(&pr), beta, kappa, r_norm_sq)?;
            if v < best.value {
                best = RayBound::finite(v, ConstraintId::Quadratic(i));
            }
        }
        Ok(best)
    }

    /// Subgradient descent on `phi(x) = max_i h_i(x)` from the origin until
    /// `phi <= -margin`.
    ///
    /// Steps follow the normalized subgradient of the most violated
    /// constraint with length `1/sqrt(t)`, halved until `phi` decreases. When
    /// no halving helps (a kink between active constraints) the full step is
    /// taken anyway, as in plain subgradient descent.
    pub fn find_interior_point(&self, margin: f64, max_iters: usize) -> Result<DVector<f64>> {
        if !(margin > 0.0) {
            return Err(Error::InvalidArgument(format!("margin {margin} must be positive")));
        }
        let mut x = DVector::zeros(self.dim);
        let (mut id, mut phi) = self.most_violated(&x).expect("non-empty set");
        let mut best = (x.clone(), phi);
        for t in 1..=max_iters {
            if phi <= -margin {
                return Ok(x);
            }
            let g = self.get(id).expect("valid id").gradient(&x);
            let g_norm = g.norm();
            if !(g_norm > 0.0) {
                // A flat, violated constraint cannot be fixed by moving.
                break;
            }
            let dir = g / g_norm;
            let base = 1.0 / (t as f64).sqrt();
            let mut step = base;
            let mut accepted = None;
            for _ in 0..40 {
                let cand = &x - step * &dir;
                let (cid, cphi) = self.most_violated(&cand).expect("non-empty set");
                if cphi < phi {
                    accepted = Some((cand, cid, cphi));
                    break;
                }
                step *= 0.5;
            }
            let (nx, nid, nphi) = accepted.unwrap_or_else(|| {
                let cand = &x - base * &dir;
                let (cid, cphi) = self.most_violated(&cand).expect("non-empty set");
                (cand, cid, cphi)
            });
            x = nx;
            id = nid;
            phi = nphi;
            if phi < best.1 {
                best = (x.clone(), phi);
            }
        }
        if best.1 <= -margin {
            return Ok(best.0);
        }
        Err(Error::InteriorPointNotFound {
            margin,
            iters: max_iters,
            best: best.1,
        })
    }
}

/// Convenience: `h(x)` for either constraint kind.
pub fn eval_constraint(c: Constraint<'_>, x: &DVector<f64>) -> Result<f64> {
    c.eval(x)
}
