//! The hard-constraint output layer.
//!
//! `g(r, s) = p + sigmoid(s) * alpha(r) * r`, where `alpha(r)` is the ray bound
//! of the feasible set from the interior point `p` along `r`. The output lies
//! in the feasible set for every finite input, and every feasible point is
//! reachable with `r = x - p`, `s -> +inf`.

use nalgebra::{DMatrix, DVector};

use crate::constraint::{
    linear_bound, ConstraintId, ConstraintSet, RayBound, INTERIOR_MARGIN,
};
use crate::error::{Error, Result};

/// What to do when the ray never leaves the feasible set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundPolicy {
    /// Replace an infinite bound by `alpha_max`.
    Cap(f64),
    /// Fail with [`Error::Unbounded`].
    Strict,
}

pub const DEFAULT_ALPHA_MAX: f64 = 1e8;

impl Default for BoundPolicy {
    fn default() -> Self {
        BoundPolicy::Cap(DEFAULT_ALPHA_MAX)
    }
}

impl std::str::FromStr for BoundPolicy {
    type Err = Error;

    /// `strict` or `cap:VALUE`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("strict") {
            return Ok(BoundPolicy::Strict);
        }
        if let Some(v) = s.strip_prefix("cap:") {
            let value: f64 = v
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad cap value '{v}'")))?;
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::InvalidArgument(format!("cap must be positive, got {value}")));
            }
            return Ok(BoundPolicy::Cap(value));
        }
        if s.eq_ignore_ascii_case("cap") {
            return Ok(BoundPolicy::default());
        }
        Err(Error::InvalidArgument(format!(
            "bound policy must be 'strict' or 'cap:VALUE', got '{s}'"
        )))
    }
}

/// Logistic sigmoid, evaluated without overflow for either sign.
#[inline]
pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `sigmoid'(s) = e^{-|s|} / (1 + e^{-|s|})^2`.
#[inline]
pub fn sigmoid_derivative(s: f64) -> f64 {
    let e = (-s.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

/// Relative threshold below which a quadratic ray is treated as tangential.
const TANGENT_TOL: f64 = 1e-12;

/// State saved by [`HardLayer::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub r: DVector<f64>,
    pub s: f64,
    pub sigma: f64,
    /// The bound actually used (the cap when the ray is unbounded).
    pub alpha: f64,
    pub bound: RayBound,
}

impl ForwardCache {
    pub fn capped(&self) -> bool {
        !self.bound.is_finite()
    }
}

/// Full Jacobians of the layer output.
#[derive(Debug, Clone)]
pub struct LayerGradients {
    /// `dg/dr`, `n x n`.
    pub d_r: DMatrix<f64>,
    /// `dg/ds`, length `n`.
    pub d_s: DVector<f64>,
}

/// Upstream-contracted gradients with respect to the layer inputs.
#[derive(Debug, Clone)]
pub struct InputGradients {
    pub r: DVector<f64>,
    pub s: f64,
}

/// State saved by [`HardLayer::boundary_forward`].
#[derive(Debug, Clone)]
pub struct BoundaryCache {
    pub r: DVector<f64>,
    pub bound: RayBound,
}

/// State saved by [`HardLayer::central_forward`].
#[derive(Debug, Clone)]
pub struct CentralCache {
    pub d: DVector<f64>,
    pub bound: RayBound,
    /// True when the input was already feasible and passed through unchanged.
    pub inside: bool,
}

/// The layer `g_p(r, s)` over a fixed constraint set.
#[derive(Debug, Clone)]
pub struct HardLayer {
    omega: ConstraintSet,
    p: DVector<f64>,
    policy: BoundPolicy,
    lin_slack: Vec<f64>,
    quad_grad: Vec<DVector<f64>>,
    quad_kappa: Vec<f64>,
}

impl HardLayer {
    /// Uses the set's stored interior point.
    pub fn new(omega: ConstraintSet) -> Result<Self> {
        Self::with_policy(omega, BoundPolicy::default())
    }

    pub fn with_policy(omega: ConstraintSet, policy: BoundPolicy) -> Result<Self> {
        let p = omega.interior_point().cloned().ok_or_else(|| {
            Error::InvalidArgument("constraint set has no interior point".into())
        })?;
        if let BoundPolicy::Cap(v) = policy {
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!("alpha_max must be positive, got {v}")));
            }
        }
        let max_h = omega.max_violation(&p);
        if max_h > -INTERIOR_MARGIN {
            return Err(Error::NotInterior {
                index: 0,
                value: max_h,
            });
        }
        let lin_slack = omega.linear().iter().map(|c| c.b() - c.a().dot(&p)).collect();
        let quad_grad = omega.quadratic().iter().map(|c| c.gradient(&p)).collect();
        let quad_kappa = omega
            .quadratic()
            .iter()
            .map(|c| c.eval(&p).expect("dimension checked"))
            .collect();
        Ok(Self {
            omega,
            p,
            policy,
            lin_slack,
            quad_grad,
            quad_kappa,
        })
    }

    pub fn omega(&self) -> &ConstraintSet {
        &self.omega
    }

    pub fn interior_point(&self) -> &DVector<f64> {
        &self.p
    }

    pub fn policy(&self) -> BoundPolicy {
        self.policy
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    fn check_input(&self, v: &DVector<f64>, what: &str) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite(what.into()));
        }
        Ok(())
    }

    /// Ray bound from the layer's interior point, using the cached anchor
    /// terms. Ties go to the lowest storage index.
    pub fn ray_bound(&self, r: &DVector<f64>) -> Result<RayBound> {
        let mut best = RayBound::INFINITE;
        for (i, (c, &slack)) in self.omega.linear().iter().zip(&self.lin_slack).enumerate() {
            let v = linear_bound(slack, c.a().dot(r));
            if v < best.value {
                best = RayBound::finite(v, ConstraintId::Linear(i));
            }
        }
        if !self.quad_grad.is_empty() {
            let r_norm_sq = r.norm_squared();
            for (i, c) in self.omega.quadratic().iter().enumerate() {
                let gamma = (c.p() * r).dot(r);
                let beta = self.quad_grad[i].dot(r);
                let v = c.bound_from_terms(gamma, beta, self.quad_kappa[i], r_norm_sq)?;
                if v < best.value {
                    best = RayBound::finite(v, ConstraintId::Quadratic(i));
                }
            }
        }
        Ok(best)
    }

    /// Gradient of the ray bound with respect to `r` through the active
    /// constraint; zero for unbounded rays and tangential quadratic hits.
    pub fn ray_bound_gradient(&self, r: &DVector<f64>, bound: &RayBound) -> DVector<f64> {
        let alpha = bound.value;
        match bound.active {
            None => DVector::zeros(self.dim()),
            Some(ConstraintId::Linear(i)) => {
                let a = self.omega.linear()[i].a();
                let rate = a.dot(r);
                a * (-alpha / rate)
            }
            Some(ConstraintId::Quadratic(i)) => {
                let c = &self.omega.quadratic()[i];
                let pr = c.p() * r;
                let gamma = pr.dot(r);
                let beta = self.quad_grad[i].dot(r);
                // Implicit differentiation of
                // F(a, r) = gamma a^2 + 2 beta a + 2 kappa = 0.
                let df_da = 2.0 * gamma * alpha + 2.0 * beta;
                let scale = (2.0 * gamma * alpha).abs() + (2.0 * beta).abs();
                if !(df_da.abs() > TANGENT_TOL * scale) {
                    return DVector::zeros(self.dim());
                }
                let df_dr = pr * (2.0 * alpha * alpha) + &self.quad_grad[i] * (2.0 * alpha);
                df_dr / -df_da
            }
        }
    }

    /// `x = p + sigmoid(s) * alpha(r) * r`.
    pub fn forward(&self, r: &DVector<f64>, s: f64) -> Result<(DVector<f64>, ForwardCache)> {
        self.check_input(r, "ray")?;
        if !s.is_finite() {
            return Err(Error::NonFinite("shift s".into()));
        }
        let bound = self.ray_bound(r)?;
        let alpha = if bound.is_finite() {
            bound.value
        } else {
            match self.policy {
                BoundPolicy::Cap(cap) => cap,
                BoundPolicy::Strict if r.iter().all(|&v| v == 0.0) => 0.0,
                BoundPolicy::Strict => return Err(Error::Unbounded),
            }
        };
        let sigma = sigmoid(s);
        let x = &self.p + r * (sigma * alpha);
        Ok((
            x,
            ForwardCache {
                r: r.clone(),
                s,
                sigma,
                alpha,
                bound,
            },
        ))
    }

    /// Jacobians `dg/dr = sigma (alpha I + r grad_alpha^T)` and
    /// `dg/ds = sigma'(s) alpha r`.
    pub fn jacobian(&self, cache: &ForwardCache) -> LayerGradients {
        let n = self.dim();
        let grad_alpha = self.ray_bound_gradient(&cache.r, &cache.bound);
        let mut d_r = DMatrix::identity(n, n) * cache.alpha;
        d_r.ger(1.0, &cache.r, &grad_alpha, 1.0);
        d_r *= cache.sigma;
        let d_s = &cache.r * (sigmoid_derivative(cache.s) * cache.alpha);
        LayerGradients { d_r, d_s }
    }

    /// Vector-Jacobian product with `upstream = dL/dx`.
    pub fn backward(&self, cache: &ForwardCache, upstream: &DVector<f64>) -> InputGradients {
        let ur = upstream.dot(&cache.r);
        let grad_alpha = self.ray_bound_gradient(&cache.r, &cache.bound);
        let r = (upstream * cache.alpha + grad_alpha * ur) * cache.sigma;
        let s = sigmoid_derivative(cache.s) * cache.alpha * ur;
        InputGradients { r, s }
    }

    /// `p + min(1, alpha(x - p)) (x - p)`: identity on the set, radial
    /// projection onto the boundary outside it.
    pub fn central_project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.central_forward(x)?.0)
    }

    pub fn central_forward(&self, x: &DVector<f64>) -> Result<(DVector<f64>, CentralCache)> {
        self.check_input(x, "point")?;
        let d = x - &self.p;
        let bound = self.ray_bound(&d)?;
        if bound.value >= 1.0 {
            return Ok((
                x.clone(),
                CentralCache {
                    d,
                    bound,
                    inside: true,
                },
            ));
        }
        let y = &self.p + &d * bound.value;
        Ok((
            y,
            CentralCache {
                d,
                bound,
                inside: false,
            },
        ))
    }

    pub fn central_backward(&self, cache: &CentralCache, upstream: &DVector<f64>) -> DVector<f64> {
        if cache.inside {
            return upstream.clone();
        }
        let grad_alpha = self.ray_bound_gradient(&cache.d, &cache.bound);
        upstream * cache.bound.value + grad_alpha * upstream.dot(&cache.d)
    }

    /// `p + alpha(r) r`, a point on the boundary. Requires `r != 0` and a
    /// finite bound regardless of the layer's policy.
    pub fn boundary_map(&self, r: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.boundary_forward(r)?.0)
    }

    pub fn boundary_forward(&self, r: &DVector<f64>) -> Result<(DVector<f64>, BoundaryCache)> {
        self.check_input(r, "ray")?;
        if r.iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroRay);
        }
        let bound = self.ray_bound(r)?;
        if !bound.is_finite() {
            return Err(Error::Unbounded);
        }
        let x = &self.p + r * bound.value;
        Ok((
            x,
            BoundaryCache {
                r: r.clone(),
                bound,
            },
        ))
    }

    pub fn boundary_backward(&self, cache: &BoundaryCache, upstream: &DVector<f64>) -> DVector<f64> {
        let grad_alpha = self.ray_bound_gradient(&cache.r, &cache.bound);
        upstream * cache.bound.value + grad_alpha * upstream.dot(&cache.r)
    }
}
