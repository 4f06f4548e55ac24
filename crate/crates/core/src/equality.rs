//! Elimination of linear equality constraints `Q x = e`.
//!
//! Every solution is written as `x = R w + u` where the columns of `R` are an
//! orthonormal basis of `ker Q` and `u` is the minimum-norm least-squares
//! solution. Inequalities over `x` become inequalities over `w`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constraint::{ConstraintSet, LinearConstraint, QuadraticConstraint};
use crate::error::{Error, Result};
use crate::schema::{matrix_from_rows, matrix_to_rows, ConstraintSetSpec, EqualitySpec};

/// Default numerical-rank threshold relative to the largest singular value.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Rows of `B = A R` with norm below this (relative to `|a|`) count as zero.
const ZERO_ROW_TOL: f64 = 1e-10;

/// `Q x = e`.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualitySystem {
    q: DMatrix<f64>,
    e: DVector<f64>,
}

impl EqualitySystem {
    pub fn new(q: DMatrix<f64>, e: DVector<f64>) -> Result<Self> {
        if q.nrows() == 0 || q.ncols() == 0 {
            return Err(Error::InvalidArgument("equality system needs at least one row".into()));
        }
        if q.nrows() != e.len() {
            return Err(Error::DimensionMismatch {
                expected: q.nrows(),
                got: e.len(),
            });
        }
        if !q.iter().chain(e.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("equality system".into()));
        }
        Ok(Self { q, e })
    }

    pub fn from_spec(spec: &EqualitySpec, dim: usize) -> Result<Self> {
        Self::new(
            matrix_from_rows(&spec.q, dim)?,
            DVector::from_column_slice(&spec.e),
        )
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn e(&self) -> &DVector<f64> {
        &self.e
    }

    pub fn dim(&self) -> usize {
        self.q.ncols()
    }

    /// One-sided Jacobi SVD of `Q`: rotations `V` (orthogonal, `n x n`) such
    /// that the columns of `Q V` are mutually orthogonal. Column `j` of `Q V`
    /// is `sigma_j u_j`; columns with negligible norm span the kernel.
    ///
    /// nalgebra's bidiagonal SVD is not used here: on exactly rank-deficient
    /// inputs it can return factors that do not recompose `Q`.
    fn decompose(&self) -> Result<Decomposition> {
        let n = self.dim();
        let mut a = self.q.clone();
        let mut v = DMatrix::identity(n, n);
        // Columns at rounding level belong to the kernel; rotating them
        // against each other only stirs noise and never settles.
        let floor = (1e-14 * self.q.norm()).powi(2);
        let tol = n as f64 * f64::EPSILON;
        let mut converged = false;
        for _ in 0..JACOBI_SWEEPS {
            let mut rotated = false;
            for i in 0..n {
                for j in (i + 1)..n {
                    let alpha = a.column(i).norm_squared();
                    let beta = a.column(j).norm_squared();
                    let gamma = a.column(i).dot(&a.column(j));
                    if alpha.min(beta) <= floor || gamma.abs() <= tol * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let sn = c * t;
                    rotate_columns(&mut a, i, j, c, sn);
                    rotate_columns(&mut v, i, j, c, sn);
                }
            }
            if !rotated {
                converged = true;
                break;
            }
        }
        if !converged || !a.iter().all(|x| x.is_finite()) {
            return Err(Error::SvdFailed);
        }
        let sigma = DVector::from_fn(n, |j, _| a.column(j).norm());
        Ok(Decomposition {
            qv: a,
            v,
            sigma,
            rhs: self.e.clone(),
        })
    }
}

const JACOBI_SWEEPS: usize = 100;

fn rotate_columns(m: &mut DMatrix<f64>, i: usize, j: usize, c: f64, s: f64) {
    for k in 0..m.nrows() {
        let (x, y) = (m[(k, i)], m[(k, j)]);
        m[(k, i)] = c * x - s * y;
        m[(k, j)] = s * x + c * y;
    }
}

struct Decomposition {
    /// `Q V`, whose column `j` is `sigma_j u_j`.
    qv: DMatrix<f64>,
    v: DMatrix<f64>,
    sigma: DVector<f64>,
    rhs: DVector<f64>,
}

impl Decomposition {
    fn sigma_max(&self) -> f64 {
        self.sigma.max()
    }

    fn kernel(&self, rank_tol: f64) -> DMatrix<f64> {
        let cutoff = rank_tol * self.sigma_max();
        let cols: Vec<DVector<f64>> = (0..self.sigma.len())
            .filter(|&j| self.sigma[j] <= cutoff)
            .map(|j| self.v.column(j).into_owned())
            .collect();
        if cols.is_empty() {
            DMatrix::zeros(self.v.nrows(), 0)
        } else {
            DMatrix::from_columns(&cols)
        }
    }

    /// `sum_j v_j (u_j^T e) / sigma_j` over the retained singular values.
    fn min_norm_solution(&self, rank_tol: f64) -> DVector<f64> {
        let cutoff = rank_tol * self.sigma_max();
        let mut x = DVector::zeros(self.v.nrows());
        for j in 0..self.sigma.len() {
            let s = self.sigma[j];
            if s > cutoff && s > 0.0 {
                let coeff = self.qv.column(j).dot(&self.rhs) / (s * s);
                x += self.v.column(j) * coeff;
            }
        }
        x
    }
}

/// Minimum-norm least-squares solution of `Q u = e` and its residual
/// `|Q u - e|`.
pub fn particular_solution(sys: &EqualitySystem) -> Result<(DVector<f64>, f64)> {
    let dec = sys.decompose()?;
    let u = dec.min_norm_solution(DEFAULT_RANK_TOL);
    let residual = (&sys.q * &u - &sys.e).norm();
    Ok((u, residual))
}

/// Orthonormal basis of `ker Q` from the right singular vectors with
/// `sigma <= rank_tol * sigma_max`.
pub fn kernel_basis(sys: &EqualitySystem, rank_tol: f64) -> Result<DMatrix<f64>> {
    if !(rank_tol > 0.0) {
        return Err(Error::InvalidArgument(format!("rank_tol {rank_tol} must be positive")));
    }
    Ok(sys.decompose()?.kernel(rank_tol))
}

/// The substitution `x = R w + u`.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualityReduction {
    r: DMatrix<f64>,
    u: DVector<f64>,
    residual: f64,
}

impl EqualityReduction {
    pub fn new(sys: &EqualitySystem) -> Result<Self> {
        Self::with_rank_tol(sys, DEFAULT_RANK_TOL)
    }

    pub fn with_rank_tol(sys: &EqualitySystem, rank_tol: f64) -> Result<Self> {
        if !(rank_tol > 0.0) {
            return Err(Error::InvalidArgument(format!("rank_tol {rank_tol} must be positive")));
        }
        let dec = sys.decompose()?;
        let r = dec.kernel(rank_tol);
        let u = dec.min_norm_solution(rank_tol);
        let residual = (&sys.q * &u - &sys.e).norm();
        let red = Self { r, u, residual };
        red.check_invariants(sys, rank_tol)?;
        Ok(red)
    }

    /// Rebuilds a reduction from a stored `(R, u)` pair.
    pub fn from_parts(r: DMatrix<f64>, u: DVector<f64>) -> Result<Self> {
        if r.nrows() != u.len() {
            return Err(Error::DimensionMismatch {
                expected: u.len(),
                got: r.nrows(),
            });
        }
        Ok(Self {
            r,
            u,
            residual: 0.0,
        })
    }

    fn check_invariants(&self, sys: &EqualitySystem, rank_tol: f64) -> Result<()> {
        let q_max = sys.q.amax();
        let qr = (&sys.q * &self.r).amax();
        // Columns kept at a looser rank_tol are only approximately in the kernel.
        let allowed = 1e-9_f64.max(2.0 * rank_tol) * q_max;
        if self.delta() > 0 && qr > allowed {
            return Err(Error::InvalidArgument(format!(
                "kernel basis check failed: |QR|_max = {qr:e}"
            )));
        }
        let gram = self.r.transpose() * &self.r;
        let ortho = (gram - DMatrix::identity(self.delta(), self.delta())).amax();
        if ortho > 1e-10 {
            return Err(Error::SvdFailed);
        }
        Ok(())
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn u(&self) -> &DVector<f64> {
        &self.u
    }

    /// Kernel dimension.
    pub fn delta(&self) -> usize {
        self.r.ncols()
    }

    /// Dimension of the original space.
    pub fn dim(&self) -> usize {
        self.u.len()
    }

    /// `|Q u - e|`; nonzero means the equality system is inconsistent.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn is_consistent(&self, e_norm: f64) -> bool {
        self.residual <= 1e-8 * (1.0 + e_norm)
    }

    /// `x = R w + u`.
    pub fn lift(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        if w.len() != self.delta() {
            return Err(Error::DimensionMismatch {
                expected: self.delta(),
                got: w.len(),
            });
        }
        Ok(&self.r * w + &self.u)
    }

    /// `R^T g`: pulls a gradient over `x` back to `w`.
    pub fn pullback(&self, grad_x: &DVector<f64>) -> DVector<f64> {
        self.r.transpose() * grad_x
    }

    /// `B = A R`, `t = b - A u`, with automatically satisfied rows removed.
    ///
    /// A zero row of `B` with negative `t` makes the set empty.
    pub fn reduce_linear(
        &self,
        a: &DMatrix<f64>,
        b: &DVector<f64>,
    ) -> Result<(DMatrix<f64>, DVector<f64>)> {
        if a.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: a.ncols(),
            });
        }
        if a.nrows() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: b.len(),
            });
        }
        let full_b = a * &self.r;
        let full_t = b - a * &self.u;
        let mut keep = Vec::new();
        for i in 0..a.nrows() {
            let scale = a.row(i).norm().max(1.0);
            if full_b.row(i).norm() <= ZERO_ROW_TOL * scale {
                if full_t[i] < -ZERO_ROW_TOL * (1.0 + b[i].abs()) {
                    return Err(Error::Infeasible(format!(
                        "inequality row {i} contradicts the equality constraints (t = {:e})",
                        full_t[i]
                    )));
                }
            } else {
                keep.push(i);
            }
        }
        let reduced_b = DMatrix::from_fn(keep.len(), self.delta(), |i, j| full_b[(keep[i], j)]);
        let reduced_t = DVector::from_fn(keep.len(), |i, _| full_t[keep[i]]);
        Ok((reduced_b, reduced_t))
    }

    /// Reduced linear constraints; satisfied rows are dropped.
    pub fn reduce_linear_constraints(
        &self,
        constraints: &[LinearConstraint],
    ) -> Result<Vec<LinearConstraint>> {
        if constraints.is_empty() {
            return Ok(Vec::new());
        }
        let a = DMatrix::from_fn(constraints.len(), self.dim(), |i, j| constraints[i].a()[j]);
        let b = DVector::from_fn(constraints.len(), |i, _| constraints[i].b());
        let (rb, rt) = self.reduce_linear(&a, &b)?;
        (0..rb.nrows())
            .map(|i| LinearConstraint::new(rb.row(i).transpose(), rt[i]))
            .collect()
    }

    /// Substitutes `x = R w + u` into a quadratic constraint:
    /// `P' = R^T P R`, `q' = R^T (P u + q)`, `b' = b - q^T u - 1/2 u^T P u`.
    ///
    /// Returns `None` when the reduced constraint no longer depends on `w`
    /// and holds; errors when it no longer depends on `w` and fails.
    pub fn reduce_quadratic(&self, c: &QuadraticConstraint) -> Result<Option<QuadraticConstraint>> {
        if c.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: c.dim(),
            });
        }
        let pu = c.p() * &self.u;
        let b_new = c.b() - c.q().dot(&self.u) - 0.5 * self.u.dot(&pu);
        let mut p_new = self.r.transpose() * c.p() * &self.r;
        p_new = (&p_new + p_new.transpose()) * 0.5;
        let q_new = self.r.transpose() * (pu + c.q());
        let p_scale = c.p().amax().max(f64::MIN_POSITIVE);
        if p_new.amax() <= 1e-14 * p_scale {
            p_new.fill(0.0);
        }
        let q_scale = c.q().amax() + p_scale * self.u.amax();
        let constant = p_new.amax() == 0.0 && q_new.amax() <= 1e-12 * q_scale.max(1.0);
        if self.delta() == 0 || constant {
            if b_new < -1e-12 * (1.0 + c.b().abs()) {
                return Err(Error::Infeasible(format!(
                    "quadratic constraint contradicts the equality constraints (b' = {b_new:e})"
                )));
            }
            return Ok(None);
        }
        Ok(Some(QuadraticConstraint::new_psd_unchecked(p_new, q_new, b_new)))
    }

    /// Reduces a whole set. The result lives in `R^delta` and has no
    /// interior point attached yet.
    pub fn reduce_set(
        &self,
        linear: &[LinearConstraint],
        quadratic: &[QuadraticConstraint],
    ) -> Result<ConstraintSet> {
        let lin = self.reduce_linear_constraints(linear)?;
        let mut quad = Vec::new();
        for c in quadratic {
            if let Some(rc) = self.reduce_quadratic(c)? {
                quad.push(rc);
            }
        }
        if self.delta() == 0 {
            return Err(Error::InvalidArgument(
                "the equality constraints leave a single point; nothing to parametrize".into(),
            ));
        }
        if lin.is_empty() && quad.is_empty() {
            return Err(Error::InvalidArgument(
                "no inequality constraint survives the reduction; the set is unbounded".into(),
            ));
        }
        ConstraintSet::new(self.delta(), lin, quad)
    }

    pub fn sidecar(&self) -> ReductionSidecar {
        ReductionSidecar {
            r: matrix_to_rows(&self.r),
            u: self.u.iter().copied().collect(),
        }
    }
}

/// Stored `(R, u)` for lifting reduced solutions back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionSidecar {
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    pub u: Vec<f64>,
}

impl ReductionSidecar {
    pub fn to_reduction(&self) -> Result<EqualityReduction> {
        let n = self.u.len();
        let delta = self.r.first().map_or(0, Vec::len);
        if self.r.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.r.len(),
            });
        }
        EqualityReduction::from_parts(
            matrix_from_rows(&self.r, delta)?,
            DVector::from_column_slice(&self.u),
        )
    }
}

/// Reduces a constraint-set document carrying an `equality` block.
///
/// Returns the reduced document (over `w`) and the lifting sidecar. An
/// inconsistent equality system is reported as an empty set.
pub fn reduce_spec(
    spec: &ConstraintSetSpec,
    rank_tol: f64,
) -> Result<(ConstraintSetSpec, ReductionSidecar)> {
    let eq = spec
        .equality
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("document has no equality block".into()))?;
    let sys = EqualitySystem::from_spec(eq, spec.dim)?;
    let red = EqualityReduction::with_rank_tol(&sys, rank_tol)?;
    if !red.is_consistent(sys.e().norm()) {
        return Err(Error::Infeasible(format!(
            "equality system is inconsistent (residual {:e})",
            red.residual()
        )));
    }
    let linear = spec
        .linear
        .iter()
        .map(|c| c.to_constraint())
        .collect::<Result<Vec<_>>>()?;
    let quadratic = spec
        .quadratic
        .iter()
        .map(|c| c.to_constraint())
        .collect::<Result<Vec<_>>>()?;
    let reduced = red.reduce_set(&linear, &quadratic)?;
    Ok((ConstraintSetSpec::from_set(&reduced), red.sidecar()))
}
