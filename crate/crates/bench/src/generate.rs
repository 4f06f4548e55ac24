//! Random constrained optimization problems.
//!
//! Linear sets use `a_i ~ N(0, I)` and `b_i = a_i^T a_i`, so each hyperplane
//! passes through `a_i` with normal `a_i` and the origin is strictly inside.
//! Quadratic sets use `x^T P_i x + q_i^T x <= b_i` with `P_i = M^T M / sqrt(n)`,
//! `q_i ~ N(0, I)`, `b_i ~ U(0.5, 2)`, stored in the canonical half form with
//! `2 P_i`. Objectives are drawn after the constraints.

use std::fmt;
use std::str::FromStr;

use hardnet_core::{ConstraintSet, LinearConstraint, Objective, QuadraticConstraint};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Regeneration attempts before giving up on boundedness.
pub const MAX_REGENERATIONS: usize = 10;

/// Seed offset between regeneration attempts.
const REGEN_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Linear,
    Quadratic,
}

impl FromStr for LossKind {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(LossKind::Linear),
            "quadratic" => Ok(LossKind::Quadratic),
            other => Err(BenchError::InvalidArgument(format!("unknown loss kind '{other}'"))),
        }
    }
}

impl FromStr for ConstraintKind {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ConstraintKind::Linear),
            "quadratic" => Ok(ConstraintKind::Quadratic),
            other => Err(BenchError::InvalidArgument(format!(
                "unknown constraint kind '{other}'"
            ))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Linear => "linear",
            LossKind::Quadratic => "quadratic",
        })
    }
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintKind::Linear => "linear",
            ConstraintKind::Quadratic => "quadratic",
        })
    }
}

/// A generated instance. `omega` carries the origin as its interior point.
#[derive(Debug, Clone)]
pub struct BenchProblem {
    pub objective: Objective,
    pub omega: ConstraintSet,
    pub seed: u64,
    pub reference_solution: Option<DVector<f64>>,
    pub reference_value: Option<f64>,
}

fn normal_vector(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn normal_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn linear_set(rng: &mut impl Rng, n: usize, m: usize) -> Result<ConstraintSet> {
    let constraints = (0..m)
        .map(|_| {
            let a = normal_vector(rng, n);
            let b = a.norm_squared();
            LinearConstraint::new(a, b)
        })
        .collect::<hardnet_core::Result<Vec<_>>>()?;
    Ok(ConstraintSet::linear_only(n, constraints)?)
}

fn quadratic_set(rng: &mut impl Rng, n: usize, m: usize) -> Result<ConstraintSet> {
    let scale = (n as f64).sqrt();
    let constraints = (0..m)
        .map(|_| {
            let mm = normal_matrix(rng, n, n);
            let p = mm.transpose() * &mm / scale;
            // Exact symmetry for the validator.
            let p = (&p + p.transpose()) * 0.5;
            let q = normal_vector(rng, n);
            let b: f64 = rng.random_range(0.5..2.0);
            QuadraticConstraint::new(p * 2.0, q, b)
        })
        .collect::<hardnet_core::Result<Vec<_>>>()?;
    Ok(ConstraintSet::quadratic_only(n, constraints)?)
}

fn objective(rng: &mut impl Rng, kind: LossKind, n: usize) -> Objective {
    match kind {
        LossKind::Linear => Objective::Linear {
            c: normal_vector(rng, n),
        },
        LossKind::Quadratic => {
            let g = normal_matrix(rng, n, n);
            let h = g.transpose() * &g / (n as f64).sqrt();
            let h = (&h + h.transpose()) * 0.5;
            let c = normal_vector(rng, n);
            Objective::quadratic(h, c).expect("Gram matrices are PSD")
        }
    }
}

/// True when every probe ray from the interior point has a finite bound:
/// `100 n` random unit directions plus `+-e_j`.
pub fn probe_bounded(omega: &ConstraintSet, rng: &mut impl Rng) -> Result<bool> {
    let n = omega.dim();
    let p = omega
        .interior_point()
        .cloned()
        .unwrap_or_else(|| DVector::zeros(n));
    for j in 0..n {
        for sign in [1.0, -1.0] {
            let mut e = DVector::zeros(n);
            e[j] = sign;
            if !omega.ray_bound(&p, &e)?.is_finite() {
                return Ok(false);
            }
        }
    }
    for _ in 0..100 * n {
        let mut r = normal_vector(rng, n);
        let norm = r.norm();
        if norm == 0.0 {
            continue;
        }
        r /= norm;
        if !omega.ray_bound(&p, &r)?.is_finite() {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn gen_problem(
    loss: LossKind,
    constraints: ConstraintKind,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<BenchProblem> {
    if n == 0 || m == 0 {
        return Err(BenchError::InvalidArgument("n and m must be positive".into()));
    }
    for attempt in 0..MAX_REGENERATIONS as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt.wrapping_mul(REGEN_SEED_OFFSET)));
        let omega = match constraints {
            ConstraintKind::Linear => linear_set(&mut rng, n, m)?,
            ConstraintKind::Quadratic => quadratic_set(&mut rng, n, m)?,
        }
        .with_interior_point(DVector::zeros(n))?;
        let objective = objective(&mut rng, loss, n);
        if probe_bounded(&omega, &mut rng)? {
            return Ok(BenchProblem {
                objective,
                omega,
                seed,
                reference_solution: None,
                reference_value: None,
            });
        }
    }
    Err(BenchError::Unbounded {
        n,
        m,
        attempts: MAX_REGENERATIONS,
    })
}

/// Linear constraints with a linear objective.
pub fn gen_linear_problem(n: usize, m: usize, seed: u64) -> Result<BenchProblem> {
    gen_problem(LossKind::Linear, ConstraintKind::Linear, n, m, seed)
}

/// Quadratic constraints with a linear objective.
pub fn gen_quadratic_problem(n: usize, m: usize, seed: u64) -> Result<BenchProblem> {
    gen_problem(LossKind::Linear, ConstraintKind::Quadratic, n, m, seed)
}
