//! Joint input–output constraints and their specialization to a given input.
//!
//! A joint constraint acts on the stacked vector `[x; z]`. Fixing `z` leaves a
//! constraint on `x` alone, which is linear, quadratic, or automatically
//! satisfied.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector};

use crate::constraint::{ConstraintSet, LinearConstraint, QuadraticConstraint};
use crate::error::{Error, Result};

/// Iteration budget for the interior-point search after specialization.
const INTERIOR_ITERS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct JointConstraintSet {
    dim_x: usize,
    dim_z: usize,
    linear: Vec<LinearConstraint>,
    quadratic: Vec<QuadraticConstraint>,
}

impl JointConstraintSet {
    pub fn new(
        dim_x: usize,
        dim_z: usize,
        linear: Vec<LinearConstraint>,
        quadratic: Vec<QuadraticConstraint>,
    ) -> Result<Self> {
        if dim_x == 0 {
            return Err(Error::InvalidArgument("output dimension must be positive".into()));
        }
        let total = dim_x + dim_z;
        for d in linear
            .iter()
            .map(LinearConstraint::dim)
            .chain(quadratic.iter().map(QuadraticConstraint::dim))
        {
            if d != total {
                return Err(Error::DimensionMismatch {
                    expected: total,
                    got: d,
                });
            }
        }
        if linear.is_empty() && quadratic.is_empty() {
            return Err(Error::InvalidArgument("joint set has no constraints".into()));
        }
        Ok(Self {
            dim_x,
            dim_z,
            linear,
            quadratic,
        })
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn dim_z(&self) -> usize {
        self.dim_z
    }

    /// Substitutes `z` and returns the constraint set on `x` with a fresh
    /// interior point of at least `margin` slack.
    pub fn specialize(&self, z: &DVector<f64>, margin: f64) -> Result<ConstraintSet> {
        if z.len() != self.dim_z {
            return Err(Error::DimensionMismatch {
                expected: self.dim_z,
                got: z.len(),
            });
        }
        let n = self.dim_x;
        let mut linear = Vec::new();
        let mut quadratic = Vec::new();

        for (i, c) in self.linear.iter().enumerate() {
            let a_x = c.a().rows(0, n).into_owned();
            let rhs = c.b() - c.a().rows(n, self.dim_z).dot(z);
            if a_x.iter().all(|&v| v == 0.0) {
                check_constant(rhs, c.b(), || format!("linear constraint {i}"))?;
            } else {
                linear.push(LinearConstraint::new(a_x, rhs)?);
            }
        }

        for (i, c) in self.quadratic.iter().enumerate() {
            let p = c.p();
            let p_xx: DMatrix<f64> = p.view((0, 0), (n, n)).into_owned();
            let p_xz = p.view((0, n), (n, self.dim_z));
            let p_zz = p.view((n, n), (self.dim_z, self.dim_z));
            let q_x = c.q().rows(0, n);
            let q_z = c.q().rows(n, self.dim_z);
            let q_new: DVector<f64> = q_x + p_xz * z;
            let b_new = c.b() - q_z.dot(z) - 0.5 * z.dot(&(p_zz * z));
            let p_zero = p_xx.iter().all(|&v| v == 0.0);
            let q_zero = q_new.iter().all(|&v| v == 0.0);
            match (p_zero, q_zero) {
                (true, true) => check_constant(b_new, c.b(), || format!("quadratic constraint {i}"))?,
                (true, false) => linear.push(LinearConstraint::new(q_new, b_new)?),
                (false, _) => quadratic.push(QuadraticConstraint::new_psd_unchecked(p_xx, q_new, b_new)),
            }
        }

        if linear.is_empty() && quadratic.is_empty() {
            return Err(Error::InvalidArgument(
                "no constraint on the output remains after substitution".into(),
            ));
        }
        let set = ConstraintSet::new(n, linear, quadratic)?;
        set.ensure_interior_point(margin, INTERIOR_ITERS)
            .map_err(|e| match e {
                Error::InteriorPointNotFound { best, .. } => Error::Infeasible(format!(
                    "input lies outside the admissible set (best max h = {best:e})"
                )),
                other => other,
            })
    }
}

fn check_constant(slack: f64, b: f64, what: impl FnOnce() -> String) -> Result<()> {
    if slack < -1e-12 * (1.0 + b.abs()) {
        Err(Error::Infeasible(format!(
            "{} is violated for this input regardless of the output",
            what()
        )))
    } else {
        Ok(())
    }
}

/// Memoizes specializations by the exact bit pattern of `z`.
///
/// Reads take a shared lock; insertion takes the exclusive lock.
#[derive(Debug)]
pub struct SpecializationCache {
    joint: JointConstraintSet,
    margin: f64,
    entries: RwLock<HashMap<Vec<u64>, Arc<ConstraintSet>>>,
}

impl SpecializationCache {
    pub fn new(joint: JointConstraintSet, margin: f64) -> Self {
        Self {
            joint,
            margin,
            entries: RwLock::new(HashMap::new()),
        }
    }

    pub fn get(&self, z: &DVector<f64>) -> Result<Arc<ConstraintSet>> {
        let key: Vec<u64> = z.iter().map(|v| v.to_bits()).collect();
        if let Some(hit) = self.entries.read().expect("cache lock").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let set = Arc::new(self.joint.specialize(z, self.margin)?);
        let mut entries = self.entries.write().expect("cache lock");
        Ok(Arc::clone(entries.entry(key).or_insert(set)))
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
