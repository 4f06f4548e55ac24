//! JSON interchange format for constraint sets.
//!
//! ```json
//! {"dim": 2,
//!  "linear": [{"a": [1.0, 0.0], "b": 1.0}],
//!  "quadratic": [{"P": [[2.0, 0.0], [0.0, 2.0]], "q": [0.0, 0.0], "b": 1.0}],
//!  "interior_point": [0.0, 0.0],
//!  "equality": {"Q": [[1.0, 1.0]], "e": [1.0]}}
//! ```
//!
//! Matrices are row-major. `interior_point` may be `null`; `equality` is
//! optional.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constraint::{ConstraintSet, LinearConstraint, QuadraticConstraint};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSpec {
    pub a: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSpec {
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqualitySpec {
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub e: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSetSpec {
    pub dim: usize,
    #[serde(default)]
    pub linear: Vec<LinearSpec>,
    #[serde(default)]
    pub quadratic: Vec<QuadraticSpec>,
    #[serde(default)]
    pub interior_point: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equality: Option<EqualitySpec>,
}

/// Row-major nested vectors to a dense matrix; every row must have `cols`
/// entries.
pub fn matrix_from_rows(rows: &[Vec<f64>], cols: usize) -> Result<DMatrix<f64>> {
    for row in rows {
        if row.len() != cols {
            return Err(Error::DimensionMismatch {
                expected: cols,
                got: row.len(),
            });
        }
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl LinearSpec {
    pub fn to_constraint(&self) -> Result<LinearConstraint> {
        LinearConstraint::from_slice(&self.a, self.b)
    }
}

impl From<&LinearConstraint> for LinearSpec {
    fn from(c: &LinearConstraint) -> Self {
        Self {
            a: c.a().iter().copied().collect(),
            b: c.b(),
        }
    }
}

impl QuadraticSpec {
    pub fn to_constraint(&self) -> Result<QuadraticConstraint> {
        let n = self.q.len();
        if self.p.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.p.len(),
            });
        }
        QuadraticConstraint::new(
            matrix_from_rows(&self.p, n)?,
            DVector::from_column_slice(&self.q),
            self.b,
        )
    }
}

impl From<&QuadraticConstraint> for QuadraticSpec {
    fn from(c: &QuadraticConstraint) -> Self {
        Self {
            p: matrix_to_rows(c.p()),
            q: c.q().iter().copied().collect(),
            b: c.b(),
        }
    }
}

impl ConstraintSetSpec {
    pub fn from_set(set: &ConstraintSet) -> Self {
        Self {
            dim: set.dim(),
            linear: set.linear().iter().map(LinearSpec::from).collect(),
            quadratic: set.quadratic().iter().map(QuadraticSpec::from).collect(),
            interior_point: set.interior_point().map(|p| p.iter().copied().collect()),
            equality: None,
        }
    }

    /// Builds and validates the inequality part. Equality constraints, if
    /// present, are ignored here; see [`crate::equality::reduce_spec`].
    pub fn to_set(&self) -> Result<ConstraintSet> {
        let linear = self
            .linear
            .iter()
            .map(LinearSpec::to_constraint)
            .collect::<Result<Vec<_>>>()?;
        let quadratic = self
            .quadratic
            .iter()
            .map(QuadraticSpec::to_constraint)
            .collect::<Result<Vec<_>>>()?;
        let set = ConstraintSet::new(self.dim, linear, quadratic)?;
        match &self.interior_point {
            Some(p) => set.with_interior_point(DVector::from_column_slice(p)),
            None => Ok(set),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
