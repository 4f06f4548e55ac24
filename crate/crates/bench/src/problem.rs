//! Problem files: a constraint-set document with an `objective` and the seed
//! that generated it.

use std::path::Path;

use hardnet_core::{ConstraintSetSpec, ObjectiveSpec};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::generate::BenchProblem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    #[serde(flatten)]
    pub constraints: ConstraintSetSpec,
    pub objective: ObjectiveSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_solution: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_value: Option<f64>,
}

impl ProblemFile {
    pub fn from_problem(problem: &BenchProblem) -> Self {
        Self {
            constraints: ConstraintSetSpec::from_set(&problem.omega),
            objective: ObjectiveSpec::from(&problem.objective),
            seed: Some(problem.seed),
            reference_solution: problem
                .reference_solution
                .as_ref()
                .map(|x| x.iter().copied().collect()),
            reference_value: problem.reference_value,
        }
    }

    /// Validates the constraint set and objective. A missing interior point
    /// is searched for.
    pub fn to_problem(&self) -> Result<BenchProblem> {
        let mut omega = self.constraints.to_set()?;
        if omega.interior_point().is_none() {
            omega = omega.ensure_interior_point(hardnet_core::constraint::INTERIOR_MARGIN, 10_000)?;
        }
        let objective = self.objective.to_objective()?;
        if let Some(n) = objective.dim() {
            if n != omega.dim() {
                return Err(BenchError::InvalidArgument(format!(
                    "objective has dimension {n}, constraints have {}",
                    omega.dim()
                )));
            }
        }
        Ok(BenchProblem {
            objective,
            omega,
            seed: self.seed.unwrap_or(0),
            reference_solution: self
                .reference_solution
                .as_ref()
                .map(|x| DVector::from_column_slice(x)),
            reference_value: self.reference_value,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
