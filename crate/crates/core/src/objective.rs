//! Loss functions with exact gradients.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{matrix_from_rows, matrix_to_rows};

/// Probabilities are clamped at this value before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

/// Slack allowed for probabilities outside `[0, 1]`.
const PROB_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PNorm {
    L1,
    L2,
}

impl PNorm {
    pub fn from_order(p: u32) -> Result<Self> {
        match p {
            1 => Ok(PNorm::L1),
            2 => Ok(PNorm::L2),
            other => Err(Error::InvalidArgument(format!("p-norm must be 1 or 2, got {other}"))),
        }
    }

    pub fn order(self) -> u32 {
        match self {
            PNorm::L1 => 1,
            PNorm::L2 => 2,
        }
    }

    /// `|d|_p` and its gradient with respect to `d` (zero at `d = 0`).
    pub fn norm_and_gradient(self, d: &DVector<f64>) -> (f64, DVector<f64>) {
        match self {
            PNorm::L1 => (d.abs().sum(), d.map(|v| if v == 0.0 { 0.0 } else { v.signum() })),
            PNorm::L2 => {
                let n = d.norm();
                if n == 0.0 {
                    (0.0, DVector::zeros(d.len()))
                } else {
                    (n, d / n)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// `c^T x`.
    Linear { c: DVector<f64> },
    /// `1/2 x^T H x + c^T x` with `H` PSD.
    Quadratic { h: DMatrix<f64>, c: DVector<f64> },
    /// `(1 - x1)^2 + 100 (x2 - x1^2)^2`.
    Rosenbrock,
    /// `sin(x2) e^{(1 - cos x1)^2} + cos(x1) e^{(1 - sin x2)^2} + (x1 - x2)^2`.
    Bird,
    /// `-log(max(x_label, 1e-12))` on a probability vector.
    CrossEntropy { label: usize },
    /// `sum_{j != label} max(0, 1 - x_label + x_j)`.
    Hinge { label: usize },
    /// `|x - target|_p`.
    LpDistance { p_norm: PNorm, target: DVector<f64> },
}

fn check_len(expected: usize, x: &DVector<f64>) -> Result<()> {
    if expected == x.len() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected,
            got: x.len(),
        })
    }
}

fn check_probabilities(x: &DVector<f64>, label: usize) -> Result<()> {
    if label >= x.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            x.len()
        )));
    }
    if let Some(bad) = x.iter().find(|&&v| !(-PROB_SLACK..=1.0 + PROB_SLACK).contains(&v)) {
        return Err(Error::InvalidArgument(format!(
            "probability {bad} outside [0, 1]: the upstream constraint is broken"
        )));
    }
    Ok(())
}

impl Objective {
    pub fn quadratic(h: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        if h.nrows() != c.len() || h.ncols() != c.len() {
            return Err(Error::DimensionMismatch {
                expected: c.len(),
                got: h.nrows(),
            });
        }
        let scale = h.amax();
        if (&h - h.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidArgument("H is not symmetric".into()));
        }
        if scale > 0.0 {
            let eig = h.clone().symmetric_eigen().eigenvalues;
            if eig.min() < -1e-10 * eig.max().max(0.0) {
                return Err(Error::InvalidArgument("H is not positive semidefinite".into()));
            }
        }
        Ok(Objective::Quadratic { h, c })
    }

    /// Input dimension when fixed by the parameters.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Objective::Linear { c } | Objective::Quadratic { c, .. } => Some(c.len()),
            Objective::Rosenbrock | Objective::Bird => Some(2),
            Objective::LpDistance { target, .. } => Some(target.len()),
            Objective::CrossEntropy { .. } | Objective::Hinge { .. } => None,
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.eval(x)?.0)
    }

    /// Value and gradient at `x`.
    pub fn eval(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        if let Some(n) = self.dim() {
            check_len(n, x)?;
        }
        Ok(match self {
            Objective::Linear { c } => (c.dot(x), c.clone()),
            Objective::Quadratic { h, c } => {
                let hx = h * x;
                (0.5 * x.dot(&hx) + c.dot(x), hx + c)
            }
            Objective::Rosenbrock => {
                let (x1, x2) = (x[0], x[1]);
                let t = x2 - x1 * x1;
                let value = (1.0 - x1).powi(2) + 100.0 * t * t;
                let g1 = -2.0 * (1.0 - x1) - 400.0 * x1 * t;
                let g2 = 200.0 * t;
                (value, DVector::from_column_slice(&[g1, g2]))
            }
            Objective::Bird => {
                let (x1, x2) = (x[0], x[1]);
                let (s1, c1) = x1.sin_cos();
                let (s2, c2) = x2.sin_cos();
                let a = 1.0 - c1;
                let b = 1.0 - s2;
                let ea = (a * a).exp();
                let eb = (b * b).exp();
                let d = x1 - x2;
                let value = s2 * ea + c1 * eb + d * d;
                let g1 = s2 * ea * 2.0 * a * s1 - s1 * eb + 2.0 * d;
                let g2 = c2 * ea - c1 * eb * 2.0 * b * c2 - 2.0 * d;
                (value, DVector::from_column_slice(&[g1, g2]))
            }
            Objective::CrossEntropy { label } => {
                check_probabilities(x, *label)?;
                let prob = x[*label];
                let mut grad = DVector::zeros(x.len());
                if prob > PROB_CLAMP {
                    grad[*label] = -1.0 / prob;
                }
                (-prob.max(PROB_CLAMP).ln(), grad)
            }
            Objective::Hinge { label } => {
                check_probabilities(x, *label)?;
                let mut value = 0.0;
                let mut grad = DVector::zeros(x.len());
                for j in 0..x.len() {
                    if j == *label {
                        continue;
                    }
                    let margin = 1.0 - x[*label] + x[j];
                    if margin > 0.0 {
                        value += margin;
                        grad[j] += 1.0;
                        grad[*label] -= 1.0;
                    }
                }
                (value, grad)
            }
            Objective::LpDistance { p_norm, target } => p_norm.norm_and_gradient(&(x - target)),
        })
    }
}

/// Serialized objective, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    Linear {
        c: Vec<f64>,
    },
    Quadratic {
        #[serde(rename = "H")]
        h: Vec<Vec<f64>>,
        c: Vec<f64>,
    },
    Rosenbrock,
    Bird,
    CrossEntropy {
        label: usize,
    },
    Hinge {
        label: usize,
    },
    LpDistance {
        p_norm: u32,
        target: Vec<f64>,
    },
}

impl ObjectiveSpec {
    pub fn to_objective(&self) -> Result<Objective> {
        Ok(match self {
            ObjectiveSpec::Linear { c } => Objective::Linear {
                c: DVector::from_column_slice(c),
            },
            ObjectiveSpec::Quadratic { h, c } => {
                Objective::quadratic(matrix_from_rows(h, c.len())?, DVector::from_column_slice(c))?
            }
            ObjectiveSpec::Rosenbrock => Objective::Rosenbrock,
            ObjectiveSpec::Bird => Objective::Bird,
            ObjectiveSpec::CrossEntropy { label } => Objective::CrossEntropy { label: *label },
            ObjectiveSpec::Hinge { label } => Objective::Hinge { label: *label },
            ObjectiveSpec::LpDistance { p_norm, target } => Objective::LpDistance {
                p_norm: PNorm::from_order(*p_norm)?,
                target: DVector::from_column_slice(target),
            },
        })
    }
}

impl From<&Objective> for ObjectiveSpec {
    fn from(o: &Objective) -> Self {
        match o {
            Objective::Linear { c } => ObjectiveSpec::Linear {
                c: c.iter().copied().collect(),
            },
            Objective::Quadratic { h, c } => ObjectiveSpec::Quadratic {
                h: matrix_to_rows(h),
                c: c.iter().copied().collect(),
            },
            Objective::Rosenbrock => ObjectiveSpec::Rosenbrock,
            Objective::Bird => ObjectiveSpec::Bird,
            Objective::CrossEntropy { label } => ObjectiveSpec::CrossEntropy { label: *label },
            Objective::Hinge { label } => ObjectiveSpec::Hinge { label: *label },
            Objective::LpDistance { p_norm, target } => ObjectiveSpec::LpDistance {
                p_norm: p_norm.order(),
                target: target.iter().copied().collect(),
            },
        }
    }
}
