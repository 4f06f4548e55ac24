//! Optimization trajectories on two-dimensional test functions.

use std::io::Write;
use std::path::Path;

use hardnet_core::{ConstraintSet, Objective, QuadraticConstraint};
use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::solve::{layer_solve, SolveConfig, SolveMode};

/// `x1^2 + x2^2 <= 2`, anchored at the origin.
pub fn rosenbrock_set() -> ConstraintSet {
    let disk = QuadraticConstraint::new(DMatrix::identity(2, 2) * 2.0, DVector::zeros(2), 2.0)
        .expect("valid disk");
    ConstraintSet::quadratic_only(2, vec![disk])
        .and_then(|s| s.with_interior_point(DVector::zeros(2)))
        .expect("origin is interior")
}

/// `(x1 + 5)^2 + (x2 + 5)^2 <= 25`, anchored at the centre.
pub fn bird_set() -> ConstraintSet {
    let disk = QuadraticConstraint::new(
        DMatrix::identity(2, 2) * 2.0,
        DVector::from_column_slice(&[10.0, 10.0]),
        -25.0,
    )
    .expect("valid disk");
    ConstraintSet::quadratic_only(2, vec![disk])
        .and_then(|s| s.with_interior_point(DVector::from_column_slice(&[-5.0, -5.0])))
        .expect("centre is interior")
}

/// `k x k` uniform grid over `[lo, hi]^2`, row by row.
pub fn grid_starts(lo: [f64; 2], hi: [f64; 2], k: usize) -> Vec<DVector<f64>> {
    let coord = |i: usize, d: usize| {
        if k == 1 {
            0.5 * (lo[d] + hi[d])
        } else {
            lo[d] + (hi[d] - lo[d]) * i as f64 / (k - 1) as f64
        }
    };
    (0..k)
        .flat_map(|i| (0..k).map(move |j| DVector::from_column_slice(&[coord(j, 0), coord(i, 1)])))
        .collect()
}

pub fn rosenbrock_starts() -> Vec<DVector<f64>> {
    grid_starts([-0.75, -0.75], [0.75, 0.75], 3)
}

pub fn bird_starts() -> Vec<DVector<f64>> {
    grid_starts([-7.5, -7.5], [-2.5, -2.5], 3)
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub start: DVector<f64>,
    pub points: Vec<DVector<f64>>,
    pub endpoint: DVector<f64>,
    pub value: f64,
}

/// Figure budget: 2000 Adam steps at a constant learning rate of 0.1.
pub const DEMO_ITERS: usize = 2000;
pub const DEMO_LR: f64 = 0.1;

/// Rosenbrock settings. In raw mode Adam uses `beta2 = 0.9`, the initial ray
/// has length 10 and `s` is clamped at -6; the narrow valley otherwise stalls
/// the second-moment estimate before the boundary optimum is reached.
pub fn rosenbrock_config(mode: SolveMode, seed: u64) -> SolveConfig {
    let base = SolveConfig {
        mode,
        iters: DEMO_ITERS,
        lr: DEMO_LR,
        seed,
        record_trajectory: true,
        ..SolveConfig::default()
    };
    match mode {
        SolveMode::RawInputs => SolveConfig {
            beta2: 0.9,
            s_min: Some(-6.0),
            ray_length: Some(10.0),
            ..base
        },
        _ => base,
    }
}

/// Bird settings: Adam moments reset every 400 steps.
pub fn bird_config(mode: SolveMode, seed: u64) -> SolveConfig {
    SolveConfig {
        mode,
        iters: DEMO_ITERS,
        lr: DEMO_LR,
        seed,
        cycles: 5,
        record_trajectory: true,
        ..SolveConfig::default()
    }
}

pub fn run_trajectories(
    omega: &ConstraintSet,
    obj: &Objective,
    starts: &[DVector<f64>],
    config: &SolveConfig,
) -> Result<Vec<Trajectory>> {
    starts
        .iter()
        .enumerate()
        .map(|(k, start)| {
            let cfg = SolveConfig {
                start: Some(start.clone()),
                restarts: 1,
                seed: config.seed.wrapping_add(k as u64),
                record_trajectory: true,
                ..config.clone()
            };
            let out = layer_solve(omega, obj, &cfg)?;
            let value = obj.value(&out.final_x)?;
            Ok(Trajectory {
                start: start.clone(),
                points: out.trajectory,
                endpoint: out.final_x,
                value,
            })
        })
        .collect()
}

/// `x1,x2,iter` rows.
pub fn write_trajectory_csv<W: Write>(out: W, points: &[DVector<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x1", "x2", "iter"])?;
    for (i, x) in points.iter().enumerate() {
        w.write_record([x[0].to_string(), x[1].to_string(), i.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trajectory_csv(path: &Path, points: &[DVector<f64>]) -> Result<()> {
    write_trajectory_csv(std::fs::File::create(path)?, points)
}

/// Norm of the objective gradient after removing the outward normal
/// component of every constraint within `active_tol` of its boundary; an
/// inward-pointing gradient on the boundary counts in full.
pub fn projected_gradient_norm(
    omega: &ConstraintSet,
    obj: &Objective,
    x: &DVector<f64>,
    active_tol: f64,
) -> Result<f64> {
    let (_, mut g) = obj.eval(x)?;
    for (_, c) in omega.iter() {
        if c.eval(x)?.abs() <= active_tol {
            let normal = c.gradient(x);
            let nn = normal.norm_squared();
            if nn == 0.0 {
                continue;
            }
            // A minimizer on the boundary has -g along the outward normal.
            let along = g.dot(&normal);
            if along < 0.0 {
                g.axpy(-along / nn, &normal, 1.0);
            }
        }
    }
    Ok(g.norm())
}
