//! Benchmarks and experiments for the hard-constraint layer: random problem
//! generators, a log-barrier reference solver, relative-error tables, the
//! projection experiments, the Rosenbrock and Bird trajectories and the Iris
//! simplex classifier.

pub mod barrier;
pub mod demos;
pub mod error;
pub mod generate;
pub mod iris;
pub mod metrics;
pub mod problem;
pub mod projection;
pub mod solve;
pub mod table;

pub use barrier::{barrier_reference_solve, barrier_solve, BarrierConfig, BarrierSolution};
pub use error::{BenchError, Result};
pub use generate::{
    gen_linear_problem, gen_problem, gen_quadratic_problem, BenchProblem, ConstraintKind, LossKind,
};
pub use metrics::{percentile, relative_error, RelError, RelErrorTable, TableRow};
pub use problem::ProblemFile;
pub use solve::{layer_solve, SolveConfig, SolveMode, SolveOutcome};
pub use table::{run_table, TableSpec};
