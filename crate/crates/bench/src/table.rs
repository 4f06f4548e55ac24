//! Relative-error tables over seeded instances.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barrier::barrier_reference_solve;
use crate::error::{BenchError, Result};
use crate::generate::{gen_problem, ConstraintKind, LossKind};
use crate::metrics::{relative_error, RelError, RelErrorTable, TableRow};
use crate::solve::{layer_solve, SolveConfig};

#[derive(Debug, Clone)]
pub struct TableSpec {
    pub loss: LossKind,
    pub constraints: ConstraintKind,
    pub ns: Vec<usize>,
    pub ms: Vec<usize>,
    pub instances: usize,
    pub seed: u64,
    /// Template for every instance; its seed is replaced per instance.
    pub solve: SolveConfig,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl TableSpec {
    pub fn new(loss: LossKind, constraints: ConstraintKind, seed: u64) -> Self {
        Self {
            loss,
            constraints,
            ns: vec![2, 5, 10],
            ms: vec![50, 100, 200],
            instances: 50,
            seed,
            solve: SolveConfig::benchmark(seed),
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub m: usize,
    pub n: usize,
    pub index: usize,
    pub seed: u64,
    pub achieved: f64,
    pub reference: f64,
    pub re: RelError,
}

/// Seed of one instance, independent of scheduling order.
pub fn instance_seed(base: u64, loss: LossKind, constraints: ConstraintKind, m: usize, n: usize, index: usize) -> u64 {
    let family = match (loss, constraints) {
        (LossKind::Linear, ConstraintKind::Linear) => 1u64,
        (LossKind::Linear, ConstraintKind::Quadratic) => 2,
        (LossKind::Quadratic, ConstraintKind::Linear) => 3,
        (LossKind::Quadratic, ConstraintKind::Quadratic) => 4,
    };
    // splitmix64 over the packed key
    let mut z = base
        ^ family.wrapping_mul(0xA24B_AED4_963E_E407)
        ^ (m as u64).wrapping_mul(0x9FB2_1C65_1E98_DF25)
        ^ (n as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ (index as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn run_instance(spec: &TableSpec, m: usize, n: usize, index: usize) -> Result<InstanceResult> {
    let seed = instance_seed(spec.seed, spec.loss, spec.constraints, m, n, index);
    let problem = gen_problem(spec.loss, spec.constraints, n, m, seed)?;
    let (_, reference) = barrier_reference_solve(&problem.omega, &problem.objective)?;
    let config = SolveConfig {
        seed,
        ..spec.solve.clone()
    };
    let out = layer_solve(&problem.omega, &problem.objective, &config)?;
    Ok(InstanceResult {
        m,
        n,
        index,
        seed,
        achieved: out.value,
        reference,
        re: relative_error(out.value, reference),
    })
}

/// Every instance of the table, in `(m, n, index)` order.
pub fn run_instances(spec: &TableSpec) -> Result<Vec<InstanceResult>> {
    let tasks: Vec<(usize, usize, usize)> = spec
        .ms
        .iter()
        .flat_map(|&m| spec.ns.iter().flat_map(move |&n| (0..spec.instances).map(move |i| (m, n, i))))
        .collect();
    let work = || -> Result<Vec<InstanceResult>> {
        tasks
            .par_iter()
            .map(|&(m, n, i)| run_instance(spec, m, n, i))
            .collect()
    };
    match spec.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| BenchError::InvalidArgument(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

pub fn aggregate(spec: &TableSpec, results: &[InstanceResult]) -> RelErrorTable {
    let mut rows = Vec::new();
    for &m in &spec.ms {
        for &n in &spec.ns {
            let errors: Vec<RelError> = results
                .iter()
                .filter(|r| r.m == m && r.n == n)
                .map(|r| r.re)
                .collect();
            if !errors.is_empty() {
                rows.push(TableRow::from_errors(m, n, &errors));
            }
        }
    }
    RelErrorTable { rows }
}

pub fn run_table(spec: &TableSpec) -> Result<RelErrorTable> {
    if spec.instances == 0 || spec.ns.is_empty() || spec.ms.is_empty() {
        return Err(BenchError::InvalidArgument("empty table grid".into()));
    }
    Ok(aggregate(spec, &run_instances(spec)?))
}
