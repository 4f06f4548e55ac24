//! Solving a constrained problem by optimizing the inputs of the layer.

use std::fmt;
use std::str::FromStr;

use hardnet_core::{
    AdamConfig, AdamState, BoundPolicy, ConstraintSet, DenseNet, HardLayer, Objective,
};
use hardnet_core::{Activation, PNorm};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Feasibility tolerance applied to every iterate.
pub const ITERATE_TOL: f64 = 1e-7;

/// Adam steps spent placing the first net output at a requested start.
const START_FIT_ITERS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    /// Optimize `(r, s)` directly.
    RawInputs,
    /// Optimize the input `z` of a fixed random network that emits `(r, s)`.
    Net,
    /// Optimize a point `y` passed through the central projection.
    Central,
}

impl FromStr for SolveMode {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw_inputs" | "raw" | "hidden" => Ok(SolveMode::RawInputs),
            "net" => Ok(SolveMode::Net),
            "central" => Ok(SolveMode::Central),
            other => Err(BenchError::InvalidArgument(format!("unknown solve mode '{other}'"))),
        }
    }
}

impl fmt::Display for SolveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveMode::RawInputs => "raw_inputs",
            SolveMode::Net => "net",
            SolveMode::Central => "central",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub mode: SolveMode,
    pub iters: usize,
    pub lr: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Learning rate at the end of each cycle relative to `lr`; 1 keeps it
    /// constant.
    pub lr_final_ratio: f64,
    /// Adam moments are reset at the start of every cycle.
    pub cycles: usize,
    pub beta2: f64,
    /// Lower clamp on `s` in raw mode. Below about -6 the output already
    /// sits at the anchor and further decrease only delays recovery.
    pub s_min: Option<f64>,
    /// Rescale the initial ray to this length in raw mode. The output does
    /// not depend on the length, but Adam's angular step is `lr / |r|`.
    pub ray_length: Option<f64>,
    pub net_hidden: Vec<usize>,
    pub policy: BoundPolicy,
    /// Starting point for the first restart.
    pub start: Option<DVector<f64>>,
    pub record_trajectory: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            mode: SolveMode::RawInputs,
            iters: 2000,
            lr: 0.1,
            restarts: 1,
            seed: 0,
            lr_final_ratio: 1.0,
            cycles: 1,
            beta2: AdamConfig::default().beta2,
            s_min: None,
            ray_length: None,
            net_hidden: vec![100; 5],
            policy: BoundPolicy::default(),
            start: None,
            record_trajectory: false,
        }
    }
}

impl SolveConfig {
    /// Schedule used for the benchmark tables.
    pub fn benchmark(seed: u64) -> Self {
        Self {
            iters: 10_000,
            lr: 0.1,
            restarts: 2,
            seed,
            lr_final_ratio: 1e-5,
            cycles: 10,
            ..Self::default()
        }
    }

    fn lr_at(&self, base: f64, it: usize) -> f64 {
        let cycles = self.cycles.max(1);
        let len = self.iters.div_ceil(cycles).max(1);
        let frac = (it % len) as f64 / len as f64;
        base * self.lr_final_ratio.powf(frac)
    }

    fn cycle_start(&self, it: usize) -> bool {
        let len = self.iters.div_ceil(self.cycles.max(1)).max(1);
        it > 0 && it % len == 0
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    /// Best iterate over all restarts.
    pub x: DVector<f64>,
    pub value: f64,
    /// Last iterate of the restart that produced `x`.
    pub final_x: DVector<f64>,
    pub iters_used: usize,
    pub restarts_used: usize,
    /// Iterates of the restart that produced `x`, when recorded.
    pub trajectory: Vec<DVector<f64>>,
}

/// What the optimizer actually moves.
enum Head {
    Raw,
    Net(DenseNet),
    Central,
}

struct Problem<'a> {
    layer: HardLayer,
    ray_length: Option<f64>,
    omega: &'a ConstraintSet,
    obj: &'a Objective,
    head: Head,
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.layer.dim()
    }

    /// Output, loss and gradient with respect to `theta`.
    fn eval(&self, theta: &[f64]) -> Result<(DVector<f64>, f64, Vec<f64>)> {
        self.eval_with(self.obj, theta)
    }

    fn eval_with(&self, obj: &Objective, theta: &[f64]) -> Result<(DVector<f64>, f64, Vec<f64>)> {
        let n = self.n();
        match &self.head {
            Head::Raw => {
                let r = DVector::from_column_slice(&theta[..n]);
                let (x, cache) = self.layer.forward(&r, theta[n])?;
                let (value, g) = obj.eval(&x)?;
                let back = self.layer.backward(&cache, &g);
                let mut grad = back.r.as_slice().to_vec();
                grad.push(back.s);
                Ok((x, value, grad))
            }
            Head::Net(net) => {
                let (out, net_cache) = net.forward(theta)?;
                let r = DVector::from_column_slice(&out[..n]);
                let (x, cache) = self.layer.forward(&r, out[n])?;
                let (value, g) = obj.eval(&x)?;
                let back = self.layer.backward(&cache, &g);
                let mut upstream = back.r.as_slice().to_vec();
                upstream.push(back.s);
                let grads = net.backward(&net_cache, &upstream);
                Ok((x, value, grads.input))
            }
            Head::Central => {
                let y = DVector::from_column_slice(theta);
                let (x, cache) = self.layer.central_forward(&y)?;
                let (value, g) = obj.eval(&x)?;
                let grad = self.layer.central_backward(&cache, &g);
                Ok((x, value, grad.as_slice().to_vec()))
            }
        }
    }

    fn init(&self, rng: &mut ChaCha8Rng, start: Option<&DVector<f64>>) -> Result<Vec<f64>> {
        let n = self.n();
        let p = self.layer.interior_point();
        let gauss = |rng: &mut ChaCha8Rng, k: usize| -> Vec<f64> {
            (0..k).map(|_| rng.sample(StandardNormal)).collect()
        };
        Ok(match (&self.head, start) {
            (Head::Raw, Some(x0)) => {
                let mut r = x0 - p;
                if r.norm() < 1e-12 {
                    r = DVector::from_element(n, 1e-6);
                }
                let bound = self.layer.ray_bound(&r)?;
                // sigmoid(s) * alpha = 1 puts the output at x0.
                let s = if bound.is_finite() && bound.value > 1.0 {
                    -(bound.value - 1.0).ln()
                } else if bound.is_finite() {
                    30.0
                } else {
                    0.0
                };
                if let Some(len) = self.ray_length {
                    r *= len / r.norm();
                }
                let mut theta = r.as_slice().to_vec();
                theta.push(s);
                theta
            }
            (Head::Raw, None) => {
                let mut theta = gauss(rng, n);
                theta.push(0.0);
                theta
            }
            (Head::Net(net), None) => gauss(rng, net.input_dim()),
            (Head::Net(net), Some(x0)) => {
                // Fit the input so the first output lands near x0.
                let target = Objective::LpDistance {
                    p_norm: PNorm::L2,
                    target: x0.clone(),
                };
                let mut theta = gauss(rng, net.input_dim());
                let mut adam = AdamState::new(AdamConfig::with_lr(0.02));
                for _ in 0..START_FIT_ITERS {
                    let (_, dist, grad) = self.eval_with(&target, &theta)?;
                    if dist < 1e-3 {
                        break;
                    }
                    adam.step_slice(&mut theta, &grad);
                }
                theta
            }
            (Head::Central, Some(x0)) => x0.as_slice().to_vec(),
            (Head::Central, None) => {
                let d = gauss(rng, n);
                (0..n).map(|i| p[i] + 0.1 * d[i]).collect()
            }
        })
    }
}

struct Run {
    best_x: DVector<f64>,
    best_value: f64,
    final_x: DVector<f64>,
    iters: usize,
    trajectory: Vec<DVector<f64>>,
}

fn run_once(problem: &Problem<'_>, config: &SolveConfig, mut theta: Vec<f64>, lr: f64) -> Result<Run> {
    let mut adam = AdamState::new(AdamConfig {
        lr,
        beta2: config.beta2,
        ..AdamConfig::default()
    });
    let mut best: Option<(DVector<f64>, f64)> = None;
    let mut trajectory = Vec::new();
    let mut last = None;
    for it in 0..=config.iters {
        let (x, value, grad) = problem.eval(&theta)?;
        if !value.is_finite() || !grad.iter().all(|g| g.is_finite()) {
            return Err(BenchError::Diverged(format!("non-finite loss at iteration {it}")));
        }
        if !problem.omega.is_feasible(&x, ITERATE_TOL)? {
            return Err(BenchError::InfeasibleOutput(problem.omega.max_violation(&x)));
        }
        if config.record_trajectory {
            trajectory.push(x.clone());
        }
        if best.as_ref().map_or(true, |(_, v)| value < *v) {
            best = Some((x.clone(), value));
        }
        if it == config.iters {
            last = Some(x);
            break;
        }
        if config.cycle_start(it) {
            adam.reset();
        }
        adam.set_lr(config.lr_at(lr, it));
        adam.step_slice(&mut theta, &grad);
        if let (Some(s_min), Head::Raw) = (config.s_min, &problem.head) {
            let k = theta.len() - 1;
            theta[k] = theta[k].max(s_min);
        }
        if !theta.iter().all(|v| v.is_finite()) {
            return Err(BenchError::Diverged(format!("non-finite parameters at iteration {it}")));
        }
    }
    let (best_x, best_value) = best.expect("at least one evaluation");
    Ok(Run {
        best_x,
        best_value,
        final_x: last.expect("loop ends on the last iteration"),
        iters: config.iters,
        trajectory,
    })
}

/// Minimizes `obj` over `omega` through the layer. Returns the best feasible
/// iterate over all restarts; a diverging restart is retried with a tenth of
/// the learning rate.
pub fn layer_solve(omega: &ConstraintSet, obj: &Objective, config: &SolveConfig) -> Result<SolveOutcome> {
    if config.restarts == 0 || !(config.lr > 0.0) {
        return Err(BenchError::InvalidArgument("restarts and lr must be positive".into()));
    }
    let n = omega.dim();
    let layer = HardLayer::with_policy(omega.clone(), config.policy)?;
    let head = match config.mode {
        SolveMode::RawInputs => Head::Raw,
        SolveMode::Central => Head::Central,
        SolveMode::Net => Head::Net(DenseNet::mlp(
            n + 1,
            &config.net_hidden,
            n + 1,
            Activation::Relu,
            config.seed ^ 0x5EED_0F_1E7,
        )),
    };
    let problem = Problem {
        layer,
        ray_length: config.ray_length,
        omega,
        obj,
        head,
    };

    let mut best: Option<Run> = None;
    let mut lr = config.lr;
    let mut last_err = None;
    let mut total_iters = 0;
    for k in 0..config.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(k as u64));
        let start = if k == 0 { config.start.as_ref() } else { None };
        let theta = problem.init(&mut rng, start)?;
        match run_once(&problem, config, theta, lr) {
            Ok(run) => {
                total_iters += run.iters;
                if best.as_ref().map_or(true, |b| run.best_value < b.best_value) {
                    best = Some(run);
                }
            }
            Err(BenchError::Diverged(msg)) => {
                lr *= 0.1;
                last_err = Some(BenchError::Diverged(msg));
            }
            Err(BenchError::Core(hardnet_core::Error::NonFinite(msg))) => {
                lr *= 0.1;
                last_err = Some(BenchError::Diverged(msg));
            }
            Err(e) => return Err(e),
        }
    }
    let run = best.ok_or_else(|| last_err.unwrap_or_else(|| BenchError::Diverged("no restart finished".into())))?;
    Ok(SolveOutcome {
        x: run.best_x,
        value: run.best_value,
        final_x: run.final_x,
        iters_used: total_iters,
        restarts_used: config.restarts,
        trajectory: run.trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use hardnet_core::QuadraticConstraint;
    use nalgebra::DMatrix;

    fn unit_disk() -> ConstraintSet {
        let disk = QuadraticConstraint::new(DMatrix::identity(2, 2) * 2.0, DVector::zeros(2), 1.0)
            .unwrap();
        ConstraintSet::quadratic_only(2, vec![disk])
            .unwrap()
            .with_interior_point(DVector::zeros(2))
            .unwrap()
    }

    #[test]
    fn lp_on_disk_raw_inputs() {
        let obj = Objective::Linear {
            c: DVector::from_column_slice(&[-1.0, 0.0]),
        };
        let out = layer_solve(&unit_disk(), &obj, &SolveConfig::default()).unwrap();
        assert!((out.value + 1.0).abs() <= 1e-3, "value {}", out.value);
        assert!(out.x.norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn lp_on_disk_net_and_central() {
        let obj = Objective::Linear {
            c: DVector::from_column_slice(&[-1.0, 0.0]),
        };
        for mode in [SolveMode::Net, SolveMode::Central] {
            let config = SolveConfig {
                mode,
                iters: 2000,
                lr: 0.05,
                lr_final_ratio: 1e-2,
                net_hidden: vec![32; 2],
                ..SolveConfig::default()
            };
            let out = layer_solve(&unit_disk(), &obj, &config).unwrap();
            assert!((out.value + 1.0).abs() <= 1e-2, "{mode}: value {}", out.value);
        }
    }

    #[test]
    fn start_point_is_reproduced() {
        let start = DVector::from_column_slice(&[0.3, -0.4]);
        let config = SolveConfig {
            iters: 0,
            start: Some(start.clone()),
            record_trajectory: true,
            ..SolveConfig::default()
        };
        let obj = Objective::Rosenbrock;
        let out = layer_solve(&unit_disk(), &obj, &config).unwrap();
        assert!((&out.trajectory[0] - start).norm() < 1e-12);
    }

    #[test]
    fn seeded_runs_repeat() {
        let obj = Objective::Linear {
            c: DVector::from_column_slice(&[0.3, 0.7]),
        };
        let config = SolveConfig {
            iters: 200,
            restarts: 2,
            seed: 9,
            ..SolveConfig::default()
        };
        let a = layer_solve(&unit_disk(), &obj, &config).unwrap();
        let b = layer_solve(&unit_disk(), &obj, &config).unwrap();
        assert_eq!(a.x, b.x);
    }
}
