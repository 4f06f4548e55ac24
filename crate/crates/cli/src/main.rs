//! `hardnet`: problem generation, solving, benchmark tables and demos.
//!
//! Exit codes: 0 success, 1 other failure, 2 invalid input, 3 infeasible
//! output detected, 4 divergence.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hardnet_bench::demos::{
    bird_config, bird_set, bird_starts, projected_gradient_norm, rosenbrock_config, rosenbrock_set,
    rosenbrock_starts, run_trajectories, save_trajectory_csv,
};
use hardnet_bench::iris::{iris_simplex_demo, save_curve_csv, Dataset, IrisConfig};
use hardnet_bench::projection::{
    demo_disk, demo_polygon, diameter, quiver_grid, sampling_box, save_loss_csv, save_quiver_csv,
    train_boundary_projection, train_orthogonal_projection, NetSpec, ProjectionConfig,
};
use hardnet_bench::{
    gen_problem, layer_solve, run_table, BenchError, ConstraintKind, LossKind, ProblemFile,
    SolveConfig, SolveMode, TableSpec,
};
use hardnet_core::equality::{reduce_spec, DEFAULT_RANK_TOL};
use hardnet_core::{BoundPolicy, ConstraintSetSpec, HardLayer, Objective, PNorm};
use serde::Serialize;

use config::{List, RunConfig};

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        use hardnet_core::Error as E;
        let code = match &e {
            BenchError::InfeasibleOutput(_) => 3,
            BenchError::Diverged(_) => 4,
            BenchError::InvalidArgument(_)
            | BenchError::Dataset(_)
            | BenchError::Json(_)
            | BenchError::Unbounded { .. } => 2,
            BenchError::Core(
                E::DimensionMismatch { .. }
                | E::InvalidConstraint(_)
                | E::NotInterior { .. }
                | E::NotPsd(_)
                | E::InteriorPointNotFound { .. }
                | E::Infeasible(_)
                | E::Unbounded
                | E::ZeroRay
                | E::InvalidArgument(_)
                | E::Json(_),
            ) => 2,
            BenchError::Core(E::NonFinite(_)) => 4,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<hardnet_core::Error> for CliError {
    fn from(e: hardnet_core::Error) -> Self {
        BenchError::from(e).into()
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError {
        code: 1,
        message: format!("{}: {e}", path.display()),
    }
}

#[derive(Parser, Debug)]
#[command(name = "hardnet", version, about = "Hard-constraint output layer experiments")]
struct Cli {
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write random benchmark problems as JSON files.
    Gen(GenArgs),
    /// Solve a problem file through the layer and print the result JSON.
    Solve(SolveArgs),
    /// Relative-error table for one (loss, constraint) family.
    Bench(BenchArgs),
    /// Run a demo and write CSV artifacts.
    Demo(DemoArgs),
    /// Eliminate the equality block of a constraint-set document.
    Reduce(ReduceArgs),
}

#[derive(clap::Args, Debug)]
struct GenArgs {
    /// Constraint kind: linear or quadratic.
    #[arg(long)]
    kind: Option<ConstraintKind>,
    /// Loss kind: linear or quadratic.
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
    /// Required, on the command line or in the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct SolveArgs {
    problem: PathBuf,
    /// raw_inputs, net or central.
    #[arg(long)]
    mode: Option<SolveMode>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// strict, cap or cap:VALUE.
    #[arg(long)]
    bound_policy: Option<BoundPolicy>,
    /// Feasibility tolerance for the reported solution.
    #[arg(long)]
    tol: Option<f64>,
    /// Adam second-moment decay.
    #[arg(long)]
    beta2: Option<f64>,
    /// Learning-rate cycles; Adam moments are reset at each cycle start.
    #[arg(long)]
    cycles: Option<usize>,
    /// End-of-cycle learning rate relative to --lr.
    #[arg(long)]
    lr_final_ratio: Option<f64>,
    /// Raw mode: lower clamp on the shift s.
    #[arg(long, allow_hyphen_values = true)]
    s_min: Option<f64>,
    /// Raw mode: length of the initial ray.
    #[arg(long)]
    ray_length: Option<f64>,
    /// Write the result JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long)]
    constraints: Option<ConstraintKind>,
    /// Required, on the command line or in the config file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    instances: Option<usize>,
    /// Comma-separated dimensions.
    #[arg(long)]
    ns: Option<List>,
    /// Comma-separated constraint counts, e.g. 20,50,100,200.
    #[arg(long)]
    ms: Option<List>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    bound_policy: Option<BoundPolicy>,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum DemoName {
    Rosenbrock,
    Bird,
    Project,
    Boundary,
    Iris,
}

#[derive(clap::Args, Debug)]
struct DemoArgs {
    #[arg(value_enum)]
    name: DemoName,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Trajectory demos: raw_inputs, net or central.
    #[arg(long)]
    mode: Option<SolveMode>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Iris: dataset CSV instead of the bundled copy.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Iris: per-class probability cap.
    #[arg(long)]
    upper_bound: Option<f64>,
}

#[derive(clap::Args, Debug)]
struct ReduceArgs {
    /// Constraint-set JSON with an `equality` block.
    input: PathBuf,
    /// Relative singular-value threshold for the kernel.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn positive<T: PartialOrd + Default + std::fmt::Display>(name: &str, v: T) -> Result<T> {
    if v > T::default() {
        Ok(v)
    } else {
        Err(CliError::invalid(format!("--{name} must be positive, got {v}")))
    }
}

fn positive_f64(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::invalid(format!("--{name} must be a positive number, got {v}")))
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| io_error(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn out_dir(cfg: &RunConfig, flag: Option<PathBuf>) -> Result<PathBuf> {
    let dir = cfg.pick_or("out", flag, PathBuf::from("."))?;
    std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    Ok(dir)
}

fn cmd_gen(cfg: &RunConfig, a: GenArgs) -> Result<()> {
    let kind = cfg.pick_or("kind", a.kind, ConstraintKind::Linear)?;
    let loss = cfg.pick_or("loss", a.loss, LossKind::Linear)?;
    let n = positive("n", cfg.pick_or("n", a.n, 2)?)?;
    let m = positive("m", cfg.pick_or("m", a.m, 50)?)?;
    let count = positive("count", cfg.pick_or("count", a.count, 1)?)?;
    let seed = cfg
        .pick("seed", a.seed)?
        .ok_or_else(|| CliError::invalid("gen requires --seed"))?;
    let dir = out_dir(cfg, a.out)?;
    for i in 0..count {
        let problem = gen_problem(loss, kind, n, m, seed.wrapping_add(i as u64))?;
        let path = dir.join(format!("{loss}_{kind}_n{n}_m{m}_{i:03}.json"));
        ProblemFile::from_problem(&problem).save(&path)?;
        println!("{}", path.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct SolveReport {
    x: Vec<f64>,
    value: f64,
    feasible: bool,
    iters_used: usize,
}

fn cmd_solve(cfg: &RunConfig, a: SolveArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.problem).map_err(|e| CliError::invalid(format!("{}: {e}", a.problem.display())))?;
    let problem = ProblemFile::from_json(&text)
        .map_err(|e| CliError::invalid(format!("{}: {e}", a.problem.display())))?
        .to_problem()?;
    let config = SolveConfig {
        mode: cfg.pick_or("mode", a.mode, SolveMode::RawInputs)?,
        iters: positive("iters", cfg.pick_or("iters", a.iters, 2000)?)?,
        lr: positive_f64("lr", cfg.pick_or("lr", a.lr, 0.1)?)?,
        restarts: positive("restarts", cfg.pick_or("restarts", a.restarts, 1)?)?,
        seed: cfg.pick_or("seed", a.seed, 0)?,
        policy: cfg.pick_or("bound_policy", a.bound_policy, BoundPolicy::default())?,
        cycles: positive("cycles", cfg.pick_or("cycles", a.cycles, 1)?)?,
        lr_final_ratio: positive_f64("lr_final_ratio", cfg.pick_or("lr_final_ratio", a.lr_final_ratio, 1.0)?)?,
        s_min: cfg.pick("s_min", a.s_min)?,
        ray_length: cfg
            .pick("ray_length", a.ray_length)?
            .map(|v| positive_f64("ray_length", v))
            .transpose()?,
        ..SolveConfig::default()
    };
    let config = SolveConfig {
        beta2: cfg.pick_or("beta2", a.beta2, config.beta2)?,
        ..config
    };
    if !(0.0..1.0).contains(&config.beta2) {
        return Err(CliError::invalid(format!("--beta2 must lie in [0, 1), got {}", config.beta2)));
    }
    let tol = positive_f64("tol", cfg.pick_or("tol", a.tol, 1e-7)?)?;
    let outcome = layer_solve(&problem.omega, &problem.objective, &config)?;
    let feasible = problem.omega.is_feasible(&outcome.x, tol)?;
    let report = SolveReport {
        x: outcome.x.iter().copied().collect(),
        value: outcome.value,
        feasible,
        iters_used: outcome.iters_used,
    };
    let mut text = serde_json::to_string_pretty(&report).map_err(BenchError::from)?;
    text.push('\n');
    write_or_print(cfg.pick("out", a.out)?.as_deref(), &text)?;
    if !feasible {
        return Err(CliError {
            code: 3,
            message: format!(
                "solution violates the constraints by {:e}",
                problem.omega.max_violation(&outcome.x)
            ),
        });
    }
    Ok(())
}

fn cmd_bench(cfg: &RunConfig, a: BenchArgs) -> Result<()> {
    let loss = cfg.pick_or("loss", a.loss, LossKind::Linear)?;
    let constraints = cfg.pick_or("constraints", a.constraints, ConstraintKind::Linear)?;
    let seed = cfg
        .pick("seed", a.seed)?
        .ok_or_else(|| CliError::invalid("bench requires --seed"))?;
    let mut spec = TableSpec::new(loss, constraints, seed);
    spec.instances = positive("instances", cfg.pick_or("instances", a.instances, spec.instances)?)?;
    if let Some(List(ns)) = cfg.pick("ns", a.ns)? {
        spec.ns = ns;
    }
    if let Some(List(ms)) = cfg.pick("ms", a.ms)? {
        spec.ms = ms;
    }
    if spec.ns.is_empty() || spec.ms.is_empty() || spec.ns.contains(&0) || spec.ms.contains(&0) {
        return Err(CliError::invalid("--ns and --ms must list positive integers"));
    }
    spec.solve.iters = positive("iters", cfg.pick_or("iters", a.iters, spec.solve.iters)?)?;
    spec.solve.lr = positive_f64("lr", cfg.pick_or("lr", a.lr, spec.solve.lr)?)?;
    spec.solve.restarts = positive("restarts", cfg.pick_or("restarts", a.restarts, spec.solve.restarts)?)?;
    spec.solve.policy = cfg.pick_or("bound_policy", a.bound_policy, spec.solve.policy)?;
    spec.jobs = cfg.pick("jobs", a.jobs)?.map(|j| positive("jobs", j)).transpose()?;
    let table = run_table(&spec)?;
    print!("{table}");
    if let Some(path) = cfg.pick("out", a.out)? {
        table.save_csv(&path)?;
    }
    Ok(())
}

fn cmd_demo(cfg: &RunConfig, a: DemoArgs) -> Result<()> {
    let dir = out_dir(cfg, a.out.clone())?;
    let seed = cfg.pick_or("seed", a.seed, 0)?;
    match a.name {
        DemoName::Rosenbrock | DemoName::Bird => {
            let mode = cfg.pick_or("mode", a.mode, SolveMode::RawInputs)?;
            let (omega, obj, starts, mut config, tag) = if a.name == DemoName::Rosenbrock {
                (rosenbrock_set(), Objective::Rosenbrock, rosenbrock_starts(), rosenbrock_config(mode, seed), "rosenbrock")
            } else {
                (bird_set(), Objective::Bird, bird_starts(), bird_config(mode, seed), "bird")
            };
            config.iters = positive("iters", cfg.pick_or("iters", a.iters, config.iters)?)?;
            config.lr = positive_f64("lr", cfg.pick_or("lr", a.lr, config.lr)?)?;
            let runs = run_trajectories(&omega, &obj, &starts, &config)?;
            for (k, t) in runs.iter().enumerate() {
                let path = dir.join(format!("{tag}_{mode}_{k}.csv"));
                save_trajectory_csv(&path, &t.points)?;
                let pg = projected_gradient_norm(&omega, &obj, &t.endpoint, 1e-6)?;
                println!(
                    "start ({:.3}, {:.3}) -> ({:.6}, {:.6})  f = {:.6e}  |proj grad| = {:.1e}  {}",
                    t.start[0],
                    t.start[1],
                    t.endpoint[0],
                    t.endpoint[1],
                    t.value,
                    pg,
                    path.display()
                );
            }
        }
        DemoName::Project => {
            let omega = demo_polygon();
            let layer = HardLayer::new(omega.clone())?;
            let (lo, hi) = sampling_box(&omega)?;
            let grid = quiver_grid(&lo, &hi, 21);
            let central = grid
                .iter()
                .map(|x| Ok((x.clone(), layer.central_project(x)?)))
                .collect::<Result<Vec<_>>>()?;
            let path = dir.join("project_central_quiver.csv");
            save_quiver_csv(&path, &central)?;
            println!("{}", path.display());

            let pcfg = projection_config(cfg, &a, seed)?;
            let (model, report) = train_orthogonal_projection(&omega, &pcfg)?;
            let learned = grid
                .iter()
                .map(|x| Ok((x.clone(), model.apply(x)?)))
                .collect::<Result<Vec<_>>>()?;
            let path = dir.join("project_learned_quiver.csv");
            save_quiver_csv(&path, &learned)?;
            println!("{}", path.display());
            save_loss_csv(&dir.join("project_loss.csv"), &report.loss_curve)?;
            println!(
                "mean in-set displacement {:.4} (set diameter {:.3})",
                report.mean_in_set_displacement,
                diameter(&omega)?
            );
        }
        DemoName::Boundary => {
            for (tag, omega) in [("disk", demo_disk()), ("polygon", demo_polygon())] {
                let (lo, hi) = sampling_box(&omega)?;
                let grid = quiver_grid(&lo, &hi, 21);
                for p_norm in [PNorm::L1, PNorm::L2] {
                    let pcfg = ProjectionConfig {
                        p_norm,
                        ..projection_config(cfg, &a, seed)?
                    };
                    let (model, report) = train_boundary_projection(&omega, &pcfg)?;
                    let pairs = grid
                        .iter()
                        .map(|x| Ok((x.clone(), model.apply(x)?)))
                        .collect::<Result<Vec<_>>>()?;
                    let stem = format!("boundary_{tag}_l{}", p_norm.order());
                    save_quiver_csv(&dir.join(format!("{stem}_quiver.csv")), &pairs)?;
                    save_loss_csv(&dir.join(format!("{stem}_loss.csv")), &report.loss_curve)?;
                    println!(
                        "{stem}: final loss {:.4}",
                        report.loss_curve.last().copied().unwrap_or(f64::NAN)
                    );
                }
            }
        }
        DemoName::Iris => {
            let data = match cfg.pick("data", a.data)? {
                Some(path) => Dataset::load(&path)?,
                None => Dataset::bundled(),
            };
            let defaults = IrisConfig::default();
            let iris = IrisConfig {
                upper_bound: cfg.pick_or("upper_bound", a.upper_bound, defaults.upper_bound)?,
                epochs: positive("iters", cfg.pick_or("iters", a.iters, defaults.epochs)?)?,
                lr: positive_f64("lr", cfg.pick_or("lr", a.lr, defaults.lr)?)?,
                seed,
                ..defaults
            };
            for r in iris_simplex_demo(&data, &iris)? {
                let path = dir.join(format!("iris_{}.csv", r.head.name()));
                save_curve_csv(&path, &r.curve)?;
                println!(
                    "{:<11} train acc {:.3}  test acc {:.3}  max p {:.4}  {}",
                    r.head.name(),
                    r.final_train_accuracy,
                    r.final_test_accuracy,
                    r.max_probability,
                    path.display()
                );
            }
        }
    }
    Ok(())
}

fn projection_config(cfg: &RunConfig, a: &DemoArgs, seed: u64) -> Result<ProjectionConfig> {
    let d = ProjectionConfig::default();
    Ok(ProjectionConfig {
        iters: positive("iters", cfg.pick_or("iters", a.iters, d.iters)?)?,
        lr: positive_f64("lr", cfg.pick_or("lr", a.lr, d.lr)?)?,
        seed,
        net: NetSpec { seed, ..d.net.clone() },
        ..d
    })
}

#[derive(Serialize)]
struct ReducedDocument {
    #[serde(flatten)]
    reduced: ConstraintSetSpec,
    reduction: hardnet_core::equality::ReductionSidecar,
}

fn cmd_reduce(cfg: &RunConfig, a: ReduceArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.input).map_err(|e| CliError::invalid(format!("{}: {e}", a.input.display())))?;
    let spec = ConstraintSetSpec::from_json(&text)?;
    let tol = positive_f64("tol", cfg.pick_or("tol", a.tol, DEFAULT_RANK_TOL)?)?;
    let (mut reduced, sidecar) = reduce_spec(&spec, tol)?;
    // Attach an interior point when the reduced set has one.
    if let Ok(set) = reduced.to_set()?.ensure_interior_point(hardnet_core::constraint::INTERIOR_MARGIN, 10_000) {
        reduced.interior_point = set.interior_point().map(|p| p.iter().copied().collect());
    }
    let doc = ReducedDocument {
        reduced,
        reduction: sidecar,
    };
    let mut out = serde_json::to_string_pretty(&doc).map_err(BenchError::from)?;
    out.push('\n');
    write_or_print(cfg.pick("out", a.out)?.as_deref(), &out)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Gen(a) => cmd_gen(&cfg, a),
        Command::Solve(a) => cmd_solve(&cfg, a),
        Command::Bench(a) => cmd_bench(&cfg, a),
        Command::Demo(a) => cmd_demo(&cfg, a),
        Command::Reduce(a) => cmd_reduce(&cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
