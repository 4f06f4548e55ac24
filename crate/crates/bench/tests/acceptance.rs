//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 2 4`.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use hardnet_bench::demos::{rosenbrock_config, rosenbrock_set, rosenbrock_starts, run_trajectories};
use hardnet_bench::iris::{iris_simplex_demo, save_curve_csv, Dataset, IrisConfig, IrisHead};
use hardnet_bench::{
    barrier_reference_solve, gen_problem, run_table, ConstraintKind, LossKind, SolveMode, TableSpec,
};
use hardnet_core::{
    Activation, BoundPolicy, ConstraintSet, DenseNet, EqualityReduction, EqualitySystem, Error,
    HardLayer, LinearConstraint, Objective, QuadraticConstraint,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = std::result::Result<String, String>;

fn main() {
    let wanted: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "hard-feasibility fuzz", feasibility_fuzz),
        (2, "central-projection idempotency", central_idempotency),
        (3, "gradient suite", gradient_suite),
        (4, "oracle equivalence", oracle_equivalence),
        (5, "table reproduction", table_reproduction),
        (6, "rosenbrock trajectories", rosenbrock),
        (7, "equality elimination", equality_elimination),
        (8, "boundary mode", boundary_mode),
        (9, "complexity scaling", complexity_scaling),
        (10, "iris bounded simplex", iris),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {id:>2} {name}: {detail} ({secs:.1} s)"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {id:>2} {name}: {detail} ({secs:.1} s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn artifact_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).expect("artifact dir");
    dir
}

// ---------------------------------------------------------------------------
// Random sets with the origin strictly inside. Some are unbounded.

fn normal_vec(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn normal_mat(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn linear_rows(rng: &mut impl Rng, n: usize, m: usize) -> Vec<LinearConstraint> {
    (0..m)
        .map(|_| LinearConstraint::new(normal_vec(rng, n), rng.random_range(0.1..3.0)).unwrap())
        .collect()
}

fn quadratic_rows(rng: &mut impl Rng, n: usize, m: usize) -> Vec<QuadraticConstraint> {
    (0..m)
        .map(|_| {
            // Mix of full-rank and rank-one (slab-like, unbounded) curvature.
            let k = if rng.random_bool(0.2) { 1 } else { n };
            let l = normal_mat(rng, n, k);
            let p = &l * l.transpose();
            let p = (&p + p.transpose()) * 0.5;
            QuadraticConstraint::new(p, normal_vec(rng, n) * 0.5, rng.random_range(0.1..3.0)).unwrap()
        })
        .collect()
}

fn random_set(rng: &mut impl Rng, kind: usize, n: usize, m: usize) -> ConstraintSet {
    let (lin, quad) = match kind % 3 {
        0 => (linear_rows(rng, n, m), vec![]),
        1 => (vec![], quadratic_rows(rng, n, m)),
        _ => (linear_rows(rng, n, m - m / 2), quadratic_rows(rng, n, m / 2)),
    };
    ConstraintSet::new(n, lin, quad)
        .unwrap()
        .with_interior_point(DVector::zeros(n))
        .unwrap()
}

fn bounded_problem(rng: &mut impl Rng, kind: usize, n: usize, m: usize) -> ConstraintSet {
    let cons = if kind % 2 == 0 {
        ConstraintKind::Linear
    } else {
        ConstraintKind::Quadratic
    };
    gen_problem(LossKind::Linear, cons, n, m, rng.random()).unwrap().omega
}

/// Largest feasible step along `r`, by bisection on the feasibility test.
fn bisect_bound(set: &ConstraintSet, p: &DVector<f64>, r: &DVector<f64>) -> f64 {
    let feasible = |a: f64| set.max_violation(&(p + r * a)) <= 0.0;
    let mut hi = 1.0;
    while feasible(hi) {
        hi *= 2.0;
        if hi > 1e12 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return lo;
        }
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Ratio between the second-smallest and smallest per-constraint bound.
fn tie_gap(set: &ConstraintSet, p: &DVector<f64>, r: &DVector<f64>) -> f64 {
    let mut b: Vec<f64> = set.iter().map(|(_, c)| c.ray_bound(p, r).unwrap()).collect();
    b.sort_by(f64::total_cmp);
    if b.len() < 2 {
        f64::INFINITY
    } else {
        b[1] / b[0]
    }
}

// ---------------------------------------------------------------------------

fn feasibility_fuzz() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ns = [2, 5, 10];
    let ms = [20, 50, 100, 200];
    let (sets, per_set) = (1000, 100);
    let mut bad = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for k in 0..sets {
        let n = ns[k % 3];
        let m = ms[(k / 3) % 4];
        let set = random_set(&mut rng, k / 12, n, m);
        let layer = HardLayer::new(set.clone()).unwrap();
        for _ in 0..per_set {
            let scale = 10f64.powf(rng.random_range(-8.0..8.0));
            let r = normal_vec(&mut rng, n) * scale;
            let s = rng.random_range(-50.0..50.0);
            let (x, _) = layer.forward(&r, s).map_err(|e| e.to_string())?;
            let v = set.max_violation(&x);
            worst = worst.max(v);
            if !set.is_feasible(&x, 1e-7).unwrap() {
                bad += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        bad == 0 && elapsed < Duration::from_secs(60),
        format!(
            "{}/{} outputs feasible at 1e-7, worst h = {worst:.1e}, {:.1} s of 60",
            sets * per_set - bad,
            sets * per_set,
            elapsed.as_secs_f64()
        ),
    )
}

fn central_idempotency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let (mut inside, mut inside_moved) = (0, 0);
    let points = 10_000;
    for k in 0..points / 100 {
        let n = [2, 5, 10][k % 3];
        let set = random_set(&mut rng, k, n, [20, 50, 100][k % 3]);
        let layer = HardLayer::new(set.clone()).unwrap();
        for _ in 0..100 {
            let x = normal_vec(&mut rng, n) * 10f64.powf(rng.random_range(-2.0..1.5));
            let y = layer.central_project(&x).unwrap();
            let z = layer.central_project(&y).unwrap();
            worst = worst.max((&z - &y).amax() / (1.0 + y.amax()));
            if set.max_violation(&x) <= 0.0 {
                inside += 1;
                if y != x {
                    inside_moved += 1;
                }
            }
        }
    }
    check(
        worst <= 1e-12 && inside_moved == 0 && inside > 0,
        format!(
            "{points} points, max |f(f(x)) - f(x)| = {worst:.1e} (relative), {inside} in-set points, {inside_moved} moved"
        ),
    )
}

/// Central-difference gradient of `w . layer(r, s)` against the backward pass.
fn layer_gradient_error(layer: &HardLayer, r: &DVector<f64>, s: f64, w: &DVector<f64>) -> f64 {
    let n = r.len();
    let loss = |r: &DVector<f64>, s: f64| w.dot(&layer.forward(r, s).unwrap().0);
    let (_, cache) = layer.forward(r, s).unwrap();
    let back = layer.backward(&cache, w);
    let h = 1e-6 * r.norm().max(1.0);
    let mut fd = DVector::zeros(n + 1);
    let mut an = DVector::zeros(n + 1);
    for k in 0..n {
        let mut up = r.clone();
        up[k] += h;
        let mut dn = r.clone();
        dn[k] -= h;
        fd[k] = (loss(&up, s) - loss(&dn, s)) / (2.0 * h);
        an[k] = back.r[k];
    }
    fd[n] = (loss(r, s + 1e-6) - loss(r, s - 1e-6)) / 2e-6;
    an[n] = back.s;
    (&fd - &an).norm() / fd.norm().max(1e-8)
}

fn gradient_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = [0.0f64; 2];
    let mut count = [0usize; 2];
    // Linear-active and quadratic-active configurations, 1000 each.
    while count.iter().any(|&c| c < 1000) {
        let n = rng.random_range(2..=6);
        let m = rng.random_range(4..=30);
        let set = random_set(&mut rng, 2, n, m);
        let layer = HardLayer::new(set.clone()).unwrap();
        let p = layer.interior_point().clone();
        let r = normal_vec(&mut rng, n);
        let bound = layer.ray_bound(&r).unwrap();
        let Some(active) = bound.active else { continue };
        let slot = match active {
            hardnet_core::ConstraintId::Linear(_) => 0,
            hardnet_core::ConstraintId::Quadratic(_) => 1,
        };
        if count[slot] >= 1000 || tie_gap(&set, &p, &r) < 1.0 + 1e-3 {
            continue;
        }
        let s = rng.random_range(-3.0..3.0);
        let w = normal_vec(&mut rng, n);
        worst[slot] = worst[slot].max(layer_gradient_error(&layer, &r, s, &w));
        count[slot] += 1;
    }

    // End to end: net -> (r, s) -> layer -> objective, derivative in the net
    // parameters.
    let mut composite: f64 = 0.0;
    for trial in 0..50u64 {
        let n = 3;
        let set = random_set(&mut rng, trial as usize, n, 15);
        let layer = HardLayer::new(set).unwrap();
        let mut net = DenseNet::mlp(4, &[16, 16], n + 1, Activation::Tanh, trial);
        let obj = Objective::Linear { c: normal_vec(&mut rng, n) };
        let z: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss_of = |net: &DenseNet| {
            let out = net.predict(&z).unwrap();
            let (x, _) = layer.forward(&DVector::from_column_slice(&out[..n]), out[n]).unwrap();
            obj.value(&x).unwrap()
        };
        let (out, cache) = net.forward(&z).unwrap();
        let r = DVector::from_column_slice(&out[..n]);
        if tie_gap(layer.omega(), layer.interior_point(), &r) < 1.0 + 1e-3 {
            continue;
        }
        let (x, fc) = layer.forward(&r, out[n]).unwrap();
        let (_, gx) = obj.eval(&x).unwrap();
        let back = layer.backward(&fc, &gx);
        let mut upstream = back.r.as_slice().to_vec();
        upstream.push(back.s);
        let analytic = net.backward(&cache, &upstream).param_slices().concat();
        let total = analytic.len();
        let mut fd = Vec::new();
        let mut an = Vec::new();
        for k in (0..total).step_by(7) {
            let nudge = |net: &mut DenseNet, delta: f64| {
                let mut seen = 0;
                for slice in net.param_slices_mut() {
                    if k < seen + slice.len() {
                        slice[k - seen] += delta;
                        return;
                    }
                    seen += slice.len();
                }
            };
            let h = 1e-6;
            nudge(&mut net, h);
            let up = loss_of(&net);
            nudge(&mut net, -2.0 * h);
            let dn = loss_of(&net);
            nudge(&mut net, h);
            fd.push((up - dn) / (2.0 * h));
            an.push(analytic[k]);
        }
        let fd = DVector::from_vec(fd);
        let an = DVector::from_vec(an);
        composite = composite.max((&fd - &an).norm() / fd.norm().max(1e-8));
    }
    check(
        worst[0] <= 1e-5 && worst[1] <= 1e-5 && composite <= 1e-4,
        format!(
            "worst relative error: linear-active {:.1e} (n={}), quadratic-active {:.1e} (n={}), composite {composite:.1e}",
            worst[0], count[0], worst[1], count[1]
        ),
    )
}

/// Feasible `x1` interval on the row `x2 = y`, or `None`.
fn row_interval(set: &ConstraintSet, y: f64) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut restrict = |a: f64, b: f64, c: f64| -> bool {
        // a t^2 + b t + c <= 0 with a >= 0.
        if a > 0.0 {
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                return false;
            }
            let sq = disc.sqrt();
            lo = lo.max((-b - sq) / (2.0 * a));
            hi = hi.min((-b + sq) / (2.0 * a));
        } else if b > 0.0 {
            hi = hi.min(-c / b);
        } else if b < 0.0 {
            lo = lo.max(-c / b);
        } else if c > 0.0 {
            return false;
        }
        true
    };
    for c in set.linear() {
        if !restrict(0.0, c.a()[0], c.a()[1] * y - c.b()) {
            return None;
        }
    }
    for c in set.quadratic() {
        let (p, q) = (c.p(), c.q());
        let a = 0.5 * p[(0, 0)];
        let b = p[(0, 1)] * y + q[0];
        let k = 0.5 * p[(1, 1)] * y * y + q[1] * y - c.b();
        if !restrict(a, b, k) {
            return None;
        }
    }
    (lo <= hi).then_some((lo, hi))
}

fn objective_2d(obj: &Objective) -> impl Fn(f64, f64) -> f64 + '_ {
    move |x1, x2| match obj {
        Objective::Linear { c } => c[0] * x1 + c[1] * x2,
        Objective::Quadratic { h, c } => {
            0.5 * (h[(0, 0)] * x1 * x1 + 2.0 * h[(0, 1)] * x1 * x2 + h[(1, 1)] * x2 * x2)
                + c[0] * x1
                + c[1] * x2
        }
        _ => unreachable!("generated objectives are linear or quadratic"),
    }
}

/// Best feasible point of a `k x k` grid over `[lo, hi]`.
fn grid_min(set: &ConstraintSet, obj: &Objective, lo: [f64; 2], hi: [f64; 2], k: usize) -> Option<(f64, [f64; 2], [f64; 2])> {
    let f = objective_2d(obj);
    let step = [(hi[0] - lo[0]) / (k - 1) as f64, (hi[1] - lo[1]) / (k - 1) as f64];
    let mut best: Option<(f64, [f64; 2])> = None;
    for j in 0..k {
        let y = lo[1] + step[1] * j as f64;
        let Some((a, b)) = row_interval(set, y) else { continue };
        let first = ((a - lo[0]) / step[0]).ceil().max(0.0) as usize;
        let last = ((b - lo[0]) / step[0]).floor().min((k - 1) as f64);
        if last < 0.0 {
            continue;
        }
        for i in first..=last as usize {
            let x = lo[0] + step[0] * i as f64;
            let v = f(x, y);
            if best.is_none_or(|(bv, _)| v < bv) {
                best = Some((v, [x, y]));
            }
        }
    }
    best.map(|(v, x)| (v, x, step))
}

/// Grid brute force on a 2001 x 2001 grid over the probed bounding box, then
/// repeated zooms around the incumbent until it stops improving.
fn grid_oracle(set: &ConstraintSet, obj: &Objective) -> (f64, [f64; 2]) {
    let p = set.interior_point().unwrap();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for k in 0..3600 {
        let t = k as f64 * std::f64::consts::TAU / 3600.0;
        let r = DVector::from_column_slice(&[t.cos(), t.sin()]);
        let b = set.ray_bound(p, &r).unwrap().value;
        for d in 0..2 {
            lo[d] = lo[d].min(p[d] + b * r[d]);
            hi[d] = hi[d].max(p[d] + b * r[d]);
        }
    }
    for d in 0..2 {
        let pad = 0.05 * (hi[d] - lo[d]);
        lo[d] -= pad;
        hi[d] += pad;
    }
    let (mut value, mut x, mut step) = grid_min(set, obj, lo, hi, 2001).expect("grid hits the set");
    for _ in 0..12 {
        let zl = [x[0] - 10.0 * step[0], x[1] - 10.0 * step[1]];
        let zh = [x[0] + 10.0 * step[0], x[1] + 10.0 * step[1]];
        let (v, nx, ns) = grid_min(set, obj, zl, zh, 401).expect("incumbent is feasible");
        let gain = value - v;
        if v < value {
            value = v;
            x = nx;
        }
        step = ns;
        if gain <= 1e-14 * (1.0 + value.abs()) && step[0].max(step[1]) < 1e-9 {
            break;
        }
    }
    (value, x)
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_bound: f64 = 0.0;
    for k in 0..1000 {
        let m = rng.random_range(2..=30);
        let set = random_set(&mut rng, k, 2, m);
        let p = set.interior_point().unwrap().clone();
        let r = normal_vec(&mut rng, 2);
        let closed = set.ray_bound(&p, &r).unwrap().value;
        let oracle = bisect_bound(&set, &p, &r);
        let err = if closed.is_infinite() && oracle.is_infinite() {
            0.0
        } else {
            (closed - oracle).abs() / oracle
        };
        worst_bound = worst_bound.max(err);
    }

    let mut worst_value: f64 = 0.0;
    let mut kinds = Vec::new();
    for loss in [LossKind::Linear, LossKind::Quadratic] {
        for cons in [ConstraintKind::Linear, ConstraintKind::Quadratic] {
            kinds.push((loss, cons));
        }
    }
    for k in 0..50u64 {
        let (loss, cons) = kinds[k as usize % 4];
        let prob = gen_problem(loss, cons, 2, 20, 4000 + k).map_err(|e| e.to_string())?;
        let (xb, fb) = barrier_reference_solve(&prob.omega, &prob.objective).map_err(|e| e.to_string())?;
        if !prob.omega.is_feasible(&xb, 1e-9).unwrap() {
            return Err(format!("barrier solution infeasible on problem {k}"));
        }
        let (fg, _) = grid_oracle(&prob.omega, &prob.objective);
        worst_value = worst_value.max((fb - fg).abs() / fg.abs().max(1.0));
    }
    check(
        worst_bound <= 1e-4 && worst_value <= 1e-4,
        format!(
            "ray bound vs bisection: worst rel {worst_bound:.1e} over 1000; barrier vs grid: worst {worst_value:.1e} over 50"
        ),
    )
}

/// Reference medians per `(m, n)` cell, in percent, for the four families.
/// Rows are m = 50, 100, 200; columns n = 2, 5, 10.
const REFERENCE_MEDIANS: [((LossKind, ConstraintKind), [[f64; 3]; 3]); 4] = [
    (
        (LossKind::Linear, ConstraintKind::Linear),
        [[3.6e-5, 2.4e-3, 1.4e-2], [2.6e-5, 2.1e-3, 1.1e-2], [1.5e-5, 2.6e-3, 1.2e-2]],
    ),
    (
        (LossKind::Linear, ConstraintKind::Quadratic),
        [[1.3e-4, 7.7e-5, 4.3e-6], [1.6e-4, 8.1e-4, 1.3e-5], [3.1e-4, 1.1e-3, 2.8e-4]],
    ),
    (
        (LossKind::Quadratic, ConstraintKind::Linear),
        [[3.9e-5, 1.2e-3, 6.9e-3], [5.4e-5, 1.6e-3, 8.0e-3], [5.0e-5, 1.3e-3, 7.7e-3]],
    ),
    (
        (LossKind::Quadratic, ConstraintKind::Quadratic),
        [[7.1e-6, 4.9e-4, 3.5e-3], [6.0e-6, 8.9e-4, 4.3e-3], [1.2e-5, 5.9e-4, 4.9e-3]],
    ),
];

fn table_reproduction() -> Outcome {
    let start = Instant::now();
    let dir = artifact_dir();
    let mut failures = Vec::new();
    let mut worst_ratio: f64 = 0.0;
    let mut worst_p100: f64 = 0.0;
    for ((loss, cons), medians) in REFERENCE_MEDIANS {
        let spec = TableSpec::new(loss, cons, 2024);
        let table = run_table(&spec).map_err(|e| format!("{loss}/{cons}: {e}"))?;
        table
            .save_csv(&dir.join(format!("table_{loss}_{cons}.csv")))
            .map_err(|e| e.to_string())?;
        for (i, m) in [50, 100, 200].into_iter().enumerate() {
            for (j, n) in [2, 5, 10].into_iter().enumerate() {
                let row = table.row(m, n).ok_or("missing table row")?;
                let mut ceiling = 10.0 * medians[i][j];
                if n == 10 {
                    ceiling = ceiling.max(1e-1);
                }
                worst_ratio = worst_ratio.max(row.p50 / ceiling);
                worst_p100 = worst_p100.max(row.p100);
                if row.p50 > ceiling || row.p100 > 5.0 {
                    failures.push(format!(
                        "{loss}/{cons} m={m} n={n}: median {:.2e} (ceiling {ceiling:.1e}), p100 {:.2e}",
                        row.p50, row.p100
                    ));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(30 * 60) {
        failures.push(format!("runtime {:.0} s exceeds 30 min", elapsed.as_secs_f64()));
    }
    check(
        failures.is_empty(),
        format!(
            "36 cells x 50 instances, worst median/ceiling {worst_ratio:.2e}, worst p100 {worst_p100:.2e} %{}",
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failing: {}", failures.join("; "))
            }
        ),
    )
}

fn rosenbrock() -> Outcome {
    let omega = rosenbrock_set();
    let config = rosenbrock_config(SolveMode::RawInputs, 6);
    let runs = run_trajectories(&omega, &Objective::Rosenbrock, &rosenbrock_starts(), &config)
        .map_err(|e| e.to_string())?;
    let target = DVector::from_column_slice(&[1.0, 1.0]);
    let mut worst_dist: f64 = 0.0;
    let mut worst_h = f64::NEG_INFINITY;
    for t in &runs {
        worst_dist = worst_dist.max((&t.endpoint - &target).norm());
        for x in &t.points {
            worst_h = worst_h.max(omega.max_violation(x));
        }
    }
    check(
        runs.len() == 9 && worst_dist <= 1e-2 && worst_h <= 1e-7,
        format!(
            "{} starts, worst endpoint distance to (1,1) {worst_dist:.1e}, worst iterate h {worst_h:.1e}",
            runs.len()
        ),
    )
}

fn equality_elimination() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_eq: f64 = 0.0;
    let mut worst_val: f64 = 0.0;
    let mut deficient = 0;
    for k in 0..1000 {
        let n = rng.random_range(2..=10);
        let rank = rng.random_range(1..n);
        // Every fourth system repeats combinations of its rows.
        let extra = if k % 4 == 0 { rng.random_range(1..=3) } else { 0 };
        let base = normal_mat(&mut rng, rank, n);
        let mix = normal_mat(&mut rng, extra, rank);
        let mut q = DMatrix::zeros(rank + extra, n);
        q.rows_mut(0, rank).copy_from(&base);
        if extra > 0 {
            q.rows_mut(rank, extra).copy_from(&(&mix * &base));
            deficient += 1;
        }
        let e = &q * normal_vec(&mut rng, n);
        let red = EqualityReduction::new(&EqualitySystem::new(q.clone(), e.clone()).unwrap())
            .map_err(|err| format!("system {k}: {err}"))?;
        if red.delta() != n - rank {
            return Err(format!("system {k}: kernel dimension {} for rank {rank} in R^{n}", red.delta()));
        }
        let lin = linear_rows(&mut rng, n, 5);
        let quad = quadratic_rows(&mut rng, n, 3);
        let reduced_lin = red.reduce_linear_constraints(&lin).map_err(|e| e.to_string())?;
        let reduced_quad: Vec<_> = quad
            .iter()
            .map(|c| red.reduce_quadratic(c).unwrap())
            .collect();
        if reduced_lin.len() != lin.len() || reduced_quad.iter().any(|c| c.is_none()) {
            return Err(format!("system {k}: a constraint was dropped"));
        }
        for _ in 0..5 {
            let w = normal_vec(&mut rng, red.delta()) * 2.0;
            let x = red.lift(&w).unwrap();
            worst_eq = worst_eq.max((&q * &x - &e).norm() / (1.0 + e.norm()));
            for (orig, c) in lin.iter().zip(&reduced_lin) {
                worst_val = worst_val.max((orig.eval(&x).unwrap() - c.eval(&w).unwrap()).abs());
            }
            for (orig, c) in quad.iter().zip(&reduced_quad) {
                let c = c.as_ref().unwrap();
                worst_val = worst_val.max((orig.eval(&x).unwrap() - c.eval(&w).unwrap()).abs());
            }
        }
    }
    check(
        worst_eq <= 1e-9 && worst_val <= 1e-9,
        format!(
            "1000 systems ({deficient} rank-deficient), worst |Qx-e|/(1+|e|) {worst_eq:.1e}, worst constraint mismatch {worst_val:.1e}"
        ),
    )
}

fn boundary_mode() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_active: f64 = 0.0;
    let mut worst_h = f64::NEG_INFINITY;
    let rays = 10_000;
    for k in 0..rays / 100 {
        let n = [2, 5, 10][k % 3];
        let set = bounded_problem(&mut rng, k, n, [20, 50, 100][(k / 3) % 3]);
        let layer = HardLayer::new(set.clone()).unwrap();
        for _ in 0..100 {
            let r = normal_vec(&mut rng, n) * 10f64.powf(rng.random_range(-3.0..3.0));
            let x = layer.boundary_map(&r).map_err(|e| e.to_string())?;
            let values = set.eval_all(&x).unwrap();
            let closest = values.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
            worst_active = worst_active.max(closest);
            worst_h = worst_h.max(set.max_violation(&x));
        }
    }
    // Contract: r = 0 and unbounded directions are errors under every policy.
    let half = ConstraintSet::linear_only(2, vec![LinearConstraint::from_slice(&[1.0, 0.0], 1.0).unwrap()])
        .unwrap()
        .with_interior_point(DVector::zeros(2))
        .unwrap();
    let mut contract = true;
    for policy in [BoundPolicy::Strict, BoundPolicy::default()] {
        let layer = HardLayer::with_policy(half.clone(), policy).unwrap();
        contract &= layer.boundary_map(&DVector::zeros(2)) == Err(Error::ZeroRay);
        contract &= layer.boundary_map(&DVector::from_column_slice(&[-1.0, 0.3])) == Err(Error::Unbounded);
        contract &= layer.boundary_map(&DVector::from_column_slice(&[1.0, 0.3])).is_ok();
    }
    check(
        worst_active <= 1e-7 && worst_h <= 1e-7 && contract,
        format!(
            "{rays} rays, worst |h_active| {worst_active:.1e}, worst h {worst_h:.1e}, error contract {}",
            if contract { "held" } else { "broken" }
        ),
    )
}

/// Median seconds per forward pass over a fixed batch of rays.
fn forward_time(set: &ConstraintSet, rng: &mut impl Rng) -> f64 {
    let n = set.dim();
    let layer = HardLayer::new(set.clone()).unwrap();
    let rays: Vec<DVector<f64>> = (0..64).map(|_| normal_vec(rng, n)).collect();
    let mut sink = 0.0;
    // Aim for about 20 ms per sample.
    let probe = Instant::now();
    for r in &rays {
        sink += layer.forward(r, 0.0).unwrap().0[0];
    }
    let per = probe.elapsed().as_secs_f64() / rays.len() as f64;
    let reps = ((0.02 / per) as usize / rays.len()).max(1);
    let mut samples: Vec<f64> = (0..9)
        .map(|_| {
            let t = Instant::now();
            for _ in 0..reps {
                for r in &rays {
                    sink += layer.forward(r, 0.0).unwrap().0[0];
                }
            }
            t.elapsed().as_secs_f64() / (reps * rays.len()) as f64
        })
        .collect();
    std::hint::black_box(sink);
    samples.sort_by(f64::total_cmp);
    samples[samples.len() / 2]
}

/// Least-squares line `y = a + b x`; returns `(b, r^2)`.
fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let b = sxy / sxx;
    (b, sxy * sxy / (sxx * syy))
}

fn complexity_scaling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ms = [20.0, 50.0, 100.0, 200.0];
    let n = 10;
    let mut r2 = Vec::new();
    for kind in [0, 1] {
        let times: Vec<f64> = ms
            .iter()
            .map(|&m| {
                let set = random_set(&mut rng, kind, n, m as usize);
                forward_time(&set, &mut rng)
            })
            .collect();
        r2.push(fit_line(&ms, &times).1);
    }
    let ns = [8.0, 16.0, 32.0, 64.0];
    let times: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let set = random_set(&mut rng, 1, n as usize, 50);
            forward_time(&set, &mut rng)
        })
        .collect();
    let logs_n: Vec<f64> = ns.iter().map(|v: &f64| v.ln()).collect();
    let logs_t: Vec<f64> = times.iter().map(|v| v.ln()).collect();
    let (exponent, _) = fit_line(&logs_n, &logs_t);
    check(
        r2.iter().all(|&v| v >= 0.95) && exponent <= 2.0,
        format!(
            "time vs m at n=10: r^2 linear {:.3}, quadratic {:.3}; quadratic time vs n exponent {exponent:.2}",
            r2[0], r2[1]
        ),
    )
}

fn iris() -> Outcome {
    let start = Instant::now();
    let data = Dataset::bundled();
    let cfg = IrisConfig::default();
    let reports = iris_simplex_demo(&data, &cfg).map_err(|e| e.to_string())?;
    let dir = artifact_dir();
    let mut parts = Vec::new();
    let mut ok = reports.len() == 3;
    for r in &reports {
        let path = dir.join(format!("iris_{}.csv", r.head.name()));
        save_curve_csv(&path, &r.curve).map_err(|e| e.to_string())?;
        let rows = std::fs::read_to_string(&path).map_err(|e| e.to_string())?.lines().count();
        ok &= rows == cfg.epochs + 1;
        ok &= r.final_train_accuracy >= 0.95;
        if r.head != IrisHead::Softmax {
            // Covers |sum x - 1|, x_i >= 0 and x_i <= 0.75 for every
            // prediction, up to the rounding of x = R w + u.
            ok &= r.max_violation <= 1e-12;
        }
        parts.push(format!(
            "{} train acc {:.3}, max violation {:.1e}, max x_i {:.4}",
            r.head.name(),
            r.final_train_accuracy,
            r.max_violation.max(0.0),
            r.max_probability
        ));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(120);
    check(ok, parts.join("; "))
}
