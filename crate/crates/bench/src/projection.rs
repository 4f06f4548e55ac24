//! Learned projections onto a constraint set and onto its boundary.
//!
//! A network maps a point `x` to layer inputs; the loss is the mean
//! `|f(x) - x|_p` over points drawn uniformly from a box twice the size of
//! the set's bounding box.

use std::io::Write;
use std::path::Path;

use hardnet_core::{
    Activation, AdamConfig, AdamState, ConstraintSet, DenseNet, HardLayer, NetGradients, PNorm,
};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionKind {
    /// Full layer `g(r, s)`: outputs anywhere in the set.
    Orthogonal,
    /// Boundary map `p + alpha(r) r`: outputs on the boundary.
    Boundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for NetSpec {
    fn default() -> Self {
        Self {
            hidden: vec![100; 5],
            activation: Activation::Relu,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionConfig {
    pub net: NetSpec,
    pub p_norm: PNorm,
    pub iters: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            net: NetSpec::default(),
            p_norm: PNorm::L2,
            iters: 1000,
            lr: 1e-3,
            batch: 128,
            seed: 0,
        }
    }
}

/// A trained network followed by the layer.
#[derive(Debug, Clone)]
pub struct ProjectionModel {
    pub net: DenseNet,
    pub layer: HardLayer,
    pub kind: ProjectionKind,
}

impl ProjectionModel {
    fn split(&self, out: &[f64]) -> (DVector<f64>, f64) {
        let n = self.layer.dim();
        let r = DVector::from_column_slice(&out[..n]);
        let s = if self.kind == ProjectionKind::Orthogonal {
            out[n]
        } else {
            0.0
        };
        (r, s)
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let z = x - self.layer.interior_point();
        let out = self.net.predict(z.as_slice())?;
        let (r, s) = self.split(&out);
        Ok(match self.kind {
            ProjectionKind::Orthogonal => self.layer.forward(&r, s)?.0,
            ProjectionKind::Boundary => self.layer.boundary_map(&r)?,
        })
    }

    /// Loss and parameter gradients for one point.
    fn loss_grad(&self, x: &DVector<f64>, p_norm: PNorm) -> Result<(f64, NetGradients)> {
        let z = x - self.layer.interior_point();
        let (out, cache) = self.net.forward(z.as_slice())?;
        let (r, s) = self.split(&out);
        let mut upstream = Vec::with_capacity(out.len());
        let loss = match self.kind {
            ProjectionKind::Orthogonal => {
                let (y, fc) = self.layer.forward(&r, s)?;
                let (loss, g) = p_norm.norm_and_gradient(&(y - x));
                let back = self.layer.backward(&fc, &g);
                upstream.extend(back.r.iter());
                upstream.push(back.s);
                loss
            }
            ProjectionKind::Boundary => {
                let (y, bc) = self.layer.boundary_forward(&r)?;
                let (loss, g) = p_norm.norm_and_gradient(&(y - x));
                upstream.extend(self.layer.boundary_backward(&bc, &g).iter());
                loss
            }
        };
        Ok((loss, self.net.backward(&cache, &upstream)))
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean batch loss per iteration.
    pub loss_curve: Vec<f64>,
    /// Mean `|f(x) - x|_2` over held-out points inside the set.
    pub mean_in_set_displacement: f64,
}

/// Asymmetric pentagon around the origin used by the projection demos.
pub fn demo_polygon() -> ConstraintSet {
    let rows = [
        ([1.0, 0.2], 1.0),
        ([-0.3, 1.0], 1.2),
        ([-1.0, -0.1], 0.8),
        ([0.1, -1.0], 1.0),
        ([0.7, 0.7], 1.1),
    ];
    let lin = rows
        .iter()
        .map(|(a, b)| hardnet_core::LinearConstraint::from_slice(a, *b).expect("valid row"))
        .collect();
    ConstraintSet::linear_only(2, lin)
        .and_then(|s| s.with_interior_point(DVector::zeros(2)))
        .expect("origin is interior")
}

/// `x1^2 + x2^2 <= 1`.
pub fn demo_disk() -> ConstraintSet {
    let disk = hardnet_core::QuadraticConstraint::new(
        nalgebra::DMatrix::identity(2, 2) * 2.0,
        DVector::zeros(2),
        1.0,
    )
    .expect("valid disk");
    ConstraintSet::quadratic_only(2, vec![disk])
        .and_then(|s| s.with_interior_point(DVector::zeros(2)))
        .expect("origin is interior")
}

/// Boundary points hit by `count` random rays from the interior point.
pub fn probe_boundary(omega: &ConstraintSet, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    let p = omega
        .interior_point()
        .ok_or_else(|| BenchError::InvalidArgument("set has no interior point".into()))?;
    let n = omega.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let r = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        if r.norm() == 0.0 {
            continue;
        }
        let bound = omega.ray_bound(p, &r)?;
        if !bound.is_finite() {
            return Err(BenchError::InvalidArgument("constraint set is unbounded".into()));
        }
        out.push(p + r * bound.value);
    }
    Ok(out)
}

/// Axis-aligned box twice the size of the probed bounding box, same centre.
pub fn sampling_box(omega: &ConstraintSet) -> Result<(DVector<f64>, DVector<f64>)> {
    let pts = probe_boundary(omega, 256 * omega.dim(), 0xB0C5)?;
    let n = omega.dim();
    let mut lo = DVector::from_element(n, f64::INFINITY);
    let mut hi = DVector::from_element(n, f64::NEG_INFINITY);
    for x in &pts {
        for i in 0..n {
            lo[i] = lo[i].min(x[i]);
            hi[i] = hi[i].max(x[i]);
        }
    }
    let centre = (&lo + &hi) * 0.5;
    let half = &hi - &centre;
    Ok((&centre - &half * 2.0, &centre + &half * 2.0))
}

/// Largest distance between probed boundary points.
pub fn diameter(omega: &ConstraintSet) -> Result<f64> {
    let pts = probe_boundary(omega, 128 * omega.dim(), 0xD1A)?;
    let mut best: f64 = 0.0;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            best = best.max((a - b).norm());
        }
    }
    Ok(best)
}

fn sample_box(rng: &mut impl Rng, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(lo.len(), |i, _| rng.random_range(lo[i]..hi[i]))
}

fn train(omega: &ConstraintSet, kind: ProjectionKind, cfg: &ProjectionConfig) -> Result<(ProjectionModel, TrainReport)> {
    if cfg.batch == 0 || !(cfg.lr > 0.0) {
        return Err(BenchError::InvalidArgument("batch and lr must be positive".into()));
    }
    let n = omega.dim();
    let out_dim = match kind {
        ProjectionKind::Orthogonal => n + 1,
        ProjectionKind::Boundary => n,
    };
    let mut model = ProjectionModel {
        net: DenseNet::mlp(n, &cfg.net.hidden, out_dim, cfg.net.activation, cfg.net.seed),
        layer: HardLayer::new(omega.clone())?,
        kind,
    };
    let (lo, hi) = sampling_box(omega)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr));
    let mut loss_curve = Vec::with_capacity(cfg.iters);
    for it in 0..cfg.iters {
        let mut total = NetGradients::zeros_like(&model.net);
        let mut loss = 0.0;
        for _ in 0..cfg.batch {
            let x = sample_box(&mut rng, &lo, &hi);
            let (l, g) = model.loss_grad(&x, cfg.p_norm)?;
            loss += l;
            total.accumulate(&g);
        }
        let inv = 1.0 / cfg.batch as f64;
        total.scale(inv);
        loss *= inv;
        if !loss.is_finite() {
            return Err(BenchError::Diverged(format!("projection loss at iteration {it}")));
        }
        loss_curve.push(loss);
        let grads = total.param_slices();
        adam.step(&mut model.net.param_slices_mut(), &grads);
    }
    let mean_in_set_displacement = in_set_displacement(&model, omega, &lo, &hi, cfg.seed ^ 0x7E57)?;
    Ok((
        model,
        TrainReport {
            loss_curve,
            mean_in_set_displacement,
        },
    ))
}

/// Mean `|f(x) - x|_2` over up to 500 held-out points that fall inside the set.
pub fn in_set_displacement(
    model: &ProjectionModel,
    omega: &ConstraintSet,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut count = 0usize;
    for _ in 0..20_000 {
        if count == 500 {
            break;
        }
        let x = sample_box(&mut rng, lo, hi);
        if omega.max_violation(&x) < 0.0 {
            sum += (model.apply(&x)? - &x).norm();
            count += 1;
        }
    }
    if count == 0 {
        return Err(BenchError::InvalidArgument("no held-out point fell inside the set".into()));
    }
    Ok(sum / count as f64)
}

/// Network plus full layer trained to approximate the `p`-norm projection.
pub fn train_orthogonal_projection(
    omega: &ConstraintSet,
    cfg: &ProjectionConfig,
) -> Result<(ProjectionModel, TrainReport)> {
    train(omega, ProjectionKind::Orthogonal, cfg)
}

/// Network plus boundary map trained to approximate the `p`-norm projection
/// onto the boundary.
pub fn train_boundary_projection(
    omega: &ConstraintSet,
    cfg: &ProjectionConfig,
) -> Result<(ProjectionModel, TrainReport)> {
    train(omega, ProjectionKind::Boundary, cfg)
}

/// `k x k` grid over the first two coordinates of a box.
pub fn quiver_grid(lo: &DVector<f64>, hi: &DVector<f64>, k: usize) -> Vec<DVector<f64>> {
    crate::demos::grid_starts([lo[0], lo[1]], [hi[0], hi[1]], k)
}

/// `x1,x2,px1,px2` rows.
pub fn write_quiver_csv<W: Write>(out: W, pairs: &[(DVector<f64>, DVector<f64>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x1", "x2", "px1", "px2"])?;
    for (x, px) in pairs {
        w.write_record([
            x[0].to_string(),
            x[1].to_string(),
            px[0].to_string(),
            px[1].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_quiver_csv(path: &Path, pairs: &[(DVector<f64>, DVector<f64>)]) -> Result<()> {
    write_quiver_csv(std::fs::File::create(path)?, pairs)
}

/// One value per line under a `iter,loss` header.
pub fn save_loss_csv(path: &Path, curve: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iter", "loss"])?;
    for (i, l) in curve.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
