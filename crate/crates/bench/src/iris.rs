//! Iris classification with outputs on a bounded probability simplex
//! `{x | 0 <= x_i <= ub, sum x = 1}`.
//!
//! The equality is eliminated with `x = R w + u`, so the network produces a
//! point in the two-dimensional `w`-space. Three heads are compared: the
//! constraint layer, a central projection of a free point, and softmax
//! (which ignores the upper bound).

use std::path::Path;

use hardnet_core::{
    Activation, AdamConfig, AdamState, ConstraintSet, DenseNet, EqualityReduction, EqualitySystem,
    HardLayer, LinearConstraint, NetGradients, Objective,
};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{BenchError, Result};

/// The bundled copy of the dataset.
pub const IRIS_CSV: &str = include_str!("../data/iris.csv");

pub const CLASSES: [&str; 3] = ["setosa", "versicolor", "virginica"];

#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Vec<[f64; 4]>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn parse(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != 5 {
                return Err(BenchError::Dataset(format!("row {}: expected 5 fields", line + 1)));
            }
            let mut f = [0.0; 4];
            for (k, v) in f.iter_mut().enumerate() {
                *v = record[k]
                    .trim()
                    .parse()
                    .map_err(|_| BenchError::Dataset(format!("row {}: bad number '{}'", line + 1, &record[k])))?;
            }
            let species = record[4].trim().trim_start_matches("Iris-");
            let label = CLASSES
                .iter()
                .position(|c| *c == species)
                .ok_or_else(|| BenchError::Dataset(format!("row {}: unknown species '{species}'", line + 1)))?;
            features.push(f);
            labels.push(label);
        }
        if features.is_empty() {
            return Err(BenchError::Dataset("no rows".into()));
        }
        Ok(Self { features, labels })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Dataset(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn bundled() -> Self {
        Self::parse(IRIS_CSV).expect("bundled dataset parses")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Seeded shuffle into train and test indices.
pub fn split(len: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((len as f64) * test_fraction).round() as usize;
    let test = idx.split_off(len - n_test.min(len));
    (idx, test)
}

/// Zero mean, unit variance per feature, fitted on `fit` rows.
pub fn standardize(data: &Dataset, fit: &[usize]) -> Vec<[f64; 4]> {
    let mut mean = [0.0; 4];
    let mut var = [0.0; 4];
    for &i in fit {
        for k in 0..4 {
            mean[k] += data.features[i][k];
        }
    }
    mean.iter_mut().for_each(|m| *m /= fit.len() as f64);
    for &i in fit {
        for k in 0..4 {
            var[k] += (data.features[i][k] - mean[k]).powi(2);
        }
    }
    let sd: Vec<f64> = var.iter().map(|v| (v / fit.len() as f64).sqrt().max(1e-12)).collect();
    data.features
        .iter()
        .map(|f| std::array::from_fn(|k| (f[k] - mean[k]) / sd[k]))
        .collect()
}

/// The bounded simplex in `w`-space and the map back to probabilities.
#[derive(Debug, Clone)]
pub struct BoundedSimplex {
    pub reduction: EqualityReduction,
    pub omega: ConstraintSet,
    pub upper_bound: f64,
}

impl BoundedSimplex {
    /// Errors when the bound leaves no interior (`ub <= 1/k`) or exceeds 1.
    pub fn new(classes: usize, upper_bound: f64) -> Result<Self> {
        if !(upper_bound > 0.0 && upper_bound <= 1.0) {
            return Err(BenchError::InvalidArgument(format!(
                "upper bound must lie in (0, 1], got {upper_bound}"
            )));
        }
        let sys = EqualitySystem::new(DMatrix::from_element(1, classes, 1.0), DVector::from_element(1, 1.0))?;
        let reduction = EqualityReduction::new(&sys)?;
        let mut box_rows = Vec::with_capacity(2 * classes);
        for i in 0..classes {
            let mut a = DVector::zeros(classes);
            a[i] = -1.0;
            box_rows.push(LinearConstraint::new(a.clone(), 0.0)?);
            box_rows.push(LinearConstraint::new(-a, upper_bound)?);
        }
        let omega = reduction
            .reduce_set(&box_rows, &[])?
            .with_interior_point(DVector::zeros(classes - 1))
            .map_err(|e| {
                BenchError::InvalidArgument(format!(
                    "upper bound {upper_bound} leaves no interior around the centroid: {e}"
                ))
            })?;
        Ok(Self {
            reduction,
            omega,
            upper_bound,
        })
    }

    pub fn lift(&self, w: &DVector<f64>) -> DVector<f64> {
        self.reduction.lift(w).expect("w has the reduced dimension")
    }

    /// Worst violation of `sum x = 1` and `0 <= x_i <= ub`.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let sum = (x.sum() - 1.0).abs();
        let box_v = x
            .iter()
            .map(|&v| (-v).max(v - self.upper_bound))
            .fold(f64::NEG_INFINITY, f64::max);
        sum.max(box_v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IrisHead {
    Constraints,
    Projection,
    Softmax,
}

impl IrisHead {
    pub const ALL: [IrisHead; 3] = [IrisHead::Constraints, IrisHead::Projection, IrisHead::Softmax];

    pub fn name(self) -> &'static str {
        match self {
            IrisHead::Constraints => "constraints",
            IrisHead::Projection => "projection",
            IrisHead::Softmax => "softmax",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrisConfig {
    pub upper_bound: f64,
    pub epochs: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for IrisConfig {
    fn default() -> Self {
        Self {
            upper_bound: 0.75,
            epochs: 300,
            lr: 1e-3,
            hidden: vec![64; 5],
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub cross_entropy: f64,
    pub hinge: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct IrisReport {
    pub head: IrisHead,
    pub curve: Vec<EpochMetrics>,
    pub final_train_accuracy: f64,
    pub final_test_accuracy: f64,
    /// Worst constraint violation over every prediction made in training
    /// and evaluation (`sum x = 1`, `x_i >= 0`, `x_i <= ub`). Softmax
    /// ignores the upper bound, so its value shows how far it overshoots.
    pub max_violation: f64,
    /// Largest predicted probability seen.
    pub max_probability: f64,
}

struct Model<'a> {
    head: IrisHead,
    net: DenseNet,
    simplex: &'a BoundedSimplex,
    layer: HardLayer,
}

impl Model<'_> {
    /// Probabilities and, given `dL/dx`, the gradient with respect to the
    /// network output.
    fn forward(&self, z: &[f64]) -> Result<(DVector<f64>, Vec<f64>, hardnet_core::net::NetCache, HeadCache)> {
        let (out, cache) = self.net.forward(z)?;
        let (x, hc) = match self.head {
            IrisHead::Constraints => {
                let d = self.layer.dim();
                let r = DVector::from_column_slice(&out[..d]);
                let (w, fc) = self.layer.forward(&r, out[d])?;
                (self.simplex.lift(&w), HeadCache::Layer(fc))
            }
            IrisHead::Projection => {
                let y = DVector::from_column_slice(&out);
                let (w, cc) = self.layer.central_forward(&y)?;
                (self.simplex.lift(&w), HeadCache::Central(cc))
            }
            IrisHead::Softmax => {
                let m = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = out.iter().map(|v| (v - m).exp()).collect();
                let total: f64 = e.iter().sum();
                let p = DVector::from_iterator(e.len(), e.iter().map(|v| v / total));
                (p.clone(), HeadCache::Softmax(p))
            }
        };
        Ok((x, out, cache, hc))
    }

    fn head_backward(&self, hc: &HeadCache, grad_x: &DVector<f64>) -> Vec<f64> {
        match hc {
            HeadCache::Layer(fc) => {
                let gw = self.simplex.reduction.pullback(grad_x);
                let back = self.layer.backward(fc, &gw);
                let mut g = back.r.as_slice().to_vec();
                g.push(back.s);
                g
            }
            HeadCache::Central(cc) => {
                let gw = self.simplex.reduction.pullback(grad_x);
                self.layer.central_backward(cc, &gw).as_slice().to_vec()
            }
            HeadCache::Softmax(p) => {
                let dot = p.dot(grad_x);
                p.iter().zip(grad_x.iter()).map(|(pi, gi)| pi * (gi - dot)).collect()
            }
        }
    }
}

enum HeadCache {
    Layer(hardnet_core::layer::ForwardCache),
    Central(hardnet_core::layer::CentralCache),
    Softmax(DVector<f64>),
}

fn argmax(x: &DVector<f64>) -> usize {
    x.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

pub fn train_head(data: &Dataset, head: IrisHead, cfg: &IrisConfig) -> Result<IrisReport> {
    let classes = CLASSES.len();
    let simplex = BoundedSimplex::new(classes, cfg.upper_bound)?;
    let (train, test) = split(data.len(), cfg.test_fraction, cfg.seed);
    let feats = standardize(data, &train);
    let out_dim = match head {
        IrisHead::Constraints => classes,
        IrisHead::Projection => classes - 1,
        IrisHead::Softmax => classes,
    };
    let mut model = Model {
        head,
        net: DenseNet::mlp(4, &cfg.hidden, out_dim, Activation::Relu, cfg.seed ^ 0x1215),
        simplex: &simplex,
        layer: HardLayer::new(simplex.omega.clone())?,
    };
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr));
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut max_violation = f64::NEG_INFINITY;
    let mut max_probability: f64 = 0.0;

    let accuracy = |model: &Model<'_>, rows: &[usize], max_v: &mut f64, max_p: &mut f64| -> Result<f64> {
        if rows.is_empty() {
            return Ok(f64::NAN);
        }
        let mut correct = 0;
        for &i in rows {
            let (x, ..) = model.forward(&feats[i])?;
            *max_v = max_v.max(simplex.violation(&x));
            *max_p = max_p.max(x.max());
            correct += usize::from(argmax(&x) == data.labels[i]);
        }
        Ok(correct as f64 / rows.len() as f64)
    };

    for epoch in 0..cfg.epochs {
        let mut total = NetGradients::zeros_like(&model.net);
        let mut ce = 0.0;
        let mut hinge = 0.0;
        let mut correct = 0;
        for &i in &train {
            let label = data.labels[i];
            let (x, _, cache, hc) = model.forward(&feats[i])?;
            max_violation = max_violation.max(simplex.violation(&x));
            max_probability = max_probability.max(x.max());
            let (l, g) = Objective::CrossEntropy { label }.eval(&x)?;
            ce += l;
            hinge += Objective::Hinge { label }.value(&x)?;
            correct += usize::from(argmax(&x) == label);
            let upstream = model.head_backward(&hc, &g);
            total.accumulate(&model.net.backward(&cache, &upstream));
        }
        let inv = 1.0 / train.len() as f64;
        total.scale(inv);
        if !(ce * inv).is_finite() {
            return Err(BenchError::Diverged(format!("iris {} at epoch {epoch}", head.name())));
        }
        let grads = total.param_slices();
        adam.step(&mut model.net.param_slices_mut(), &grads);
        let test_accuracy = accuracy(&model, &test, &mut max_violation, &mut max_probability)?;
        curve.push(EpochMetrics {
            epoch,
            cross_entropy: ce * inv,
            hinge: hinge * inv,
            train_accuracy: correct as f64 * inv,
            test_accuracy,
        });
    }
    let final_train_accuracy = accuracy(&model, &train, &mut max_violation, &mut max_probability)?;
    let final_test_accuracy = accuracy(&model, &test, &mut max_violation, &mut max_probability)?;
    Ok(IrisReport {
        head,
        curve,
        final_train_accuracy,
        final_test_accuracy,
        max_violation,
        max_probability,
    })
}

/// All three heads on the same split.
pub fn iris_simplex_demo(data: &Dataset, cfg: &IrisConfig) -> Result<Vec<IrisReport>> {
    IrisHead::ALL.iter().map(|&h| train_head(data, h, cfg)).collect()
}

/// `epoch,cross_entropy,hinge,train_accuracy,test_accuracy` rows.
pub fn save_curve_csv(path: &Path, curve: &[EpochMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in curve {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_data_has_three_balanced_classes() {
        let data = Dataset::bundled();
        assert_eq!(data.len(), 150);
        for c in 0..3 {
            assert_eq!(data.labels.iter().filter(|&&l| l == c).count(), 50);
        }
    }

    #[test]
    fn missing_file_is_reported() {
        let err = Dataset::load(Path::new("/nonexistent/iris.csv")).unwrap_err();
        assert!(matches!(err, BenchError::Dataset(_)));
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let (a, b) = split(150, 0.2, 4);
        assert_eq!((a.len(), b.len()), (120, 30));
        assert_eq!(split(150, 0.2, 4), (a.clone(), b.clone()));
        assert!(a.iter().all(|i| !b.contains(i)));
    }

    #[test]
    fn simplex_geometry() {
        let s = BoundedSimplex::new(3, 0.75).unwrap();
        assert_eq!(s.omega.dim(), 2);
        assert_eq!(s.omega.linear().len(), 6);
        let centroid = s.lift(&DVector::zeros(2));
        for v in centroid.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        let layer = HardLayer::new(s.omega.clone()).unwrap();
        let w = layer.boundary_map(&DVector::from_column_slice(&[1.0, 0.3])).unwrap();
        assert!(s.violation(&s.lift(&w)) < 1e-9);
    }

    #[test]
    fn degenerate_bound_is_rejected() {
        assert!(BoundedSimplex::new(3, 1.0 / 3.0).is_err());
        assert!(BoundedSimplex::new(3, 0.0).is_err());
    }

    #[test]
    fn softmax_gradient_matches_differences() {
        let data = Dataset::bundled();
        let simplex = BoundedSimplex::new(3, 0.75).unwrap();
        let model = Model {
            head: IrisHead::Softmax,
            net: DenseNet::mlp(4, &[8], 3, Activation::Tanh, 1),
            simplex: &simplex,
            layer: HardLayer::new(simplex.omega.clone()).unwrap(),
        };
        let z = data.features[60];
        let (x, out, _, hc) = model.forward(&z).unwrap();
        let obj = Objective::CrossEntropy { label: 1 };
        let (_, g) = obj.eval(&x).unwrap();
        let analytic = model.head_backward(&hc, &g);
        for k in 0..3 {
            let h = 1e-6;
            let loss = |o: &[f64]| {
                let m = o.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let total: f64 = o.iter().map(|v| (v - m).exp()).sum();
                -((o[1] - m).exp() / total).ln()
            };
            let mut up = out.clone();
            up[k] += h;
            let mut dn = out.clone();
            dn[k] -= h;
            let fd = (loss(&up) - loss(&dn)) / (2.0 * h);
            assert!((fd - analytic[k]).abs() < 1e-6);
        }
    }
}
