#![allow(dead_code)]

use hardnet_core::{ConstraintSet, LinearConstraint, QuadraticConstraint};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn normal_vec(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn normal_mat(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn unit_vec(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    loop {
        let v = normal_vec(rng, n);
        let norm = v.norm();
        if norm > 1e-8 {
            return v / norm;
        }
    }
}

/// Random rows with `b > 0`, so the origin is interior.
pub fn linear_rows(rng: &mut impl Rng, n: usize, m: usize) -> Vec<LinearConstraint> {
    (0..m)
        .map(|_| LinearConstraint::new(normal_vec(rng, n), rng.random_range(0.5..2.0)).unwrap())
        .collect()
}

/// `1/2 x^T P x + q^T x <= b` with `P = L L^T + 0.1 I` and `b > 0`.
pub fn quadratic_rows(rng: &mut impl Rng, n: usize, m: usize) -> Vec<QuadraticConstraint> {
    (0..m)
        .map(|_| {
            let l = normal_mat(rng, n, n);
            let mut p = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
            p = (&p + p.transpose()) * 0.5;
            let q = normal_vec(rng, n) * 0.3;
            QuadraticConstraint::new(p, q, rng.random_range(0.5..2.0)).unwrap()
        })
        .collect()
}

pub fn linear_set(rng: &mut impl Rng, n: usize, m: usize) -> ConstraintSet {
    ConstraintSet::linear_only(n, linear_rows(rng, n, m))
        .unwrap()
        .with_interior_point(DVector::zeros(n))
        .unwrap()
}

pub fn quadratic_set(rng: &mut impl Rng, n: usize, m: usize) -> ConstraintSet {
    ConstraintSet::quadratic_only(n, quadratic_rows(rng, n, m))
        .unwrap()
        .with_interior_point(DVector::zeros(n))
        .unwrap()
}

pub fn mixed_set(rng: &mut impl Rng, n: usize, m: usize) -> ConstraintSet {
    let lin = linear_rows(rng, n, m - m / 2);
    let quad = quadratic_rows(rng, n, m / 2);
    ConstraintSet::new(n, lin, quad)
        .unwrap()
        .with_interior_point(DVector::zeros(n))
        .unwrap()
}

/// Any of the three families, chosen by `kind % 3`.
pub fn any_set(rng: &mut impl Rng, kind: u8, n: usize, m: usize) -> ConstraintSet {
    match kind % 3 {
        0 => linear_set(rng, n, m),
        1 => quadratic_set(rng, n, m),
        _ => mixed_set(rng, n, m.max(2)),
    }
}

/// Largest feasible step along `r` by bisection on the feasibility test alone.
pub fn bisect_ray_bound(set: &ConstraintSet, p: &DVector<f64>, r: &DVector<f64>) -> f64 {
    let feasible = |a: f64| set.max_violation(&(p + r * a)) <= 0.0;
    let mut hi = 1.0;
    while feasible(hi) {
        hi *= 2.0;
        if hi > 1e12 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Ratio of the second-smallest to the smallest per-constraint bound.
pub fn tie_gap(set: &ConstraintSet, p: &DVector<f64>, r: &DVector<f64>) -> f64 {
    let mut bounds: Vec<f64> = set.iter().map(|(_, c)| c.ray_bound(p, r).unwrap()).collect();
    bounds.sort_by(f64::total_cmp);
    if bounds.len() < 2 {
        return f64::INFINITY;
    }
    bounds[1] / bounds[0]
}
