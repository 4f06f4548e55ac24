//! Log-barrier reference solver.
//!
//! Minimizes `t f(x) - sum_i log(-h_i(x))` by damped Newton steps for an
//! increasing sequence of `t`, starting from the set's interior point. At an
//! exactly centered point the suboptimality is at most `m / t`.

use hardnet_core::{ConstraintSet, Objective};
use nalgebra::{DMatrix, DVector};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierConfig {
    pub t0: f64,
    pub mu: f64,
    /// Stop once `m / t <= gap_tol (1 + |f|)`.
    pub gap_tol: f64,
    pub t_max: f64,
    pub max_newton: usize,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        Self {
            t0: 1.0,
            mu: 10.0,
            gap_tol: 1e-10,
            t_max: 1e14,
            max_newton: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BarrierSolution {
    pub x: DVector<f64>,
    pub value: f64,
    /// `m / t` at the last centering.
    pub gap: f64,
    pub newton_steps: usize,
}

/// Hessian of the objective; a finite difference of the gradient where no
/// closed form is wired in.
pub fn objective_hessian(obj: &Objective, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = x.len();
    Ok(match obj {
        Objective::Linear { .. } => DMatrix::zeros(n, n),
        Objective::Quadratic { h, .. } => h.clone(),
        Objective::Rosenbrock => {
            let (x1, x2) = (x[0], x[1]);
            DMatrix::from_row_slice(
                2,
                2,
                &[
                    2.0 - 400.0 * (x2 - x1 * x1) + 800.0 * x1 * x1,
                    -400.0 * x1,
                    -400.0 * x1,
                    200.0,
                ],
            )
        }
        _ => {
            let mut hess = DMatrix::zeros(n, n);
            for j in 0..n {
                let step = 1e-6 * (1.0 + x[j].abs());
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += step;
                xm[j] -= step;
                let col = (obj.eval(&xp)?.1 - obj.eval(&xm)?.1) / (2.0 * step);
                hess.set_column(j, &col);
            }
            (&hess + hess.transpose()) * 0.5
        }
    })
}

struct Barrier<'a> {
    omega: &'a ConstraintSet,
    obj: &'a Objective,
}

impl Barrier<'_> {
    /// Slacks `-h_i(x)`, or `None` if any is not strictly positive.
    fn slacks(&self, x: &DVector<f64>) -> Option<Vec<f64>> {
        let mut out = Vec::with_capacity(self.omega.len());
        for c in self.omega.linear() {
            out.push(c.b() - c.a().dot(x));
        }
        for c in self.omega.quadratic() {
            let px = c.p() * x;
            out.push(c.b() - 0.5 * x.dot(&px) - c.q().dot(x));
        }
        if out.iter().all(|&s| s > 0.0 && s.is_finite()) {
            Some(out)
        } else {
            None
        }
    }

    fn phi(&self, t: f64, x: &DVector<f64>) -> Result<Option<f64>> {
        let Some(slacks) = self.slacks(x) else {
            return Ok(None);
        };
        let f = self.obj.value(x)?;
        Ok(Some(t * f - slacks.iter().map(|s| s.ln()).sum::<f64>()))
    }

    fn grad_hess(&self, t: f64, x: &DVector<f64>, slacks: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = x.len();
        let (_, gf) = self.obj.eval(x)?;
        let mut g = gf * t;
        let mut h = objective_hessian(self.obj, x)? * t;
        let nl = self.omega.linear().len();
        for (c, &s) in self.omega.linear().iter().zip(slacks) {
            g.axpy(1.0 / s, c.a(), 1.0);
            h.ger(1.0 / (s * s), c.a(), c.a(), 1.0);
        }
        for (c, &s) in self.omega.quadratic().iter().zip(&slacks[nl..]) {
            let gh = c.p() * x + c.q();
            g.axpy(1.0 / s, &gh, 1.0);
            h.ger(1.0 / (s * s), &gh, &gh, 1.0);
            h += c.p() * (1.0 / s);
        }
        debug_assert_eq!(h.nrows(), n);
        Ok((g, h))
    }

    /// Newton direction, regularized until the factorization succeeds.
    fn newton_direction(g: &DVector<f64>, h: &DMatrix<f64>) -> Option<DVector<f64>> {
        let n = g.len();
        let scale = h.diagonal().amax().max(1e-300);
        let mut reg = 0.0;
        for _ in 0..30 {
            let mut hr = h.clone();
            for i in 0..n {
                hr[(i, i)] += reg;
            }
            if let Some(chol) = hr.cholesky() {
                let d = chol.solve(&(-g));
                if d.iter().all(|v| v.is_finite()) {
                    return Some(d);
                }
            }
            reg = if reg == 0.0 { 1e-14 * scale } else { reg * 10.0 };
        }
        None
    }

    /// Backtracking along `d`; returns the accepted point.
    fn line_search(
        &self,
        t: f64,
        x: &DVector<f64>,
        phi0: f64,
        g: &DVector<f64>,
        d: &DVector<f64>,
    ) -> Result<Option<DVector<f64>>> {
        let slope = g.dot(d);
        if !(slope < 0.0) {
            return Ok(None);
        }
        let mut tau = 1.0;
        for _ in 0..80 {
            let cand = x + d * tau;
            if let Some(phi) = self.phi(t, &cand)? {
                if phi <= phi0 + 0.25 * tau * slope {
                    return Ok(Some(cand));
                }
            }
            tau *= 0.5;
        }
        Ok(None)
    }

    /// Centering for fixed `t`. Returns Newton steps taken.
    fn center(&self, t: f64, x: &mut DVector<f64>, max_steps: usize) -> Result<usize> {
        for step in 0..max_steps {
            let slacks = self
                .slacks(x)
                .ok_or_else(|| BenchError::Barrier("iterate left the interior".into()))?;
            let (g, h) = self.grad_hess(t, x, &slacks)?;
            let phi0 = self.phi(t, x)?.expect("interior");
            let d = Self::newton_direction(&g, &h);
            let decrement = d.as_ref().map(|d| -g.dot(d)).unwrap_or(f64::INFINITY);
            if decrement * 0.5 <= 1e-12 {
                return Ok(step);
            }
            let mut next = match &d {
                Some(d) => self.line_search(t, x, phi0, &g, d)?,
                None => None,
            };
            if next.is_none() {
                // Gradient-only fallback.
                let gd = -&g / g.norm().max(1e-300);
                next = self.line_search(t, x, phi0, &g, &gd)?;
            }
            match next {
                Some(xn) => *x = xn,
                // Floating-point floor: no descent is representable.
                None if decrement < 1e-6 => return Ok(step),
                None => {
                    return Err(BenchError::Barrier(format!(
                        "line search failed at t={t:e} (decrement {decrement:e})"
                    )))
                }
            }
        }
        Ok(max_steps)
    }
}

pub fn barrier_solve(
    omega: &ConstraintSet,
    obj: &Objective,
    config: &BarrierConfig,
) -> Result<BarrierSolution> {
    let p = omega
        .interior_point()
        .ok_or_else(|| BenchError::Barrier("constraint set has no interior point".into()))?;
    let solver = Barrier { omega, obj };
    let mut x = p.clone();
    let m = omega.len() as f64;
    let mut t = config.t0;
    let mut newton_steps = 0;
    loop {
        newton_steps += solver.center(t, &mut x, config.max_newton)?;
        let value = obj.value(&x)?;
        let gap = m / t;
        if gap <= config.gap_tol * (1.0 + value.abs()) || t >= config.t_max {
            return Ok(BarrierSolution {
                x,
                value,
                gap,
                newton_steps,
            });
        }
        t *= config.mu;
    }
}

/// Reference solve with the default schedule.
pub fn barrier_reference_solve(omega: &ConstraintSet, obj: &Objective) -> Result<(DVector<f64>, f64)> {
    let sol = barrier_solve(omega, obj, &BarrierConfig::default())?;
    Ok((sol.x, sol.value))
}
